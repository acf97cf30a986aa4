//! Small dense-linear-algebra kernels shared by the simulator.
//!
//! The only non-trivial piece is [`svd3`], a one-sided Jacobi SVD for 3x3
//! matrices. The deformation-gradient pipeline calls it once per particle per
//! substep, so it is hand-rolled for speed and determinism instead of going
//! through a general-purpose bidiagonalization.

use nalgebra::{Matrix3, Vector3};

/// Result of [`svd3`]: `a == u * diag(sigma) * v.transpose()`.
///
/// `u` and `v` are proper rotations (determinant +1). If the input has a
/// negative determinant the sign is carried by `sigma[2]`, which is the only
/// entry allowed to be negative. Singular values are ordered
/// `sigma[0] >= sigma[1] >= |sigma[2]|`.
#[derive(Debug, Clone, Copy)]
pub struct Svd3 {
    pub u: Matrix3<f64>,
    pub sigma: Vector3<f64>,
    pub v: Matrix3<f64>,
}

impl Svd3 {
    /// Rotation factor of the polar decomposition `a = r * s`.
    #[inline]
    pub fn polar_rotation(&self) -> Matrix3<f64> {
        self.u * self.v.transpose()
    }

    /// Reassembles `u * diag(sigma) * v^T` for a (possibly modified) sigma.
    #[inline]
    pub fn compose(&self, sigma: &Vector3<f64>) -> Matrix3<f64> {
        let mut us = self.u;
        for c in 0..3 {
            us.column_mut(c).scale_mut(sigma[c]);
        }
        us * self.v.transpose()
    }
}

/// One-sided Jacobi SVD of a 3x3 matrix.
///
/// Orthogonalizes the columns of `a` by right Givens rotations; the rotations
/// accumulate into `v` and the surviving column norms become the singular
/// values. Converges to machine precision in a handful of sweeps for the
/// well-conditioned deformation gradients the stepper produces.
pub fn svd3(a: &Matrix3<f64>) -> Svd3 {
    let scale = a.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if scale == 0.0 {
        return Svd3 {
            u: Matrix3::identity(),
            sigma: Vector3::zeros(),
            v: Matrix3::identity(),
        };
    }

    // One-sided Jacobi on column-major arrays: right Givens rotations
    // orthogonalize the columns of b while accumulating into v. Working on
    // the columns directly (rather than the Gram matrix AᵀA) keeps full
    // relative accuracy for small singular values.
    let mut b = [
        [a[(0, 0)], a[(1, 0)], a[(2, 0)]],
        [a[(0, 1)], a[(1, 1)], a[(2, 1)]],
        [a[(0, 2)], a[(1, 2)], a[(2, 2)]],
    ];
    let mut v = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

    #[inline(always)]
    fn dot(x: &[f64; 3], y: &[f64; 3]) -> f64 {
        x[0] * y[0] + x[1] * y[1] + x[2] * y[2]
    }

    #[inline(always)]
    fn rotate_pair(b: &mut [[f64; 3]; 3], v: &mut [[f64; 3]; 3], p: usize, q: usize) -> bool {
        let (bp, bq) = (b[p], b[q]);
        let gamma = dot(&bp, &bq);
        let alpha = dot(&bp, &bp);
        let beta = dot(&bq, &bq);
        // Columns count as orthogonal relative to their norms.
        if gamma.abs() <= 1e-15 * (alpha * beta).sqrt() {
            return false;
        }
        let zeta = (beta - alpha) / (2.0 * gamma);
        let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
        let c = 1.0 / (1.0 + t * t).sqrt();
        let s = c * t;
        for r in 0..3 {
            b[p][r] = c * bp[r] - s * bq[r];
            b[q][r] = s * bp[r] + c * bq[r];
        }
        let (vp, vq) = (v[p], v[q]);
        for r in 0..3 {
            v[p][r] = c * vp[r] - s * vq[r];
            v[q][r] = s * vp[r] + c * vq[r];
        }
        true
    }

    for _sweep in 0..30 {
        let mut rotated = false;
        rotated |= rotate_pair(&mut b, &mut v, 0, 1);
        rotated |= rotate_pair(&mut b, &mut v, 0, 2);
        rotated |= rotate_pair(&mut b, &mut v, 1, 2);
        if !rotated {
            break;
        }
    }

    let mut norms = [
        dot(&b[0], &b[0]).sqrt(),
        dot(&b[1], &b[1]).sqrt(),
        dot(&b[2], &b[2]).sqrt(),
    ];

    // Sort descending with a tiny swap network, carrying columns along.
    #[inline(always)]
    fn order(norms: &mut [f64; 3], b: &mut [[f64; 3]; 3], v: &mut [[f64; 3]; 3], i: usize, j: usize) {
        if norms[i] < norms[j] {
            norms.swap(i, j);
            b.swap(i, j);
            v.swap(i, j);
        }
    }
    order(&mut norms, &mut b, &mut v, 0, 1);
    order(&mut norms, &mut b, &mut v, 0, 2);
    order(&mut norms, &mut b, &mut v, 1, 2);

    // Normalize columns into u; rebuild degenerate directions orthogonally.
    let mut u = [[0.0f64; 3]; 3];
    let tiny = 1e-150 * scale;
    for c in 0..3 {
        if norms[c] > tiny {
            let inv = 1.0 / norms[c];
            u[c] = [b[c][0] * inv, b[c][1] * inv, b[c][2] * inv];
        } else if c == 2 {
            u[2] = [
                u[0][1] * u[1][2] - u[0][2] * u[1][1],
                u[0][2] * u[1][0] - u[0][0] * u[1][2],
                u[0][0] * u[1][1] - u[0][1] * u[1][0],
            ];
        } else {
            // Rank deficient beyond the last column: any unit vector
            // orthogonal to the previous one will do.
            let prev = u[0];
            let cand = if prev[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
            let d = dot(&prev, &cand);
            let mut n = [cand[0] - d * prev[0], cand[1] - d * prev[1], cand[2] - d * prev[2]];
            let inv = 1.0 / dot(&n, &n).sqrt();
            n = [n[0] * inv, n[1] * inv, n[2] * inv];
            u[c] = n;
        }
    }

    let mut sigma = Vector3::new(norms[0], norms[1], norms[2]);

    #[inline(always)]
    fn det_cols(m: &[[f64; 3]; 3]) -> f64 {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[1][0] * (m[0][1] * m[2][2] - m[0][2] * m[2][1])
            + m[2][0] * (m[0][1] * m[1][2] - m[0][2] * m[1][1])
    }

    // Force u and v into SO(3); any sign flip moves into sigma[2].
    if det_cols(&u) < 0.0 {
        u[2] = [-u[2][0], -u[2][1], -u[2][2]];
        sigma[2] = -sigma[2];
    }
    if det_cols(&v) < 0.0 {
        v[2] = [-v[2][0], -v[2][1], -v[2][2]];
        sigma[2] = -sigma[2];
    }

    Svd3 {
        u: Matrix3::from_columns(&[Vector3::from(u[0]), Vector3::from(u[1]), Vector3::from(u[2])]),
        sigma,
        v: Matrix3::from_columns(&[Vector3::from(v[0]), Vector3::from(v[1]), Vector3::from(v[2])]),
    }
}

/// Deterministic seed derivation for per-env / per-episode RNG streams.
///
/// SplitMix64 over the mixed words; cheap and collision-resistant enough for
/// seeding independent ChaCha streams.
pub fn derive_seed(master: u64, stream: u64, index: u64) -> u64 {
    let mut z = master
        .wrapping_add(stream.wrapping_mul(0x9E3779B97F4A7C15))
        .wrapping_add(index.wrapping_mul(0xBF58476D1CE4E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}
