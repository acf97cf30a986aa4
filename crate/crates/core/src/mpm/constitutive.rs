//! Fixed-corotated elasticity with a von Mises return map on Hencky strain.

use nalgebra::{Matrix3, Vector3};

use crate::math::{svd3, Svd3};

use super::types::{MaterialParams, SimError};

/// First Piola–Kirchhoff stress of the fixed-corotated model:
/// `P(F) = 2μ(F − R) + λ J(J − 1) F⁻ᵀ`, with `R` the polar rotation of `F`
/// and `J = det(F)`.
pub fn stress(def_grad: &Matrix3<f64>, params: &MaterialParams) -> Result<Matrix3<f64>, SimError> {
    let svd = svd3(def_grad);
    let j = svd.sigma.x * svd.sigma.y * svd.sigma.z;
    if j <= 0.0 {
        return Err(SimError::InvalidState { particle: usize::MAX, det: j });
    }
    Ok(stress_from_svd(def_grad, &svd, j, params))
}

fn stress_from_svd(
    def_grad: &Matrix3<f64>,
    svd: &Svd3,
    j: f64,
    params: &MaterialParams,
) -> Matrix3<f64> {
    let rotation = svd.polar_rotation();
    // F⁻ᵀ = U diag(1/σ) Vᵀ, reusing the factorization.
    let inv_sigma = Vector3::new(1.0 / svd.sigma.x, 1.0 / svd.sigma.y, 1.0 / svd.sigma.z);
    let f_inv_t = svd.compose(&inv_sigma);
    (def_grad - rotation) * (2.0 * params.mu) + f_inv_t * (params.lambda * j * (j - 1.0))
}

/// Kirchhoff stress `τ = P Fᵀ` straight from a factorization; this is the
/// quantity the MLS-MPM scatter consumes.
fn kirchhoff_from_svd(
    def_grad: &Matrix3<f64>,
    svd: &Svd3,
    j: f64,
    params: &MaterialParams,
) -> Matrix3<f64> {
    let rotation = svd.polar_rotation();
    (def_grad - rotation) * (2.0 * params.mu) * def_grad.transpose()
        + Matrix3::from_diagonal_element(params.lambda * j * (j - 1.0))
}

/// Von Mises return map on the logarithmic (Hencky) strain.
///
/// If the deviatoric Hencky stress norm `‖2μ·dev(log σ)‖` stays at or below
/// the yield stress the trial gradient is returned unchanged; otherwise the
/// deviatoric strain is scaled back onto the yield surface and the gradient
/// is reconstituted from the projected singular values.
pub fn von_mises_return_map(
    trial: &Matrix3<f64>,
    params: &MaterialParams,
) -> Result<Matrix3<f64>, SimError> {
    let svd = svd3(trial);
    let j = svd.sigma.x * svd.sigma.y * svd.sigma.z;
    if j <= 0.0 {
        return Err(SimError::InvalidState { particle: usize::MAX, det: j });
    }
    match project_hencky(&svd, params) {
        None => Ok(*trial),
        Some(sigma) => Ok(svd.compose(&sigma)),
    }
}

/// Projected singular values if the trial state lies outside the yield
/// surface, `None` when no plastic flow occurs.
fn project_hencky(svd: &Svd3, params: &MaterialParams) -> Option<Vector3<f64>> {
    // Elastic fast path: ‖dev ln σ‖ ≤ √(2/3)·ln(σ₀/σ₂) ≤ √(2/3)·(σ₀/σ₂ − 1)
    // for descending σ, so states safely inside the surface skip the
    // logarithms entirely.
    const SQRT_2_3: f64 = 0.816_496_580_927_726_1;
    let ratio = svd.sigma.x / svd.sigma.z;
    if 2.0 * params.mu * SQRT_2_3 * (ratio - 1.0) <= params.yield_stress {
        return None;
    }
    let hencky = svd.sigma.map(f64::ln);
    let trace_mean = (hencky.x + hencky.y + hencky.z) / 3.0;
    let dev = hencky - Vector3::from_element(trace_mean);
    let stress_norm = 2.0 * params.mu * dev.norm();
    if stress_norm <= params.yield_stress {
        return None;
    }
    let scale = params.yield_stress / stress_norm;
    let projected = Vector3::from_element(trace_mean) + dev * scale;
    Some(projected.map(f64::exp))
}

/// Fused per-substep update: plasticity projection of the trial gradient plus
/// the Kirchhoff stress cache, sharing one SVD. Returns the projected
/// gradient, its stress, and det(F) for diagnostics.
pub fn project_and_stress(
    trial: &Matrix3<f64>,
    params: &MaterialParams,
) -> Result<(Matrix3<f64>, Matrix3<f64>, f64), SimError> {
    let svd = svd3(trial);
    let j = svd.sigma.x * svd.sigma.y * svd.sigma.z;
    if j <= 0.0 {
        return Err(SimError::InvalidState { particle: usize::MAX, det: j });
    }
    match project_hencky(&svd, params) {
        None => Ok((*trial, kirchhoff_from_svd(trial, &svd, j, params), j)),
        Some(sigma) => {
            let projected = svd.compose(&sigma);
            // The return map preserves the volumetric part: Σ log σ is
            // unchanged, so J carries over.
            let svd_proj = Svd3 { u: svd.u, sigma, v: svd.v };
            let stress = kirchhoff_from_svd(&projected, &svd_proj, j, params);
            Ok((projected, stress, j))
        }
    }
}
