//! MLS-MPM time stepper for elastoplastic continua.
//!
//! One substep runs scatter ([`SimState::p2g`]), grid momentum update with
//! knife contact and boundary conditions ([`SimState::grid_update`]), and
//! gather/advection with the plasticity projection ([`SimState::g2p`]).
//! Transfers use quadratic B-spline weights over each particle's 3×3×3 node
//! neighborhood. The stepper is sequential and fully deterministic for a
//! given initial state.

pub mod constitutive;
pub mod types;

pub use constitutive::{project_and_stress, stress, von_mises_return_map};
pub use types::{
    ClipBounds, GridNode, MaterialId, MaterialParams, MaterialTable, Particle, SimError, SimParams,
};

use nalgebra::{Matrix3, Vector3};

use crate::knife::{accumulate_knife_force, KnifeState};

/// Quadratic B-spline weights for the three stencil nodes along one axis;
/// `fx` is the distance from the base node in cells, in [0.5, 1.5].
#[inline]
pub fn bspline_weights(fx: f64) -> [f64; 3] {
    [
        0.5 * (1.5 - fx) * (1.5 - fx),
        0.75 - (fx - 1.0) * (fx - 1.0),
        0.5 * (fx - 0.5) * (fx - 0.5),
    ]
}

/// Full simulator state: particles plus the dense background grid.
pub struct SimState {
    pub params: SimParams,
    pub materials: MaterialTable,
    pub particles: Vec<Particle>,
    grid: Vec<GridNode>,
    /// Node-index box written by the last scatter, cleared at the start of
    /// the next one. Everything outside it is guaranteed zero.
    written: Option<([usize; 3], [usize; 3])>,
    dx: f64,
    inv_dx: f64,
}

impl SimState {
    pub fn new(
        params: SimParams,
        materials: MaterialTable,
        particles: Vec<Particle>,
    ) -> Result<Self, SimError> {
        params.validate()?;
        materials.0[0].validate("meat")?;
        materials.0[1].validate("bone")?;
        let n = params.grid_res;
        let dx = params.dx();
        Ok(SimState {
            params,
            materials,
            particles,
            grid: vec![GridNode::default(); n * n * n],
            written: None,
            dx,
            inv_dx: 1.0 / dx,
        })
    }

    #[inline]
    pub fn dx(&self) -> f64 {
        self.dx
    }

    #[inline]
    fn node_index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.params.grid_res + j) * self.params.grid_res + k
    }

    #[inline]
    pub fn node_position(&self, i: usize, j: usize, k: usize) -> Vector3<f64> {
        Vector3::new(i as f64, j as f64, k as f64) * self.dx
    }

    pub fn node(&self, i: usize, j: usize, k: usize) -> &GridNode {
        &self.grid[self.node_index(i, j, k)]
    }

    /// Stencil base node and fractional offset for a position.
    #[inline]
    fn base_and_frac(&self, position: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
        let gp = position * self.inv_dx;
        let base = Vector3::new((gp.x - 0.5).floor(), (gp.y - 0.5).floor(), (gp.z - 0.5).floor());
        (base, gp - base)
    }

    fn clear_written(&mut self) {
        if let Some((lo, hi)) = self.written.take() {
            for i in lo[0]..=hi[0] {
                for j in lo[1]..=hi[1] {
                    let row = self.node_index(i, j, lo[2]);
                    for node in &mut self.grid[row..=row + (hi[2] - lo[2])] {
                        *node = GridNode::default();
                    }
                }
            }
        }
    }

    /// Scatters particle mass and momentum to the grid, including the fused
    /// MLS-MPM stress/affine contribution. Fails if any particle sits closer
    /// than two cells to the domain boundary.
    pub fn p2g(&mut self) -> Result<(), SimError> {
        self.clear_written();
        if self.particles.is_empty() {
            return Ok(());
        }

        let res = self.params.grid_res;
        let mut lo = [usize::MAX; 3];
        let mut hi = [0usize; 3];
        for (pi, p) in self.particles.iter().enumerate() {
            let (base, _) = self.base_and_frac(&p.position);
            for a in 0..3 {
                let b = base[a];
                if !(b >= 1.0 && b + 2.0 <= (res - 2) as f64) {
                    return Err(SimError::OutOfDomain {
                        particle: pi,
                        position: [p.position.x, p.position.y, p.position.z],
                    });
                }
                let b = b as usize;
                lo[a] = lo[a].min(b);
                hi[a] = hi[a].max(b + 2);
            }
        }
        self.written = Some((lo, hi));

        let dx = self.dx;
        let stress_scale = 4.0 * self.params.dt * self.inv_dx * self.inv_dx;
        for p in &self.particles {
            let (base, fx) = self.base_and_frac(&p.position);
            let wx = bspline_weights(fx.x);
            let wy = bspline_weights(fx.y);
            let wz = bspline_weights(fx.z);
            let mv = p.velocity * p.mass;
            let resting = p.affine == Matrix3::zeros() && p.stress == Matrix3::zeros();
            let affine = p.affine * p.mass - p.stress * (stress_scale * p.rest_volume);
            let (bi, bj, bk) = (base.x as usize, base.y as usize, base.z as usize);
            let dpz: [f64; 3] = std::array::from_fn(|k| (k as f64 - fx.z) * dx);
            for i in 0..3 {
                let dpx = (i as f64 - fx.x) * dx;
                // Hoist the x-column contribution of the affine matvec.
                let mv_i = mv + affine.column(0) * dpx;
                for j in 0..3 {
                    let wij = wx[i] * wy[j];
                    let dpy = (j as f64 - fx.y) * dx;
                    let mv_ij = mv_i + affine.column(1) * dpy;
                    let row = ((bi + i) * res + (bj + j)) * res + bk;
                    let nodes = &mut self.grid[row..row + 3];
                    for (k, node) in nodes.iter_mut().enumerate() {
                        let w = wij * wz[k];
                        node.mass += w * p.mass;
                        if resting {
                            node.momentum += mv * w;
                        } else {
                            node.momentum += (mv_ij + affine.column(2) * dpz[k]) * w;
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Normalizes grid momenta to velocities, applies gravity, clipping,
    /// knife contact projection, and domain boundary conditions (sticky
    /// floor, separable-slip walls). Returns the summed contact impulse.
    pub fn grid_update(&mut self, knife: Option<&KnifeState>) -> Vector3<f64> {
        let Some((lo, hi)) = self.written else {
            return Vector3::zeros();
        };
        let dt = self.params.dt;
        let gravity_dt = self.params.gravity * dt;
        let vmax = self.params.clip.velocity_max;
        let band = self.params.contact_band_cells * self.dx;
        let knife_box = knife.map(|k| k.aabb(band));
        let wall_lo = self.params.boundary_width;
        let wall_hi = self.params.grid_res - 1 - self.params.boundary_width;
        let mut impulse_sum = Vector3::zeros();

        for i in lo[0]..=hi[0] {
            for j in lo[1]..=hi[1] {
                for k in lo[2]..=hi[2] {
                    let idx = self.node_index(i, j, k);
                    let node = &mut self.grid[idx];
                    if node.mass <= 0.0 {
                        continue;
                    }
                    let mut v = node.momentum / node.mass + gravity_dt;
                    v.x = v.x.clamp(-vmax, vmax);
                    v.y = v.y.clamp(-vmax, vmax);
                    v.z = v.z.clamp(-vmax, vmax);

                    if let (Some(kn), Some((bmin, bmax))) = (knife, &knife_box) {
                        let x = Vector3::new(i as f64, j as f64, k as f64) * self.dx;
                        if x.x >= bmin.x
                            && x.x <= bmax.x
                            && x.y >= bmin.y
                            && x.y <= bmax.y
                            && x.z >= bmin.z
                            && x.z <= bmax.z
                            && kn.sdf(&x) < band
                        {
                            let (projected, impulse) = kn.resolve_contact(&v, &x, node.mass);
                            v = projected;
                            impulse_sum += impulse;
                        }
                    }

                    // Sticky floor, separable-slip walls and ceiling.
                    if k <= wall_lo {
                        v = Vector3::zeros();
                    } else {
                        if (i <= wall_lo && v.x < 0.0) || (i >= wall_hi && v.x > 0.0) {
                            v.x = 0.0;
                        }
                        if (j <= wall_lo && v.y < 0.0) || (j >= wall_hi && v.y > 0.0) {
                            v.y = 0.0;
                        }
                        if k >= wall_hi && v.z > 0.0 {
                            v.z = 0.0;
                        }
                    }
                    node.momentum = v;
                }
            }
        }
        impulse_sum
    }

    /// Gathers velocities and affine matrices back to particles, updates and
    /// projects deformation gradients, refreshes the stress cache, advects,
    /// and clamps positions to the domain margin.
    pub fn g2p(&mut self) -> Result<(), SimError> {
        if self.written.is_none() {
            return Ok(());
        }
        let res = self.params.grid_res;
        let dx = self.dx;
        let dt = self.params.dt;
        let d_inv = 4.0 * self.inv_dx * self.inv_dx;
        let clamp_lo = 2.0 * dx;
        let clamp_hi = (res as f64 - 2.0) * dx;
        let inv_dx = self.inv_dx;

        for pi in 0..self.particles.len() {
            let p = &self.particles[pi];
            let gp = p.position * inv_dx;
            let base =
                Vector3::new((gp.x - 0.5).floor(), (gp.y - 0.5).floor(), (gp.z - 0.5).floor());
            let fx = gp - base;
            let wx = bspline_weights(fx.x);
            let wy = bspline_weights(fx.y);
            let wz = bspline_weights(fx.z);
            let (bi, bj, bk) = (base.x as usize, base.y as usize, base.z as usize);

            let mut velocity = Vector3::zeros();
            let mut b_mat = Matrix3::zeros();
            let dpz: [f64; 3] = std::array::from_fn(|k| (k as f64 - fx.z) * dx);
            for i in 0..3 {
                let dpx = (i as f64 - fx.x) * dx;
                for j in 0..3 {
                    let wij = wx[i] * wy[j];
                    let dpy = (j as f64 - fx.y) * dx;
                    let row = ((bi + i) * res + (bj + j)) * res + bk;
                    // Row-level partial sums: Σ w·v and Σ w·v·dpz.
                    let mut s0 = Vector3::zeros();
                    let mut s1 = Vector3::zeros();
                    for (k, node) in self.grid[row..row + 3].iter().enumerate() {
                        let wv = node.momentum * (wij * wz[k]);
                        s0 += wv;
                        s1 += wv * dpz[k];
                    }
                    velocity += s0;
                    b_mat.column_mut(0).axpy(dpx, &s0, 1.0);
                    b_mat.column_mut(1).axpy(dpy, &s0, 1.0);
                    b_mat.column_mut(2).axpy(1.0, &s1, 1.0);
                }
            }

            let affine = b_mat * d_inv;
            let p = &mut self.particles[pi];
            if affine == Matrix3::zeros() {
                // Quiescent neighborhood: F is unchanged, the cached stress
                // stays valid, and no SVD is needed.
                p.affine = affine;
                p.velocity = velocity;
            } else {
                let trial = (Matrix3::identity() + affine * dt) * p.def_grad;
                let mat = self.materials.get(p.material);
                let (def_grad, tau, _det) = project_and_stress(&trial, mat).map_err(|e| match e {
                    SimError::InvalidState { det, .. } => SimError::InvalidState { particle: pi, det },
                    other => other,
                })?;
                p.def_grad = def_grad;
                p.stress = tau;
                p.affine = affine;
                p.velocity = velocity;
            }
            p.position += p.velocity * dt;
            p.position.x = p.position.x.clamp(clamp_lo, clamp_hi);
            p.position.y = p.position.y.clamp(clamp_lo, clamp_hi);
            p.position.z = p.position.z.clamp(clamp_lo, clamp_hi);
        }
        Ok(())
    }

    /// One full substep. Returns the clipped knife reaction-force sample for
    /// this substep (zero without a knife); the sample is also added to the
    /// knife's `force_accum` and the knife pose is advanced by `dt`.
    pub fn step(&mut self, knife: Option<&mut KnifeState>) -> Result<Vector3<f64>, SimError> {
        self.p2g()?;
        let impulse = self.grid_update(knife.as_deref());
        self.g2p()?;
        if let Some(kn) = knife {
            let force = accumulate_knife_force(&impulse, self.params.dt, self.params.clip.force_max);
            kn.force_accum += force;
            kn.advance(self.params.dt);
            Ok(force)
        } else {
            Ok(Vector3::zeros())
        }
    }

    pub fn total_particle_mass(&self) -> f64 {
        self.particles.iter().map(|p| p.mass).sum()
    }

    pub fn total_particle_momentum(&self) -> Vector3<f64> {
        self.particles
            .iter()
            .fold(Vector3::zeros(), |acc, p| acc + p.velocity * p.mass)
    }

    /// Total mass currently on the grid (zero before the first scatter).
    pub fn total_grid_mass(&self) -> f64 {
        let Some((lo, hi)) = self.written else {
            return 0.0;
        };
        let mut sum = 0.0;
        for i in lo[0]..=hi[0] {
            for j in lo[1]..=hi[1] {
                for k in lo[2]..=hi[2] {
                    sum += self.grid[self.node_index(i, j, k)].mass;
                }
            }
        }
        sum
    }

    /// Replaces the velocity of every massive node with `f(node_position)`.
    /// Test support for imposing analytic grid fields between `p2g` and
    /// `g2p`; treats the momentum slot as already normalized.
    pub fn override_grid_velocities(&mut self, f: &dyn Fn(Vector3<f64>) -> Vector3<f64>) {
        let Some((lo, hi)) = self.written else {
            return;
        };
        for i in lo[0]..=hi[0] {
            for j in lo[1]..=hi[1] {
                for k in lo[2]..=hi[2] {
                    let pos = self.node_position(i, j, k);
                    let idx = self.node_index(i, j, k);
                    let node = &mut self.grid[idx];
                    if node.mass > 0.0 {
                        node.momentum = f(pos);
                    }
                }
            }
        }
    }

    /// Visits every massive node of the written region.
    pub fn for_each_active_node(&self, f: &mut dyn FnMut(Vector3<f64>, &GridNode)) {
        let Some((lo, hi)) = self.written else {
            return;
        };
        for i in lo[0]..=hi[0] {
            for j in lo[1]..=hi[1] {
                for k in lo[2]..=hi[2] {
                    let node = &self.grid[self.node_index(i, j, k)];
                    if node.mass > 0.0 {
                        f(self.node_position(i, j, k), node);
                    }
                }
            }
        }
    }
}
