//! Rigid thin-cuboid knife: time-varying signed distance field, Coulomb
//! friction contact at grid nodes, and reaction-force readout.

use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

/// Rigid knife state. The cuboid is centered on `position` with local axes
/// given by `orientation`; `half_extents` is ordered (length, thickness,
/// height), so the blade plane is the local x–z plane and the local y axis
/// is the surface normal of the flats.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KnifeState {
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
    pub linear_velocity: Vector3<f64>,
    /// World-frame angular velocity (rad/s).
    pub angular_velocity: Vector3<f64>,
    pub half_extents: Vector3<f64>,
    pub friction_mu: f64,
    /// Reaction force accumulated over the substeps of one control step (N).
    pub force_accum: Vector3<f64>,
}

impl KnifeState {
    pub fn new(
        position: Vector3<f64>,
        orientation: UnitQuaternion<f64>,
        half_extents: Vector3<f64>,
        friction_mu: f64,
    ) -> Self {
        debug_assert!(half_extents.min() > 0.0);
        debug_assert!(friction_mu >= 0.0);
        KnifeState {
            position,
            orientation,
            linear_velocity: Vector3::zeros(),
            angular_velocity: Vector3::zeros(),
            half_extents,
            friction_mu,
            force_accum: Vector3::zeros(),
        }
    }

    #[inline]
    fn to_local(&self, point: &Vector3<f64>) -> Vector3<f64> {
        self.orientation.inverse_transform_vector(&(point - self.position))
    }

    /// Exact signed distance to the oriented box: negative inside, positive
    /// outside.
    pub fn sdf(&self, point: &Vector3<f64>) -> f64 {
        let local = self.to_local(point);
        let q = local.abs() - self.half_extents;
        let outside = Vector3::new(q.x.max(0.0), q.y.max(0.0), q.z.max(0.0)).norm();
        let inside = q.x.max(q.y).max(q.z).min(0.0);
        outside + inside
    }

    /// Outward unit surface normal. Exterior points use the normalized
    /// gradient of the exterior distance (which also resolves edge/corner
    /// ties); interior points take the normal of the nearest face, lowest
    /// axis index winning ties.
    pub fn sdf_normal(&self, point: &Vector3<f64>) -> Vector3<f64> {
        let local = self.to_local(point);
        let q = local.abs() - self.half_extents;
        let n_local = if q.x > 0.0 || q.y > 0.0 || q.z > 0.0 {
            let g = Vector3::new(
                q.x.max(0.0) * local.x.signum(),
                q.y.max(0.0) * local.y.signum(),
                q.z.max(0.0) * local.z.signum(),
            );
            g / g.norm()
        } else {
            let mut axis = 0;
            if q.y > q[axis] {
                axis = 1;
            }
            if q.z > q[axis] {
                axis = 2;
            }
            let mut n = Vector3::zeros();
            n[axis] = if local[axis] >= 0.0 { 1.0 } else { -1.0 };
            n
        };
        self.orientation.transform_vector(&n_local)
    }

    /// Rigid-body velocity of the knife surface material at a world point.
    #[inline]
    pub fn surface_velocity(&self, point: &Vector3<f64>) -> Vector3<f64> {
        self.linear_velocity + self.angular_velocity.cross(&(point - self.position))
    }

    /// Projects a grid-node velocity against the knife with Coulomb
    /// friction. Returns the projected velocity and the impulse imparted to
    /// the node, `node_mass * (projected - original)`. Separating nodes pass
    /// through unchanged.
    pub fn resolve_contact(
        &self,
        node_velocity: &Vector3<f64>,
        node_position: &Vector3<f64>,
        node_mass: f64,
    ) -> (Vector3<f64>, Vector3<f64>) {
        let surface_v = self.surface_velocity(node_position);
        let v_rel = node_velocity - surface_v;
        let normal = self.sdf_normal(node_position);
        let vn = v_rel.dot(&normal);
        if vn >= 0.0 {
            return (*node_velocity, Vector3::zeros());
        }
        let v_t = v_rel - normal * vn;
        let t_norm = v_t.norm();
        let v_t = if t_norm > 0.0 {
            v_t * (1.0 - self.friction_mu * (-vn) / t_norm).max(0.0)
        } else {
            v_t
        };
        let projected = surface_v + v_t;
        let impulse = (projected - node_velocity) * node_mass;
        (projected, impulse)
    }

    /// Advances the pose by one substep of rigid-body motion.
    pub fn advance(&mut self, dt: f64) {
        self.position += self.linear_velocity * dt;
        self.orientation =
            UnitQuaternion::from_scaled_axis(self.angular_velocity * dt) * self.orientation;
        self.orientation.renormalize_fast();
    }

    /// World-axis-aligned bounding box of the cuboid, inflated by `pad`.
    pub fn aabb(&self, pad: f64) -> (Vector3<f64>, Vector3<f64>) {
        let rot = self.orientation.to_rotation_matrix();
        let m = rot.matrix();
        let ext = Vector3::new(
            m.row(0).iter().zip(self.half_extents.iter()).map(|(r, h)| r.abs() * h).sum::<f64>(),
            m.row(1).iter().zip(self.half_extents.iter()).map(|(r, h)| r.abs() * h).sum::<f64>(),
            m.row(2).iter().zip(self.half_extents.iter()).map(|(r, h)| r.abs() * h).sum::<f64>(),
        ) + Vector3::from_element(pad);
        (self.position - ext, self.position + ext)
    }
}

/// Knife geometry and friction, the fixed part of [`KnifeState`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KnifeConfig {
    /// Half extents (length, thickness, height) in meters.
    pub half_extents: Vector3<f64>,
    pub friction_mu: f64,
}

impl Default for KnifeConfig {
    fn default() -> Self {
        KnifeConfig {
            half_extents: Vector3::new(0.05, 0.001, 0.02),
            friction_mu: 0.2,
        }
    }
}

/// Converts one substep's summed contact impulses into the knife reaction
/// force sample: `-impulse_sum / dt`, clipped component-wise.
pub fn accumulate_knife_force(
    impulse_sum: &Vector3<f64>,
    dt: f64,
    force_clip: f64,
) -> Vector3<f64> {
    let f = -impulse_sum / dt;
    Vector3::new(
        f.x.clamp(-force_clip, force_clip),
        f.y.clamp(-force_clip, force_clip),
        f.z.clamp(-force_clip, force_clip),
    )
}
