//! Nominal 6-DoF knife trajectories and residual-pose composition.
//!
//! Translation is interpolated with a natural cubic spline through the
//! waypoint positions, orientation with piecewise slerp. Residual
//! adjustments are a translation plus a rotation vector composed through the
//! exponential map.

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3, Vector6};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scene::{BoneLayout, SceneConfig};

/// A 6-DoF pose.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
}

impl Pose {
    pub fn identity() -> Self {
        Pose {
            position: Vector3::zeros(),
            orientation: UnitQuaternion::identity(),
        }
    }

    /// Flat 7-vector layout: position then quaternion (w, x, y, z).
    pub fn to_array(&self) -> [f64; 7] {
        let q = self.orientation.quaternion();
        [self.position.x, self.position.y, self.position.z, q.w, q.i, q.j, q.k]
    }
}

/// Time-stamped pose sample on the nominal trajectory; `t` is normalized to
/// [0, 1] over the episode.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Waypoint {
    pub t: f64,
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
}

/// Accumulated residual adjustment: translation (m) plus rotation vector
/// (rad), both norm-clipped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualPose {
    pub translation: Vector3<f64>,
    pub rotation: Vector3<f64>,
}

impl ResidualPose {
    pub fn zero() -> Self {
        ResidualPose {
            translation: Vector3::zeros(),
            rotation: Vector3::zeros(),
        }
    }

    pub fn to_array(&self) -> [f64; 6] {
        [
            self.translation.x,
            self.translation.y,
            self.translation.z,
            self.rotation.x,
            self.rotation.y,
            self.rotation.z,
        ]
    }

    pub fn norm_squared(&self) -> f64 {
        self.translation.norm_squared() + self.rotation.norm_squared()
    }
}

/// Per-step action scaling and residual clip bounds.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ResidualLimits {
    /// Translation action scale (m per unit action per step).
    pub eta_translation: f64,
    /// Rotation action scale (rad per unit action per step).
    pub eta_rotation: f64,
    /// Max residual translation norm (m).
    pub translation_clip: f64,
    /// Max residual rotation-vector norm (rad).
    pub rotation_clip: f64,
}

impl Default for ResidualLimits {
    fn default() -> Self {
        ResidualLimits {
            eta_translation: 0.001,
            eta_rotation: 0.01,
            translation_clip: 0.01,
            rotation_clip: 0.1,
        }
    }
}

#[derive(Debug, Error)]
pub enum TrajectoryError {
    #[error("interpolation parameter {0} outside [0, 1]")]
    OutOfRange(f64),
    #[error("trajectory needs at least two waypoints, got {0}")]
    TooFewWaypoints(usize),
    #[error("waypoint times must strictly increase from 0 to 1: {0}")]
    BadKnots(String),
    #[error("cannot build a nominal trajectory: {0}")]
    Degenerate(String),
}

/// Natural cubic spline through `(t_i, y_i)` knots (zero second derivative
/// at both ends), solved once with the Thomas algorithm.
#[derive(Debug, Clone)]
struct CubicSpline {
    knots: Vec<f64>,
    values: Vec<f64>,
    second_derivs: Vec<f64>,
}

impl CubicSpline {
    fn new(knots: &[f64], values: &[f64]) -> Self {
        let n = knots.len();
        let mut m = vec![0.0; n];
        if n > 2 {
            // Tridiagonal system for interior second derivatives.
            let mut sub = vec![0.0; n];
            let mut diag = vec![0.0; n];
            let mut sup = vec![0.0; n];
            let mut rhs = vec![0.0; n];
            for i in 1..n - 1 {
                let h0 = knots[i] - knots[i - 1];
                let h1 = knots[i + 1] - knots[i];
                sub[i] = h0 / 6.0;
                diag[i] = (h0 + h1) / 3.0;
                sup[i] = h1 / 6.0;
                rhs[i] = (values[i + 1] - values[i]) / h1 - (values[i] - values[i - 1]) / h0;
            }
            for i in 2..n - 1 {
                let w = sub[i] / diag[i - 1];
                diag[i] -= w * sup[i - 1];
                rhs[i] -= w * rhs[i - 1];
            }
            m[n - 2] = rhs[n - 2] / diag[n - 2];
            for i in (1..n - 2).rev() {
                m[i] = (rhs[i] - sup[i] * m[i + 1]) / diag[i];
            }
        }
        CubicSpline {
            knots: knots.to_vec(),
            values: values.to_vec(),
            second_derivs: m,
        }
    }

    fn eval(&self, t: f64) -> f64 {
        let seg = segment_index(&self.knots, t);
        let (t0, t1) = (self.knots[seg], self.knots[seg + 1]);
        let h = t1 - t0;
        let a = (t1 - t) / h;
        let b = (t - t0) / h;
        a * self.values[seg]
            + b * self.values[seg + 1]
            + ((a * a * a - a) * self.second_derivs[seg]
                + (b * b * b - b) * self.second_derivs[seg + 1])
                * h
                * h
                / 6.0
    }
}

fn segment_index(knots: &[f64], t: f64) -> usize {
    let n = knots.len();
    let mut seg = n - 2;
    for i in 0..n - 1 {
        if t < knots[i + 1] {
            seg = i;
            break;
        }
    }
    seg
}

/// Geodesic interpolation between unit quaternions; assumes the pair is
/// already in the same hemisphere.
pub fn slerp(a: &UnitQuaternion<f64>, b: &UnitQuaternion<f64>, s: f64) -> UnitQuaternion<f64> {
    let dot = a.coords.dot(&b.coords).clamp(-1.0, 1.0);
    if dot > 1.0 - 1e-12 {
        // Nearly identical: normalized linear interpolation is exact enough.
        return UnitQuaternion::new_normalize(
            nalgebra::Quaternion::from(a.coords * (1.0 - s) + b.coords * s),
        );
    }
    let theta = dot.acos();
    let sin_theta = theta.sin();
    let wa = ((1.0 - s) * theta).sin() / sin_theta;
    let wb = (s * theta).sin() / sin_theta;
    UnitQuaternion::new_normalize(nalgebra::Quaternion::from(a.coords * wa + b.coords * wb))
}

/// Precomputed nominal trajectory over normalized time [0, 1].
#[derive(Debug, Clone)]
pub struct NominalTrajectory {
    waypoints: Vec<Waypoint>,
    splines: [CubicSpline; 3],
}

impl NominalTrajectory {
    /// Validates knots, renormalizes orientations, and flips consecutive
    /// quaternions into the same hemisphere before precomputing splines.
    pub fn new(mut waypoints: Vec<Waypoint>) -> Result<Self, TrajectoryError> {
        if waypoints.len() < 2 {
            return Err(TrajectoryError::TooFewWaypoints(waypoints.len()));
        }
        for w in waypoints.windows(2) {
            if !(w[1].t > w[0].t) {
                return Err(TrajectoryError::BadKnots(format!(
                    "t {} then {}",
                    w[0].t, w[1].t
                )));
            }
        }
        let first = waypoints.first().unwrap().t;
        let last = waypoints.last().unwrap().t;
        if first != 0.0 || last != 1.0 {
            return Err(TrajectoryError::BadKnots(format!(
                "trajectory must span t = 0..1, got {first}..{last}"
            )));
        }
        for i in 1..waypoints.len() {
            if waypoints[i - 1].orientation.coords.dot(&waypoints[i].orientation.coords) < 0.0 {
                waypoints[i].orientation = UnitQuaternion::new_unchecked(
                    -waypoints[i].orientation.into_inner(),
                );
            }
        }
        let knots: Vec<f64> = waypoints.iter().map(|w| w.t).collect();
        let splines = [0, 1, 2].map(|axis| {
            let values: Vec<f64> = waypoints.iter().map(|w| w.position[axis]).collect();
            CubicSpline::new(&knots, &values)
        });
        Ok(NominalTrajectory { waypoints, splines })
    }

    pub fn waypoints(&self) -> &[Waypoint] {
        &self.waypoints
    }

    /// Pose at normalized time `t` in [0, 1].
    pub fn interpolate(&self, t: f64) -> Result<Pose, TrajectoryError> {
        if !(0.0..=1.0).contains(&t) {
            return Err(TrajectoryError::OutOfRange(t));
        }
        let position = Vector3::new(
            self.splines[0].eval(t),
            self.splines[1].eval(t),
            self.splines[2].eval(t),
        );
        let knots: Vec<f64> = self.waypoints.iter().map(|w| w.t).collect();
        let seg = segment_index(&knots, t);
        let (w0, w1) = (&self.waypoints[seg], &self.waypoints[seg + 1]);
        let s = (t - w0.t) / (w1.t - w0.t);
        let orientation = slerp(&w0.orientation, &w1.orientation, s);
        Ok(Pose { position, orientation })
    }
}

/// Applies a residual on top of a nominal pose: translation is added,
/// rotation composes through the exponential map.
pub fn compose_residual(nominal: &Pose, residual: &ResidualPose) -> Pose {
    let correction = UnitQuaternion::from_scaled_axis(residual.rotation);
    let mut orientation = correction * nominal.orientation;
    orientation.renormalize();
    Pose {
        position: nominal.position + residual.translation,
        orientation,
    }
}

/// Integrates a policy action into the residual: `e' = e + η·a`, then the
/// translation and rotation norms are clipped (direction preserved).
pub fn update_residual(
    residual: &ResidualPose,
    action: &Vector6<f64>,
    limits: &ResidualLimits,
) -> ResidualPose {
    let translation = residual.translation
        + Vector3::new(action[0], action[1], action[2]) * limits.eta_translation;
    let rotation =
        residual.rotation + Vector3::new(action[3], action[4], action[5]) * limits.eta_rotation;
    ResidualPose {
        translation: clip_norm(translation, limits.translation_clip),
        rotation: clip_norm(rotation, limits.rotation_clip),
    }
}

fn clip_norm(v: Vector3<f64>, max_norm: f64) -> Vector3<f64> {
    let n = v.norm();
    if n > max_norm {
        v * (max_norm / n)
    } else {
        v
    }
}

/// Vertical clearances used when deriving waypoints from an estimated bone
/// layout.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct NominalParams {
    /// Blade-tip clearance above the block at the approach waypoint (m).
    pub approach_clearance: f64,
    /// Blade-tip clearance below the block at the exit waypoint (m).
    pub exit_clearance: f64,
}

impl Default for NominalParams {
    fn default() -> Self {
        NominalParams {
            approach_clearance: 0.005,
            exit_clearance: 0.005,
        }
    }
}

/// Builds the three-waypoint nominal cut from an estimated bone layout:
/// approach above the estimated gap midpoint, mid-cut at the midpoint with
/// the blade plane perpendicular to the estimated inter-center axis, exit
/// below the block. The whole construction is equivariant in the estimate.
pub fn nominal_from_estimate(
    estimate: &BoneLayout,
    scene: &SceneConfig,
    knife_half_extents: &Vector3<f64>,
    params: &NominalParams,
) -> Result<Vec<Waypoint>, TrajectoryError> {
    let axis = estimate.axis();
    if axis.cross(&Vector3::z()).norm() < 1e-9 {
        return Err(TrajectoryError::Degenerate(
            "inter-center axis is vertical; the blade cannot descend along it".into(),
        ));
    }
    let gap_mid = estimate.gap_midpoint();
    let height = Vector3::z();
    let length = axis.cross(&height).normalize();
    // Column basis (length, normal, height) is a proper rotation: the blade
    // plane (local x–z) contains the gap midplane.
    let rot = Matrix3::from_columns(&[length, axis, height]);
    let orientation = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(rot));

    let half_height = scene.meat_box_extents.z * 0.5;
    let blade_half_height = knife_half_extents.z;
    let rise = half_height + blade_half_height + params.approach_clearance;
    let drop = half_height + params.exit_clearance - blade_half_height;
    if drop <= 0.0 {
        return Err(TrajectoryError::Degenerate(format!(
            "blade half-height {blade_half_height} exceeds the exit depth {}",
            half_height + params.exit_clearance
        )));
    }
    let t_mid = rise / (rise + drop);
    Ok(vec![
        Waypoint {
            t: 0.0,
            position: gap_mid + Vector3::new(0.0, 0.0, rise),
            orientation,
        },
        Waypoint {
            t: t_mid,
            position: gap_mid,
            orientation,
        },
        Waypoint {
            t: 1.0,
            position: gap_mid - Vector3::new(0.0, 0.0, drop),
            orientation,
        },
    ])
}
