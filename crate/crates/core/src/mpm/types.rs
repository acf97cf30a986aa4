//! Particle, grid, and parameter types for the MPM stepper.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Material label carried by every particle. Labels never change after
/// seeding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaterialId {
    Meat,
    Bone,
}

impl MaterialId {
    #[inline]
    pub fn index(self) -> usize {
        match self {
            MaterialId::Meat => 0,
            MaterialId::Bone => 1,
        }
    }
}

/// Elastoplastic material parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaterialParams {
    /// First Lamé parameter (Pa).
    pub lambda: f64,
    /// Second Lamé parameter / shear modulus (Pa).
    pub mu: f64,
    /// Density (kg/m³).
    pub rho: f64,
    /// Von Mises yield stress on the deviatoric Hencky stress norm (Pa).
    pub yield_stress: f64,
}

impl MaterialParams {
    pub fn validate(&self, name: &str) -> Result<(), SimError> {
        if !(self.lambda > 0.0 && self.mu > 0.0 && self.rho > 0.0 && self.yield_stress > 0.0) {
            return Err(SimError::InvalidParams(format!(
                "material '{name}' requires lambda, mu, rho, yield_stress > 0, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// Per-material parameter table indexed by [`MaterialId`].
#[derive(Debug, Clone, Copy)]
pub struct MaterialTable(pub [MaterialParams; 2]);

impl MaterialTable {
    #[inline]
    pub fn get(&self, id: MaterialId) -> &MaterialParams {
        &self.0[id.index()]
    }
}

/// A material point.
#[derive(Debug, Clone, Copy)]
pub struct Particle {
    /// Position (m).
    pub position: Vector3<f64>,
    /// Velocity (m/s).
    pub velocity: Vector3<f64>,
    /// Deformation gradient.
    pub def_grad: Matrix3<f64>,
    /// Affine velocity matrix (1/s), the APIC C matrix.
    pub affine: Matrix3<f64>,
    /// Cached Kirchhoff stress P·Fᵀ (Pa), refreshed at the end of every
    /// substep so the scatter phase never has to redo the SVD.
    pub stress: Matrix3<f64>,
    /// Mass (kg).
    pub mass: f64,
    /// Initial volume (m³).
    pub rest_volume: f64,
    pub material: MaterialId,
}

impl Particle {
    pub fn at_rest(position: Vector3<f64>, mass: f64, rest_volume: f64, material: MaterialId) -> Self {
        Particle {
            position,
            velocity: Vector3::zeros(),
            def_grad: Matrix3::identity(),
            affine: Matrix3::zeros(),
            stress: Matrix3::zeros(),
            mass,
            rest_volume,
            material,
        }
    }
}

/// One background-grid node: mass plus a vector that holds momentum
/// (kg·m/s) after the scatter and velocity (m/s) after normalization.
#[derive(Debug, Clone, Copy, Default)]
pub struct GridNode {
    pub mass: f64,
    pub momentum: Vector3<f64>,
}

/// Component-wise clipping bounds applied during the grid update and to the
/// per-substep knife force sample.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ClipBounds {
    /// Max grid-velocity component magnitude (m/s).
    pub velocity_max: f64,
    /// Max knife-force-sample component magnitude (N).
    pub force_max: f64,
}

/// Fixed solver parameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SimParams {
    /// Grid nodes per axis.
    pub grid_res: usize,
    /// Domain edge length (m); node spacing dx = domain_size / grid_res.
    pub domain_size: f64,
    /// Substep duration (s).
    pub dt: f64,
    pub gravity: Vector3<f64>,
    pub clip: ClipBounds,
    /// Width in nodes of the boundary bands (sticky floor, slip walls).
    pub boundary_width: usize,
    /// Knife contact band in cells; nodes with sdf < band·dx are projected.
    pub contact_band_cells: f64,
}

impl SimParams {
    #[inline]
    pub fn dx(&self) -> f64 {
        self.domain_size / self.grid_res as f64
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.grid_res < 8 {
            return Err(SimError::InvalidParams(format!(
                "grid_res {} too small (need >= 8)",
                self.grid_res
            )));
        }
        if !(self.domain_size > 0.0 && self.dt > 0.0) {
            return Err(SimError::InvalidParams(
                "domain_size and dt must be positive".into(),
            ));
        }
        // CFL guard: even a fully clipped node cannot cross a cell per substep.
        if self.clip.velocity_max * self.dt >= self.dx() {
            return Err(SimError::InvalidParams(format!(
                "CFL violation: velocity_max*dt = {:.3e} must stay below dx = {:.3e}",
                self.clip.velocity_max * self.dt,
                self.dx()
            )));
        }
        if self.clip.velocity_max <= 0.0 || self.clip.force_max <= 0.0 {
            return Err(SimError::InvalidParams("clip bounds must be positive".into()));
        }
        if self.boundary_width < 2 {
            return Err(SimError::InvalidParams(
                "boundary_width must be at least 2 nodes".into(),
            ));
        }
        Ok(())
    }
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams {
            grid_res: 64,
            domain_size: 0.2,
            dt: 1e-4,
            gravity: Vector3::zeros(),
            clip: ClipBounds {
                velocity_max: 2.0,
                force_max: 200.0,
            },
            boundary_width: 2,
            contact_band_cells: 0.5,
        }
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("particle {particle} at {position:?} is outside the domain margin")]
    OutOfDomain { particle: usize, position: [f64; 3] },
    #[error("particle {particle} reached an invalid state: det(F) = {det:.6e} <= 0")]
    InvalidState { particle: usize, det: f64 },
    #[error("invalid simulation parameters: {0}")]
    InvalidParams(String),
}
