//! Scene construction for the simulated shoulder: a soft block embedding two
//! stiff spheres with a randomized common offset, plus the knife–bone
//! contact predicate.

use nalgebra::Vector3;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::knife::KnifeState;
use crate::mpm::{MaterialId, MaterialParams, Particle};

/// Geometry and material description of the two-sphere shoulder mock-up.
///
/// The sphere pair is centered on `meat_box_center` and separated along the
/// x axis (the long axis of the block); `offset_ranges` are per-axis uniform
/// sampling intervals for the common bone offset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneConfig {
    /// Bone sphere radius (m).
    pub sphere_radius: f64,
    /// Distance between sphere centers (m).
    pub sphere_center_distance: f64,
    /// Center of the soft block (m).
    pub meat_box_center: Vector3<f64>,
    /// Full extents of the soft block (m).
    pub meat_box_extents: Vector3<f64>,
    /// Per-axis `[lo, hi]` intervals for the bone offset (m).
    pub offset_ranges: [[f64; 2]; 3],
    pub meat: MaterialParams,
    pub bone: MaterialParams,
    /// Particles seeded per occupied grid cell.
    pub particles_per_cell: usize,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            sphere_radius: 0.021,
            sphere_center_distance: 0.05,
            meat_box_center: Vector3::new(0.1, 0.1, 0.07),
            meat_box_extents: Vector3::new(0.12, 0.08, 0.08),
            offset_ranges: [[-0.005, 0.005], [-0.01, 0.01], [-0.01, 0.01]],
            meat: MaterialParams {
                lambda: 27.78,
                mu: 41.67,
                rho: 1000.0,
                yield_stress: 50.0,
            },
            bone: MaterialParams {
                lambda: 222.22,
                mu: 333.33,
                rho: 2819.0,
                yield_stress: 5000.0,
            },
            particles_per_cell: 8,
        }
    }
}

/// Placement of the two bone spheres for one episode.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BoneLayout {
    pub center_a: Vector3<f64>,
    pub center_b: Vector3<f64>,
    /// The offset that was applied to the base placement.
    pub offset: Vector3<f64>,
}

impl BoneLayout {
    pub fn gap_midpoint(&self) -> Vector3<f64> {
        (self.center_a + self.center_b) * 0.5
    }

    /// Unit vector from sphere a to sphere b.
    pub fn axis(&self) -> Vector3<f64> {
        (self.center_b - self.center_a).normalize()
    }
}

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("scene configuration invalid: {0}")]
    Invalid(String),
}

impl SceneConfig {
    /// Width of the gap between the inner sphere surfaces (m).
    pub fn gap_width(&self) -> f64 {
        self.sphere_center_distance - 2.0 * self.sphere_radius
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        if self.gap_width() <= 0.0 {
            return Err(SceneError::Invalid(format!(
                "spheres overlap: center distance {} <= 2 x radius {}",
                self.sphere_center_distance, self.sphere_radius
            )));
        }
        if self.particles_per_cell == 0 {
            return Err(SceneError::Invalid("particles_per_cell must be >= 1".into()));
        }
        for (axis, r) in self.offset_ranges.iter().enumerate() {
            if r[0] > r[1] {
                return Err(SceneError::Invalid(format!(
                    "offset range for axis {axis} is inverted: {r:?}"
                )));
            }
        }
        // Both spheres must stay strictly inside the block for every offset.
        let half = self.meat_box_extents * 0.5;
        for axis in 0..3 {
            let max_off = self.offset_ranges[axis][0].abs().max(self.offset_ranges[axis][1].abs());
            let span = self.sphere_radius
                + max_off
                + if axis == 0 { self.sphere_center_distance * 0.5 } else { 0.0 };
            if span >= half[axis] {
                return Err(SceneError::Invalid(format!(
                    "spheres can leave the block along axis {axis}: reach {span} >= half extent {}",
                    half[axis]
                )));
            }
        }
        Ok(())
    }

    /// Sphere placement for a given offset; the pair is separated along x
    /// and the inter-center distance never changes.
    pub fn layout(&self, offset: Vector3<f64>) -> BoneLayout {
        let half_sep = Vector3::new(self.sphere_center_distance * 0.5, 0.0, 0.0);
        BoneLayout {
            center_a: self.meat_box_center - half_sep + offset,
            center_b: self.meat_box_center + half_sep + offset,
            offset,
        }
    }

    pub fn box_min(&self) -> Vector3<f64> {
        self.meat_box_center - self.meat_box_extents * 0.5
    }

    pub fn box_max(&self) -> Vector3<f64> {
        self.meat_box_center + self.meat_box_extents * 0.5
    }
}

/// Uniform per-axis sample of the bone offset.
pub fn sample_bone_offset(rng: &mut ChaCha8Rng, config: &SceneConfig) -> Vector3<f64> {
    let mut out = Vector3::zeros();
    for axis in 0..3 {
        let [lo, hi] = config.offset_ranges[axis];
        out[axis] = if lo == hi { lo } else { rng.random_range(lo..hi) };
    }
    out
}

/// Seeds particles over the block with `particles_per_cell` jittered-uniform
/// samples per grid cell; particles falling inside either sphere become
/// bone, everything else meat. Per-particle mass is `rho * dx³ / ppc`.
pub fn build_scene(
    config: &SceneConfig,
    layout: &BoneLayout,
    dx: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Particle>, SceneError> {
    config.validate()?;
    let lo = config.box_min();
    let hi = config.box_max();
    let cell_volume = dx * dx * dx;
    let ppc = config.particles_per_cell;
    let volume = cell_volume / ppc as f64;
    let r2 = config.sphere_radius * config.sphere_radius;

    let cells = |a: f64, b: f64| ((b - a) / dx).ceil().max(0.0) as usize;
    let (nx, ny, nz) = (cells(lo.x, hi.x), cells(lo.y, hi.y), cells(lo.z, hi.z));
    let mut particles = Vec::with_capacity(nx * ny * nz * ppc);
    for i in 0..nx {
        for j in 0..ny {
            for k in 0..nz {
                for _ in 0..ppc {
                    let pos = lo
                        + Vector3::new(
                            (i as f64 + rng.random_range(0.0..1.0)) * dx,
                            (j as f64 + rng.random_range(0.0..1.0)) * dx,
                            (k as f64 + rng.random_range(0.0..1.0)) * dx,
                        );
                    // Cells straddling the block surface only keep samples
                    // that fall inside, so density stays uniform.
                    if pos.x >= hi.x || pos.y >= hi.y || pos.z >= hi.z {
                        continue;
                    }
                    let is_bone = (pos - layout.center_a).norm_squared() <= r2
                        || (pos - layout.center_b).norm_squared() <= r2;
                    let (params, id) = if is_bone {
                        (&config.bone, MaterialId::Bone)
                    } else {
                        (&config.meat, MaterialId::Meat)
                    };
                    particles.push(Particle::at_rest(pos, params.rho * volume, volume, id));
                }
            }
        }
    }
    Ok(particles)
}

/// Whether any bone particle currently lies inside the knife, plus how many.
pub fn detect_bone_cut(particles: &[Particle], knife: &KnifeState) -> (bool, usize) {
    let (lo, hi) = knife.aabb(0.0);
    let mut count = 0;
    for p in particles {
        if p.material == MaterialId::Bone
            && p.position.x >= lo.x
            && p.position.x <= hi.x
            && p.position.y >= lo.y
            && p.position.y <= hi.y
            && p.position.z >= lo.z
            && p.position.z <= hi.z
            && knife.sdf(&p.position) < 0.0
        {
            count += 1;
        }
    }
    (count > 0, count)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::UnitQuaternion;
    use rand::SeedableRng;

    fn default_dx() -> f64 {
        0.2 / 48.0
    }

    #[test]
    fn offsets_are_reproducible_and_in_range() {
        let config = SceneConfig::default();
        let a = sample_bone_offset(&mut ChaCha8Rng::seed_from_u64(5), &config);
        let b = sample_bone_offset(&mut ChaCha8Rng::seed_from_u64(5), &config);
        assert_eq!(a, b);

        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let n = 10_000;
        let mut sum = Vector3::zeros();
        for _ in 0..n {
            let off = sample_bone_offset(&mut rng, &config);
            for axis in 0..3 {
                assert!(off[axis] >= config.offset_ranges[axis][0]);
                assert!(off[axis] <= config.offset_ranges[axis][1]);
            }
            sum += off;
        }
        let mean = sum / n as f64;
        // Per-axis mean within 3 sigma of zero: sigma_mean = width/sqrt(12 n).
        for axis in 0..3 {
            let width = config.offset_ranges[axis][1] - config.offset_ranges[axis][0];
            let sigma_mean = width / (12.0f64 * n as f64).sqrt();
            assert!(
                mean[axis].abs() < 3.0 * sigma_mean,
                "axis {axis} mean {} vs 3σ {}",
                mean[axis],
                3.0 * sigma_mean
            );
        }
    }

    #[test]
    fn zero_ranges_give_zero_offset() {
        let config = SceneConfig {
            offset_ranges: [[0.0, 0.0]; 3],
            ..SceneConfig::default()
        };
        let off = sample_bone_offset(&mut ChaCha8Rng::seed_from_u64(7), &config);
        assert_eq!(off, Vector3::zeros());
    }

    #[test]
    fn layout_preserves_center_distance() {
        let config = SceneConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..1000 {
            let off = sample_bone_offset(&mut rng, &config);
            let layout = config.layout(off);
            let d = (layout.center_a - layout.center_b).norm();
            assert!((d - config.sphere_center_distance).abs() < 1e-12);
        }
    }

    #[test]
    fn bone_volume_fraction_matches_analytic_ratio() {
        let config = SceneConfig::default();
        let layout = config.layout(Vector3::zeros());
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let particles = build_scene(&config, &layout, default_dx(), &mut rng).unwrap();
        let bone = particles.iter().filter(|p| p.material == MaterialId::Bone).count();
        let frac = bone as f64 / particles.len() as f64;
        let sphere_vol = 2.0 * (4.0 / 3.0) * std::f64::consts::PI * config.sphere_radius.powi(3);
        let box_vol = config.meat_box_extents.iter().product::<f64>();
        let expected = sphere_vol / box_vol;
        assert!(
            (frac - expected).abs() / expected < 0.05,
            "bone fraction {frac} vs analytic {expected}"
        );
    }

    #[test]
    fn zero_radius_spheres_give_all_meat() {
        let config = SceneConfig {
            sphere_radius: 0.0,
            sphere_center_distance: 0.05,
            ..SceneConfig::default()
        };
        let layout = config.layout(Vector3::zeros());
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let particles = build_scene(&config, &layout, default_dx(), &mut rng).unwrap();
        assert!(particles.iter().all(|p| p.material == MaterialId::Meat));
    }

    #[test]
    fn bone_labels_are_inside_spheres() {
        let config = SceneConfig::default();
        let layout = config.layout(Vector3::new(0.003, -0.008, 0.005));
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let particles = build_scene(&config, &layout, default_dx(), &mut rng).unwrap();
        for p in particles.iter().filter(|p| p.material == MaterialId::Bone) {
            let d = (p.position - layout.center_a)
                .norm()
                .min((p.position - layout.center_b).norm());
            assert!(d <= config.sphere_radius + default_dx());
        }
    }

    #[test]
    fn sphere_outside_box_is_rejected() {
        let config = SceneConfig {
            meat_box_extents: Vector3::new(0.09, 0.08, 0.08),
            ..SceneConfig::default()
        };
        assert!(config.validate().is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let layout = config.layout(Vector3::zeros());
        assert!(build_scene(&config, &layout, default_dx(), &mut rng).is_err());
    }

    /// Blade sweeping exactly down the gap midplane with zero offset never
    /// overlaps a bone particle: 8 mm gap against a 2 mm blade.
    #[test]
    fn gap_midplane_pass_has_no_bone_contact() {
        let config = SceneConfig::default();
        let layout = config.layout(Vector3::zeros());
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let particles = build_scene(&config, &layout, default_dx(), &mut rng).unwrap();
        let orientation =
            UnitQuaternion::from_axis_angle(&Vector3::z_axis(), -std::f64::consts::FRAC_PI_2);
        let mid = layout.gap_midpoint();
        for step in 0..200 {
            let z = 0.14 - step as f64 * 0.0005;
            let knife = KnifeState::new(
                Vector3::new(mid.x, mid.y, z),
                orientation,
                Vector3::new(0.05, 0.001, 0.02),
                0.2,
            );
            let (hit, count) = detect_bone_cut(&particles, &knife);
            assert!(!hit, "contact at z={z} with {count} particles");
        }
    }

    #[test]
    fn knife_at_sphere_center_detects_contact() {
        let config = SceneConfig::default();
        let layout = config.layout(Vector3::zeros());
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let particles = build_scene(&config, &layout, default_dx(), &mut rng).unwrap();
        let knife = KnifeState::new(
            layout.center_a,
            UnitQuaternion::identity(),
            Vector3::new(0.05, 0.001, 0.02),
            0.2,
        );
        let (hit, count) = detect_bone_cut(&particles, &knife);
        assert!(hit);
        assert!(count > 0);
    }

    #[test]
    fn knife_far_away_detects_nothing() {
        let config = SceneConfig::default();
        let layout = config.layout(Vector3::zeros());
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let particles = build_scene(&config, &layout, default_dx(), &mut rng).unwrap();
        let knife = KnifeState::new(
            Vector3::new(0.5, 0.5, 0.5),
            UnitQuaternion::identity(),
            Vector3::new(0.05, 0.001, 0.02),
            0.2,
        );
        assert_eq!(detect_bone_cut(&particles, &knife), (false, 0));
    }

    /// Thickening the blade can only add contacts, never remove them.
    #[test]
    fn contact_is_monotone_in_blade_thickness() {
        let config = SceneConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let layout = config.layout(Vector3::new(0.004, 0.002, -0.003));
        let particles = build_scene(&config, &layout, default_dx(), &mut rng).unwrap();
        let orientation =
            UnitQuaternion::from_axis_angle(&Vector3::z_axis(), -std::f64::consts::FRAC_PI_2);
        for i in 0..50 {
            let pos = Vector3::new(
                0.1 + (i as f64 * 0.7).sin() * 0.02,
                0.1 + (i as f64 * 1.3).cos() * 0.01,
                0.07 + (i as f64 * 0.4).sin() * 0.03,
            );
            let mut counts = Vec::new();
            for thickness in [0.0005, 0.001, 0.002, 0.004] {
                let knife = KnifeState::new(
                    pos,
                    orientation,
                    Vector3::new(0.05, thickness, 0.02),
                    0.2,
                );
                counts.push(detect_bone_cut(&particles, &knife).1);
            }
            for w in counts.windows(2) {
                assert!(w[1] >= w[0], "thickening removed contacts: {counts:?}");
            }
        }
    }
}
