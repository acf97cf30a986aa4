//! Episodic cutting environment.
//!
//! Each episode builds a fresh scene with a randomized bone offset, derives
//! the nominal trajectory from the *unoffset* estimate (the true layout is
//! hidden from the policy), and then servoes the knife to the
//! residual-adjusted nominal pose once per control step while the MPM
//! simulator advances underneath.

use nalgebra::{UnitQuaternion, Vector3, Vector6};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::knife::{KnifeConfig, KnifeState};
use crate::mpm::{MaterialTable, SimError, SimParams, SimState};
use crate::scene::{build_scene, detect_bone_cut, sample_bone_offset, BoneLayout, SceneConfig, SceneError};
use crate::trajectory::{
    compose_residual, nominal_from_estimate, update_residual, NominalParams, NominalTrajectory,
    Pose, ResidualLimits, ResidualPose, TrajectoryError,
};

/// Reward constants: `R = (C − α₁·b) − α₂·‖e‖²`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RewardParams {
    /// Per-step constant C.
    pub constant: f64,
    /// Bone-contact penalty α₁.
    pub bone_penalty: f64,
    /// Residual-magnitude penalty α₂.
    pub action_penalty: f64,
}

impl Default for RewardParams {
    fn default() -> Self {
        RewardParams {
            constant: 0.1,
            bone_penalty: 1.0,
            action_penalty: 0.1,
        }
    }
}

/// Gaussian observation noise applied to the current-pose block only.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PoseNoise {
    pub enabled: bool,
    /// Std-dev per position component (m).
    pub position_std: f64,
    /// Std-dev per quaternion component before renormalization.
    pub quaternion_std: f64,
}

impl Default for PoseNoise {
    fn default() -> Self {
        PoseNoise {
            enabled: false,
            position_std: 0.01,
            quaternion_std: 0.1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnvConfig {
    /// Control steps per episode (T).
    pub control_steps: usize,
    /// Simulator substeps per control step.
    pub substeps: usize,
    pub reward: RewardParams,
    pub limits: ResidualLimits,
    /// Force normalization bound for discretization (N).
    pub force_max: f64,
    /// When false the force block of every observation is zero (the
    /// force-blind baseline).
    pub observe_force: bool,
    pub pose_noise: PoseNoise,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            control_steps: 60,
            substeps: 20,
            reward: RewardParams::default(),
            limits: ResidualLimits::default(),
            force_max: 200.0,
            observe_force: true,
            pose_noise: PoseNoise::default(),
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        if self.control_steps == 0 || self.substeps == 0 {
            return Err(EnvError::Config(
                "control_steps and substeps must be positive".into(),
            ));
        }
        if !(self.force_max > 0.0) {
            return Err(EnvError::Config("force_max must be positive".into()));
        }
        Ok(())
    }
}

/// Fixed 23-dimensional observation layout:
/// `[current pose (7) | next nominal pose (7) | force (3) | residual (6)]`,
/// poses as position + quaternion (w, x, y, z).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub current_pose: [f64; 7],
    pub next_nominal_pose: [f64; 7],
    pub force: [f64; 3],
    pub residual: [f64; 6],
}

impl Observation {
    pub const DIM: usize = 23;

    pub fn to_vec(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(Self::DIM);
        out.extend_from_slice(&self.current_pose);
        out.extend_from_slice(&self.next_nominal_pose);
        out.extend_from_slice(&self.force);
        out.extend_from_slice(&self.residual);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    pub bone_contact: bool,
    pub contact_count: usize,
    pub raw_force: [f64; 3],
    /// Populated when the simulator aborted the episode.
    pub sim_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

/// One line of the episode log; field order is stable and documented here:
/// step index, pose ξ_t at the step start, commanded target ξ̃_{t+1}, raw and
/// discretized force, residual e after the action, the (clamped) action,
/// bone contact flag and count, reward.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub pose: [f64; 7],
    pub target_pose: [f64; 7],
    pub raw_force: [f64; 3],
    pub force_disc: [f64; 3],
    pub residual: [f64; 6],
    pub action: [f64; 6],
    pub bone_contact: bool,
    pub contact_count: usize,
    pub reward: f64,
}

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("environment not reset")]
    NotReset,
    #[error("episode already finished")]
    EpisodeDone,
    #[error("invalid environment configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
}

/// Per-component force discretization onto `{0.0, 0.1, …, 1.0}`:
/// `d = round(10 · min(|f|/f_max, 1)) / 10`.
pub fn discretize_force(raw: &Vector3<f64>, force_max: f64) -> [f64; 3] {
    let mut out = [0.0; 3];
    for axis in 0..3 {
        let level = (raw[axis].abs() / force_max).min(1.0);
        out[axis] = (10.0 * level).round() / 10.0;
    }
    out
}

/// `R = (C − α₁·b) − α₂·‖e‖₂²` with `b = 1` on bone contact.
pub fn compute_reward(bone_contact: bool, residual: &ResidualPose, params: &RewardParams) -> f64 {
    let b = if bone_contact { 1.0 } else { 0.0 };
    (params.constant - params.bone_penalty * b) - params.action_penalty * residual.norm_squared()
}

/// Adds Gaussian noise to a pose: per-component position noise plus
/// quaternion-component noise followed by renormalization.
pub fn apply_domain_randomization(
    pose: &Pose,
    rng: &mut ChaCha8Rng,
    noise: &PoseNoise,
) -> Pose {
    if !noise.enabled {
        return *pose;
    }
    let pos_dist = Normal::new(0.0, noise.position_std).expect("valid std");
    let quat_dist = Normal::new(0.0, noise.quaternion_std).expect("valid std");
    let position = pose.position
        + Vector3::new(pos_dist.sample(rng), pos_dist.sample(rng), pos_dist.sample(rng));
    let q = pose.orientation.quaternion();
    let noisy = nalgebra::Quaternion::new(
        q.w + quat_dist.sample(rng),
        q.i + quat_dist.sample(rng),
        q.j + quat_dist.sample(rng),
        q.k + quat_dist.sample(rng),
    );
    Pose {
        position,
        orientation: UnitQuaternion::new_normalize(noisy),
    }
}

/// The episodic cutting environment.
pub struct CutEnv {
    scene: SceneConfig,
    sim_params: SimParams,
    knife_config: KnifeConfig,
    nominal_params: NominalParams,
    config: EnvConfig,

    sim: Option<SimState>,
    knife: KnifeState,
    trajectory: Option<NominalTrajectory>,
    residual: ResidualPose,
    step_index: usize,
    done: bool,
    rng: ChaCha8Rng,
    log: Vec<StepRecord>,
    true_layout: Option<BoneLayout>,
}

impl CutEnv {
    pub fn new(
        scene: SceneConfig,
        sim_params: SimParams,
        knife_config: KnifeConfig,
        nominal_params: NominalParams,
        config: EnvConfig,
    ) -> Result<Self, EnvError> {
        config.validate()?;
        scene.validate()?;
        sim_params.validate()?;
        Ok(CutEnv {
            scene,
            sim_params,
            knife: KnifeState::new(
                Vector3::zeros(),
                UnitQuaternion::identity(),
                knife_config.half_extents,
                knife_config.friction_mu,
            ),
            knife_config,
            nominal_params,
            config,
            sim: None,
            trajectory: None,
            residual: ResidualPose::zero(),
            step_index: 0,
            done: true,
            rng: ChaCha8Rng::seed_from_u64(0),
            log: Vec::new(),
            true_layout: None,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn scene(&self) -> &SceneConfig {
        &self.scene
    }

    pub fn knife(&self) -> &KnifeState {
        &self.knife
    }

    pub fn sim(&self) -> Option<&SimState> {
        self.sim.as_ref()
    }

    pub fn true_layout(&self) -> Option<&BoneLayout> {
        self.true_layout.as_ref()
    }

    pub fn nominal(&self) -> Option<&NominalTrajectory> {
        self.trajectory.as_ref()
    }

    pub fn residual(&self) -> &ResidualPose {
        &self.residual
    }

    pub fn step_index(&self) -> usize {
        self.step_index
    }

    /// Per-step log of the running (or finished) episode.
    pub fn episode_log(&self) -> &[StepRecord] {
        &self.log
    }

    /// Starts a new episode. The seed fully determines the bone offset, the
    /// particle seeding jitter, and any observation noise.
    pub fn reset(&mut self, seed: u64) -> Result<Observation, EnvError> {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        let offset = sample_bone_offset(&mut self.rng, &self.scene);
        let layout = self.scene.layout(offset);
        let particles = build_scene(&self.scene, &layout, self.sim_params.dx(), &mut self.rng)?;
        let materials = MaterialTable([self.scene.meat, self.scene.bone]);
        self.sim = Some(SimState::new(self.sim_params, materials, particles)?);

        // The policy only ever sees the trajectory built from the unoffset
        // estimate; the true layout stays hidden.
        let estimate = self.scene.layout(Vector3::zeros());
        let waypoints = nominal_from_estimate(
            &estimate,
            &self.scene,
            &self.knife_config.half_extents,
            &self.nominal_params,
        )?;
        let trajectory = NominalTrajectory::new(waypoints)?;
        let start = trajectory.interpolate(0.0)?;
        self.knife = KnifeState::new(
            start.position,
            start.orientation,
            self.knife_config.half_extents,
            self.knife_config.friction_mu,
        );
        self.trajectory = Some(trajectory);
        self.true_layout = Some(layout);
        self.residual = ResidualPose::zero();
        self.step_index = 0;
        self.done = false;
        self.log.clear();
        Ok(self.observe(Vector3::zeros()))
    }

    fn knife_pose(&self) -> Pose {
        Pose {
            position: self.knife.position,
            orientation: self.knife.orientation,
        }
    }

    fn observe(&mut self, raw_force: Vector3<f64>) -> Observation {
        let trajectory = self.trajectory.as_ref().expect("observe after reset");
        let t_next = (((self.step_index + 1) as f64) / self.config.control_steps as f64).min(1.0);
        let next_nominal = trajectory.interpolate(t_next).expect("t clamped to [0,1]");
        let observed_pose =
            apply_domain_randomization(&self.knife_pose(), &mut self.rng, &self.config.pose_noise);
        let force = if self.config.observe_force {
            discretize_force(&raw_force, self.config.force_max)
        } else {
            [0.0; 3]
        };
        Observation {
            current_pose: observed_pose.to_array(),
            next_nominal_pose: next_nominal.to_array(),
            force,
            residual: self.residual.to_array(),
        }
    }

    /// Advances one control step. Actions outside [-1, 1] are clamped (and
    /// logged); a simulator failure terminates the episode with the error
    /// recorded in `info`.
    pub fn step(&mut self, action: &[f64; 6]) -> Result<StepResult, EnvError> {
        if self.sim.is_none() {
            return Err(EnvError::NotReset);
        }
        if self.done {
            return Err(EnvError::EpisodeDone);
        }

        let mut clamped = *action;
        for a in &mut clamped {
            if !(-1.0..=1.0).contains(a) {
                log::warn!("action component {a} outside [-1, 1]; clamping");
                *a = a.clamp(-1.0, 1.0);
            }
        }
        let action_vec = Vector6::from_row_slice(&clamped);
        self.residual = update_residual(&self.residual, &action_vec, &self.config.limits);

        let trajectory = self.trajectory.as_ref().expect("checked above");
        let t_next = ((self.step_index + 1) as f64) / self.config.control_steps as f64;
        let nominal_next = trajectory.interpolate(t_next.min(1.0))?;
        let target = compose_residual(&nominal_next, &self.residual);

        let control_dt = self.config.substeps as f64 * self.sim_params.dt;
        let pose_before = self.knife_pose();
        self.knife.linear_velocity = (target.position - self.knife.position) / control_dt;
        self.knife.angular_velocity =
            (target.orientation * self.knife.orientation.inverse()).scaled_axis() / control_dt;
        self.knife.force_accum = Vector3::zeros();

        let sim = self.sim.as_mut().expect("checked above");
        let mut sim_error = None;
        for _ in 0..self.config.substeps {
            if let Err(e) = sim.step(Some(&mut self.knife)) {
                sim_error = Some(e.to_string());
                break;
            }
        }

        let raw_force = self.knife.force_accum / self.config.substeps as f64;
        let (bone_contact, contact_count) = if sim_error.is_none() {
            detect_bone_cut(&self.sim.as_ref().unwrap().particles, &self.knife)
        } else {
            (false, 0)
        };
        let reward = compute_reward(bone_contact, &self.residual, &self.config.reward);

        self.step_index += 1;
        self.done = self.step_index >= self.config.control_steps || sim_error.is_some();

        let observation = self.observe(raw_force);
        let force_disc = discretize_force(&raw_force, self.config.force_max);
        self.log.push(StepRecord {
            step: self.step_index - 1,
            pose: pose_before.to_array(),
            target_pose: target.to_array(),
            raw_force: [raw_force.x, raw_force.y, raw_force.z],
            force_disc,
            residual: self.residual.to_array(),
            action: clamped,
            bone_contact,
            contact_count,
            reward,
        });

        Ok(StepResult {
            observation,
            reward,
            done: self.done,
            info: StepInfo {
                bone_contact,
                contact_count,
                raw_force: [raw_force.x, raw_force.y, raw_force.z],
                sim_error,
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Small, fast scene for environment tests.
    pub(crate) fn test_env(observe_force: bool, noise: bool) -> CutEnv {
        let scene = SceneConfig {
            particles_per_cell: 1,
            ..SceneConfig::default()
        };
        let sim_params = SimParams {
            grid_res: 32,
            domain_size: 0.2,
            dt: 4e-4,
            ..SimParams::default()
        };
        let config = EnvConfig {
            control_steps: 60,
            substeps: 2,
            observe_force,
            pose_noise: PoseNoise {
                enabled: noise,
                ..PoseNoise::default()
            },
            ..EnvConfig::default()
        };
        CutEnv::new(
            scene,
            sim_params,
            KnifeConfig::default(),
            NominalParams::default(),
            config,
        )
        .unwrap()
    }

    #[test]
    fn reset_is_deterministic_per_seed() {
        let mut env = test_env(true, true);
        let a = env.reset(99).unwrap();
        let b = env.reset(99).unwrap();
        assert_eq!(a, b);
        let c = env.reset(100).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn initial_observation_blocks() {
        let mut env = test_env(true, false);
        let obs = env.reset(7).unwrap();
        assert_eq!(obs.residual, [0.0; 6]);
        assert_eq!(obs.force, [0.0; 3]);
        // Knife starts on the nominal trajectory, outside the block.
        let traj_start = env.nominal().unwrap().interpolate(0.0).unwrap();
        assert_eq!(obs.current_pose, traj_start.to_array());
        assert_eq!(obs.to_vec().len(), Observation::DIM);
    }

    #[test]
    fn zero_actions_track_the_nominal_trajectory() {
        let mut env = test_env(true, false);
        env.reset(3).unwrap();
        let t_count = env.config().control_steps;
        for k in 0..t_count {
            let result = env.step(&[0.0; 6]).unwrap();
            assert!(result.info.sim_error.is_none());
            let t = ((k + 1) as f64) / t_count as f64;
            let expected = env.nominal().unwrap().interpolate(t).unwrap();
            let err = (env.knife().position - expected.position).norm();
            assert!(err <= 1e-4, "tracking error {err:e} at step {k}");
            assert!(env.knife().orientation.angle_to(&expected.orientation) <= 1e-6);
            assert_eq!(result.done, k + 1 == t_count);
        }
        assert!(matches!(env.step(&[0.0; 6]), Err(EnvError::EpisodeDone)));
    }

    #[test]
    fn episode_runs_exactly_t_steps() {
        let mut env = test_env(true, false);
        env.reset(5).unwrap();
        let mut steps = 0;
        loop {
            let r = env.step(&[0.0; 6]).unwrap();
            steps += 1;
            if r.done {
                break;
            }
        }
        assert_eq!(steps, env.config().control_steps);
        assert_eq!(env.episode_log().len(), steps);
    }

    #[test]
    fn rewards_stay_within_the_formula_bound() {
        let mut env = test_env(true, false);
        env.reset(11).unwrap();
        let cfg = env.config().clone();
        let bound = cfg.reward.constant
            + cfg.reward.bone_penalty
            + cfg.reward.action_penalty
                * (cfg.limits.translation_clip.powi(2) + cfg.limits.rotation_clip.powi(2));
        let mut k = 0;
        loop {
            let a = [((k * 13) % 7) as f64 / 3.5 - 1.0; 6];
            let r = env.step(&a).unwrap();
            assert!(r.reward.abs() <= bound + 1e-12, "reward {} vs bound {bound}", r.reward);
            // Logged quantities decompose consistently.
            let rec = env.episode_log().last().unwrap();
            let e_norm2: f64 = rec.residual.iter().map(|x| x * x).sum();
            let b = if rec.bone_contact { 1.0 } else { 0.0 };
            let recomputed = (cfg.reward.constant - cfg.reward.bone_penalty * b)
                - cfg.reward.action_penalty * e_norm2;
            assert_relative_eq!(rec.reward, recomputed, epsilon = 1e-12);
            k += 1;
            if r.done {
                break;
            }
        }
    }

    #[test]
    fn reward_formula_cases() {
        let params = RewardParams::default();
        assert_relative_eq!(compute_reward(false, &ResidualPose::zero(), &params), 0.1);
        assert_relative_eq!(compute_reward(true, &ResidualPose::zero(), &params), -0.9);
        // Growing residual strictly decreases the reward.
        let mut last = f64::INFINITY;
        for i in 1..10 {
            let e = ResidualPose {
                translation: Vector3::new(i as f64 * 1e-3, 0.0, 0.0),
                rotation: Vector3::zeros(),
            };
            let r = compute_reward(false, &e, &params);
            assert!(r < last);
            last = r;
        }
    }

    #[test]
    fn force_discretization_contract() {
        assert_eq!(discretize_force(&Vector3::zeros(), 200.0), [0.0; 3]);
        // |f|/f_max = 0.26 rounds to 0.3.
        let f = Vector3::new(52.0, -52.0, 0.0);
        let d = discretize_force(&f, 200.0);
        assert_eq!(d[0], 0.3);
        assert_eq!(d[1], 0.3);
        assert_eq!(d[2], 0.0);
        // Saturation at 5x the bound.
        let d = discretize_force(&Vector3::new(1000.0, 0.0, 0.0), 200.0);
        assert_eq!(d[0], 1.0);
        // Every output is one of the 11 levels exactly.
        for i in 0..100 {
            let f = Vector3::new(i as f64 * 3.7, 0.0, 0.0);
            let d = discretize_force(&f, 200.0);
            assert!((0..=10).any(|k| d[0] == k as f64 / 10.0));
        }
    }

    #[test]
    fn force_blind_variant_zeroes_the_force_block() {
        let mut env = test_env(false, false);
        env.reset(21).unwrap();
        loop {
            let r = env.step(&[0.3, -0.2, 0.1, 0.0, 0.0, 0.0]).unwrap();
            assert_eq!(r.observation.force, [0.0; 3]);
            if r.done {
                break;
            }
        }
    }

    #[test]
    fn pose_noise_statistics_and_unit_norm() {
        let noise = PoseNoise {
            enabled: true,
            position_std: 0.01,
            quaternion_std: 0.1,
        };
        let pose = Pose {
            position: Vector3::new(0.1, 0.2, 0.3),
            orientation: UnitQuaternion::from_axis_angle(&Vector3::z_axis(), 0.5),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let n = 10_000;
        let mut sum = Vector3::zeros();
        let mut sum_sq = Vector3::zeros();
        for _ in 0..n {
            let noisy = apply_domain_randomization(&pose, &mut rng, &noise);
            let d = noisy.position - pose.position;
            sum += d;
            sum_sq += d.component_mul(&d);
            assert!((noisy.orientation.coords.norm() - 1.0).abs() < 1e-9);
        }
        for axis in 0..3 {
            let var = sum_sq[axis] / n as f64 - (sum[axis] / n as f64).powi(2);
            let std = var.sqrt();
            assert!(
                (std - 0.01).abs() / 0.01 < 0.05,
                "axis {axis} sample std {std}"
            );
        }

        let disabled = PoseNoise {
            enabled: false,
            ..noise
        };
        let same = apply_domain_randomization(&pose, &mut rng, &disabled);
        assert_eq!(same, pose);
    }

    #[test]
    fn episodes_are_bitwise_deterministic() {
        let run = |seed: u64| -> Vec<StepResult> {
            let mut env = test_env(true, true);
            env.reset(seed).unwrap();
            let mut out = Vec::new();
            for k in 0..env.config().control_steps {
                let a = [
                    (k as f64 * 0.37).sin(),
                    (k as f64 * 0.73).cos(),
                    -0.4,
                    0.2,
                    0.0,
                    (k as f64 * 0.11).sin(),
                ];
                out.push(env.step(&a).unwrap());
            }
            out
        };
        let a = run(123);
        let b = run(123);
        assert_eq!(a, b);
    }

    #[test]
    fn out_of_range_actions_are_clamped() {
        let mut env = test_env(true, false);
        env.reset(31).unwrap();
        env.step(&[5.0, -5.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let rec = env.episode_log().last().unwrap();
        assert_eq!(rec.action[0], 1.0);
        assert_eq!(rec.action[1], -1.0);
        let e = env.residual();
        assert_relative_eq!(e.translation.x, 0.001);
        assert_relative_eq!(e.translation.y, -0.001);
    }
}
