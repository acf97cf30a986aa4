//! Multi-material cutting simulation and residual-policy learning.
//!
//! The crate bundles an MLS-MPM elastoplastic simulator with a rigid-knife
//! force probe ([`mpm`], [`knife`]), scene construction for the two-sphere
//! shoulder mock-up ([`scene`]), 6-DoF nominal trajectories with residual
//! composition ([`trajectory`]), an episodic RL environment ([`env`]), a
//! self-contained PPO trainer ([`ppo`]), and the evaluation harness
//! ([`eval`]).

pub mod config;
pub mod env;
pub mod eval;
pub mod knife;
pub mod math;
pub mod mpm;
pub mod ppo;
pub mod scene;
pub mod snapshot;
pub mod trajectory;
