//! Rollout storage and generalized advantage estimation.

/// One iteration's worth of transitions, flattened across environments.
/// Per-environment streams are contiguous; `gae` runs per stream.
#[derive(Debug, Clone, Default)]
pub struct RolloutBatch {
    pub observations: Vec<Vec<f64>>,
    /// Squashed actions as executed.
    pub actions: Vec<Vec<f64>>,
    /// Pre-squash Gaussian draws the log-probs refer to.
    pub pre_squash: Vec<Vec<f64>>,
    pub log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    pub dones: Vec<bool>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl RolloutBatch {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

/// Standard GAE recursion over one trajectory stream.
///
/// `dones[t]` marks that the episode terminated at step `t` (no bootstrap
/// across it); `last_value` bootstraps the value of the state following the
/// final step when the stream was truncated mid-episode.
/// Returns `(advantages, returns)` with `returns = advantages + values`.
pub fn gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    last_value: f64,
    gamma: f64,
    lam: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    assert_eq!(values.len(), n);
    assert_eq!(dones.len(), n);
    let mut advantages = vec![0.0; n];
    let mut next_adv = 0.0;
    for t in (0..n).rev() {
        let (next_value, not_done) = if dones[t] {
            (0.0, 0.0)
        } else if t + 1 == n {
            (last_value, 1.0)
        } else {
            (values[t + 1], 1.0)
        };
        let delta = rewards[t] + gamma * next_value - values[t];
        next_adv = delta + gamma * lam * not_done * next_adv;
        advantages[t] = next_adv;
    }
    let returns = advantages.iter().zip(values.iter()).map(|(a, v)| a + v).collect();
    (advantages, returns)
}

/// Normalizes to zero mean and unit (population) standard deviation in
/// place; no-op for constant inputs.
pub fn normalize_advantages(advantages: &mut [f64]) {
    let n = advantages.len();
    if n == 0 {
        return;
    }
    let mean = advantages.iter().sum::<f64>() / n as f64;
    let var = advantages.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n as f64;
    let std = var.sqrt();
    if std == 0.0 {
        for a in advantages.iter_mut() {
            *a -= mean;
        }
        return;
    }
    for a in advantages.iter_mut() {
        *a = (*a - mean) / std;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Direct double-loop evaluation of the GAE definition:
    /// `A_t = Σ_l (γλ)^l δ_{t+l}` with the sum truncated at episode ends.
    fn gae_oracle(
        rewards: &[f64],
        values: &[f64],
        dones: &[bool],
        last_value: f64,
        gamma: f64,
        lam: f64,
    ) -> Vec<f64> {
        let n = rewards.len();
        let delta = |t: usize| {
            let next = if dones[t] {
                0.0
            } else if t + 1 == n {
                last_value
            } else {
                values[t + 1]
            };
            rewards[t] + gamma * next - values[t]
        };
        (0..n)
            .map(|t| {
                let mut acc = 0.0;
                let mut w = 1.0;
                for l in t..n {
                    acc += w * delta(l);
                    if dones[l] {
                        break;
                    }
                    w *= gamma * lam;
                }
                acc
            })
            .collect()
    }

    #[test]
    fn lam_zero_is_one_step_td() {
        let rewards = [1.0, -0.5, 2.0, 0.3];
        let values = [0.2, 0.4, -0.1, 0.6];
        let dones = [false, true, false, false];
        let last_value = 0.9;
        let gamma = 0.99;
        let (adv, ret) = gae(&rewards, &values, &dones, last_value, gamma, 0.0);
        for t in 0..4 {
            let next = if dones[t] {
                0.0
            } else if t == 3 {
                last_value
            } else {
                values[t + 1]
            };
            let expected = rewards[t] + gamma * next - values[t];
            assert!((adv[t] - expected).abs() < 1e-15);
            assert!((ret[t] - (adv[t] + values[t])).abs() < 1e-15);
        }
    }

    #[test]
    fn lam_one_zero_values_is_reward_to_go() {
        let rewards = [1.0, 2.0, 3.0];
        let values = [0.0; 3];
        let dones = [false, false, true];
        let gamma = 0.9;
        let (adv, _) = gae(&rewards, &values, &dones, 0.0, gamma, 1.0);
        assert!((adv[2] - 3.0).abs() < 1e-15);
        assert!((adv[1] - (2.0 + 0.9 * 3.0)).abs() < 1e-14);
        assert!((adv[0] - (1.0 + 0.9 * 2.0 + 0.81 * 3.0)).abs() < 1e-14);
    }

    #[test]
    fn random_rollouts_match_brute_force_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(71);
        for len in [16usize, 32] {
            for _ in 0..50 {
                let rewards: Vec<f64> = (0..len).map(|_| rng.random_range(-2.0..2.0)).collect();
                let values: Vec<f64> = (0..len).map(|_| rng.random_range(-2.0..2.0)).collect();
                let dones: Vec<bool> = (0..len).map(|_| rng.random_range(0.0..1.0) < 0.15).collect();
                let last_value = rng.random_range(-2.0..2.0);
                let gamma = 0.99;
                let lam = 0.95;
                let (adv, ret) = gae(&rewards, &values, &dones, last_value, gamma, lam);
                let oracle = gae_oracle(&rewards, &values, &dones, last_value, gamma, lam);
                for t in 0..len {
                    assert!(
                        (adv[t] - oracle[t]).abs() <= 1e-8,
                        "t={t}: {} vs oracle {}",
                        adv[t],
                        oracle[t]
                    );
                    assert!((ret[t] - (adv[t] + values[t])).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn normalization_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(72);
        let mut adv: Vec<f64> = (0..2048).map(|_| rng.random_range(-5.0..5.0)).collect();
        normalize_advantages(&mut adv);
        let n = adv.len() as f64;
        let mean = adv.iter().sum::<f64>() / n;
        let std = (adv.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n).sqrt();
        assert!(mean.abs() < 1e-10, "mean {mean:e}");
        assert!((std - 1.0).abs() < 1e-10, "std {std}");
    }
}
