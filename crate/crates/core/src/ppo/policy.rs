//! Gaussian MLP policy with tanh squashing, plus the MLP value function.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::mlp::{ForwardCache, Mlp};

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;
const SQUASH_EPS: f64 = 1e-6;
const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

/// Policy mean network, state-independent log standard deviations, and the
/// value network. All parameters live in three flat blocks concatenated in
/// this order for the optimizer and for checkpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub pi: Mlp,
    pub log_std: Vec<f64>,
    pub vf: Mlp,
}

impl PolicyParams {
    pub fn new(obs_dim: usize, act_dim: usize, hidden: &[usize], log_std_init: f64, rng: &mut ChaCha8Rng) -> Self {
        let mut pi_dims = vec![obs_dim];
        pi_dims.extend_from_slice(hidden);
        pi_dims.push(act_dim);
        let mut vf_dims = vec![obs_dim];
        vf_dims.extend_from_slice(hidden);
        vf_dims.push(1);
        let gain = 2.0f64.sqrt();
        let mut pi_gains = vec![gain; hidden.len()];
        pi_gains.push(0.01); // near-zero initial residual actions
        let mut vf_gains = vec![gain; hidden.len()];
        vf_gains.push(1.0);
        PolicyParams {
            pi: Mlp::init_orthogonal(&pi_dims, &pi_gains, rng),
            log_std: vec![log_std_init; act_dim],
            vf: Mlp::init_orthogonal(&vf_dims, &vf_gains, rng),
        }
    }

    pub fn zeroed(obs_dim: usize, act_dim: usize, hidden: &[usize]) -> Self {
        let mut pi_dims = vec![obs_dim];
        pi_dims.extend_from_slice(hidden);
        pi_dims.push(act_dim);
        let mut vf_dims = vec![obs_dim];
        vf_dims.extend_from_slice(hidden);
        vf_dims.push(1);
        PolicyParams {
            pi: Mlp::zeroed(&pi_dims),
            log_std: vec![0.0; act_dim],
            vf: Mlp::zeroed(&vf_dims),
        }
    }

    pub fn obs_dim(&self) -> usize {
        self.pi.dims[0]
    }

    pub fn act_dim(&self) -> usize {
        *self.pi.dims.last().unwrap()
    }

    pub fn n_params(&self) -> usize {
        self.pi.n_params() + self.log_std.len() + self.vf.n_params()
    }

    /// Concatenated flat view: `[pi | log_std | vf]`.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        out.extend_from_slice(&self.pi.params);
        out.extend_from_slice(&self.log_std);
        out.extend_from_slice(&self.vf.params);
        out
    }

    pub fn unflatten(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.n_params());
        let np = self.pi.n_params();
        let ns = self.log_std.len();
        self.pi.params.copy_from_slice(&flat[..np]);
        self.log_std.copy_from_slice(&flat[np..np + ns]);
        for s in &mut self.log_std {
            *s = s.clamp(LOG_STD_MIN, LOG_STD_MAX);
        }
        self.vf.params.copy_from_slice(&flat[np + ns..]);
    }

    /// Deterministic forward pass: pre-squash action mean and value.
    pub fn forward(&self, obs: &[f64]) -> (Vec<f64>, f64) {
        let (mean, _) = self.pi.forward(obs);
        let (v, _) = self.vf.forward(obs);
        (mean, v[0])
    }

    /// Deterministic action used at evaluation time: squashed mean.
    pub fn deterministic_action(&self, obs: &[f64]) -> Vec<f64> {
        let (mean, _) = self.pi.forward(obs);
        mean.iter().map(|m| m.tanh()).collect()
    }

    /// Samples `a = tanh(mean + std·ε)`; returns the squashed action, the
    /// pre-squash draw, its log-probability, and the value estimate.
    pub fn sample(&self, obs: &[f64], rng: &mut ChaCha8Rng) -> ActionSample {
        let (mean, _) = self.pi.forward(obs);
        let (v, _) = self.vf.forward(obs);
        let mut pre_squash = vec![0.0; mean.len()];
        for (i, u) in pre_squash.iter_mut().enumerate() {
            let eps: f64 = rng.sample(StandardNormal);
            let std = self.log_std[i].clamp(LOG_STD_MIN, LOG_STD_MAX).exp();
            *u = mean[i] + eps * std;
        }
        let action: Vec<f64> = pre_squash.iter().map(|u| u.tanh()).collect();
        let log_prob = self.log_prob(&mean, &pre_squash);
        ActionSample {
            action,
            pre_squash,
            log_prob,
            value: v[0],
        }
    }

    /// Log-density of the squashed Gaussian at the stored pre-squash draw:
    /// Gaussian log-pdf plus the tanh change-of-variables correction.
    pub fn log_prob(&self, mean: &[f64], pre_squash: &[f64]) -> f64 {
        let mut lp = 0.0;
        for i in 0..mean.len() {
            let log_std = self.log_std[i].clamp(LOG_STD_MIN, LOG_STD_MAX);
            let std = log_std.exp();
            let z = (pre_squash[i] - mean[i]) / std;
            lp += -0.5 * z * z - log_std - HALF_LN_2PI;
            let a = pre_squash[i].tanh();
            lp -= (1.0 - a * a + SQUASH_EPS).ln();
        }
        lp
    }

    /// Entropy of the pre-squash Gaussian (the bonus term the trainer uses).
    pub fn gaussian_entropy(&self) -> f64 {
        self.log_std
            .iter()
            .map(|ls| ls.clamp(LOG_STD_MIN, LOG_STD_MAX) + 0.5 + HALF_LN_2PI)
            .sum()
    }

    /// Gradient of `log_prob` with respect to the mean head output and the
    /// log-std vector, for a fixed pre-squash draw.
    pub fn log_prob_grad(
        &self,
        mean: &[f64],
        pre_squash: &[f64],
    ) -> (Vec<f64>, Vec<f64>) {
        let n = mean.len();
        let mut d_mean = vec![0.0; n];
        let mut d_log_std = vec![0.0; n];
        for i in 0..n {
            let log_std = self.log_std[i].clamp(LOG_STD_MIN, LOG_STD_MAX);
            let std = log_std.exp();
            let z = (pre_squash[i] - mean[i]) / std;
            d_mean[i] = z / std;
            d_log_std[i] = z * z - 1.0;
        }
        (d_mean, d_log_std)
    }

    pub fn pi_forward_cached(&self, obs: &[f64]) -> (Vec<f64>, ForwardCache) {
        self.pi.forward(obs)
    }

    pub fn vf_forward_cached(&self, obs: &[f64]) -> (f64, ForwardCache) {
        let (v, cache) = self.vf.forward(obs);
        (v[0], cache)
    }
}

#[derive(Debug, Clone)]
pub struct ActionSample {
    pub action: Vec<f64>,
    pub pre_squash: Vec<f64>,
    pub log_prob: f64,
    pub value: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn zero_weights_give_zero_mean_and_value() {
        let p = PolicyParams::zeroed(23, 6, &[64, 64]);
        let obs = vec![0.5; 23];
        let (mean, value) = p.forward(&obs);
        assert_eq!(mean, vec![0.0; 6]);
        assert_eq!(value, 0.0);
        assert_eq!(p.deterministic_action(&obs), vec![0.0; 6]);
    }

    #[test]
    fn forward_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        let p = PolicyParams::new(23, 6, &[64, 64], 0.0, &mut rng);
        let obs: Vec<f64> = (0..23).map(|i| (i as f64 * 0.37).sin()).collect();
        assert_eq!(p.forward(&obs), p.forward(&obs));
    }

    #[test]
    fn log_prob_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(62);
        let mut p = PolicyParams::new(7, 4, &[16, 16], -0.3, &mut rng);
        let obs: Vec<f64> = (0..7).map(|i| (i as f64 * 0.61).cos()).collect();
        let (mean, cache) = p.pi_forward_cached(&obs);
        let u: Vec<f64> = mean.iter().enumerate().map(|(i, m)| m + 0.3 * (i as f64 - 1.5)).collect();

        // Analytic gradient: through the mean head into the MLP, plus the
        // direct log-std gradient.
        let (d_mean, d_log_std) = p.log_prob_grad(&mean, &u);
        let mut grad_pi = vec![0.0; p.pi.n_params()];
        p.pi.backward(&cache, &d_mean, &mut grad_pi);

        let h = 1e-5;
        for i in 0..p.pi.n_params() {
            let orig = p.pi.params[i];
            p.pi.params[i] = orig + h;
            let (m_up, _) = p.pi.forward(&obs);
            let up = p.log_prob(&m_up, &u);
            p.pi.params[i] = orig - h;
            let (m_dn, _) = p.pi.forward(&obs);
            let down = p.log_prob(&m_dn, &u);
            p.pi.params[i] = orig;
            let fd = (up - down) / (2.0 * h);
            let denom = fd.abs().max(grad_pi[i].abs()).max(1e-6);
            assert!(
                (fd - grad_pi[i]).abs() / denom <= 1e-4,
                "pi param {i}: fd {fd} vs {}",
                grad_pi[i]
            );
        }
        for i in 0..4 {
            let orig = p.log_std[i];
            p.log_std[i] = orig + h;
            let up = p.log_prob(&mean, &u);
            p.log_std[i] = orig - h;
            let down = p.log_prob(&mean, &u);
            p.log_std[i] = orig;
            let fd = (up - down) / (2.0 * h);
            let denom = fd.abs().max(d_log_std[i].abs()).max(1e-6);
            assert!(
                (fd - d_log_std[i]).abs() / denom <= 1e-4,
                "log_std {i}: fd {fd} vs {}",
                d_log_std[i]
            );
        }
    }

    /// Monte-Carlo integral of the squashed-Gaussian density over the action
    /// cube; the change of variables must preserve total probability.
    #[test]
    fn squashed_density_integrates_to_one() {
        let mut p = PolicyParams::zeroed(2, 2, &[4]);
        p.log_std = vec![-0.1, 0.25];
        let mean = vec![0.3, -0.5];
        let mut rng = ChaCha8Rng::seed_from_u64(63);
        let n = 1_000_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let a = [
                rng.random_range(-1.0..1.0f64),
                rng.random_range(-1.0..1.0f64),
            ];
            let u: Vec<f64> = a.iter().map(|x: &f64| x.atanh()).collect();
            sum += p.log_prob(&mean, &u).exp();
        }
        let integral = 4.0 * sum / n as f64;
        assert!(
            (integral - 1.0).abs() < 0.02,
            "density integral {integral}"
        );
    }

    #[test]
    fn samples_respect_action_bounds_and_log_prob() {
        let mut rng = ChaCha8Rng::seed_from_u64(64);
        let p = PolicyParams::new(5, 3, &[8, 8], 0.0, &mut rng);
        let obs = vec![0.2; 5];
        for _ in 0..200 {
            let s = p.sample(&obs, &mut rng);
            assert!(s.action.iter().all(|a| a.abs() <= 1.0));
            let (mean, _) = p.pi.forward(&obs);
            let expected = p.log_prob(&mean, &s.pre_squash);
            assert!((s.log_prob - expected).abs() < 1e-12);
            for (a, u) in s.action.iter().zip(&s.pre_squash) {
                assert!((a - u.tanh()).abs() < 1e-15);
            }
        }
    }
}
