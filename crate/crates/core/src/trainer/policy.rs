use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::mlp::{Activations, Mlp};

const LOG_2PI: f64 = 1.8378770664093453;
pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 1.0;
const OBS_CLIP: f64 = 10.0;

/// Running mean and variance of observations (parallel Welford merge).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningNorm {
    pub count: f64,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl RunningNorm {
    pub fn new(n: usize) -> Self {
        RunningNorm {
            count: 0.0,
            mean: vec![0.0; n],
            var: vec![1.0; n],
        }
    }

    pub fn update(&mut self, batch: &[Vec<f64>]) {
        if batch.is_empty() {
            return;
        }
        let n = batch.len() as f64;
        let dim = self.mean.len();
        let mut mean = vec![0.0; dim];
        for x in batch {
            for (m, v) in mean.iter_mut().zip(x) {
                *m += v / n;
            }
        }
        let mut var = vec![0.0; dim];
        for x in batch {
            for ((s, v), m) in var.iter_mut().zip(x).zip(&mean) {
                *s += (v - m) * (v - m) / n;
            }
        }
        let total = self.count + n;
        for i in 0..dim {
            let delta = mean[i] - self.mean[i];
            let m2 = self.var[i] * self.count + var[i] * n + delta * delta * self.count * n / total;
            self.mean[i] += delta * n / total;
            self.var[i] = m2 / total;
        }
        self.count = total;
    }

    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.var))
            .map(|(v, (m, s))| ((v - m) / (s + 1e-8).sqrt()).clamp(-OBS_CLIP, OBS_CLIP))
            .collect()
    }
}

/// Gaussian policy with a tanh-squashed mean and a state-independent learned
/// log-std, plus a separate value network. Observations are normalized with
/// running statistics stored alongside the weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub actor: Mlp,
    pub critic: Mlp,
    pub log_std: Vec<f64>,
    pub obs_norm: RunningNorm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActorOutput {
    pub action: Vec<f64>,
    pub log_prob: f64,
    pub value: f64,
}

/// Anything that can drive an environment: learned policies, replay and
/// scripted controllers. `step_index` is the environment's step counter.
pub trait Actor: Sync {
    fn act(&self, obs: &[f64], step_index: usize, rng: &mut ChaCha8Rng, deterministic: bool) -> ActorOutput;
}

impl Policy {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, act_dim: usize, hidden: usize, init_log_std: f64, rng: &mut R) -> Self {
        Policy {
            actor: Mlp::new(&[obs_dim, hidden, hidden, act_dim], 0.01, rng),
            critic: Mlp::new(&[obs_dim, hidden, hidden, 1], 1.0, rng),
            log_std: vec![init_log_std; act_dim],
            obs_norm: RunningNorm::new(obs_dim),
        }
    }

    pub fn obs_dim(&self) -> usize {
        self.actor.input_len()
    }

    pub fn act_dim(&self) -> usize {
        self.actor.output_len()
    }

    pub fn std(&self) -> Vec<f64> {
        self.log_std.iter().map(|l| l.clamp(LOG_STD_MIN, LOG_STD_MAX).exp()).collect()
    }

    /// Squashed action mean for an already normalized observation.
    pub fn mean_normalized(&self, nobs: &[f64]) -> Vec<f64> {
        self.actor.forward(nobs).into_iter().map(f64::tanh).collect()
    }

    pub fn value_normalized(&self, nobs: &[f64]) -> f64 {
        self.critic.forward(nobs)[0]
    }

    pub fn mean_action(&self, obs: &[f64]) -> Vec<f64> {
        self.mean_normalized(&self.obs_norm.normalize(obs))
    }

    pub fn value(&self, obs: &[f64]) -> f64 {
        self.value_normalized(&self.obs_norm.normalize(obs))
    }

    pub fn is_finite(&self) -> bool {
        self.actor.params().iter().all(|v| v.is_finite())
            && self.critic.params().iter().all(|v| v.is_finite())
            && self.log_std.iter().all(|v| v.is_finite())
            && self.obs_norm.mean.iter().chain(&self.obs_norm.var).all(|v| v.is_finite())
    }

    pub fn is_consistent(&self) -> bool {
        self.actor.is_consistent()
            && self.critic.is_consistent()
            && self.critic.output_len() == 1
            && self.critic.input_len() == self.actor.input_len()
            && self.log_std.len() == self.actor.output_len()
            && self.obs_norm.mean.len() == self.actor.input_len()
            && self.obs_norm.var.len() == self.actor.input_len()
    }
}

/// Log density of `action` under a diagonal Gaussian.
pub fn gaussian_log_prob(action: &[f64], mean: &[f64], log_std: &[f64]) -> f64 {
    action
        .iter()
        .zip(mean)
        .zip(log_std)
        .map(|((a, m), l)| {
            let l = l.clamp(LOG_STD_MIN, LOG_STD_MAX);
            let z = (a - m) / l.exp();
            -0.5 * z * z - l - 0.5 * LOG_2PI
        })
        .sum()
}

pub fn gaussian_entropy(log_std: &[f64]) -> f64 {
    log_std
        .iter()
        .map(|l| l.clamp(LOG_STD_MIN, LOG_STD_MAX) + 0.5 * (LOG_2PI + 1.0))
        .sum()
}

impl Actor for Policy {
    fn act(&self, obs: &[f64], _step_index: usize, rng: &mut ChaCha8Rng, deterministic: bool) -> ActorOutput {
        let nobs = self.obs_norm.normalize(obs);
        let mean = self.mean_normalized(&nobs);
        let action: Vec<f64> = if deterministic {
            mean.clone()
        } else {
            mean.iter()
                .zip(self.std())
                .map(|(m, s)| {
                    let z: f64 = StandardNormal.sample(rng);
                    m + s * z
                })
                .collect()
        };
        ActorOutput {
            log_prob: gaussian_log_prob(&action, &mean, &self.log_std),
            value: self.value_normalized(&nobs),
            action,
        }
    }
}

/// Forward pass of the actor that keeps what the PPO gradient needs.
pub(crate) struct ActorPass {
    pub acts: Activations,
    pub mean: Vec<f64>,
}

impl Policy {
    pub(crate) fn actor_pass(&self, nobs: &[f64], acts: Activations) -> ActorPass {
        let mut acts = acts;
        self.actor.forward_cached(nobs, &mut acts);
        let mean = acts.output().iter().map(|z| z.tanh()).collect();
        ActorPass { acts, mean }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn running_norm_matches_direct_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data: Vec<Vec<f64>> = (0..500)
            .map(|_| vec![rng.random_range(-2.0..5.0), rng.random_range(10.0..11.0)])
            .collect();
        let mut norm = RunningNorm::new(2);
        for chunk in data.chunks(37) {
            norm.update(chunk);
        }
        for d in 0..2 {
            let mean = data.iter().map(|x| x[d]).sum::<f64>() / 500.0;
            let var = data.iter().map(|x| (x[d] - mean).powi(2)).sum::<f64>() / 500.0;
            assert!((norm.mean[d] - mean).abs() < 1e-12);
            assert!((norm.var[d] - var).abs() < 1e-12);
        }
    }

    #[test]
    fn log_prob_matches_closed_form() {
        let lp = gaussian_log_prob(&[0.5], &[0.0], &[0.0]);
        assert!((lp - (-0.125 - 0.5 * (2.0 * std::f64::consts::PI).ln())).abs() < 1e-15);
        let h = gaussian_entropy(&[0.0, 0.0]);
        assert!((h - (1.0 + (2.0 * std::f64::consts::PI).ln())).abs() < 1e-14);
    }

    #[test]
    fn deterministic_action_is_the_bounded_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut p = Policy::new(4, 2, 8, -0.5, &mut rng);
        for v in p.actor.params_mut() {
            *v *= 500.0;
        }
        let out = p.act(&[1.0, -2.0, 3.0, 0.5], 0, &mut rng, true);
        assert_eq!(out.action, p.mean_action(&[1.0, -2.0, 3.0, 0.5]));
        assert!(out.action.iter().all(|a| a.abs() <= 1.0));
        assert!(p.is_consistent() && p.is_finite());
    }
}
