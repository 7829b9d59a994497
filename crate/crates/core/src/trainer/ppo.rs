use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::mlp::{clip_grad_norm, Activations, Adam};
use super::policy::{gaussian_entropy, gaussian_log_prob, Policy, LOG_STD_MAX, LOG_STD_MIN};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoConfig {
    pub clip_ratio: f64,
    pub epochs: usize,
    pub minibatch_size: usize,
    /// Epochs stop once the approximate KL of a minibatch exceeds this.
    pub target_kl: f64,
    pub ent_coef: f64,
    pub max_grad_norm: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            clip_ratio: 0.2,
            epochs: 10,
            minibatch_size: 256,
            target_kl: 0.02,
            ent_coef: 0.0,
            max_grad_norm: 0.5,
            actor_lr: 3e-4,
            critic_lr: 1e-3,
        }
    }
}

/// Optimizer state for the actor weights, the log-std vector and the critic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpoOptimizer {
    pub actor: Adam,
    pub log_std: Adam,
    pub critic: Adam,
}

impl PpoOptimizer {
    pub fn new(policy: &Policy, cfg: &PpoConfig) -> Self {
        PpoOptimizer {
            actor: Adam::new(policy.actor.num_params(), cfg.actor_lr),
            log_std: Adam::new(policy.log_std.len(), cfg.actor_lr),
            critic: Adam::new(policy.critic.num_params(), cfg.critic_lr),
        }
    }
}

/// Training data for one update; observations are already normalized.
#[derive(Debug, Clone, Default)]
pub struct PpoSamples {
    pub nobs: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub old_log_probs: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl PpoSamples {
    pub fn len(&self) -> usize {
        self.nobs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nobs.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PpoStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub kl: f64,
    pub clip_frac: f64,
    pub epochs: usize,
    pub minibatches: usize,
    pub early_stopped: bool,
}

/// Clipped surrogate `min(r·A, clip(r, 1−c, 1+c)·A)`.
pub fn surrogate(ratio: f64, advantage: f64, clip: f64) -> f64 {
    (ratio * advantage).min(ratio.clamp(1.0 - clip, 1.0 + clip) * advantage)
}

/// Whether the surrogate's gradient flows through the ratio.
fn ratio_active(ratio: f64, advantage: f64, clip: f64) -> bool {
    let clipped = ratio.clamp(1.0 - clip, 1.0 + clip);
    clipped == ratio || ratio * advantage < clipped * advantage
}

/// Clipped-surrogate PPO. Works on copies of the policy and optimizer and
/// commits only if every loss and parameter stays finite; otherwise the
/// inputs are left untouched and a non-finite error is returned.
pub fn ppo_update(
    policy: &mut Policy,
    optimizer: &mut PpoOptimizer,
    samples: &PpoSamples,
    cfg: &PpoConfig,
    rng: &mut ChaCha8Rng,
) -> Result<PpoStats> {
    let n = samples.len();
    if n == 0 {
        return Err(Error::invalid("PPO batch is empty"));
    }
    if [samples.actions.len(), samples.old_log_probs.len(), samples.advantages.len(), samples.returns.len()]
        .iter()
        .any(|&l| l != n)
    {
        return Err(Error::invalid("PPO batch fields differ in length"));
    }
    let mut work = policy.clone();
    let mut opt = optimizer.clone();
    let mut stats = PpoStats::default();
    let mut order: Vec<usize> = (0..n).collect();
    let mb = cfg.minibatch_size.clamp(1, n);
    let act_dim = work.act_dim();

    let mut g_actor = vec![0.0; work.actor.num_params()];
    let mut g_critic = vec![0.0; work.critic.num_params()];
    let mut g_log_std = vec![0.0; act_dim];
    let mut acts = Activations::default();
    let mut critic_acts = Activations::default();

    'epochs: for _ in 0..cfg.epochs {
        order.shuffle(rng);
        for idx in order.chunks(mb) {
            let m = idx.len() as f64;
            g_actor.iter_mut().for_each(|g| *g = 0.0);
            g_critic.iter_mut().for_each(|g| *g = 0.0);
            g_log_std.iter_mut().for_each(|g| *g = 0.0);
            let std = work.std();
            let mut kl = 0.0;
            let mut policy_loss = 0.0;
            let mut value_loss = 0.0;
            let mut clipped = 0usize;
            let mut grad_out = vec![0.0; act_dim];
            for &i in idx {
                let pass = work.actor_pass(&samples.nobs[i], std::mem::take(&mut acts));
                let a = &samples.actions[i];
                let logp = gaussian_log_prob(a, &pass.mean, &work.log_std);
                let log_ratio = logp - samples.old_log_probs[i];
                let ratio = log_ratio.exp();
                kl += (ratio - 1.0) - log_ratio;
                let adv = samples.advantages[i];
                policy_loss -= surrogate(ratio, adv, cfg.clip_ratio);
                if (ratio - 1.0).abs() > cfg.clip_ratio {
                    clipped += 1;
                }
                // dL/dlogp for L = −mean(surrogate).
                let g = if ratio_active(ratio, adv, cfg.clip_ratio) {
                    -adv * ratio / m
                } else {
                    0.0
                };
                for j in 0..act_dim {
                    let z = (a[j] - pass.mean[j]) / std[j];
                    grad_out[j] = g * z / std[j] * (1.0 - pass.mean[j] * pass.mean[j]);
                    if (LOG_STD_MIN..=LOG_STD_MAX).contains(&work.log_std[j]) {
                        g_log_std[j] += g * (z * z - 1.0);
                    }
                }
                if g != 0.0 {
                    work.actor.backward(&pass.acts, &grad_out, &mut g_actor);
                }
                acts = pass.acts;

                work.critic.forward_cached(&samples.nobs[i], &mut critic_acts);
                let v = critic_acts.output()[0];
                let err = v - samples.returns[i];
                value_loss += 0.5 * err * err;
                work.critic.backward(&critic_acts, &[err / m], &mut g_critic);
            }
            kl /= m;
            if kl > cfg.target_kl {
                stats.early_stopped = true;
                break 'epochs;
            }
            for (j, g) in g_log_std.iter_mut().enumerate() {
                if (LOG_STD_MIN..=LOG_STD_MAX).contains(&work.log_std[j]) {
                    *g -= cfg.ent_coef;
                }
            }
            policy_loss = policy_loss / m - cfg.ent_coef * gaussian_entropy(&work.log_std);
            value_loss /= m;
            let finite = policy_loss.is_finite()
                && value_loss.is_finite()
                && g_actor.iter().chain(&g_critic).chain(&g_log_std).all(|g| g.is_finite());
            if !finite {
                return Err(Error::NonFinite(format!(
                    "PPO loss (policy {policy_loss}, value {value_loss}); update aborted"
                )));
            }
            clip_grad_norm(&mut [&mut g_actor, &mut g_log_std], cfg.max_grad_norm);
            clip_grad_norm(&mut [&mut g_critic], cfg.max_grad_norm);
            opt.actor.step(work.actor.params_mut(), &g_actor);
            opt.log_std.step(&mut work.log_std, &g_log_std);
            opt.critic.step(work.critic.params_mut(), &g_critic);

            stats.policy_loss = policy_loss;
            stats.value_loss = value_loss;
            stats.kl = kl;
            stats.clip_frac = clipped as f64 / m;
            stats.minibatches += 1;
        }
        stats.epochs += 1;
    }
    if !work.is_finite() {
        return Err(Error::NonFinite("policy parameters after PPO update; update aborted".into()));
    }
    *policy = work;
    *optimizer = opt;
    Ok(stats)
}
