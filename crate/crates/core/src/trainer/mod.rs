//! PPO training, evaluation and checkpoints.
//!
//! Networks, backpropagation and the optimizer are implemented here directly
//! on flat parameter vectors.

mod mlp;
mod policy;
mod ppo;
mod rollout;
mod train;

use serde::{Deserialize, Serialize};

use crate::curriculum::CurriculumConfig;
use crate::error::{Error, Result};

pub use mlp::{clip_grad_norm, Activations, Adam, Mlp};
pub use policy::{gaussian_entropy, gaussian_log_prob, Actor, ActorOutput, Policy, RunningNorm};
pub use ppo::{ppo_update, surrogate, PpoConfig, PpoOptimizer, PpoSamples, PpoStats};
pub use rollout::{
    collect_rollouts, compute_gae, normalize_advantages, Batch, EnvSlot, EpisodeStat, RolloutContext, Transition,
};
pub use train::{
    evaluate, train, write_metrics_csv, Checkpoint, EpisodeRecord, EvalReport, MetricRow, ReplayActor,
    TrainOutcome,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip_ratio: f64,
    /// Actor learning rate.
    pub lr: f64,
    pub critic_lr: f64,
    pub epochs_per_batch: usize,
    pub minibatch_size: usize,
    /// Parallel environments; each contributes one horizon-length segment
    /// per iteration.
    pub batch_episodes: usize,
    pub total_steps: usize,
    pub seed: u64,
    pub curriculum: CurriculumConfig,
    pub use_curriculum: bool,
    /// Steps at σ = 0 before curriculum rounds begin.
    pub pretrain_steps: usize,
    pub hidden: usize,
    pub init_log_std: f64,
    pub target_kl: f64,
    pub ent_coef: f64,
    pub max_grad_norm: f64,
    /// Multiplies rewards before advantage estimation.
    pub reward_scale: f64,
    /// Threads for rollout collection; results do not depend on it.
    pub jobs: usize,
    /// Whether training episodes end at the first success.
    pub terminate_on_success: bool,
    /// Decay both learning rates linearly to zero over `total_steps`.
    pub anneal_lr: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            gamma: 0.99,
            gae_lambda: 0.95,
            clip_ratio: 0.2,
            lr: 3e-4,
            critic_lr: 1e-3,
            epochs_per_batch: 10,
            minibatch_size: 256,
            batch_episodes: 16,
            total_steps: 200_000,
            seed: 0,
            curriculum: CurriculumConfig::default(),
            use_curriculum: true,
            pretrain_steps: 50_000,
            hidden: 128,
            init_log_std: -0.5,
            target_kl: 0.02,
            ent_coef: 0.0,
            max_grad_norm: 0.5,
            reward_scale: 1.0,
            jobs: 1,
            terminate_on_success: false,
            anneal_lr: false,
        }
    }
}

impl TrainConfig {
    /// Settings for the gantry toy scene. The gantry cannot yaw, so the
    /// curriculum randomizes position only.
    pub fn toy() -> Self {
        TrainConfig {
            gamma: 0.95,
            batch_episodes: 4,
            pretrain_steps: 20_000,
            hidden: 64,
            init_log_std: -1.0,
            reward_scale: 0.3,
            curriculum: CurriculumConfig {
                theta_max: 0.0,
                eval_window: 32,
                ..CurriculumConfig::default()
            },
            ..TrainConfig::default()
        }
    }

    pub fn ppo(&self) -> PpoConfig {
        PpoConfig {
            clip_ratio: self.clip_ratio,
            epochs: self.epochs_per_batch,
            minibatch_size: self.minibatch_size,
            target_kl: self.target_kl,
            ent_coef: self.ent_coef,
            max_grad_norm: self.max_grad_norm,
            actor_lr: self.lr,
            critic_lr: self.critic_lr,
        }
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            out.push(format!("train.gamma must lie in (0, 1], got {}", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            out.push(format!("train.gae_lambda must lie in [0, 1], got {}", self.gae_lambda));
        }
        if !(self.clip_ratio > 0.0) {
            out.push(format!("train.clip_ratio must be positive, got {}", self.clip_ratio));
        }
        for (name, v) in [("lr", self.lr), ("critic_lr", self.critic_lr), ("reward_scale", self.reward_scale)] {
            if !(v > 0.0 && v.is_finite()) {
                out.push(format!("train.{name} must be positive, got {v}"));
            }
        }
        for (name, v) in [
            ("epochs_per_batch", self.epochs_per_batch),
            ("minibatch_size", self.minibatch_size),
            ("batch_episodes", self.batch_episodes),
            ("total_steps", self.total_steps),
            ("hidden", self.hidden),
            ("jobs", self.jobs),
        ] {
            if v == 0 {
                out.push(format!("train.{name} must be at least 1"));
            }
        }
        if !(self.target_kl > 0.0) {
            out.push(format!("train.target_kl must be positive, got {}", self.target_kl));
        }
        if !(self.ent_coef >= 0.0 && self.ent_coef.is_finite()) {
            out.push(format!("train.ent_coef must be non-negative, got {}", self.ent_coef));
        }
        if !(self.max_grad_norm > 0.0) {
            out.push(format!("train.max_grad_norm must be positive, got {}", self.max_grad_norm));
        }
        if !self.init_log_std.is_finite() {
            out.push("train.init_log_std must be finite".to_string());
        }
        out.extend(self.curriculum.violations());
        out
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::invalid(v.join("; ")))
        }
    }
}

#[cfg(test)]
mod tests;
