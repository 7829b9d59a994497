use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::policy::Actor;
use crate::curriculum::{sample_pose, CurriculumConfig};
use crate::error::{Error, Result};
use crate::graspenv::{self, EnvConfig, EnvState};
use crate::reward::{ReferenceTrajectory, RewardConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub action: Vec<f64>,
    pub log_prob: f64,
    pub reward: f64,
    pub value: f64,
    pub done: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeStat {
    pub env: usize,
    pub ret: f64,
    pub success: bool,
    pub length: usize,
}

/// `n_envs × n_steps` transitions, env-major (`env * n_steps + t`).
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub n_envs: usize,
    pub n_steps: usize,
    pub transitions: Vec<Transition>,
    /// Value of the observation after each env's last transition.
    pub bootstrap: Vec<f64>,
    pub episodes: Vec<EpisodeStat>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }
}

/// Everything the environments share during a collection.
#[derive(Clone, Copy)]
pub struct RolloutContext<'a> {
    pub env: &'a EnvConfig,
    pub reference: &'a ReferenceTrajectory,
    pub reward: &'a RewardConfig,
    pub curriculum: &'a CurriculumConfig,
    pub sigma: f64,
}

/// One environment instance with its own rng stream, used both for
/// curriculum pose draws and for action noise.
#[derive(Debug, Clone)]
pub struct EnvSlot {
    pub state: EnvState,
    pub obs: Vec<f64>,
    pub rng: ChaCha8Rng,
    pub episode_return: f64,
}

impl EnvSlot {
    pub fn new(ctx: &RolloutContext, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (state, obs) = reset_with(ctx, &mut rng)?;
        Ok(EnvSlot {
            state,
            obs,
            rng,
            episode_return: 0.0,
        })
    }

    /// Starts a fresh episode at a newly drawn pose.
    pub fn restart(&mut self, ctx: &RolloutContext) -> Result<()> {
        let (state, obs) = reset_with(ctx, &mut self.rng)?;
        self.state = state;
        self.obs = obs;
        self.episode_return = 0.0;
        Ok(())
    }
}

fn reset_with(ctx: &RolloutContext, rng: &mut ChaCha8Rng) -> Result<(EnvState, Vec<f64>)> {
    let pose = sample_pose(&ctx.env.object.init_pose, ctx.sigma, ctx.curriculum, rng);
    let seed = rand::Rng::random(rng);
    graspenv::reset(ctx.env, pose, seed, ctx.reference)
}

struct EnvRollout {
    transitions: Vec<Transition>,
    bootstrap: f64,
    episodes: Vec<EpisodeStat>,
}

fn run_env<A: Actor + ?Sized>(
    actor: &A,
    slot: &mut EnvSlot,
    index: usize,
    ctx: &RolloutContext,
    n_steps: usize,
    deterministic: bool,
) -> Result<EnvRollout> {
    let mut transitions = Vec::with_capacity(n_steps);
    let mut episodes = Vec::new();
    for _ in 0..n_steps {
        let out = actor.act(&slot.obs, slot.state.step_index, &mut slot.rng, deterministic);
        let step = graspenv::step(ctx.env, &mut slot.state, &out.action, ctx.reference, ctx.reward)?;
        slot.episode_return += step.reward;
        transitions.push(Transition {
            obs: std::mem::replace(&mut slot.obs, step.obs),
            action: out.action,
            log_prob: out.log_prob,
            reward: step.reward,
            value: out.value,
            done: step.done,
        });
        if step.done {
            episodes.push(EpisodeStat {
                env: index,
                ret: slot.episode_return,
                success: slot.state.succeeded,
                length: slot.state.step_index,
            });
            slot.restart(ctx)?;
        }
    }
    let bootstrap = actor.act(&slot.obs, slot.state.step_index, &mut slot.rng.clone(), true).value;
    Ok(EnvRollout {
        transitions,
        bootstrap,
        episodes,
    })
}

/// Steps every environment `n_steps` times, resetting finished episodes at
/// curriculum-drawn poses. Work is split over `jobs` threads; because each
/// environment owns its rng, the batch does not depend on `jobs`.
pub fn collect_rollouts<A: Actor + ?Sized>(
    actor: &A,
    envs: &mut [EnvSlot],
    ctx: &RolloutContext,
    n_steps: usize,
    deterministic: bool,
    jobs: usize,
) -> Result<Batch> {
    let n_envs = envs.len();
    let jobs = jobs.clamp(1, n_envs.max(1));
    let mut results: Vec<Option<Result<EnvRollout>>> = (0..n_envs).map(|_| None).collect();
    if jobs == 1 {
        for (i, (slot, out)) in envs.iter_mut().zip(results.iter_mut()).enumerate() {
            *out = Some(run_env(actor, slot, i, ctx, n_steps, deterministic));
        }
    } else {
        let chunk = n_envs.div_ceil(jobs);
        std::thread::scope(|scope| {
            for (c, (slots, outs)) in envs.chunks_mut(chunk).zip(results.chunks_mut(chunk)).enumerate() {
                scope.spawn(move || {
                    for (j, (slot, out)) in slots.iter_mut().zip(outs.iter_mut()).enumerate() {
                        *out = Some(run_env(actor, slot, c * chunk + j, ctx, n_steps, deterministic));
                    }
                });
            }
        });
    }
    let mut batch = Batch {
        n_envs,
        n_steps,
        transitions: Vec::with_capacity(n_envs * n_steps),
        bootstrap: Vec::with_capacity(n_envs),
        episodes: Vec::new(),
    };
    for (i, r) in results.into_iter().enumerate() {
        let r = r.expect("every env ran").map_err(|e| e.at_env(i))?;
        batch.transitions.extend(r.transitions);
        batch.bootstrap.push(r.bootstrap);
        batch.episodes.extend(r.episodes);
    }
    Ok(batch)
}

/// Generalized advantage estimates and value targets (`A + V`), computed per
/// environment segment. `done` cuts bootstrapping; the last step of a segment
/// bootstraps from `batch.bootstrap`. Rewards are multiplied by `reward_scale`.
pub fn compute_gae(batch: &Batch, gamma: f64, lambda: f64, reward_scale: f64) -> (Vec<f64>, Vec<f64>) {
    let n = batch.transitions.len();
    let mut adv = vec![0.0; n];
    for e in 0..batch.n_envs {
        let mut running = 0.0;
        for t in (0..batch.n_steps).rev() {
            let i = e * batch.n_steps + t;
            let tr = &batch.transitions[i];
            let next_value = if t + 1 == batch.n_steps {
                batch.bootstrap[e]
            } else {
                batch.transitions[i + 1].value
            };
            let live = if tr.done { 0.0 } else { 1.0 };
            let delta = reward_scale * tr.reward + gamma * next_value * live - tr.value;
            running = delta + gamma * lambda * live * running;
            adv[i] = running;
        }
    }
    let returns = adv
        .iter()
        .zip(&batch.transitions)
        .map(|(a, t)| a + t.value)
        .collect();
    (adv, returns)
}

/// Shifts and scales to mean 0 and (population) std 1. A constant input is
/// only centered.
pub fn normalize_advantages(adv: &mut [f64]) {
    if adv.is_empty() {
        return;
    }
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    for a in adv.iter_mut() {
        *a -= mean;
    }
    let std = (adv.iter().map(|a| a * a).sum::<f64>() / n).sqrt();
    if std > 1e-12 {
        for a in adv.iter_mut() {
            *a /= std;
        }
    }
}

pub(crate) fn check_batch(batch: &Batch) -> Result<()> {
    if batch.transitions.len() != batch.n_envs * batch.n_steps || batch.bootstrap.len() != batch.n_envs {
        return Err(Error::invalid("batch lengths are inconsistent"));
    }
    if let Some(i) = batch.transitions.iter().position(|t| !t.reward.is_finite()) {
        return Err(Error::NonFinite(format!("reward of transition {i}")));
    }
    Ok(())
}
