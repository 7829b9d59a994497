use std::io::Write;
use std::path::Path;

use log::{debug, info, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::policy::{Actor, ActorOutput, Policy};
use super::ppo::{ppo_update, PpoOptimizer, PpoSamples};
use super::rollout::{check_batch, collect_rollouts, compute_gae, normalize_advantages, EnvSlot, RolloutContext};
use super::TrainConfig;
use crate::curriculum::{sample_pose, update, CurriculumConfig, CurriculumState, SuccessWindow};
use crate::error::{Error, Result};
use crate::format;
use crate::graspenv::{self, EnvConfig, SceneFile};
use crate::kinematics::JointState;
use crate::reward::{ReferenceFile, ReferenceTrajectory, RewardConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    /// Environment steps so far.
    pub step: usize,
    /// Mean return of episodes finished in this iteration.
    #[serde(rename = "return")]
    pub ret: f64,
    /// Success rate over the curriculum window.
    #[serde(rename = "SR")]
    pub sr: f64,
    pub sigma: f64,
}

pub fn write_metrics_csv(path: &Path, rows: &[MetricRow]) -> Result<()> {
    let io = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(io)?;
    }
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    writeln!(f, "step,return,SR,sigma").map_err(io)?;
    for r in rows {
        writeln!(f, "{},{},{},{}", r.step, r.ret, r.sr, r.sigma).map_err(io)?;
    }
    f.flush().map_err(io)
}

/// Self-contained training snapshot: enough to evaluate or resume without
/// the original scene and reference files.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: String,
    pub steps: usize,
    pub policy: Policy,
    pub train: TrainConfig,
    pub reward: RewardConfig,
    pub curriculum: CurriculumState,
    pub scene: SceneFile,
    pub reference: ReferenceFile,
    pub rng: ChaCha8Rng,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        format::write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ckpt: Checkpoint = format::read_json(path)?;
        format::check_version("checkpoint", &ckpt.version)?;
        if !ckpt.policy.is_consistent() {
            return Err(Error::invalid(format!("{}: policy shapes are inconsistent", path.display())));
        }
        Ok(ckpt)
    }

    /// Scene, reference and policy, checked against each other.
    pub fn unpack(&self) -> Result<(EnvConfig, ReferenceTrajectory)> {
        let scene = EnvConfig::from_file(self.scene.clone())?;
        let reference = ReferenceTrajectory::from_file(self.reference.clone())?;
        if scene.observation_len() != self.policy.obs_dim() || scene.action_len() != self.policy.act_dim() {
            return Err(Error::invalid("checkpoint policy does not fit its scene"));
        }
        Ok((scene, reference))
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub policy: Policy,
    pub curriculum: CurriculumState,
    pub metrics: Vec<MetricRow>,
    pub steps: usize,
    /// Set when training stopped on a non-finite update; the policy is the
    /// last finite one.
    pub diverged: Option<String>,
    pub checkpoint: Checkpoint,
}

/// PPO on `scene` with the trajectory-following reward for `reference`.
///
/// The first `pretrain_steps` run at σ = 0. After that each iteration is one
/// curriculum round judged on the success rate of the last `eval_window`
/// training episodes. With `use_curriculum = false`, σ is 1 throughout.
/// Each iteration runs one `horizon`-step segment in each of
/// `batch_episodes` environments.
pub fn train(
    scene: &EnvConfig,
    reference: &ReferenceTrajectory,
    reward_cfg: &RewardConfig,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    scene.validate()?;
    reward_cfg.validate()?;
    let env_cfg = EnvConfig {
        terminate_on_success: cfg.terminate_on_success,
        ..scene.clone()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut policy = Policy::new(
        env_cfg.observation_len(),
        env_cfg.action_len(),
        cfg.hidden,
        cfg.init_log_std,
        &mut rng,
    );
    let ppo_cfg = cfg.ppo();
    let mut optimizer = PpoOptimizer::new(&policy, &ppo_cfg);
    let mut curriculum = if cfg.use_curriculum {
        CurriculumState::new(0.0)
    } else {
        CurriculumState::full()
    };
    let mut window = SuccessWindow::new(cfg.curriculum.eval_window);
    let n_steps = env_cfg.horizon;

    let ctx = |sigma| RolloutContext {
        env: &env_cfg,
        reference,
        reward: reward_cfg,
        curriculum: &cfg.curriculum,
        sigma,
    };
    let mut envs = (0..cfg.batch_episodes)
        .map(|_| {
            let seed = rng.random();
            EnvSlot::new(&ctx(curriculum.sigma), seed)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut steps = 0;
    let mut metrics = Vec::new();
    let mut diverged = None;
    let mut last_sigma = curriculum.sigma;
    while steps < cfg.total_steps {
        if cfg.anneal_lr {
            let frac = 1.0 - steps as f64 / cfg.total_steps as f64;
            optimizer.actor.lr = cfg.lr * frac;
            optimizer.log_std.lr = cfg.lr * frac;
            optimizer.critic.lr = cfg.critic_lr * frac;
        }
        let sigma = curriculum.sigma;
        if sigma != last_sigma {
            // Fresh episodes start at the new noise level.
            for slot in envs.iter_mut().filter(|s| s.state.step_index == 0) {
                slot.restart(&ctx(sigma))?;
            }
            last_sigma = sigma;
        }
        let batch = collect_rollouts(&policy, &mut envs, &ctx(sigma), n_steps, false, cfg.jobs)?;
        check_batch(&batch)?;
        steps += batch.len();
        for ep in &batch.episodes {
            window.record(ep.success);
        }

        let (mut adv, returns) = compute_gae(&batch, cfg.gamma, cfg.gae_lambda, cfg.reward_scale);
        normalize_advantages(&mut adv);
        let samples = PpoSamples {
            nobs: batch.transitions.iter().map(|t| policy.obs_norm.normalize(&t.obs)).collect(),
            actions: batch.transitions.iter().map(|t| t.action.clone()).collect(),
            old_log_probs: batch.transitions.iter().map(|t| t.log_prob).collect(),
            advantages: adv,
            returns,
        };
        match ppo_update(&mut policy, &mut optimizer, &samples, &ppo_cfg, &mut rng) {
            Ok(stats) => debug!("step {steps}: {stats:?}"),
            Err(e) => {
                warn!("stopping at step {steps}: {e}");
                diverged = Some(e.to_string());
                break;
            }
        }
        let obs: Vec<Vec<f64>> = batch.transitions.iter().map(|t| t.obs.clone()).collect();
        policy.obs_norm.update(&obs);

        if cfg.use_curriculum && steps > cfg.pretrain_steps && window.is_full() {
            curriculum = update(&curriculum, window.rate(), &cfg.curriculum)?;
        }
        let ret = if batch.episodes.is_empty() {
            f64::NAN
        } else {
            batch.episodes.iter().map(|e| e.ret).sum::<f64>() / batch.episodes.len() as f64
        };
        let row = MetricRow {
            step: steps,
            ret,
            sr: window.rate(),
            sigma: curriculum.sigma,
        };
        info!(
            "step {:>7}  return {:>9.2}  SR {:.3}  sigma {:.2}  std {:.3}",
            row.step,
            row.ret,
            row.sr,
            row.sigma,
            policy.std().iter().sum::<f64>() / policy.act_dim() as f64
        );
        metrics.push(row);
    }

    let checkpoint = Checkpoint {
        version: format::current_version(),
        steps,
        policy: policy.clone(),
        train: cfg.clone(),
        reward: *reward_cfg,
        curriculum: curriculum.clone(),
        scene: scene.to_file(),
        reference: reference.to_file(),
        rng,
    };
    Ok(TrainOutcome {
        policy,
        curriculum,
        metrics,
        steps,
        diverged,
        checkpoint,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    #[serde(rename = "return")]
    pub ret: f64,
    pub success: bool,
    pub steps: usize,
    pub attached: bool,
    pub object_x: f64,
    pub object_y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub success_rate: f64,
    pub mean_return: f64,
    pub episodes: Vec<EpisodeRecord>,
}

impl EvalReport {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let io = |source| Error::Io {
            path: path.to_path_buf(),
            source,
        };
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(io)?;
        }
        let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
        writeln!(f, "episode,return,success,steps,attached,object_x,object_y").map_err(io)?;
        for e in &self.episodes {
            writeln!(
                f,
                "{},{},{},{},{},{},{}",
                e.episode, e.ret, e.success as u8, e.steps, e.attached as u8, e.object_x, e.object_y
            )
            .map_err(io)?;
        }
        f.flush().map_err(io)
    }
}

/// Runs `n_episodes` with mean (noise-free) actions at poses drawn with
/// noise level `sigma`. An episode succeeds if the object reaches the
/// target height at any step.
#[allow(clippy::too_many_arguments)]
pub fn evaluate<A: Actor + ?Sized>(
    actor: &A,
    scene: &EnvConfig,
    reference: &ReferenceTrajectory,
    reward_cfg: &RewardConfig,
    curriculum: &CurriculumConfig,
    n_episodes: usize,
    sigma: f64,
    seed: u64,
) -> Result<EvalReport> {
    if n_episodes == 0 {
        return Err(Error::invalid("evaluation needs at least one episode"));
    }
    if !(0.0..=1.0).contains(&sigma) {
        return Err(Error::invalid(format!("sigma must lie in [0, 1], got {sigma}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut episodes = Vec::with_capacity(n_episodes);
    for episode in 0..n_episodes {
        let pose = sample_pose(&scene.object.init_pose, sigma, curriculum, &mut rng);
        let (mut state, mut obs) = graspenv::reset(scene, pose, seed, reference)?;
        let mut ret = 0.0;
        while !state.done {
            let out = actor.act(&obs, state.step_index, &mut rng, true);
            let step = graspenv::step(scene, &mut state, &out.action, reference, reward_cfg)?;
            ret += step.reward;
            obs = step.obs;
        }
        episodes.push(EpisodeRecord {
            episode,
            ret,
            success: state.succeeded,
            steps: state.step_index,
            attached: state.attached,
            object_x: pose.position.x,
            object_y: pose.position.y,
        });
    }
    let n = episodes.len() as f64;
    Ok(EvalReport {
        success_rate: episodes.iter().filter(|e| e.success).count() as f64 / n,
        mean_return: episodes.iter().map(|e| e.ret).sum::<f64>() / n,
        episodes,
    })
}

/// Tracks a recorded joint trajectory with clamped delta actions: at step
/// `t` it heads for frame `t + 1`.
#[derive(Debug, Clone)]
pub struct ReplayActor {
    pub q_arm: Vec<JointState>,
    pub q_hand: Vec<JointState>,
    pub action_scale: f64,
}

impl Actor for ReplayActor {
    fn act(&self, obs: &[f64], step_index: usize, _rng: &mut ChaCha8Rng, _deterministic: bool) -> ActorOutput {
        let k = (step_index + 1).min(self.q_arm.len() - 1);
        let target = self.q_arm[k].0.iter().chain(&self.q_hand[k].0);
        let action = target
            .zip(obs)
            .map(|(t, q)| ((t - q) / self.action_scale).clamp(-1.0, 1.0))
            .collect();
        ActorOutput {
            action,
            log_prob: 0.0,
            value: 0.0,
        }
    }
}
