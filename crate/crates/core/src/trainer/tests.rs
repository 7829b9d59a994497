use super::*;
use crate::curriculum::CurriculumConfig;
use crate::graspenv::{self, toy_scene, EnvConfig};
use crate::retarget::make_reference;
use crate::reward::{ReferenceTrajectory, RewardConfig};
use crate::synthetic::{toy_demo, RobotMotion};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn toy_setup() -> (EnvConfig, RobotMotion, ReferenceTrajectory) {
    let cfg = toy_scene();
    let demo = toy_demo(&cfg).unwrap();
    let reference = make_reference(&cfg.rig, &demo.to_trajectory()).unwrap();
    (cfg, demo, reference)
}

fn transition(reward: f64, value: f64, done: bool) -> Transition {
    Transition {
        obs: vec![],
        action: vec![],
        log_prob: 0.0,
        reward,
        value,
        done,
    }
}

fn random_batch(rng: &mut ChaCha8Rng, n_envs: usize, n_steps: usize) -> Batch {
    let transitions = (0..n_envs * n_steps)
        .map(|_| transition(rng.random_range(-2.0..2.0), rng.random_range(-1.0..1.0), rng.random_bool(0.1)))
        .collect();
    Batch {
        n_envs,
        n_steps,
        transitions,
        bootstrap: (0..n_envs).map(|_| rng.random_range(-1.0..1.0)).collect(),
        episodes: vec![],
    }
}

/// Advantage as the explicit sum over future TD errors, cut at the first
/// episode end.
fn brute_force_gae(batch: &Batch, gamma: f64, lambda: f64) -> Vec<f64> {
    let mut out = Vec::new();
    for e in 0..batch.n_envs {
        let seg = &batch.transitions[e * batch.n_steps..(e + 1) * batch.n_steps];
        let delta = |t: usize| {
            let next = if seg[t].done {
                0.0
            } else if t + 1 == seg.len() {
                batch.bootstrap[e]
            } else {
                seg[t + 1].value
            };
            seg[t].reward + gamma * next - seg[t].value
        };
        for t in 0..seg.len() {
            let mut sum = 0.0;
            for l in 0..seg.len() - t {
                sum += (gamma * lambda).powi(l as i32) * delta(t + l);
                if seg[t + l].done {
                    break;
                }
            }
            out.push(sum);
        }
    }
    out
}

#[test]
fn gae_single_terminal_transition() {
    let batch = Batch {
        n_envs: 1,
        n_steps: 1,
        transitions: vec![transition(2.5, 0.75, true)],
        bootstrap: vec![100.0],
        episodes: vec![],
    };
    let (adv, ret) = compute_gae(&batch, 0.99, 0.95, 1.0);
    assert_eq!(adv, vec![1.75]);
    assert_eq!(ret, vec![2.5]);
}

#[test]
fn gae_without_discount_is_reward_minus_value() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let batch = random_batch(&mut rng, 3, 20);
    let (adv, _) = compute_gae(&batch, 0.0, 0.95, 1.0);
    for (a, t) in adv.iter().zip(&batch.transitions) {
        assert_eq!(*a, t.reward - t.value);
    }
}

#[test]
fn gae_reward_scale_multiplies_rewards() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let batch = random_batch(&mut rng, 2, 15);
    let mut scaled = batch.clone();
    scaled.transitions.iter_mut().for_each(|t| t.reward *= 0.1);
    let (a, _) = compute_gae(&batch, 0.9, 0.8, 0.1);
    let (b, _) = compute_gae(&scaled, 0.9, 0.8, 1.0);
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gae_matches_brute_force(seed in any::<u64>(), n_envs in 1usize..4, n_steps in 1usize..40,
                               gamma in 0.0f64..=1.0, lambda in 0.0f64..=1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let batch = random_batch(&mut rng, n_envs, n_steps);
        let (adv, ret) = compute_gae(&batch, gamma, lambda, 1.0);
        let oracle = brute_force_gae(&batch, gamma, lambda);
        for i in 0..adv.len() {
            prop_assert!((adv[i] - oracle[i]).abs() < 1e-10);
            prop_assert!((ret[i] - adv[i] - batch.transitions[i].value).abs() < 1e-12);
        }
    }

    #[test]
    fn normalized_advantages_have_unit_moments(xs in prop::collection::vec(-1e3f64..1e3, 2..300)) {
        prop_assume!(xs.iter().any(|x| (x - xs[0]).abs() > 1e-3));
        let mut adv = xs.clone();
        normalize_advantages(&mut adv);
        let n = adv.len() as f64;
        let mean = adv.iter().sum::<f64>() / n;
        let std = (adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n).sqrt();
        prop_assert!(mean.abs() < 1e-6);
        prop_assert!((std - 1.0).abs() < 1e-6);
    }
}

fn rollout_envs(ctx: &RolloutContext, n: usize, seed: u64) -> Vec<EnvSlot> {
    (0..n).map(|i| EnvSlot::new(ctx, seed + i as u64).unwrap()).collect()
}

#[test]
fn rollouts_are_sized_and_reproducible() {
    let (cfg, _, reference) = toy_setup();
    let rcfg = RewardConfig::default();
    let ccfg = CurriculumConfig::default();
    let ctx = RolloutContext {
        env: &cfg,
        reference: &reference,
        reward: &rcfg,
        curriculum: &ccfg,
        sigma: 0.5,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let policy = Policy::new(cfg.observation_len(), cfg.action_len(), 32, 0.0, &mut rng);

    let mut envs = rollout_envs(&ctx, 4, 11);
    let a = collect_rollouts(&policy, &mut envs, &ctx, 80, true, 1).unwrap();
    assert_eq!(a.len(), 320);
    assert_eq!(a.bootstrap.len(), 4);
    // Horizon 80 and no early termination: every env finishes one episode.
    assert_eq!(a.episodes.len(), 4);

    let mut envs = rollout_envs(&ctx, 4, 11);
    let b = collect_rollouts(&policy, &mut envs, &ctx, 80, true, 1).unwrap();
    assert_eq!(a, b);

    // Stochastic actions draw from per-env streams, so threading does not
    // change the batch.
    let mut envs = rollout_envs(&ctx, 4, 11);
    let c = collect_rollouts(&policy, &mut envs, &ctx, 50, false, 1).unwrap();
    let mut envs = rollout_envs(&ctx, 4, 11);
    let d = collect_rollouts(&policy, &mut envs, &ctx, 50, false, 3).unwrap();
    assert_eq!(c, d);
    assert_ne!(a.transitions[..50], c.transitions[..50]);
}

struct ZeroActor(usize);

impl Actor for ZeroActor {
    fn act(&self, _: &[f64], _: usize, _: &mut ChaCha8Rng, _: bool) -> ActorOutput {
        ActorOutput {
            action: vec![0.0; self.0],
            log_prob: 0.0,
            value: 0.0,
        }
    }
}

#[test]
fn zero_actions_earn_the_reset_reward_once() {
    let (cfg, _, reference) = toy_setup();
    let rcfg = RewardConfig::default();
    let ccfg = CurriculumConfig::default();
    for sigma in [0.0, 1.0] {
        let ctx = RolloutContext {
            env: &cfg,
            reference: &reference,
            reward: &rcfg,
            curriculum: &ccfg,
            sigma,
        };
        let mut envs = rollout_envs(&ctx, 3, 40);
        let starts: Vec<_> = envs.iter().map(|e| e.state.clone()).collect();
        let batch = collect_rollouts(&ZeroActor(cfg.action_len()), &mut envs, &ctx, 80, false, 1).unwrap();
        for (e, start) in starts.iter().enumerate() {
            // The state never changes, so only the first step can make
            // progress along the reference.
            let poses = graspenv::rig_poses(&cfg.rig, start).unwrap();
            let s = crate::reward::FingertipState::relative_to(&start.object_pose, &poses.fingertips);
            let first = crate::reward::trajectory_following_reward(&s, &reference, Default::default(), &rcfg);
            let rewards: Vec<f64> = batch.transitions[e * 80..(e + 1) * 80].iter().map(|t| t.reward).collect();
            assert_eq!(rewards[0], first.reward);
            assert!(rewards[1..].iter().all(|&r| r == 0.0));
        }
    }
}

fn bandit_samples(policy: &Policy, rng: &mut ChaCha8Rng, n: usize) -> PpoSamples {
    let obs = vec![0.0];
    let mut s = PpoSamples::default();
    for _ in 0..n {
        let out = policy.act(&obs, 0, rng, false);
        let reward = if out.action[0] > 0.0 { 1.0 } else { 0.0 };
        s.nobs.push(policy.obs_norm.normalize(&obs));
        s.actions.push(out.action);
        s.old_log_probs.push(out.log_prob);
        s.advantages.push(reward - out.value);
        s.returns.push(reward);
    }
    normalize_advantages(&mut s.advantages);
    s
}

/// P(action > 0) for the one-dimensional Gaussian policy.
fn greedy_probability(policy: &Policy) -> f64 {
    let mean = policy.mean_action(&[0.0])[0];
    let std = policy.std()[0];
    // Standard normal CDF through the complementary error function series
    // is overkill here; a fine midpoint sum of the density suffices.
    let z = mean / std;
    let n = 20_000;
    let lo = -10.0;
    let h = (z - lo) / n as f64;
    (0..n)
        .map(|i| {
            let x = lo + (i as f64 + 0.5) * h;
            (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt() * h
        })
        .sum()
}

#[test]
fn ppo_learns_a_two_armed_bandit() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut policy = Policy::new(1, 1, 16, 0.0, &mut rng);
    let cfg = PpoConfig {
        minibatch_size: 64,
        ..PpoConfig::default()
    };
    let mut opt = PpoOptimizer::new(&policy, &cfg);
    let start = greedy_probability(&policy);
    assert!((start - 0.5).abs() < 0.1, "{start}");
    let mut reached = None;
    for update in 1..=200 {
        let samples = bandit_samples(&policy, &mut rng, 64);
        ppo_update(&mut policy, &mut opt, &samples, &cfg, &mut rng).unwrap();
        if greedy_probability(&policy) > 0.95 {
            reached = Some(update);
            break;
        }
    }
    assert!(reached.is_some(), "greedy probability {}", greedy_probability(&policy));
}

#[test]
fn zero_advantages_leave_the_actor_unchanged() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut policy = Policy::new(4, 2, 16, -0.5, &mut rng);
    let before = policy.clone();
    let mut samples = PpoSamples::default();
    for _ in 0..100 {
        let obs: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let out = policy.act(&obs, 0, &mut rng, false);
        samples.nobs.push(obs);
        samples.actions.push(out.action);
        samples.old_log_probs.push(out.log_prob);
        samples.advantages.push(0.0);
        samples.returns.push(1.0);
    }
    let cfg = PpoConfig::default();
    let mut opt = PpoOptimizer::new(&policy, &cfg);
    let stats = ppo_update(&mut policy, &mut opt, &samples, &cfg, &mut rng).unwrap();
    assert_eq!(policy.actor, before.actor);
    assert_eq!(policy.log_std, before.log_std);
    assert_ne!(policy.critic, before.critic);
    assert_eq!(stats.kl, 0.0);
    assert!(stats.policy_loss.abs() < 1e-15);
}

#[test]
fn very_large_clip_gives_the_unclipped_objective() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..1000 {
        let ratio = rng.random_range(0.0..5.0);
        let adv = rng.random_range(-3.0..3.0);
        assert_eq!(surrogate(ratio, adv, 1e12), ratio * adv);
    }
    // At ratio 1 clipping never binds whatever the width.
    assert_eq!(surrogate(1.0, -2.0, 0.2), -2.0);
    assert_eq!(surrogate(1.3, 2.0, 0.2), 1.2 * 2.0);
    assert_eq!(surrogate(0.7, -2.0, 0.2), 0.8 * -2.0);
}

#[test]
fn non_finite_update_is_rejected_without_side_effects() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut policy = Policy::new(2, 1, 8, 0.0, &mut rng);
    let before = policy.clone();
    let samples = PpoSamples {
        nobs: vec![vec![0.1, 0.2]; 4],
        actions: vec![vec![0.3]; 4],
        old_log_probs: vec![-1.0; 4],
        advantages: vec![f64::NAN, 1.0, 0.0, -1.0],
        returns: vec![0.0; 4],
    };
    let cfg = PpoConfig::default();
    let mut opt = PpoOptimizer::new(&policy, &cfg);
    let opt_before = opt.clone();
    let err = ppo_update(&mut policy, &mut opt, &samples, &cfg, &mut rng).unwrap_err();
    assert!(matches!(err, crate::error::Error::NonFinite(_)), "{err}");
    assert_eq!(policy, before);
    assert_eq!(opt, opt_before);
    assert!(ppo_update(&mut policy, &mut opt, &PpoSamples::default(), &cfg, &mut rng).is_err());
}

fn demo_replay(cfg: &EnvConfig, demo: &RobotMotion) -> ReplayActor {
    ReplayActor {
        q_arm: demo.q_arm.clone(),
        q_hand: demo.q_hand.clone(),
        action_scale: cfg.action_scale,
    }
}

#[test]
fn replaying_the_demo_always_succeeds_at_the_nominal_pose() {
    let (cfg, demo, reference) = toy_setup();
    let report = evaluate(
        &demo_replay(&cfg, &demo),
        &cfg,
        &reference,
        &RewardConfig::default(),
        &CurriculumConfig::default(),
        5,
        0.0,
        1,
    )
    .unwrap();
    assert_eq!(report.success_rate, 1.0);
    assert_eq!(report.episodes.len(), 5);
    assert!(report.episodes.iter().all(|e| e.attached && e.steps < cfg.horizon));
}

struct RandomActor(usize);

impl Actor for RandomActor {
    fn act(&self, _: &[f64], _: usize, rng: &mut ChaCha8Rng, _: bool) -> ActorOutput {
        ActorOutput {
            action: (0..self.0).map(|_| rng.random_range(-1.0..1.0)).collect(),
            log_prob: 0.0,
            value: 0.0,
        }
    }
}

#[test]
fn random_actions_almost_never_lift() {
    let (cfg, _, reference) = toy_setup();
    let report = evaluate(
        &RandomActor(cfg.action_len()),
        &cfg,
        &reference,
        &RewardConfig::default(),
        &CurriculumConfig::default(),
        50,
        1.0,
        2,
    )
    .unwrap();
    assert!(report.success_rate <= 0.04, "{}", report.success_rate);
    assert!(evaluate(&RandomActor(3), &cfg, &reference, &RewardConfig::default(), &CurriculumConfig::default(), 0, 1.0, 0).is_err());
}

fn tiny_config(seed: u64) -> TrainConfig {
    TrainConfig {
        batch_episodes: 2,
        total_steps: 480,
        pretrain_steps: 160,
        hidden: 16,
        seed,
        curriculum: CurriculumConfig {
            eval_window: 2,
            zeta: 0.0,
            ..CurriculumConfig::default()
        },
        ..TrainConfig::default()
    }
}

#[test]
fn training_is_reproducible_and_checkpoints_round_trip() {
    let (cfg, _, reference) = toy_setup();
    let rcfg = RewardConfig::default();
    let a = train(&cfg, &reference, &rcfg, &tiny_config(3)).unwrap();
    let b = train(&cfg, &reference, &rcfg, &tiny_config(3)).unwrap();
    let threaded = train(&cfg, &reference, &rcfg, &TrainConfig { jobs: 2, ..tiny_config(3) }).unwrap();
    assert_eq!(a.metrics.len(), 3);
    assert_eq!(a.steps, 480);
    assert!(a.diverged.is_none());
    let bits = |m: &[MetricRow]| m.iter().map(|r| (r.step, r.ret.to_bits(), r.sr.to_bits(), r.sigma.to_bits())).collect::<Vec<_>>();
    assert_eq!(bits(&a.metrics), bits(&b.metrics));
    assert_eq!(bits(&a.metrics), bits(&threaded.metrics));
    assert_eq!(a.policy, b.policy);
    assert!(a.policy.is_finite());
    // One curriculum round per iteration after pretraining.
    assert_eq!(a.metrics[0].sigma, 0.0);
    assert_eq!(a.curriculum.rounds, 2);
    assert!((a.curriculum.sigma - 0.01 * a.curriculum.increments as f64).abs() < 1e-12);

    let c = train(&cfg, &reference, &rcfg, &tiny_config(4)).unwrap();
    assert_ne!(bits(&a.metrics), bits(&c.metrics));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ckpt.json");
    a.checkpoint.save(&path).unwrap();
    let loaded = Checkpoint::load(&path).unwrap();
    assert_eq!(loaded.policy, a.policy);
    assert_eq!(loaded.curriculum, a.curriculum);
    assert_eq!(loaded.train, tiny_config(3));
    let (scene, reference2) = loaded.unpack().unwrap();
    assert_eq!(scene.observation_len(), cfg.observation_len());
    assert_eq!(reference2.len(), reference.len());

    let csv = dir.path().join("metrics.csv");
    write_metrics_csv(&csv, &a.metrics).unwrap();
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().next(), Some("step,return,SR,sigma"));
    assert_eq!(text.lines().count(), 4);
}

#[test]
fn direct_training_stays_at_full_noise() {
    let (cfg, _, reference) = toy_setup();
    let out = train(
        &cfg,
        &reference,
        &RewardConfig::default(),
        &TrainConfig {
            use_curriculum: false,
            ..tiny_config(1)
        },
    )
    .unwrap();
    assert!(out.metrics.iter().all(|m| m.sigma == 1.0));
}

#[test]
fn invalid_train_configs_are_listed() {
    let bad = TrainConfig {
        gamma: 0.0,
        clip_ratio: -1.0,
        batch_episodes: 0,
        ..TrainConfig::default()
    };
    let v = bad.violations();
    assert_eq!(v.len(), 3, "{v:?}");
    assert!(TrainConfig::default().validate().is_ok());
    assert!(TrainConfig { gamma: 1.0, ..TrainConfig::default() }.validate().is_ok());
}
