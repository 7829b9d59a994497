use super::*;
use crate::kinematics::rigs;
use crate::synthetic::{human_from_robot, joint_space_motion};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::FRAC_PI_2;

const GRID_STEP: f64 = 0.001;

fn finger_tip(q1: f64, q2: f64) -> Vector3<f64> {
    Vector3::new(
        0.05 * q1.sin() + 0.04 * (q1 + q2).sin(),
        0.0,
        0.05 * q1.cos() + 0.04 * (q1 + q2).cos(),
    )
}

/// Exhaustive search of the toy finger's objective over `[lo, hi]²` at `step`.
fn grid_search(target: &Vector3<f64>, lo: [f64; 2], hi: [f64; 2], step: f64) -> ([f64; 2], f64) {
    let axis = |k: usize| -> Vec<(f64, f64, f64)> {
        let n = ((hi[k] - lo[k]) / step).floor() as usize + 1;
        (0..n)
            .map(|i| {
                let q = lo[k] + i as f64 * step;
                let (s, c) = q.sin_cos();
                (q, s, c)
            })
            .collect()
    };
    let (a1, a2) = (axis(0), axis(1));
    let mut best = ([0.0, 0.0], f64::INFINITY);
    for &(q1, s1, c1) in &a1 {
        for &(q2, s2, c2) in &a2 {
            let s12 = s1 * c2 + c1 * s2;
            let c12 = c1 * c2 - s1 * s2;
            let x = 0.05 * s1 + 0.04 * s12 - target.x;
            let y = -target.y;
            let z = 0.05 * c1 + 0.04 * c12 - target.z;
            let f = x * x + y * y + z * z;
            if f < best.1 {
                best = ([q1, q2], f);
            }
        }
    }
    best
}

/// Grid search over the whole joint box at `GRID_STEP`.
fn grid_oracle(target: &Vector3<f64>) -> ([f64; 2], f64) {
    grid_search(target, [0.0, 0.0], [FRAC_PI_2, FRAC_PI_2], GRID_STEP)
}

/// The coarse grid argmin can sit several cells from the minimizer along a
/// flat valley, so the basin it finds is searched again on a much finer grid.
fn refined_grid_oracle(target: &Vector3<f64>) -> ([f64; 2], f64) {
    let (coarse, _) = grid_oracle(target);
    let lo = coarse.map(|q| (q - 0.02).max(0.0));
    let hi = coarse.map(|q| (q + 0.02).min(FRAC_PI_2));
    grid_search(target, lo, hi, 2e-5)
}

fn params(beta: f64) -> RetargetParams {
    RetargetParams {
        beta_smooth: beta,
        ..RetargetParams::default()
    }
}

fn full_rig() -> Rig {
    Rig::new(rigs::xarm7_like(), rigs::ability_hand_like()).unwrap()
}

fn tip_positions(chain: &crate::kinematics::KinematicChain, q: &[f64]) -> Vec<Vector3<f64>> {
    let poses = chain.frame_poses(q).unwrap();
    chain.fingertip_frames().iter().map(|&f| poses[f].position).collect()
}

#[test]
fn fk_targets_are_a_fixed_point() {
    let hand = rigs::ability_hand_like();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for beta in [0.0, 1e-3, 1.0] {
        let q: Vec<f64> = (0..10).map(|_| rng.random_range(0.0..1.6)).collect();
        let q = hand.clamp(&q);
        let targets = tip_positions(&hand, q.as_slice());
        let sol = retarget_frame(&hand, &targets, &q, &params(beta)).unwrap();
        assert_eq!(sol.q, q);
        assert!(sol.residual < 1e-30);
    }
}

#[test]
fn toy_finger_matches_grid_oracle() {
    let finger = rigs::toy_finger();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..50 {
        let q_true = [rng.random_range(0.1..1.47), rng.random_range(0.1..1.47)];
        let target = finger_tip(q_true[0], q_true[1]);
        let (_, f_coarse) = grid_oracle(&target);
        let (q_grid, _) = refined_grid_oracle(&target);
        let sol = retarget_frame(&finger, &[target], &finger.mid_range(), &params(0.0)).unwrap();
        assert!(sol.residual <= f_coarse);
        for k in 0..2 {
            assert!(
                (sol.q.0[k] - q_grid[k]).abs() <= GRID_STEP + 1e-9,
                "target {target:?}: {:?} vs grid {q_grid:?}",
                sol.q.0
            );
        }
    }
}

#[test]
fn unreachable_target_pins_to_boundary() {
    let finger = rigs::toy_finger();
    let target = Vector3::new(10.0, 10.0, 10.0);
    let (q_grid, f_grid) = grid_oracle(&target);
    let sol = retarget_frame(&finger, &[target], &finger.mid_range(), &params(0.0)).unwrap();
    // Straight finger pointing along the target's xz direction.
    assert_eq!(q_grid[1], 0.0);
    assert!(sol.q.0[1] < 1e-6, "{:?}", sol.q.0);
    assert!((sol.q.0[0] - q_grid[0]).abs() <= GRID_STEP);
    assert!(sol.residual > 0.0);
    assert!(sol.residual <= f_grid + 1e-9);
}

#[test]
fn rejects_bad_inputs() {
    let finger = rigs::toy_finger();
    let nan = Vector3::new(f64::NAN, 0.0, 0.0);
    assert!(matches!(
        retarget_frame(&finger, &[nan], &finger.mid_range(), &params(0.0)),
        Err(Error::InvalidArgument(_))
    ));
    let outside = JointState(vec![-1.0, 0.0]);
    assert!(retarget_frame(&finger, &[Vector3::zeros()], &outside, &params(0.0)).is_err());
    assert!(retarget_frame(&finger, &[Vector3::zeros(); 2], &finger.mid_range(), &params(0.0)).is_err());
    assert!(params(-1.0).validate().is_err());
    let bad_scale = RetargetParams {
        fingertip_scale: 0.0,
        ..RetargetParams::default()
    };
    assert!(bad_scale.validate().is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn never_worsens_warm_start(
        seed in any::<u64>(),
        beta in 0.0f64..1.0,
    ) {
        let hand = rigs::ability_hand_like();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lo = hand.lower_limits();
        let hi = hand.upper_limits();
        let q_prev = JointState((0..10).map(|i| rng.random_range(lo[i]..=hi[i])).collect());
        let targets: Vec<Vector3<f64>> = (0..5)
            .map(|_| Vector3::new(rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1), rng.random_range(0.0..0.2)))
            .collect();
        let sol = retarget_frame(&hand, &targets, &q_prev, &params(beta)).unwrap();
        let before = retarget_objective(&hand, &targets, &q_prev, beta, &q_prev).unwrap();
        let after = retarget_objective(&hand, &targets, &q_prev, beta, &sol.q).unwrap();
        prop_assert!(after <= before);
        prop_assert!((after - sol.residual).abs() <= 1e-12 * (1.0 + after));
        prop_assert!(hand.within_limits(sol.q.as_slice()));
    }

    #[test]
    fn larger_beta_stays_closer(
        q1 in 0.0f64..FRAC_PI_2,
        q2 in 0.0f64..FRAC_PI_2,
        p1 in 0.0f64..FRAC_PI_2,
        p2 in 0.0f64..FRAC_PI_2,
        beta1 in 0.0f64..0.01,
        ratio in 1.0f64..100.0,
    ) {
        let finger = rigs::toy_finger();
        let target = finger_tip(q1, q2);
        let q_prev = JointState(vec![p1, p2]);
        let beta2 = beta1 * ratio + 1e-6;
        let a = retarget_frame(&finger, &[target], &q_prev, &params(beta1)).unwrap();
        let b = retarget_frame(&finger, &[target], &q_prev, &params(beta2)).unwrap();
        let dist = |q: &JointState| q.0.iter().zip(&q_prev.0).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        prop_assert!(dist(&b.q) <= dist(&a.q) + 1e-6, "{} > {}", dist(&b.q), dist(&a.q));
    }
}

#[test]
fn single_frame_at_mid_range_is_fixed() {
    let rig = full_rig();
    let q_arm = rig.arm.home();
    let mid = rig.hand.mid_range();
    let poses = rig.poses(q_arm.as_slice(), mid.as_slice()).unwrap();
    let frame = HumanFrame {
        fingertips: poses.fingertips.map(|p| p.position),
        wrist: poses.hand_root,
        object: Pose::from_translation(0.5, 0.0, 0.1),
        time: 0.0,
    };
    let traj = retarget_trajectory(&rig, &[frame], 0.05, &RetargetParams::default()).unwrap();
    assert_eq!(traj.len(), 1);
    for (a, b) in traj.frames[0].q_hand.0.iter().zip(&mid.0) {
        assert!((a - b).abs() < 1e-12);
    }
    assert_eq!(traj.frames[0].object, frame.object);
}

#[test]
fn constant_trajectory_gives_identical_frames() {
    let rig = full_rig();
    let q_hand = rig.hand.clamp(&[0.3, 0.8, 0.4, 0.9, 0.5, 1.0, 0.3, 0.7, 0.2, 0.6]);
    let q_arm = JointState(vec![0.2, 0.4, 0.0, 1.1, 0.1, 1.0, 0.0]);
    let poses = rig.poses(q_arm.as_slice(), q_hand.as_slice()).unwrap();
    let human: Vec<HumanFrame> = (0..10)
        .map(|i| HumanFrame {
            fingertips: poses.fingertips.map(|p| p.position),
            wrist: poses.hand_root,
            object: Pose::identity(),
            time: i as f64 * 0.1,
        })
        .collect();
    let traj = retarget_trajectory(&rig, &human, 0.1, &RetargetParams::default()).unwrap();
    for f in &traj.frames[1..] {
        for (a, b) in f.q_hand.0.iter().zip(&traj.frames[0].q_hand.0) {
            assert!((a - b).abs() < 1e-9);
        }
        for (a, b) in f.q_arm.0.iter().zip(&traj.frames[0].q_arm.0) {
            assert!((a - b).abs() < 1e-9);
        }
    }
}

fn random_reach(seed: u64, rig: &Rig) -> crate::synthetic::RobotMotion {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let home = rig.arm.home();
    let mut waypoints = vec![(home.clone(), rig.hand.mid_range())];
    for _ in 0..3 {
        let arm = JointState(home.0.iter().map(|q| q + rng.random_range(-0.4..0.4)).collect());
        let hand: Vec<f64> = (0..10).map(|_| rng.random_range(0.0..1.6)).collect();
        waypoints.push((rig.arm.clamp(arm.as_slice()), rig.hand.clamp(&hand)));
    }
    joint_space_motion(&waypoints, 15, Pose::from_translation(0.5, 0.0, 0.1), 0.05).unwrap()
}

#[test]
fn synthetic_reach_is_recovered() {
    let rig = full_rig();
    let motion = random_reach(5, &rig);
    let human = human_from_robot(&rig, &motion).unwrap();
    let traj = retarget_trajectory(&rig, &human, motion.dt, &RetargetParams::default()).unwrap();
    traj.validate_against(&rig).unwrap();
    let mut errors: Vec<f64> = traj
        .frames
        .iter()
        .zip(&human)
        .map(|(f, h)| {
            let p = rig.poses(f.q_arm.as_slice(), f.q_hand.as_slice()).unwrap();
            p.fingertips.iter().zip(&h.fingertips).map(|(a, b)| (a.position - b).norm()).sum()
        })
        .collect();
    errors.sort_by(f64::total_cmp);
    let median = errors[errors.len() / 2];
    assert!(median < 0.02, "median total fingertip error {median}");
    assert!(!traj.report.as_ref().unwrap().degraded);
}

#[test]
fn frame_errors_carry_the_index() {
    let rig = full_rig();
    let motion = random_reach(6, &rig);
    let mut human = human_from_robot(&rig, &motion).unwrap();
    human[3].fingertips[1].x = f64::NAN;
    match retarget_trajectory(&rig, &human, 0.05, &RetargetParams::default()) {
        Err(Error::AtFrame { index, .. }) => assert_eq!(index, 3),
        other => panic!("expected frame error, got {other:?}"),
    }
    assert!(retarget_trajectory(&rig, &[], 0.05, &RetargetParams::default()).is_err());
    let mut swapped = human_from_robot(&rig, &motion).unwrap();
    swapped[2].time = swapped[1].time;
    assert!(retarget_trajectory(&rig, &swapped, 0.05, &RetargetParams::default()).is_err());
}

#[test]
fn unreachable_wrist_marks_result_degraded() {
    let rig = full_rig();
    let motion = random_reach(7, &rig);
    let mut human = human_from_robot(&rig, &motion).unwrap();
    for h in human.iter_mut().skip(20) {
        h.wrist.position += Vector3::new(5.0, 0.0, 0.0);
    }
    let params = RetargetParams {
        clik: ClikParams {
            max_iters: 50,
            ..ClikParams::default()
        },
        ..RetargetParams::default()
    };
    let traj = retarget_trajectory(&rig, &human, 0.05, &params).unwrap();
    let report = traj.report.unwrap();
    assert!(report.degraded);
    assert!(report.clik_failures >= human.len() - 20);
}

fn quintic_trajectory(rig: &Rig, n: usize) -> RobotTrajectory {
    let frames = (0..n)
        .map(|k| {
            let t = k as f64 / n as f64;
            let p = |a: f64, b: f64| a + b * (t - 0.5 * t * t + 0.8 * t.powi(3) - 0.9 * t.powi(4) + 0.4 * t.powi(5));
            RobotFrame {
                q_arm: JointState((0..7).map(|j| p(rig.arm.home().0[j], 0.2)).collect()),
                q_hand: JointState((0..10).map(|j| p(0.05 * j as f64, 0.5)).collect()),
                object: Pose::identity(),
            }
        })
        .collect();
    RobotTrajectory {
        dt: 0.05,
        frames,
        report: None,
    }
}

fn jerk(traj: &RobotTrajectory) -> f64 {
    let mut total = 0.0;
    for w in traj.frames.windows(4) {
        for j in 0..w[0].q_hand.len() {
            let d3 = w[3].q_hand.0[j] - 3.0 * w[2].q_hand.0[j] + 3.0 * w[1].q_hand.0[j] - w[0].q_hand.0[j];
            total += d3 * d3;
        }
        for j in 0..w[0].q_arm.len() {
            let d3 = w[3].q_arm.0[j] - 3.0 * w[2].q_arm.0[j] + 3.0 * w[1].q_arm.0[j] - w[0].q_arm.0[j];
            total += d3 * d3;
        }
    }
    total
}

fn max_diff(a: &RobotTrajectory, b: &RobotTrajectory) -> f64 {
    a.frames
        .iter()
        .zip(&b.frames)
        .flat_map(|(x, y)| {
            x.q_arm
                .0
                .iter()
                .zip(&y.q_arm.0)
                .chain(x.q_hand.0.iter().zip(&y.q_hand.0))
                .map(|(p, q)| (p - q).abs())
                .collect::<Vec<_>>()
        })
        .fold(0.0, f64::max)
}

#[test]
fn smoothing_keeps_constants_and_quintics() {
    let rig = full_rig();
    let mut constant = quintic_trajectory(&rig, 20);
    for f in constant.frames.iter_mut() {
        *f = RobotFrame {
            q_arm: rig.arm.home(),
            q_hand: rig.hand.mid_range(),
            object: Pose::identity(),
        };
    }
    let out = min_jerk_smooth(&constant, 9, &rig).unwrap();
    assert!(max_diff(&out, &constant) < 1e-12);

    let quintic = quintic_trajectory(&rig, 40);
    for window in [3, 5, 7, 9, 11, 15] {
        let once = min_jerk_smooth(&quintic, window, &rig).unwrap();
        assert_eq!(once.len(), quintic.len());
        assert!(max_diff(&once, &quintic) < 1e-9, "window {window}");
        let twice = min_jerk_smooth(&once, window, &rig).unwrap();
        assert!(max_diff(&twice, &once) < 1e-9);
    }
}

#[test]
fn smoothing_reduces_jerk_of_noisy_ramps() {
    let rig = full_rig();
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(12..60);
        let frames = (0..n)
            .map(|k| {
                let t = k as f64 / n as f64;
                let mut noise = |base: f64| base + 0.4 * t + rng.random_range(-0.02..0.02);
                RobotFrame {
                    q_arm: JointState((0..7).map(|j| noise(rig.arm.home().0[j])).collect()),
                    q_hand: JointState((0..10).map(|_| noise(0.5)).collect()),
                    object: Pose::identity(),
                }
            })
            .collect();
        let traj = RobotTrajectory {
            dt: 0.05,
            frames,
            report: None,
        };
        let smoothed = min_jerk_smooth(&traj, 9, &rig).unwrap();
        assert!(jerk(&smoothed) < jerk(&traj), "seed {seed}");
        smoothed.validate_against(&rig).unwrap();
    }
}

#[test]
fn smoothing_reclamps_and_validates_window() {
    let rig = full_rig();
    let mut traj = quintic_trajectory(&rig, 12);
    // A spike at the lower limit overshoots below it after fitting.
    for (k, f) in traj.frames.iter_mut().enumerate() {
        f.q_hand.0[0] = if k == 6 { 0.0 } else { 1.0 };
    }
    let out = min_jerk_smooth(&traj, 5, &rig).unwrap();
    out.validate_against(&rig).unwrap();
    for w in [0, 1, 2, 4, 13] {
        assert!(matches!(min_jerk_smooth(&traj, w, &rig), Err(Error::InvalidArgument(_))));
    }
}

#[test]
fn files_round_trip() {
    let rig = full_rig();
    let motion = random_reach(8, &rig);
    let human = human_from_robot(&rig, &motion).unwrap();
    let dir = tempfile::tempdir().unwrap();

    let hp = dir.path().join("human.json");
    format::write_json(&hp, &HumanTrajectoryFile::from_frames(0.05, &human)).unwrap();
    let (dt, back) = HumanTrajectoryFile::load(&hp).unwrap();
    assert_eq!(dt, 0.05);
    assert_eq!(back.len(), human.len());
    for (a, b) in back.iter().zip(&human) {
        assert_eq!(a.fingertips, b.fingertips);
        assert!((a.wrist.position - b.wrist.position).norm() < 1e-15);
    }

    let traj = retarget_trajectory(&rig, &human[..5], 0.05, &RetargetParams::default()).unwrap();
    let rp = dir.path().join("robot.json");
    traj.save(&rp).unwrap();
    let loaded = RobotTrajectory::load(&rp).unwrap();
    assert_eq!(loaded.frames.len(), 5);
    assert_eq!(loaded.frames[4].q_hand, traj.frames[4].q_hand);

    let mut file = traj.to_file();
    file.version = "2.0".into();
    assert!(matches!(RobotTrajectory::from_file(file), Err(Error::Version { .. })));
}

#[test]
fn reference_states_are_object_relative() {
    let rig = full_rig();
    let motion = random_reach(9, &rig);
    let human = human_from_robot(&rig, &motion).unwrap();
    let traj = retarget_trajectory(&rig, &human, 0.05, &RetargetParams::default()).unwrap();
    let reference = make_reference(&rig, &traj).unwrap();
    assert_eq!(reference.len(), traj.len());
    let f = &traj.frames[10];
    let tips = rig.poses(f.q_arm.as_slice(), f.q_hand.as_slice()).unwrap().fingertips;
    let rel = reference.get(10).unwrap().fingertips[0];
    let world = f.object.compose(&rel);
    assert!((world.position - tips[0].position).norm() < 1e-12);
}
