//! Scripted demonstrations with known ground-truth joints.
//!
//! A robot motion is scripted in joint space (or through IK on wrist
//! waypoints), and the "human" trajectory is read back by forward kinematics:
//! the wrist is the mount frame and the fingertips are the robot fingertips.

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::graspenv::EnvConfig;
use crate::kinematics::{clik_solve, ClikParams, JointState, Pose, Rig};
use crate::retarget::{HumanFrame, RobotFrame, RobotTrajectory};

#[derive(Debug, Clone, PartialEq)]
pub struct RobotMotion {
    pub dt: f64,
    pub q_arm: Vec<JointState>,
    pub q_hand: Vec<JointState>,
    pub object: Vec<Pose>,
}

impl RobotMotion {
    pub fn len(&self) -> usize {
        self.q_arm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q_arm.is_empty()
    }

    pub fn to_trajectory(&self) -> RobotTrajectory {
        RobotTrajectory {
            dt: self.dt,
            frames: (0..self.len())
                .map(|k| RobotFrame {
                    q_hand: self.q_hand[k].clone(),
                    q_arm: self.q_arm[k].clone(),
                    object: self.object[k],
                })
                .collect(),
            report: None,
        }
    }

    /// Largest per-step change of any joint.
    pub fn max_joint_step(&self) -> f64 {
        let step = |qs: &[JointState]| {
            qs.windows(2)
                .flat_map(|w| w[0].0.iter().zip(&w[1].0).map(|(a, b)| (a - b).abs()))
                .fold(0.0, f64::max)
        };
        step(&self.q_arm).max(step(&self.q_hand))
    }
}

/// Smooth 0→1 time scaling with zero velocity and acceleration at both ends.
pub fn min_jerk_profile(tau: f64) -> f64 {
    let t = tau.clamp(0.0, 1.0);
    t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)
}

fn lerp(a: &JointState, b: &JointState, s: f64) -> JointState {
    JointState(a.0.iter().zip(&b.0).map(|(x, y)| x + s * (y - x)).collect())
}

fn interpolate_pose(a: &Pose, b: &Pose, s: f64) -> Pose {
    Pose::new(
        a.position + s * (b.position - a.position),
        a.rotation.slerp(&b.rotation, s),
    )
}

/// Joint-space motion through `waypoints` (arm, hand) with `frames_per_segment`
/// samples per segment and a fixed object.
pub fn joint_space_motion(
    waypoints: &[(JointState, JointState)],
    frames_per_segment: usize,
    object: Pose,
    dt: f64,
) -> Result<RobotMotion> {
    if waypoints.len() < 2 || frames_per_segment == 0 {
        return Err(Error::invalid("need at least two waypoints and one frame per segment"));
    }
    let mut motion = RobotMotion {
        dt,
        q_arm: vec![waypoints[0].0.clone()],
        q_hand: vec![waypoints[0].1.clone()],
        object: vec![object],
    };
    for w in waypoints.windows(2) {
        for i in 1..=frames_per_segment {
            let s = min_jerk_profile(i as f64 / frames_per_segment as f64);
            motion.q_arm.push(lerp(&w[0].0, &w[1].0, s));
            motion.q_hand.push(lerp(&w[0].1, &w[1].1, s));
            motion.object.push(object);
        }
    }
    Ok(motion)
}

/// Wrist waypoints and frame counts of a scripted reach, close and lift.
#[derive(Debug, Clone)]
pub struct GraspScript {
    /// World wrist pose above or in front of the object.
    pub pre_grasp: Pose,
    /// World wrist pose at which the hand closes.
    pub grasp: Pose,
    pub hand_open: JointState,
    pub hand_closed: JointState,
    /// Vertical wrist displacement during the lift, m.
    pub lift_height: f64,
    pub approach_frames: usize,
    pub descend_frames: usize,
    pub close_frames: usize,
    pub hold_frames: usize,
    pub lift_frames: usize,
    pub dt: f64,
}

/// Runs `script` on `rig` starting from the arm home configuration. The
/// object stays put until the hand has closed and then moves rigidly with the
/// wrist.
pub fn scripted_grasp(rig: &Rig, script: &GraspScript, object: Pose) -> Result<RobotMotion> {
    let mount = rig.mount_frame().to_string();
    let clik = ClikParams {
        max_iters: 2000,
        ..ClikParams::default()
    };
    let mut q_arm = rig.arm.home();
    let start = rig.hand_root(q_arm.as_slice())?;
    let mut motion = RobotMotion {
        dt: script.dt,
        q_arm: Vec::new(),
        q_hand: Vec::new(),
        object: Vec::new(),
    };
    let push = |motion: &mut RobotMotion, q_arm: &JointState, q_hand: &JointState, obj: Pose| {
        motion.q_arm.push(q_arm.clone());
        motion.q_hand.push(q_hand.clone());
        motion.object.push(obj);
    };
    push(&mut motion, &q_arm, &script.hand_open, object);

    let track = |motion: &mut RobotMotion, q_arm: &mut JointState, from: Pose, to: Pose, n: usize| -> Result<()> {
        for i in 1..=n {
            let s = min_jerk_profile(i as f64 / n as f64);
            let target = interpolate_pose(&from, &to, s);
            let sol = clik_solve(&rig.arm, &target, &mount, q_arm, &clik)?;
            *q_arm = sol.q;
            push(motion, q_arm, &script.hand_open, object);
        }
        Ok(())
    };
    track(&mut motion, &mut q_arm, start, script.pre_grasp, script.approach_frames)?;
    track(&mut motion, &mut q_arm, script.pre_grasp, script.grasp, script.descend_frames)?;

    for i in 1..=script.close_frames {
        let s = min_jerk_profile(i as f64 / script.close_frames as f64);
        let q_hand = lerp(&script.hand_open, &script.hand_closed, s);
        motion.q_arm.push(q_arm.clone());
        motion.q_hand.push(q_hand);
        motion.object.push(object);
    }
    for _ in 0..script.hold_frames {
        motion.q_arm.push(q_arm.clone());
        motion.q_hand.push(script.hand_closed.clone());
        motion.object.push(object);
    }

    let grasp_wrist = rig.hand_root(q_arm.as_slice())?;
    let offset = grasp_wrist.inverse().compose(&object);
    let lifted = Pose::new(
        grasp_wrist.position + Vector3::new(0.0, 0.0, script.lift_height),
        grasp_wrist.rotation,
    );
    for i in 1..=script.lift_frames {
        let s = min_jerk_profile(i as f64 / script.lift_frames as f64);
        let target = interpolate_pose(&grasp_wrist, &lifted, s);
        let sol = clik_solve(&rig.arm, &target, &mount, &q_arm, &clik)?;
        q_arm = sol.q;
        let wrist = rig.hand_root(q_arm.as_slice())?;
        motion.q_arm.push(q_arm.clone());
        motion.q_hand.push(script.hand_closed.clone());
        motion.object.push(wrist.compose(&offset));
    }
    Ok(motion)
}

/// Demonstration for the toy gantry scene: one straight reach from home to
/// the grasp pose, where the prongs ring the upper part of the cylinder, then
/// a lift.
pub fn toy_demo(cfg: &EnvConfig) -> Result<RobotMotion> {
    let object = cfg.object.init_pose;
    let top = object.position.z + 0.06;
    // Prongs hang 0.12 m below the mount; stop them 2 cm below the top.
    let grasp_z = top - 0.02 + 0.12;
    let grasp = Pose::from_translation(object.position.x, object.position.y, grasp_z);
    let script = GraspScript {
        pre_grasp: grasp,
        grasp,
        hand_open: cfg.rig.hand.home(),
        hand_closed: cfg.rig.hand.home(),
        lift_height: 0.28,
        approach_frames: 22,
        descend_frames: 0,
        close_frames: 0,
        hold_frames: 3,
        lift_frames: 28,
        dt: 0.05,
    };
    scripted_grasp(&cfg.rig, &script, object)
}

/// Reads a "human" trajectory off a robot motion by forward kinematics.
pub fn human_from_robot(rig: &Rig, motion: &RobotMotion) -> Result<Vec<HumanFrame>> {
    if motion.q_hand.len() != motion.len() || motion.object.len() != motion.len() {
        return Err(Error::invalid("robot motion fields differ in length"));
    }
    (0..motion.len())
        .map(|k| {
            let poses = rig
                .poses(motion.q_arm[k].as_slice(), motion.q_hand[k].as_slice())
                .map_err(|e| e.at_frame(k))?;
            Ok(HumanFrame {
                fingertips: poses.fingertips.map(|p| p.position),
                wrist: poses.hand_root,
                object: motion.object[k],
                time: k as f64 * motion.dt,
            })
        })
        .collect()
}
