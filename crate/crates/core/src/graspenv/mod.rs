//! Quasi-static grasp environment.
//!
//! There is no physics: joints move by clamped delta targets, a fingertip is
//! in contact when its signed distance to the object is within δ (so
//! penetration counts), and the object stays put until the grasp condition
//! (thumb plus two fingers) holds on two consecutive steps. From then on it is
//! rigidly attached to the palm for the rest of the episode.
//!
//! "Object height" is the lowest point of the primitive, so an object resting
//! on the table has height `table_height` whatever its shape or orientation.

mod geometry;
mod scene;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{rigs, JointState, Pose, Rig, RigPoses};
use crate::reward::{
    grasp_condition, total_reward, FingertipState, ReferenceTrajectory, RewardBreakdown, RewardConfig,
    RewardState, NUM_FINGERS,
};

pub use geometry::{signed_distance, Primitive, PrimitiveKind};
pub use scene::{
    ChainsRecord, EnvConfig, ObjectRecord, ObjectSpec, SceneFile, TableBounds, DEFAULT_ACTION_SCALE,
    DEFAULT_CONTACT_TOLERANCE, DEFAULT_HORIZON, DEFAULT_TARGET_HEIGHT,
};

/// Consecutive grasp-condition steps needed to attach.
/// Bisection steps locating where a held object meets the table.
const TABLE_CONTACT_BISECTIONS: usize = 40;

pub const ATTACH_STEPS: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    pub q_arm: JointState,
    pub q_hand: JointState,
    pub object_pose: Pose,
    pub attached: bool,
    /// `palm⁻¹ ∘ object`, captured at attach time.
    pub grasp_offset: Option<Pose>,
    pub step_index: usize,
    pub reward_state: RewardState,
    /// Consecutive steps on which the grasp condition has held.
    pub grasp_streak: usize,
    pub done: bool,
    /// The object has reached the target height at some step.
    pub succeeded: bool,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    pub success: bool,
    pub contacts: [bool; NUM_FINGERS],
    pub k_max: i64,
    pub attached: bool,
    /// Lowest point of the object minus the table height, m.
    pub lift: f64,
    pub reward: RewardBreakdown,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub obs: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

/// Object lift above the table for the current state.
pub fn lift(cfg: &EnvConfig, object_pose: &Pose) -> f64 {
    cfg.object.primitive.lowest_point(object_pose) - cfg.table_height
}

pub fn contacts(cfg: &EnvConfig, poses: &RigPoses, object_pose: &Pose) -> [bool; NUM_FINGERS] {
    poses.fingertips.map(|tip| {
        signed_distance(&tip.position, &cfg.object.primitive, object_pose) <= cfg.contact_tolerance
    })
}

pub fn rig_poses(rig: &Rig, state: &EnvState) -> Result<RigPoses> {
    rig.poses(state.q_arm.as_slice(), state.q_hand.as_slice())
}

/// Joints, world-aligned fingertip offsets from the object, object pose and
/// normalized progress `best_k / T`.
pub fn observe(state: &EnvState, poses: &RigPoses, reference_len: usize) -> Vec<f64> {
    let mut obs = Vec::with_capacity(state.q_arm.len() + state.q_hand.len() + 23);
    obs.extend_from_slice(state.q_arm.as_slice());
    obs.extend_from_slice(state.q_hand.as_slice());
    let center = state.object_pose.position;
    for tip in &poses.fingertips {
        obs.extend((tip.position - center).iter());
    }
    obs.extend(center.iter());
    obs.extend(state.object_pose.wxyz());
    obs.push(state.reward_state.best_k as f64 / reference_len as f64);
    obs
}

/// Starts an episode with the joints at home and the object at `object_pose`.
/// The environment itself is deterministic; `seed` is recorded in the state.
pub fn reset(
    cfg: &EnvConfig,
    object_pose: Pose,
    seed: u64,
    reference: &ReferenceTrajectory,
) -> Result<(EnvState, Vec<f64>)> {
    if !object_pose.is_finite() {
        return Err(Error::invalid("object pose is not finite"));
    }
    let p = object_pose.position;
    if !cfg.table_bounds.contains(p.x, p.y) {
        return Err(Error::invalid(format!(
            "object position ({:.3}, {:.3}) is off the table",
            p.x, p.y
        )));
    }
    if lift(cfg, &object_pose) < -1e-9 {
        return Err(Error::invalid("object pose penetrates the table"));
    }
    let state = EnvState {
        q_arm: cfg.rig.arm.home(),
        q_hand: cfg.rig.hand.home(),
        object_pose,
        attached: false,
        grasp_offset: None,
        step_index: 0,
        reward_state: RewardState::default(),
        grasp_streak: 0,
        done: false,
        succeeded: false,
        seed,
    };
    let poses = rig_poses(&cfg.rig, &state)?;
    let obs = observe(&state, &poses, reference.len());
    Ok((state, obs))
}

/// Advances one step. `action` holds arm then hand components; each is
/// clamped to `[-1, 1]` and scaled by `action_scale`. The success bonus uses
/// the environment's target height.
pub fn step(
    cfg: &EnvConfig,
    state: &mut EnvState,
    action: &[f64],
    reference: &ReferenceTrajectory,
    reward_cfg: &RewardConfig,
) -> Result<StepOutcome> {
    if state.done || state.step_index >= cfg.horizon {
        return Err(Error::InvalidState("episode is done; call reset".into()));
    }
    let n_arm = cfg.rig.arm.dof();
    if action.len() != cfg.action_len() {
        return Err(Error::invalid(format!(
            "action has {} components, expected {}",
            action.len(),
            cfg.action_len()
        )));
    }
    if action.iter().any(|a| !a.is_finite()) {
        return Err(Error::NonFinite("action".into()));
    }

    let mut next = state.clone();
    for (q, a) in next.q_arm.0.iter_mut().zip(&action[..n_arm]) {
        *q += cfg.action_scale * a.clamp(-1.0, 1.0);
    }
    for (q, a) in next.q_hand.0.iter_mut().zip(&action[n_arm..]) {
        *q += cfg.action_scale * a.clamp(-1.0, 1.0);
    }
    cfg.rig.arm.clamp_in_place(&mut next.q_arm.0);
    cfg.rig.hand.clamp_in_place(&mut next.q_hand.0);
    next.step_index += 1;

    let mut poses = rig_poses(&cfg.rig, &next)?;
    if let Some(offset) = next.grasp_offset {
        next.object_pose = poses.palm.compose(&offset);
        let floor = lift(cfg, &state.object_pose).min(0.0);
        if lift(cfg, &next.object_pose) < floor {
            // The table carries a held object: arm joints advance one at a
            // time, each stopping where the object would meet the table.
            let target = next.q_arm.clone();
            let held = |q: &JointState| -> Result<f64> {
                let palm = cfg.rig.poses(q.as_slice(), next.q_hand.as_slice())?.palm;
                Ok(lift(cfg, &palm.compose(&offset)))
            };
            let mut q = state.q_arm.clone();
            for j in 0..q.0.len() {
                let start = q.0[j];
                q.0[j] = target.0[j];
                if held(&q)? >= floor {
                    continue;
                }
                let (mut lo, mut hi) = (0.0, 1.0);
                for _ in 0..TABLE_CONTACT_BISECTIONS {
                    let mid = 0.5 * (lo + hi);
                    q.0[j] = start + mid * (target.0[j] - start);
                    if held(&q)? >= floor {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                q.0[j] = start + lo * (target.0[j] - start);
            }
            next.q_arm = q;
            poses = rig_poses(&cfg.rig, &next)?;
            next.object_pose = poses.palm.compose(&offset);
        }
    }
    let touching = contacts(cfg, &poses, &next.object_pose);
    if grasp_condition(&touching) {
        next.grasp_streak += 1;
    } else {
        next.grasp_streak = 0;
    }
    if !next.attached && next.grasp_streak >= ATTACH_STEPS {
        next.attached = true;
        next.grasp_offset = Some(poses.palm.inverse().compose(&next.object_pose));
    }

    let rcfg = RewardConfig {
        target_height: cfg.target_height,
        ..*reward_cfg
    };
    let s = FingertipState::relative_to(&next.object_pose, &poses.fingertips);
    let lifted = lift(cfg, &next.object_pose);
    let breakdown = total_reward(
        &s,
        reference,
        next.reward_state,
        &touching,
        lifted + cfg.table_height,
        cfg.table_height,
        &rcfg,
    );
    if !breakdown.total.is_finite() {
        return Err(Error::NonFinite(format!("reward at step {}", next.step_index)));
    }
    next.reward_state = breakdown.new_state;

    let success = lifted >= cfg.target_height;
    next.succeeded |= success;
    next.done = (success && cfg.terminate_on_success) || next.step_index >= cfg.horizon;
    let obs = observe(&next, &poses, reference.len());
    *state = next;
    Ok(StepOutcome {
        obs,
        reward: breakdown.total,
        done: state.done,
        info: StepInfo {
            success,
            contacts: touching,
            k_max: breakdown.k_max,
            attached: state.attached,
            lift: lifted,
            reward: breakdown,
        },
    })
}

/// Radius of the toy claw's fingertip ring, m.
pub const TOY_CLAW_RADIUS: f64 = 0.03;

/// Gantry arm with a rigid claw and an upright cylinder: the desk-scale
/// reach-and-lift scene.
pub fn toy_scene() -> EnvConfig {
    let rig = Rig::new(rigs::toy_gantry_arm(), rigs::toy_claw_hand(TOY_CLAW_RADIUS)).expect("toy rig");
    let object = ObjectSpec {
        name: "toy-cylinder".into(),
        primitive: Primitive::Cylinder {
            radius: 0.03,
            height: 0.12,
        },
        init_pose: Pose::new(Vector3::new(0.45, 0.0, 0.06), Default::default()),
    };
    EnvConfig {
        action_scale: 0.02,
        table_bounds: TableBounds {
            min: [0.2, -0.3],
            max: [0.7, 0.3],
        },
        ..EnvConfig::new("toy-reach-lift", rig, object)
    }
}
