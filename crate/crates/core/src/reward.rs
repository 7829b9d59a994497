//! Trajectory-following, contact and height rewards.
//!
//! The trajectory term pays `r_dist(s, d_k) · (η + β·k)` only when the furthest
//! reference index `k` matched so far strictly increases, so each reference
//! state pays at most once per episode and the agent is free to reach the
//! matched states by its own route. Contact and height terms take over after
//! the pre-grasp stage: `R = R_traj + R_contact · (1 + R_height)`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format;
use crate::kinematics::{geodesic_angle, Pose};

pub const NUM_FINGERS: usize = 5;
/// Index of the thumb in every per-finger array.
pub const THUMB: usize = 0;

/// Fingertip poses expressed in the object frame, thumb first.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FingertipState {
    pub fingertips: [Pose; NUM_FINGERS],
}

impl FingertipState {
    pub fn new(fingertips: [Pose; NUM_FINGERS]) -> Self {
        FingertipState { fingertips }
    }

    /// Expresses world-frame fingertip poses relative to `object`.
    pub fn relative_to(object: &Pose, world_tips: &[Pose; NUM_FINGERS]) -> Self {
        let inv = object.inverse();
        FingertipState {
            fingertips: world_tips.map(|t| inv.compose(&t)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceTrajectory {
    states: Vec<FingertipState>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReferenceFile {
    pub version: String,
    #[serde(rename = "T")]
    pub len: usize,
    pub states: Vec<FingertipState>,
}

impl ReferenceTrajectory {
    pub fn new(states: Vec<FingertipState>) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::invalid("reference trajectory must have at least one state"));
        }
        Ok(ReferenceTrajectory { states })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn states(&self) -> &[FingertipState] {
        &self.states
    }

    pub fn get(&self, k: usize) -> Option<&FingertipState> {
        self.states.get(k)
    }

    pub fn to_file(&self) -> ReferenceFile {
        ReferenceFile {
            version: format::current_version(),
            len: self.states.len(),
            states: self.states.clone(),
        }
    }

    pub fn from_file(file: ReferenceFile) -> Result<Self> {
        format::check_version("reference", &file.version)?;
        if file.len != file.states.len() {
            return Err(Error::invalid(format!(
                "reference declares T = {} but holds {} states",
                file.len,
                file.states.len()
            )));
        }
        Self::new(file.states)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_file(format::read_json(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        format::write_json(path, &self.to_file())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig {
    /// Weight on fingertip position error, 1/m.
    pub alpha1: f64,
    /// Weight on fingertip rotation error, 1/rad.
    pub alpha2: f64,
    pub eta: f64,
    /// Progress coefficient per reference index.
    pub beta_prog: f64,
    /// Match threshold on `dist`.
    pub epsilon: f64,
    pub contact_value: f64,
    /// Height reward per meter of elevation.
    pub height_coeff: f64,
    pub success_bonus: f64,
    pub target_height: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            alpha1: 1.0,
            alpha2: 0.03,
            eta: 30.0,
            beta_prog: 0.2,
            epsilon: 0.04,
            contact_value: 0.5,
            height_coeff: 10.0,
            success_bonus: 5.0,
            target_height: 0.20,
        }
    }
}

impl RewardConfig {
    /// Every violated constraint, not just the first.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let fields = [
            ("alpha1", self.alpha1),
            ("alpha2", self.alpha2),
            ("eta", self.eta),
            ("beta_prog", self.beta_prog),
            ("epsilon", self.epsilon),
            ("contact_value", self.contact_value),
            ("height_coeff", self.height_coeff),
            ("success_bonus", self.success_bonus),
            ("target_height", self.target_height),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v >= 0.0) {
                out.push(format!("reward.{name} must be finite and non-negative, got {v}"));
            }
        }
        if !(self.epsilon > 0.0) {
            out.push(format!("reward.epsilon must be positive, got {}", self.epsilon));
        }
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

/// Furthest matched reference index; `-1` before anything has matched.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RewardState {
    pub best_k: i64,
}

impl Default for RewardState {
    fn default() -> Self {
        RewardState { best_k: -1 }
    }
}

pub fn dist(s: &FingertipState, d: &FingertipState, cfg: &RewardConfig) -> f64 {
    s.fingertips
        .iter()
        .zip(&d.fingertips)
        .map(|(a, b)| {
            cfg.alpha1 * (a.position - b.position).norm()
                + cfg.alpha2 * geodesic_angle(&a.rotation, &b.rotation)
        })
        .sum()
}

/// `1 − tanh(dist)`, evaluated as `2e^{-2x} / (1 + e^{-2x})` so large
/// distances stay strictly positive instead of cancelling to zero.
pub fn r_dist(s: &FingertipState, d: &FingertipState, cfg: &RewardConfig) -> f64 {
    let e = (-2.0 * dist(s, d, cfg)).exp();
    2.0 * e / (1.0 + e)
}

/// Largest `k` with `dist(s, d_k) < ε`, or `-1`.
pub fn k_max(s: &FingertipState, reference: &ReferenceTrajectory, cfg: &RewardConfig) -> i64 {
    reference
        .states
        .iter()
        .rposition(|d| dist(s, d, cfg) < cfg.epsilon)
        .map_or(-1, |k| k as i64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryReward {
    pub reward: f64,
    pub new_state: RewardState,
    pub k_max: i64,
}

pub fn trajectory_following_reward(
    s: &FingertipState,
    reference: &ReferenceTrajectory,
    state: RewardState,
    cfg: &RewardConfig,
) -> TrajectoryReward {
    let k = k_max(s, reference, cfg);
    if k > state.best_k {
        let d = &reference.states[k as usize];
        TrajectoryReward {
            reward: r_dist(s, d, cfg) * (cfg.eta + cfg.beta_prog * k as f64),
            new_state: RewardState { best_k: k },
            k_max: k,
        }
    } else {
        TrajectoryReward {
            reward: 0.0,
            new_state: state,
            k_max: k,
        }
    }
}

/// Thumb plus at least two other fingers in contact.
pub fn grasp_condition(contacts: &[bool; NUM_FINGERS]) -> bool {
    let others = contacts
        .iter()
        .enumerate()
        .filter(|&(i, &c)| i != THUMB && c)
        .count();
    contacts[THUMB] && others >= 2
}

pub fn contact_reward(contacts: &[bool; NUM_FINGERS], cfg: &RewardConfig) -> f64 {
    if grasp_condition(contacts) {
        cfg.contact_value
    } else {
        0.0
    }
}

pub fn height_reward(object_height: f64, table_height: f64, cfg: &RewardConfig) -> f64 {
    let lift = object_height - table_height;
    let bonus = if lift >= cfg.target_height {
        cfg.success_bonus
    } else {
        0.0
    };
    cfg.height_coeff * lift.max(0.0) + bonus
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardBreakdown {
    pub total: f64,
    pub trajectory: f64,
    pub contact: f64,
    pub height: f64,
    pub new_state: RewardState,
    pub k_max: i64,
}

#[allow(clippy::too_many_arguments)]
pub fn total_reward(
    s: &FingertipState,
    reference: &ReferenceTrajectory,
    state: RewardState,
    contacts: &[bool; NUM_FINGERS],
    object_height: f64,
    table_height: f64,
    cfg: &RewardConfig,
) -> RewardBreakdown {
    let traj = trajectory_following_reward(s, reference, state, cfg);
    let contact = contact_reward(contacts, cfg);
    let height = height_reward(object_height, table_height, cfg);
    RewardBreakdown {
        total: traj.reward + contact * (1.0 + height),
        trajectory: traj.reward,
        contact,
        height,
        new_state: traj.new_state,
        k_max: traj.k_max,
    }
}

/// State-to-state alignment at matching time indices. Used only as a
/// comparator for the trajectory-following reward.
pub fn trajectory_mapping_reward(
    s_t: &FingertipState,
    reference: &ReferenceTrajectory,
    t: usize,
    cfg: &RewardConfig,
) -> Result<f64> {
    let d = reference.get(t).ok_or_else(|| {
        Error::invalid(format!(
            "time index {t} outside reference of length {}",
            reference.len()
        ))
    })?;
    Ok(r_dist(s_t, d, cfg))
}
