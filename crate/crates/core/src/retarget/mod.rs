//! Human fingertip trajectories to robot arm + hand joint trajectories.
//!
//! Each human frame is handled in two steps: the five fingertip positions,
//! re-expressed in the wrist frame, are fitted by the hand joints under joint
//! limits and a smoothness penalty toward the previous solution; the arm then
//! follows the human wrist pose through closed-loop IK on the mount frame.

mod optimize;
mod smooth;

use std::path::Path;

use log::warn;
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format;
use crate::kinematics::{clik_solve, ClikParams, JointState, Pose, Rig};
use crate::reward::{FingertipState, ReferenceTrajectory, NUM_FINGERS};

pub use optimize::{retarget_frame, retarget_objective, FrameSolution};
pub use smooth::min_jerk_smooth;

/// Fraction of frames with unconverged arm IK above which a result is flagged.
pub const DEGRADED_CLIK_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HumanFrame {
    /// World positions, thumb first.
    pub fingertips: [Vector3<f64>; NUM_FINGERS],
    pub wrist: Pose,
    pub object: Pose,
    pub time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetargetParams {
    pub beta_smooth: f64,
    pub max_iters: usize,
    pub step_tol: f64,
    /// Scales human fingertip offsets about the wrist.
    pub fingertip_scale: f64,
    pub clik: ClikParams,
}

impl Default for RetargetParams {
    fn default() -> Self {
        RetargetParams {
            beta_smooth: 1e-5,
            max_iters: 300,
            step_tol: 1e-10,
            fingertip_scale: 1.0,
            clik: ClikParams::default(),
        }
    }
}

impl RetargetParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta_smooth >= 0.0 && self.beta_smooth.is_finite()) {
            return Err(Error::invalid("beta_smooth must be finite and non-negative"));
        }
        if !(self.fingertip_scale > 0.0 && self.fingertip_scale.is_finite()) {
            return Err(Error::invalid("fingertip_scale must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotFrame {
    pub q_hand: JointState,
    pub q_arm: JointState,
    pub object: Pose,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetargetReport {
    pub clik_failures: usize,
    pub degraded: bool,
    /// Final retargeting objective per frame, m².
    pub residuals: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobotTrajectory {
    pub dt: f64,
    pub frames: Vec<RobotFrame>,
    pub report: Option<RetargetReport>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RobotTrajectoryFile {
    pub version: String,
    pub dt: f64,
    pub frames: Vec<RobotFrame>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<RetargetReport>,
}

impl RobotTrajectory {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn to_file(&self) -> RobotTrajectoryFile {
        RobotTrajectoryFile {
            version: format::current_version(),
            dt: self.dt,
            frames: self.frames.clone(),
            report: self.report.clone(),
        }
    }

    pub fn from_file(file: RobotTrajectoryFile) -> Result<Self> {
        format::check_version("robot trajectory", &file.version)?;
        if file.frames.is_empty() {
            return Err(Error::invalid("robot trajectory has no frames"));
        }
        let (na, nh) = (file.frames[0].q_arm.len(), file.frames[0].q_hand.len());
        if let Some(i) = file
            .frames
            .iter()
            .position(|f| f.q_arm.len() != na || f.q_hand.len() != nh)
        {
            return Err(Error::invalid("joint vector lengths change across frames").at_frame(i));
        }
        Ok(RobotTrajectory {
            dt: file.dt,
            frames: file.frames,
            report: file.report,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_file(format::read_json(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        format::write_json(path, &self.to_file())
    }

    /// Checks joint dimensions and limits against a rig.
    pub fn validate_against(&self, rig: &Rig) -> Result<()> {
        for (i, f) in self.frames.iter().enumerate() {
            if !rig.arm.within_limits(f.q_arm.as_slice()) {
                return Err(Error::invalid("arm joints violate dimensions or limits").at_frame(i));
            }
            if !rig.hand.within_limits(f.q_hand.as_slice()) {
                return Err(Error::invalid("hand joints violate dimensions or limits").at_frame(i));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct HumanFrameRecord {
    pub fingertips: [[f64; 3]; NUM_FINGERS],
    pub wrist: Pose,
    pub object: Pose,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HumanTrajectoryFile {
    pub version: String,
    pub dt: f64,
    pub frames: Vec<HumanFrameRecord>,
}

impl HumanTrajectoryFile {
    pub fn from_frames(dt: f64, frames: &[HumanFrame]) -> Self {
        HumanTrajectoryFile {
            version: format::current_version(),
            dt,
            frames: frames
                .iter()
                .map(|f| HumanFrameRecord {
                    fingertips: f.fingertips.map(|v| [v.x, v.y, v.z]),
                    wrist: f.wrist,
                    object: f.object,
                    time: Some(f.time),
                })
                .collect(),
        }
    }

    /// Frames with explicit or `index · dt` timestamps; timestamps must increase.
    pub fn into_frames(self) -> Result<(f64, Vec<HumanFrame>)> {
        format::check_version("human trajectory", &self.version)?;
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::invalid(format!("dt must be positive, got {}", self.dt)));
        }
        let frames: Vec<HumanFrame> = self
            .frames
            .iter()
            .enumerate()
            .map(|(i, r)| HumanFrame {
                fingertips: r.fingertips.map(Vector3::from),
                wrist: r.wrist,
                object: r.object,
                time: r.time.unwrap_or(i as f64 * self.dt),
            })
            .collect();
        check_times(&frames)?;
        Ok((self.dt, frames))
    }

    pub fn load(path: &Path) -> Result<(f64, Vec<HumanFrame>)> {
        let file: HumanTrajectoryFile = format::read_json(path)?;
        file.into_frames()
    }
}

fn check_times(frames: &[HumanFrame]) -> Result<()> {
    for (i, w) in frames.windows(2).enumerate() {
        if !(w[1].time > w[0].time) {
            return Err(Error::invalid("timestamps must strictly increase").at_frame(i + 1));
        }
    }
    Ok(())
}

/// Human fingertips in the wrist frame, scaled about the wrist.
pub fn fingertips_in_wrist(frame: &HumanFrame, scale: f64) -> [Vector3<f64>; NUM_FINGERS] {
    frame
        .fingertips
        .map(|x| scale * frame.wrist.inverse_transform_point(&x))
}

/// Retargets a whole human trajectory onto `rig`, warm-starting each frame
/// from the previous solution. The hand starts from mid-range joints and the
/// arm from its configured home. Frame 0 has no predecessor to stay close to,
/// so its smoothness weight is zero.
pub fn retarget_trajectory(
    rig: &Rig,
    human: &[HumanFrame],
    dt: f64,
    params: &RetargetParams,
) -> Result<RobotTrajectory> {
    params.validate()?;
    if human.is_empty() {
        return Err(Error::invalid("human trajectory is empty"));
    }
    check_times(human)?;
    let mount = rig.mount_frame().to_string();
    let mut q_hand = rig.hand.mid_range();
    let mut q_arm = rig.arm.home();
    let mut frames = Vec::with_capacity(human.len());
    let mut residuals = Vec::with_capacity(human.len());
    let mut clik_failures = 0;
    for (i, h) in human.iter().enumerate() {
        let targets = fingertips_in_wrist(h, params.fingertip_scale);
        let sol = if i == 0 {
            let first = RetargetParams {
                beta_smooth: 0.0,
                ..*params
            };
            retarget_frame(&rig.hand, &targets, &q_hand, &first)
        } else {
            retarget_frame(&rig.hand, &targets, &q_hand, params)
        }
        .map_err(|e| e.at_frame(i))?;
        let arm = clik_solve(&rig.arm, &h.wrist, &mount, &q_arm, &params.clik).map_err(|e| e.at_frame(i))?;
        if !arm.converged {
            clik_failures += 1;
        }
        q_hand = sol.q;
        q_arm = arm.q;
        residuals.push(sol.residual);
        frames.push(RobotFrame {
            q_hand: q_hand.clone(),
            q_arm: q_arm.clone(),
            object: h.object,
        });
    }
    let degraded = clik_failures as f64 > DEGRADED_CLIK_FRACTION * human.len() as f64;
    if degraded {
        warn!(
            "arm IK did not converge on {clik_failures} of {} frames",
            human.len()
        );
    }
    Ok(RobotTrajectory {
        dt,
        frames,
        report: Some(RetargetReport {
            clik_failures,
            degraded,
            residuals,
        }),
    })
}

/// Fingertip poses relative to the object for every frame of a robot
/// trajectory: the reference states `d_k` of the trajectory-following reward.
pub fn make_reference(rig: &Rig, traj: &RobotTrajectory) -> Result<ReferenceTrajectory> {
    let states = traj
        .frames
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let poses = rig
                .poses(f.q_arm.as_slice(), f.q_hand.as_slice())
                .map_err(|e| e.at_frame(i))?;
            Ok(FingertipState::relative_to(&f.object, &poses.fingertips))
        })
        .collect::<Result<Vec<_>>>()?;
    ReferenceTrajectory::new(states)
}

#[cfg(test)]
mod tests;
