use std::path::Path;

use serde::{Deserialize, Serialize};

use super::chain::{ChainFile, KinematicChain};
use super::pose::Pose;
use crate::error::{Error, Result};
use crate::format;
use crate::reward::NUM_FINGERS;

/// An arm carrying a floating hand: the hand chain's root is rigidly attached
/// to the arm's palm frame (the mount anchor).
#[derive(Debug, Clone)]
pub struct Rig {
    pub arm: KinematicChain,
    pub hand: KinematicChain,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RigFile {
    pub version: String,
    pub arm: ChainFile,
    pub hand: ChainFile,
}

/// World poses of the frames the grasping code cares about.
#[derive(Debug, Clone, Copy)]
pub struct RigPoses {
    pub hand_root: Pose,
    pub palm: Pose,
    pub fingertips: [Pose; NUM_FINGERS],
}

impl Rig {
    pub fn new(arm: KinematicChain, hand: KinematicChain) -> Result<Self> {
        if hand.fingertip_frames().len() != NUM_FINGERS {
            return Err(Error::invalid(format!(
                "hand chain {:?} must declare {NUM_FINGERS} fingertips (thumb first), found {}",
                hand.name,
                hand.fingertip_frames().len()
            )));
        }
        Ok(Rig { arm, hand })
    }

    pub fn from_file(file: RigFile) -> Result<Self> {
        format::check_version("rig", &file.version)?;
        Rig::new(
            KinematicChain::from_file_record(file.arm)?,
            KinematicChain::from_file_record(file.hand)?,
        )
    }

    pub fn to_file(&self) -> RigFile {
        RigFile {
            version: format::current_version(),
            arm: self.arm.to_record(),
            hand: self.hand.to_record(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_file(format::read_json(path)?)
    }

    /// Name of the arm frame the hand is mounted on.
    pub fn mount_frame(&self) -> &str {
        self.arm.frame_name(self.arm.palm_frame())
    }

    pub fn hand_root(&self, q_arm: &[f64]) -> Result<Pose> {
        let poses = self.arm.frame_poses(q_arm)?;
        Ok(poses[self.arm.palm_frame()])
    }

    pub fn poses(&self, q_arm: &[f64], q_hand: &[f64]) -> Result<RigPoses> {
        let root = self.hand_root(q_arm)?;
        let local = self.hand.frame_poses(q_hand)?;
        let tips = self.hand.fingertip_frames();
        let fingertips = std::array::from_fn(|i| root.compose(&local[tips[i]]));
        Ok(RigPoses {
            hand_root: root,
            palm: root.compose(&local[self.hand.palm_frame()]),
            fingertips,
        })
    }
}
