//! Human-to-robot grasp retargeting, trajectory-following rewards,
//! curriculum-driven PPO training and language-driven skill selection for
//! dexterous grasping.

pub mod curriculum;
pub mod error;
pub mod format;
pub mod graspenv;
pub mod kinematics;
pub mod retarget;
pub mod reward;
pub mod skillselect;
pub mod synthetic;
pub mod trainer;

pub use error::{Error, Result};
