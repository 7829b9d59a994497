//! Tree-structured robot model: forward kinematics, geometric Jacobians and
//! closed-loop inverse kinematics.

mod chain;
mod ik;
mod pose;
mod rig;
pub mod rigs;

pub use chain::{
    forward_kinematics, jacobian, ChainFile, FramePoses, Joint, JointRecord, JointState,
    JointType, KinematicChain, ROOT_FRAME,
};
pub use ik::{clik_solve, pose_error, ClikParams, ClikSolution};
pub use pose::{geodesic_angle, Pose, PoseRecord};
pub use rig::{Rig, RigFile, RigPoses};
