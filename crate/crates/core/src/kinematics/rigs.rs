//! Reference robot descriptions used by fixtures, tests and the toy scene.
//!
//! The xArm7-like arm ends in a fixed `hand_mount` frame. That frame is the
//! anchor of the floating hand: the hand chain's root coincides with it, and it
//! sits 3 cm out along the flange axis with no extra rotation. Retargeting
//! drives `hand_mount` to the human wrist pose.

use std::f64::consts::{FRAC_PI_2, PI};

use super::chain::{ChainFile, JointRecord, JointType, KinematicChain};
use super::pose::{Pose, PoseRecord};
use crate::format;

fn joint(
    name: &str,
    kind: JointType,
    parent: Option<&str>,
    axis: [f64; 3],
    origin: Pose,
    limits: (f64, f64),
) -> JointRecord {
    JointRecord {
        name: name.to_string(),
        kind,
        parent: parent.map(str::to_string),
        axis,
        origin: PoseRecord::from(origin),
        lower: limits.0,
        upper: limits.1,
    }
}

fn revolute(name: &str, parent: Option<&str>, axis: [f64; 3], origin: Pose, limits: (f64, f64)) -> JointRecord {
    joint(name, JointType::Revolute, parent, axis, origin, limits)
}

fn fixed(name: &str, parent: Option<&str>, origin: Pose) -> JointRecord {
    joint(name, JointType::Fixed, parent, [0.0, 0.0, 1.0], origin, (0.0, 0.0))
}

fn t(x: f64, y: f64, z: f64) -> Pose {
    Pose::from_translation(x, y, z)
}

fn build(file: ChainFile) -> KinematicChain {
    KinematicChain::from_record(file).expect("built-in rig is well formed")
}

fn file(name: &str, joints: Vec<JointRecord>, tips: &[&str], palm: &str, home: Option<Vec<f64>>) -> ChainFile {
    ChainFile {
        version: format::current_version(),
        name: name.to_string(),
        joints,
        fingertips: tips.iter().map(|s| s.to_string()).collect(),
        palm: palm.to_string(),
        home,
    }
}

/// Planar arm in the xy-plane: two revolute z joints, 1 m links, `tip` frame.
pub fn planar_two_link() -> KinematicChain {
    build(file(
        "planar-2link",
        vec![
            revolute("shoulder", None, [0.0, 0.0, 1.0], Pose::identity(), (-PI, PI)),
            revolute("elbow", None, [0.0, 0.0, 1.0], t(1.0, 0.0, 0.0), (-PI, PI)),
            fixed("tip", None, t(1.0, 0.0, 0.0)),
        ],
        &["tip"],
        "tip",
        None,
    ))
}

/// Single revolute z joint with a 1 m link.
pub fn planar_one_link() -> KinematicChain {
    build(file(
        "planar-1link",
        vec![
            revolute("shoulder", None, [0.0, 0.0, 1.0], Pose::identity(), (-PI, PI)),
            fixed("tip", None, t(1.0, 0.0, 0.0)),
        ],
        &["tip"],
        "tip",
        None,
    ))
}

/// Two-joint finger curling in the xz-plane, both joints limited to `[0, π/2]`.
pub fn toy_finger() -> KinematicChain {
    build(file(
        "toy-finger",
        vec![
            revolute("mcp", None, [0.0, 1.0, 0.0], Pose::identity(), (0.0, FRAC_PI_2)),
            revolute("pip", None, [0.0, 1.0, 0.0], t(0.0, 0.0, 0.05), (0.0, FRAC_PI_2)),
            fixed("tip", None, t(0.0, 0.0, 0.04)),
        ],
        &["tip"],
        "tip",
        None,
    ))
}

/// Seven-joint arm with xArm7-like link lengths and limits.
pub fn xarm7_like() -> KinematicChain {
    let z = [0.0, 0.0, 1.0];
    let y = [0.0, 1.0, 0.0];
    let full = (-2.0 * PI, 2.0 * PI);
    build(file(
        "xarm7-like",
        vec![
            revolute("joint1", None, z, t(0.0, 0.0, 0.267), full),
            revolute("joint2", None, y, Pose::identity(), (-2.059, 2.0944)),
            revolute("joint3", None, z, t(0.0, 0.0, 0.293), full),
            revolute("joint4", None, y, t(0.0525, 0.0, 0.0), (-0.19198, 3.927)),
            revolute("joint5", None, z, t(0.0275, 0.0, 0.3425), full),
            revolute("joint6", None, y, Pose::identity(), (-1.69297, PI)),
            revolute("joint7", None, z, t(0.076, 0.0, 0.097), full),
            fixed("hand_mount", None, t(0.0, 0.0, 0.03)),
        ],
        &["hand_mount"],
        "hand_mount",
        Some(vec![0.0, 0.3, 0.0, 1.2, 0.0, 1.2, 0.0]),
    ))
}

/// Five-finger, ten-joint hand loosely modeled on the Ability Hand.
///
/// Local frame: +z points along the extended fingers, fingers curl toward +x
/// (the palm normal), +y runs from pinky to index. Each finger has a
/// metacarpal and a proximal-interphalangeal joint; the thumb has a rotator
/// and a flexor. Fingertip order is thumb, index, middle, ring, pinky.
pub fn ability_hand_like() -> KinematicChain {
    let y = [0.0, 1.0, 0.0];
    let mut joints = vec![fixed("palm", Some("base"), t(0.02, 0.0, 0.06))];
    joints.push(revolute(
        "thumb_rot",
        Some("base"),
        [0.0, 0.0, 1.0],
        t(0.015, 0.0, 0.035),
        (-0.6, 0.6),
    ));
    joints.push(revolute("thumb_flex", None, [0.0, -1.0, 0.0], t(0.045, 0.0, 0.0), (0.0, 1.6)));
    joints.push(fixed("thumb_tip", None, t(0.04, 0.0, 0.0)));
    for (name, offset) in [("index", 0.027), ("middle", 0.009), ("ring", -0.009), ("pinky", -0.027)] {
        let mcp = format!("{name}_mcp");
        joints.push(revolute(&mcp, Some("base"), y, t(0.0, offset, 0.10), (0.0, 1.6)));
        joints.push(revolute(&format!("{name}_pip"), None, y, t(0.0, 0.0, 0.04), (0.0, 1.6)));
        joints.push(fixed(&format!("{name}_tip"), None, t(0.0, 0.0, 0.035)));
    }
    build(file(
        "ability-hand-like",
        joints,
        &["thumb_tip", "index_tip", "middle_tip", "ring_tip", "pinky_tip"],
        "palm",
        Some(vec![0.0; 10]),
    ))
}

/// Three-axis gantry: x and y rails carry a vertical lift whose end is the
/// `hand_mount` frame. Joint values are mount coordinates in meters.
pub fn toy_gantry_arm() -> KinematicChain {
    let prismatic = |name: &str, axis: [f64; 3], limits: (f64, f64)| {
        joint(name, JointType::Prismatic, None, axis, Pose::identity(), limits)
    };
    build(file(
        "toy-gantry",
        vec![
            prismatic("rail_x", [1.0, 0.0, 0.0], (0.10, 0.80)),
            prismatic("rail_y", [0.0, 1.0, 0.0], (-0.35, 0.35)),
            prismatic("lift", [0.0, 0.0, 1.0], (0.05, 0.60)),
            fixed("hand_mount", None, Pose::identity()),
        ],
        &["hand_mount"],
        "hand_mount",
        Some(vec![0.32, 0.08, 0.35]),
    ))
}

/// Rigid five-prong claw hanging below the mount; the prongs ring a vertical
/// axis at `radius`, thumb on +x.
pub fn toy_claw_hand(radius: f64) -> KinematicChain {
    let mut joints = vec![fixed("palm", Some("base"), t(0.0, 0.0, -0.04))];
    let names = ["thumb_tip", "index_tip", "middle_tip", "ring_tip", "pinky_tip"];
    for (i, name) in names.iter().enumerate() {
        let a = 2.0 * PI * i as f64 / 5.0;
        joints.push(fixed(name, Some("palm"), t(radius * a.cos(), radius * a.sin(), -0.08)));
    }
    build(file("toy-claw", joints, &names, "palm", Some(vec![])))
}
