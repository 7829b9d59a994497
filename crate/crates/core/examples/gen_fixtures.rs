//! Regenerates the files under `fixtures/`.
//!
//! Usage: `cargo run --release -p dexgrasp --example gen_fixtures [DIR]`

use std::path::{Path, PathBuf};

use dexgrasp::graspenv::{toy_scene, EnvConfig, ObjectSpec, Primitive};
use dexgrasp::kinematics::{rigs, JointState, Pose, Rig};
use dexgrasp::retarget::{make_reference, retarget_trajectory, HumanTrajectoryFile, RetargetParams};
use dexgrasp::reward::RewardConfig;
use dexgrasp::skillselect::{bottle_library, bottle_tasks, save_tasks, SkillLibrary};
use dexgrasp::synthetic::{human_from_robot, joint_space_motion, toy_demo};
use dexgrasp::trainer::{train, TrainConfig};
use dexgrasp::{format, Result};

fn bleach_scene() -> Result<EnvConfig> {
    let rig = Rig::new(rigs::xarm7_like(), rigs::ability_hand_like())?;
    let object = ObjectSpec {
        name: "bleach-cleanser".into(),
        primitive: Primitive::Cylinder {
            radius: 0.045,
            height: 0.25,
        },
        init_pose: Pose::from_translation(0.5, 0.0, 0.125),
    };
    Ok(EnvConfig::new("bleach-standing", rig, object))
}

fn write_rig(path: &Path, rig: &Rig) -> Result<()> {
    format::write_json(path, &rig.to_file())
}

fn main() -> Result<()> {
    let dir = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("fixtures"));

    let bleach = bleach_scene()?;
    write_rig(&dir.join("rigs/xarm7_ability.json"), &bleach.rig)?;
    bleach.save(&dir.join("scenes/bleach.json"))?;
    let reach = JointState(vec![0.0, 0.7, 0.0, 1.3, 0.0, 0.6, 0.0]);
    let open = bleach.rig.hand.home();
    let closed = bleach.rig.hand.clamp(&[0.3, 1.0, 1.1, 0.9, 1.1, 0.9, 1.1, 0.9, 1.1, 0.9]);
    let motion = joint_space_motion(
        &[
            (bleach.rig.arm.home(), open.clone()),
            (reach.clone(), open),
            (reach, closed),
        ],
        15,
        bleach.object.init_pose,
        0.05,
    )?;
    let human = human_from_robot(&bleach.rig, &motion)?;
    format::write_json(&dir.join("demos/bleach_human.json"), &HumanTrajectoryFile::from_frames(motion.dt, &human))?;

    let toy = toy_scene();
    write_rig(&dir.join("rigs/toy_gantry.json"), &toy.rig)?;
    toy.save(&dir.join("scenes/toy.json"))?;
    let demo = toy_demo(&toy)?;
    let human = human_from_robot(&toy.rig, &demo)?;
    format::write_json(&dir.join("demos/toy_human.json"), &HumanTrajectoryFile::from_frames(demo.dt, &human))?;
    let robot = retarget_trajectory(&toy.rig, &human, demo.dt, &RetargetParams::default())?;
    robot.save(&dir.join("demos/toy_robot.json"))?;
    let reference = make_reference(&toy.rig, &robot)?;
    reference.save(&dir.join("demos/toy_reference.json"))?;

    let library = bottle_library(Path::new("../checkpoints"));
    // Every skill runs the toy policy at desk scale.
    let skills = library
        .skills()
        .iter()
        .cloned()
        .map(|mut s| {
            s.checkpoint = PathBuf::from("../checkpoints/toy_policy.json");
            s
        })
        .collect();
    SkillLibrary::new(skills)?.save(&dir.join("skills/library.json"))?;
    save_tasks(&dir.join("skills/tasks.json"), &bottle_tasks())?;

    let cfg = TrainConfig::toy();
    let out = train(&toy, &reference, &RewardConfig::default(), &cfg)?;
    out.checkpoint.save(&dir.join("checkpoints/toy_policy.json"))?;
    let last = out.metrics.last().expect("training ran");
    println!(
        "trained {} steps, window SR {:.2}, sigma {:.2}",
        out.steps, last.sr, last.sigma
    );
    Ok(())
}
