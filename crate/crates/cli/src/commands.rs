use std::path::{Path, PathBuf};
use std::time::Duration;

use dexgrasp::graspenv::EnvConfig;
use dexgrasp::kinematics::{KinematicChain, Rig};
use dexgrasp::retarget::{make_reference, min_jerk_smooth, retarget_trajectory, HumanTrajectoryFile, RobotTrajectory};
use dexgrasp::reward::ReferenceTrajectory;
use dexgrasp::skillselect::{
    bottle_scene, bottle_tasks, load_tasks, run_task_suite, select_skill, ChatClient, LiveClient, MockClient,
    Orientation, RandomClient, SceneContext, SelectionResult, SkillLibrary,
};
use dexgrasp::trainer::{evaluate, train, write_metrics_csv, Checkpoint};
use dexgrasp::{Error, Result};
use log::info;

use crate::config::{pick, ProjectConfig};
use crate::{
    ClientArgs, Command, DemoArgs, EvalArgs, FileKind, MakeRefArgs, OrientationArg, RetargetArgs, SceneArgs,
    SelectArgs, TrainArgs, ValidateArgs,
};

pub fn run(command: Command, p: &ProjectConfig) -> Result<u8> {
    match command {
        Command::Retarget(a) => retarget(a, p),
        Command::MakeRef(a) => make_ref(a, p),
        Command::Train(a) => train_cmd(a, p),
        Command::Eval(a) => eval(a, p),
        Command::Select(a) => select(a, p),
        Command::Demo(a) => demo(a, p),
        Command::Validate(a) => validate(a, p),
    }
}

fn retarget(a: RetargetArgs, p: &ProjectConfig) -> Result<u8> {
    let rig = Rig::load(&pick(a.rig, &p.paths.rig, "rig", "rig")?)?;
    let input = pick(a.input, &p.paths.human, "input", "human")?;
    let out = a.out.unwrap_or_else(|| p.out_dir.join("robot_trajectory.json"));
    let window = a.smooth_window.unwrap_or(p.smooth_window);
    let p = ProjectConfig {
        smooth_window: window,
        ..p.clone()
    };
    p.validate()?;

    let (dt, human) = HumanTrajectoryFile::load(&input)?;
    let mut traj = retarget_trajectory(&rig, &human, dt, &p.retarget)?;
    if window > 0 {
        traj = min_jerk_smooth(&traj, window, &rig)?;
    }
    traj.validate_against(&rig)?;
    traj.save(&out)?;
    let report = traj.report.as_ref().expect("retargeting fills the report");
    let mut residuals = report.residuals.clone();
    residuals.sort_by(f64::total_cmp);
    println!(
        "retargeted {} frames to {}; median fingertip residual {:.2e} m², arm IK unconverged on {} frames",
        traj.len(),
        out.display(),
        residuals[residuals.len() / 2],
        report.clik_failures
    );
    if report.degraded {
        eprintln!("arm IK failed on too many frames; the trajectory is unreliable");
        return Ok(1);
    }
    Ok(0)
}

fn make_ref(a: MakeRefArgs, p: &ProjectConfig) -> Result<u8> {
    let rig = Rig::load(&pick(a.rig, &p.paths.rig, "rig", "rig")?)?;
    let input = pick(a.input, &p.paths.trajectory, "input", "trajectory")?;
    let out = a.out.unwrap_or_else(|| p.out_dir.join("reference.json"));
    let traj = RobotTrajectory::load(&input)?;
    traj.validate_against(&rig)?;
    let reference = make_reference(&rig, &traj)?;
    reference.save(&out)?;
    println!("wrote {} reference states to {}", reference.len(), out.display());
    Ok(0)
}

fn with_extension_suffix(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

fn train_cmd(a: TrainArgs, p: &ProjectConfig) -> Result<u8> {
    let scene = EnvConfig::load(&pick(a.scene, &p.paths.scene, "scene", "scene")?)?;
    let reference = ReferenceTrajectory::load(&pick(a.reference, &p.paths.reference, "reference", "reference")?)?;
    let out = a.out.unwrap_or_else(|| p.out_dir.join("checkpoint.json"));
    let metrics = a.metrics.unwrap_or_else(|| out.with_extension("csv"));

    let mut p = p.clone();
    let cfg = &mut p.train;
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    if let Some(jobs) = a.jobs {
        cfg.jobs = jobs;
    }
    if let Some(steps) = a.steps {
        cfg.total_steps = steps;
    }
    if a.direct {
        cfg.use_curriculum = false;
    }
    p.validate()?;

    let outcome = train(&scene, &reference, &p.reward, &p.train)?;
    outcome.checkpoint.save(&out)?;
    write_metrics_csv(&metrics, &outcome.metrics)?;
    outcome
        .curriculum
        .write_csv(&with_extension_suffix(&metrics, "_curriculum.csv"))?;
    let (sr, sigma) = outcome.metrics.last().map_or((0.0, outcome.curriculum.sigma), |m| (m.sr, m.sigma));
    println!(
        "trained {} steps; window SR {sr:.2}; sigma {sigma:.2}; checkpoint {}; metrics {}",
        outcome.steps,
        out.display(),
        metrics.display()
    );
    if let Some(why) = outcome.diverged {
        eprintln!("training stopped early: {why}; the checkpoint holds the last finite policy");
        return Ok(1);
    }
    Ok(0)
}

fn eval(a: EvalArgs, p: &ProjectConfig) -> Result<u8> {
    let path = pick(a.checkpoint, &p.paths.checkpoint, "checkpoint", "checkpoint")?;
    let ckpt = Checkpoint::load(&path)?;
    let (scene, reference) = ckpt.unpack()?;
    let seed = a.seed.unwrap_or(p.train.seed);
    let report = evaluate(
        &ckpt.policy,
        &scene,
        &reference,
        &ckpt.reward,
        &ckpt.train.curriculum,
        a.episodes,
        a.sigma,
        seed,
    )?;
    let csv = a.csv.unwrap_or_else(|| p.out_dir.join("eval.csv"));
    report.write_csv(&csv)?;
    let wins = report.episodes.iter().filter(|e| e.success).count();
    println!(
        "SR {:.3} ({wins}/{}) at sigma {}; mean return {:.1}; episodes in {}",
        report.success_rate,
        report.episodes.len(),
        a.sigma,
        report.mean_return,
        csv.display()
    );
    Ok(0)
}

fn make_client(args: &ClientArgs, library: &SkillLibrary, seed: u64) -> Result<Box<dyn ChatClient>> {
    if args.mock {
        Ok(Box::new(MockClient::default()))
    } else if args.random {
        Ok(Box::new(RandomClient::new(library.ids(), seed)?))
    } else if let Some(endpoint) = &args.endpoint {
        Ok(Box::new(LiveClient::from_env(
            endpoint,
            &args.model,
            &args.api_key_env,
            Duration::from_secs(args.timeout),
        )?))
    } else {
        Err(Error::invalid("choose a model: --mock, --random or --endpoint URL"))
    }
}

struct Setup {
    library: SkillLibrary,
    tasks: Vec<dexgrasp::skillselect::Task>,
}

fn setup(a: &SceneArgs, p: &ProjectConfig) -> Result<Setup> {
    let library = SkillLibrary::load(&pick(a.library.clone(), &p.paths.library, "library", "library")?)?;
    let tasks = match a.tasks.as_ref().or(p.paths.tasks.as_ref()) {
        Some(path) => load_tasks(path)?,
        None => bottle_tasks(),
    };
    Ok(Setup { library, tasks })
}

/// The scene and instruction named on the command line.
fn query(a: &SceneArgs, tasks: &[dexgrasp::skillselect::Task]) -> Result<(SceneContext, String)> {
    if let Some(name) = &a.task {
        let task = tasks.iter().find(|t| &t.name == name).ok_or_else(|| {
            let names: Vec<&str> = tasks.iter().map(|t| t.name.as_str()).collect();
            Error::NotFound(format!("task {name}; known tasks: {}", names.join(", ")))
        })?;
        let instruction = a.instruction.clone().unwrap_or_else(|| task.instruction.clone());
        return Ok((task.scene.clone(), instruction));
    }
    let orientation = match a.orientation {
        Some(OrientationArg::Standing) => Orientation::Standing,
        Some(OrientationArg::Lying) => Orientation::Lying,
        None => return Err(Error::invalid("name a task with --task or a placement with --orientation")),
    };
    Ok((bottle_scene(orientation), a.instruction.clone().unwrap_or_default()))
}

fn print_selection(sel: &SelectionResult, library: &SkillLibrary) {
    let skill = library.get(sel.skill_id).expect("selection is validated");
    println!("skill {}: {}", sel.skill_id, skill.description);
    println!("rationale: {}", sel.rationale);
}

fn select(a: SelectArgs, p: &ProjectConfig) -> Result<u8> {
    let s = setup(&a.scene, p)?;
    let mut client = make_client(&a.client, &s.library, a.seed.unwrap_or(p.train.seed))?;
    if let Some(trials) = a.suite {
        let report = run_task_suite(client.as_mut(), &s.tasks, &s.library, trials, a.client.retries, None);
        print!("{}", report.table());
        return Ok(0);
    }
    let (scene, instruction) = query(&a.scene, &s.tasks)?;
    let sel = select_skill(client.as_mut(), &scene, &instruction, &s.library, a.client.retries)?;
    print_selection(&sel, &s.library);
    Ok(0)
}

fn demo(a: DemoArgs, p: &ProjectConfig) -> Result<u8> {
    let s = setup(&a.scene, p)?;
    let seed = a.seed.unwrap_or(p.train.seed);
    let mut client = make_client(&a.client, &s.library, seed)?;
    let (scene, instruction) = query(&a.scene, &s.tasks)?;
    let sel = select_skill(client.as_mut(), &scene, &instruction, &s.library, a.client.retries)?;
    print_selection(&sel, &s.library);
    if a.dry_run {
        return Ok(0);
    }
    let skill = s.library.get(sel.skill_id).expect("selection is validated");
    if !skill.checkpoint.exists() {
        return Err(Error::NotFound(format!(
            "checkpoint for skill {} at {}; train one with `dexgrasp train --out {}`",
            skill.id,
            skill.checkpoint.display(),
            skill.checkpoint.display()
        )));
    }
    let ckpt = Checkpoint::load(&skill.checkpoint)?;
    let (env, reference) = ckpt.unpack()?;
    info!("running skill {} on scene {}", skill.id, env.name);
    let report = evaluate(
        &ckpt.policy,
        &env,
        &reference,
        &ckpt.reward,
        &ckpt.train.curriculum,
        a.episodes,
        a.sigma,
        seed,
    )?;
    for e in &report.episodes {
        println!(
            "episode {}: {} after {} steps, return {:.1}",
            e.episode,
            if e.success { "success" } else { "failure" },
            e.steps,
            e.ret
        );
    }
    let wins = report.episodes.iter().filter(|e| e.success).count();
    println!("succeeded {wins}/{}", report.episodes.len());
    Ok(if wins > 0 { 0 } else { 1 })
}

fn check(kind: FileKind, path: &Path) -> Result<String> {
    Ok(match kind {
        FileKind::Chain => format!("chain with {} joints", KinematicChain::load(path)?.dof()),
        FileKind::Rig => {
            let rig = Rig::load(path)?;
            format!("rig with {} arm and {} hand joints", rig.arm.dof(), rig.hand.dof())
        }
        FileKind::Scene => format!("scene {}", EnvConfig::load(path)?.name),
        FileKind::Human => format!("human trajectory with {} frames", HumanTrajectoryFile::load(path)?.1.len()),
        FileKind::Trajectory => format!("robot trajectory with {} frames", RobotTrajectory::load(path)?.len()),
        FileKind::Reference => format!("reference with {} states", ReferenceTrajectory::load(path)?.len()),
        FileKind::Checkpoint => {
            let ckpt = Checkpoint::load(path)?;
            let (env, _) = ckpt.unpack()?;
            format!("checkpoint after {} steps on scene {}", ckpt.steps, env.name)
        }
        FileKind::Library => {
            let lib = SkillLibrary::load(path)?;
            let missing: Vec<String> = lib
                .skills()
                .iter()
                .filter(|s| !s.checkpoint.exists())
                .map(|s| format!("skill {} checkpoint {}", s.id, s.checkpoint.display()))
                .collect();
            if !missing.is_empty() {
                return Err(Error::NotFound(missing.join("; ")));
            }
            format!("library with skills {:?}", lib.ids())
        }
        FileKind::Tasks => format!("{} tasks", load_tasks(path)?.len()),
    })
}

fn validate(a: ValidateArgs, p: &ProjectConfig) -> Result<u8> {
    let targets: Vec<(FileKind, PathBuf)> = if a.files.is_empty() {
        p.validate()?;
        let paths = &p.paths;
        [
            (FileKind::Rig, &paths.rig),
            (FileKind::Scene, &paths.scene),
            (FileKind::Human, &paths.human),
            (FileKind::Trajectory, &paths.trajectory),
            (FileKind::Reference, &paths.reference),
            (FileKind::Checkpoint, &paths.checkpoint),
            (FileKind::Library, &paths.library),
            (FileKind::Tasks, &paths.tasks),
        ]
        .into_iter()
        .filter_map(|(k, path)| path.clone().map(|path| (k, path)))
        .collect()
    } else {
        let kind = a
            .kind
            .ok_or_else(|| Error::invalid("pass --kind when validating files named on the command line"))?;
        a.files.into_iter().map(|f| (kind, f)).collect()
    };
    println!("configuration ok");
    let mut failed = 0;
    for (kind, path) in &targets {
        match check(*kind, path) {
            Ok(summary) => println!("ok   {}: {summary}", path.display()),
            Err(e) => {
                failed += 1;
                println!("FAIL {}: {e}", path.display());
            }
        }
    }
    Ok(if failed == 0 { 0 } else { 1 })
}
