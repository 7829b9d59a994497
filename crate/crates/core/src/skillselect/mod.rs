//! Skill library and instruction-conditioned skill selection through a
//! chat-model client.

mod client;

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format;
use crate::kinematics::Pose;

pub use client::{ChatClient, ChatRequest, LiveClient, MockClient, RandomClient, DEFAULT_API_KEY_VAR};

pub const MAX_RATIONALE_SENTENCES: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Skill {
    pub id: u32,
    pub description: String,
    /// Policy checkpoint, relative to the library file unless absolute.
    pub checkpoint: PathBuf,
    /// Preconditions in plain words, e.g. the object orientation it expects.
    pub applicability: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkillLibrary {
    skills: Vec<Skill>,
}

#[derive(Serialize, Deserialize)]
struct LibraryFile {
    version: String,
    skills: Vec<Skill>,
}

/// Either the bare array form or the versioned object form.
#[derive(Deserialize)]
#[serde(untagged)]
enum LibraryFileAny {
    Versioned(LibraryFile),
    Bare(Vec<Skill>),
}

impl SkillLibrary {
    pub fn new(skills: Vec<Skill>) -> Result<Self> {
        if skills.is_empty() {
            return Err(Error::invalid("skill library is empty"));
        }
        let mut seen = HashSet::new();
        for s in &skills {
            if s.id == 0 {
                return Err(Error::invalid("skill ids start at 1"));
            }
            if !seen.insert(s.id) {
                return Err(Error::invalid(format!("duplicate skill id {}", s.id)));
            }
            if s.description.trim().is_empty() {
                return Err(Error::invalid(format!("skill {} has an empty description", s.id)));
            }
        }
        Ok(SkillLibrary { skills })
    }

    pub fn skills(&self) -> &[Skill] {
        &self.skills
    }

    pub fn ids(&self) -> Vec<u32> {
        self.skills.iter().map(|s| s.id).collect()
    }

    pub fn get(&self, id: u32) -> Option<&Skill> {
        self.skills.iter().find(|s| s.id == id)
    }

    pub fn contains(&self, id: i64) -> bool {
        self.skills.iter().any(|s| i64::from(s.id) == id)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let skills = match format::read_json::<LibraryFileAny>(path)? {
            LibraryFileAny::Versioned(f) => {
                format::check_version("skill library", &f.version)?;
                f.skills
            }
            LibraryFileAny::Bare(skills) => skills,
        };
        let mut lib = SkillLibrary::new(skills)?;
        if let Some(dir) = path.parent() {
            for s in &mut lib.skills {
                if s.checkpoint.is_relative() {
                    s.checkpoint = dir.join(&s.checkpoint);
                }
            }
        }
        Ok(lib)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        format::write_json(
            path,
            &LibraryFile {
                version: format::current_version(),
                skills: self.skills.clone(),
            },
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    Standing,
    Lying,
}

impl Orientation {
    pub fn label(self) -> &'static str {
        match self {
            Orientation::Standing => "standing",
            Orientation::Lying => "lying",
        }
    }

    /// Standing when the object's z axis is within 45° of vertical.
    pub fn of_pose(pose: &Pose) -> Self {
        let up = pose.rotation * Vector3::z();
        if up.z.abs() >= std::f64::consts::FRAC_1_SQRT_2 {
            Orientation::Standing
        } else {
            Orientation::Lying
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneContext {
    pub object: String,
    pub orientation: Orientation,
    pub pose: Pose,
    pub summary: String,
    /// Image handle passed through to clients that accept one.
    #[serde(default)]
    pub image: Option<String>,
}

impl SceneContext {
    /// Scene whose orientation label is read off `pose`.
    pub fn from_pose(object: &str, pose: Pose, summary: &str) -> Self {
        SceneContext {
            object: object.to_string(),
            orientation: Orientation::of_pose(&pose),
            pose,
            summary: summary.to_string(),
            image: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.pose.is_finite() {
            return Err(Error::invalid("scene pose is not finite"));
        }
        let implied = Orientation::of_pose(&self.pose);
        if implied != self.orientation {
            return Err(Error::invalid(format!(
                "scene says the {} is {} but its pose makes it {}",
                self.object,
                self.orientation.label(),
                implied.label()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prompt {
    pub system: String,
    pub user: String,
    pub image: Option<String>,
}

impl Prompt {
    pub fn text(&self) -> String {
        format!("{}\n\n{}", self.system, self.user)
    }
}

const SYSTEM_TEMPLATE: &str = "\
You choose which grasping skill a robot hand should run.
Decide by two principles, in this order:
(i) grasp feasibility: the skill must be able to grasp and lift the object as it is currently placed;
(ii) human preference: among feasible skills, prefer the one that matches the instruction.
Reply with the number of the selected skill, followed by a rationale of at most three sentences.";

pub const NO_PREFERENCE: &str = "no preference given";

pub fn build_prompt(scene: &SceneContext, instruction: &str, library: &SkillLibrary) -> Prompt {
    let mut user = String::from("Skills:\n");
    for s in &library.skills {
        let _ = writeln!(user, "Skill {}: {} (applies to: {})", s.id, s.description, s.applicability);
    }
    let _ = writeln!(user, "\nScene: {}", scene.summary);
    let _ = writeln!(user, "Object: {}", scene.object);
    let _ = writeln!(user, "Object orientation: {}", scene.orientation.label());
    let instruction = instruction.trim();
    if instruction.is_empty() {
        let _ = writeln!(user, "Instruction: ({NO_PREFERENCE})");
    } else {
        let _ = writeln!(user, "Instruction: {instruction}");
    }
    let _ = write!(user, "\nAnswer with one skill number and the rationale.");
    Prompt {
        system: SYSTEM_TEMPLATE.to_string(),
        user,
        image: scene.image.clone(),
    }
}

fn format_reminder(library: &SkillLibrary) -> String {
    let ids: Vec<String> = library.ids().iter().map(u32::to_string).collect();
    format!(
        "\n\nYour previous reply did not name a valid skill. Start the reply with exactly one of {} and then give the rationale.",
        ids.join(", ")
    )
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub skill_id: u32,
    pub rationale: String,
    pub raw: String,
}

impl SelectionResult {
    /// Canonical reply text, `"<id>. <rationale>"`.
    pub fn format(&self) -> String {
        if self.rationale.is_empty() {
            format!("{}.", self.skill_id)
        } else {
            format!("{}. {}", self.skill_id, self.rationale)
        }
    }
}

/// Integers in `raw` that are not glued to letters, digits or a decimal point,
/// with their byte spans.
fn standalone_integers(raw: &str) -> Vec<(i64, usize, usize)> {
    let bytes = raw.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if !bytes[i].is_ascii_digit() {
            i += 1;
            continue;
        }
        let start = i;
        while i < bytes.len() && bytes[i].is_ascii_digit() {
            i += 1;
        }
        let before = raw[..start].chars().next_back();
        let after = raw[i..].chars().next();
        let glued_before = before.is_some_and(|c| c.is_alphanumeric() || c == '.' || c == '-');
        let glued_after = after.is_some_and(|c| c.is_alphanumeric())
            || (after == Some('.') && bytes.get(i + 1).is_some_and(u8::is_ascii_digit));
        if !glued_before && !glued_after {
            if let Ok(v) = raw[start..i].parse::<i64>() {
                out.push((v, start, i));
            }
        }
    }
    out
}

/// Splits after `.`, `!` or `?` followed by whitespace or the end.
pub fn sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current = String::new();
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        current.push(c);
        if matches!(c, '.' | '!' | '?') && chars.peek().is_none_or(|n| n.is_whitespace()) {
            let s = current.trim();
            if !s.is_empty() {
                out.push(s.to_string());
            }
            current.clear();
        }
    }
    let s = current.trim();
    if !s.is_empty() {
        out.push(s.to_string());
    }
    out
}

pub fn parse_selection(raw: &str, library: &SkillLibrary) -> Result<SelectionResult> {
    let numbers = standalone_integers(raw);
    let Some(&(first, _, _)) = numbers.first() else {
        return Err(Error::Parse { raw: raw.to_string() });
    };
    let Some(&(id, start, end)) = numbers.iter().find(|(v, _, _)| library.contains(*v)) else {
        return Err(Error::OutOfRange {
            id: first,
            raw: raw.to_string(),
        });
    };
    let lead = |c: char| c.is_whitespace() || matches!(c, '.' | ':' | ')' | '-' | ',' | '*');
    let mut rest = raw[end..].trim_start_matches(lead).trim_end().to_string();
    if rest.is_empty() {
        rest = raw[..start].trim().trim_end_matches(lead).to_string();
    }
    let rationale = sentences(&rest)
        .into_iter()
        .take(MAX_RATIONALE_SENTENCES)
        .collect::<Vec<_>>()
        .join(" ");
    Ok(SelectionResult {
        skill_id: id as u32,
        rationale,
        raw: raw.to_string(),
    })
}

/// Builds the prompt, queries `client` and parses the reply. Replies without
/// a valid skill number are retried up to `retries` times with a format
/// reminder; transport failures are returned at once.
pub fn select_skill(
    client: &mut dyn ChatClient,
    scene: &SceneContext,
    instruction: &str,
    library: &SkillLibrary,
    retries: usize,
) -> Result<SelectionResult> {
    let prompt = build_prompt(scene, instruction, library);
    let mut request = ChatRequest {
        system: prompt.system,
        user: prompt.user,
        image: prompt.image,
    };
    let mut attempt = 0;
    loop {
        let raw = client.complete(&request)?;
        match parse_selection(&raw, library) {
            Ok(r) => return Ok(r),
            Err(e @ (Error::Parse { .. } | Error::OutOfRange { .. })) => {
                if attempt >= retries {
                    return Err(e);
                }
                attempt += 1;
                log::warn!("selection attempt {attempt} unusable: {e}");
                if attempt == 1 {
                    request.user.push_str(&format_reminder(library));
                }
            }
            Err(e) => return Err(e),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub name: String,
    pub scene: SceneContext,
    pub instruction: String,
}

#[derive(Serialize, Deserialize)]
struct TaskFile {
    version: String,
    tasks: Vec<Task>,
}

pub fn load_tasks(path: &Path) -> Result<Vec<Task>> {
    let file: TaskFile = format::read_json(path)?;
    format::check_version("task list", &file.version)?;
    for t in &file.tasks {
        t.scene.validate().map_err(|e| Error::invalid(format!("task {}: {e}", t.name)))?;
    }
    Ok(file.tasks)
}

pub fn save_tasks(path: &Path, tasks: &[Task]) -> Result<()> {
    format::write_json(
        path,
        &TaskFile {
            version: format::current_version(),
            tasks: tasks.to_vec(),
        },
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskOutcome {
    pub task: String,
    pub trials: usize,
    /// Selections per skill id.
    pub counts: BTreeMap<u32, usize>,
    /// Trials whose selection failed.
    pub errors: usize,
    /// Execution successes, when an executor was supplied.
    pub executed_successes: Option<usize>,
}

impl TaskOutcome {
    pub fn frequency(&self, id: u32) -> f64 {
        if self.trials == 0 {
            return 0.0;
        }
        *self.counts.get(&id).unwrap_or(&0) as f64 / self.trials as f64
    }

    pub fn success_rate(&self) -> Option<f64> {
        self.executed_successes
            .map(|s| if self.trials == 0 { 0.0 } else { s as f64 / self.trials as f64 })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub skill_ids: Vec<u32>,
    pub tasks: Vec<TaskOutcome>,
}

impl SuiteReport {
    /// Selection percentages, one row per skill and one column per task,
    /// followed by the execution success row when available.
    pub fn table(&self) -> String {
        let mut out = String::from("P(skill | task) %");
        for t in &self.tasks {
            let _ = write!(out, "\t{}", t.task);
        }
        out.push('\n');
        for id in &self.skill_ids {
            let _ = write!(out, "Skill {id}");
            for t in &self.tasks {
                let _ = write!(out, "\t{:.0}", 100.0 * t.frequency(*id));
            }
            out.push('\n');
        }
        if self.tasks.iter().any(|t| t.errors > 0) {
            out.push_str("errors");
            for t in &self.tasks {
                let _ = write!(out, "\t{}", t.errors);
            }
            out.push('\n');
        }
        if self.tasks.iter().any(|t| t.executed_successes.is_some()) {
            out.push_str("SR %");
            for t in &self.tasks {
                match t.success_rate() {
                    Some(sr) => {
                        let _ = write!(out, "\t{:.0}", 100.0 * sr);
                    }
                    None => out.push_str("\t-"),
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Runs `n_trials` selections per task. A failed selection is counted and the
/// suite continues. When `execute` is given it runs the selected skill and
/// reports whether the episode succeeded.
pub fn run_task_suite(
    client: &mut dyn ChatClient,
    tasks: &[Task],
    library: &SkillLibrary,
    n_trials: usize,
    retries: usize,
    mut execute: Option<&mut dyn FnMut(&Task, &Skill, usize) -> Result<bool>>,
) -> SuiteReport {
    let mut report = SuiteReport {
        skill_ids: library.ids(),
        tasks: Vec::with_capacity(tasks.len()),
    };
    for task in tasks {
        let mut outcome = TaskOutcome {
            task: task.name.clone(),
            trials: n_trials,
            counts: BTreeMap::new(),
            errors: 0,
            executed_successes: execute.as_ref().map(|_| 0),
        };
        for trial in 0..n_trials {
            match select_skill(client, &task.scene, &task.instruction, library, retries) {
                Ok(sel) => {
                    *outcome.counts.entry(sel.skill_id).or_insert(0) += 1;
                    if let Some(exec) = execute.as_mut() {
                        let skill = library.get(sel.skill_id).expect("selection is validated");
                        match exec(task, skill, trial) {
                            Ok(true) => *outcome.executed_successes.as_mut().expect("set above") += 1,
                            Ok(false) => {}
                            Err(e) => log::warn!("{} trial {trial}: execution failed: {e}", task.name),
                        }
                    }
                }
                Err(e) => {
                    log::warn!("{} trial {trial}: {e}", task.name);
                    outcome.errors += 1;
                }
            }
        }
        report.tasks.push(outcome);
    }
    report
}

/// Pearson χ² statistic of `counts` against equal expected frequencies.
pub fn chi_square_uniform(counts: &[usize]) -> f64 {
    let n: usize = counts.iter().sum();
    if counts.is_empty() || n == 0 {
        return 0.0;
    }
    let expected = n as f64 / counts.len() as f64;
    counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum()
}

/// Three-skill bottle library: low grasp and upper grasp on a standing
/// bottle, and an upright-and-lift skill for a bottle on its side.
pub fn bottle_library(checkpoint_dir: &Path) -> SkillLibrary {
    let skill = |id: u32, description: &str, applicability: &str, file: &str| Skill {
        id,
        description: description.to_string(),
        checkpoint: checkpoint_dir.join(file),
        applicability: applicability.to_string(),
    };
    SkillLibrary::new(vec![
        skill(
            1,
            "Close the hand around the bottom of an upright bottle, then lift.",
            "standing bottle",
            "skill1.json",
        ),
        skill(
            2,
            "Close the hand around the upper middle of an upright bottle, then lift.",
            "standing bottle",
            "skill2.json",
        ),
        skill(
            3,
            "Pick up a bottle lying on its side, turn it upright, then lift.",
            "lying bottle",
            "skill3.json",
        ),
    ])
    .expect("static library is valid")
}

/// Bottle on the table, upright or on its side.
pub fn bottle_scene(orientation: Orientation) -> SceneContext {
    let pose = match orientation {
        Orientation::Standing => Pose::from_translation(0.5, 0.0, 0.13),
        Orientation::Lying => Pose::from_axis_angle(
            Vector3::new(0.5, 0.0, 0.05),
            Vector3::x(),
            std::f64::consts::FRAC_PI_2,
        ),
    };
    let summary = match orientation {
        Orientation::Standing => "A bleach cleanser bottle stands upright on the table.",
        Orientation::Lying => "A bleach cleanser bottle lies on its side on the table.",
    };
    SceneContext::from_pose("bleach-cleanser", pose, summary)
}

/// The five bottle tasks: two placements crossed with no preference, a
/// bottom grasp and a top grasp (the last only for the upright bottle).
pub fn bottle_tasks() -> Vec<Task> {
    let task = |name: &str, o: Orientation, instruction: &str| Task {
        name: name.to_string(),
        scene: bottle_scene(o),
        instruction: instruction.to_string(),
    };
    vec![
        task("T1", Orientation::Standing, ""),
        task("T2", Orientation::Standing, "Grasp the bottom of the bottle."),
        task("T3", Orientation::Standing, "Grasp the top of the bottle."),
        task("T4", Orientation::Lying, ""),
        task("T5", Orientation::Lying, "Grasp the bottom of the bottle."),
    ]
}
