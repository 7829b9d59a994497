mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dexgrasp::Error;

use config::ProjectConfig;

/// Dexterous grasp pipeline: retarget demonstrations, build reference
/// trajectories, train and evaluate policies, and select skills.
///
/// Exit codes: 0 success, 1 domain failure, 2 usage or configuration error.
#[derive(Parser, Debug)]
#[command(name = "dexgrasp", version)]
pub struct Cli {
    /// Project configuration file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Log level: error, warn, info, debug or trace.
    #[arg(long, global = true)]
    log_level: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Retarget a human trajectory onto a robot and smooth it.
    Retarget(RetargetArgs),
    /// Build the reference trajectory for the reward from a robot trajectory.
    MakeRef(MakeRefArgs),
    /// Train a grasping policy with PPO.
    Train(TrainArgs),
    /// Evaluate a checkpoint under pose randomization.
    Eval(EvalArgs),
    /// Ask a model which skill fits a scene and instruction.
    Select(SelectArgs),
    /// Select a skill and run its policy.
    Demo(DemoArgs),
    /// Check the configuration and every file it references.
    Validate(ValidateArgs),
}

#[derive(Args, Debug)]
pub struct RetargetArgs {
    /// Rig file (arm and hand chains).
    #[arg(long)]
    pub rig: Option<PathBuf>,
    /// Human trajectory file.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Output robot trajectory file.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Smoothing window; 0 disables smoothing.
    #[arg(long)]
    pub smooth_window: Option<usize>,
}

#[derive(Args, Debug)]
pub struct MakeRefArgs {
    #[arg(long)]
    pub rig: Option<PathBuf>,
    /// Robot trajectory file.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub scene: Option<PathBuf>,
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// Output checkpoint.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Metrics CSV; defaults to the checkpoint path with a `.csv` extension.
    #[arg(long)]
    pub metrics: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Parallel rollout threads.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Environment step budget.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Train at full randomization from the start.
    #[arg(long)]
    pub direct: bool,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    pub episodes: usize,
    /// Randomization level in [0, 1].
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Per-episode CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum OrientationArg {
    Standing,
    Lying,
}

#[derive(Args, Debug)]
pub struct ClientArgs {
    /// Offline rule-based model.
    #[arg(long, group = "client")]
    pub mock: bool,
    /// Uniform random baseline.
    #[arg(long, group = "client")]
    pub random: bool,
    /// Chat-completions endpoint for a live model.
    #[arg(long, group = "client")]
    pub endpoint: Option<String>,
    #[arg(long, default_value = "gpt-4o")]
    pub model: String,
    /// Environment variable holding the API key.
    #[arg(long, default_value = dexgrasp::skillselect::DEFAULT_API_KEY_VAR)]
    pub api_key_env: String,
    /// Request timeout, seconds.
    #[arg(long, default_value_t = 60)]
    pub timeout: u64,
    /// Extra attempts when a reply names no valid skill.
    #[arg(long, default_value_t = 2)]
    pub retries: usize,
}

#[derive(Args, Debug)]
pub struct SceneArgs {
    #[arg(long)]
    pub library: Option<PathBuf>,
    /// Task name from the task list, e.g. T2.
    #[arg(long, conflicts_with = "orientation")]
    pub task: Option<String>,
    /// Task list file; the built-in bottle tasks are used when absent.
    #[arg(long)]
    pub tasks: Option<PathBuf>,
    /// Bottle placement, when no task is named.
    #[arg(long, value_enum)]
    pub orientation: Option<OrientationArg>,
    /// Free-form instruction; overrides the task's instruction.
    #[arg(long)]
    pub instruction: Option<String>,
}

#[derive(Args, Debug)]
pub struct SelectArgs {
    #[command(flatten)]
    pub client: ClientArgs,
    #[command(flatten)]
    pub scene: SceneArgs,
    /// Run every task this many times and print the selection table.
    #[arg(long)]
    pub suite: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct DemoArgs {
    #[command(flatten)]
    pub client: ClientArgs,
    #[command(flatten)]
    pub scene: SceneArgs,
    /// Select only; do not run the policy.
    #[arg(long)]
    pub dry_run: bool,
    #[arg(long, default_value_t = 1)]
    pub episodes: usize,
    #[arg(long, default_value_t = 0.0)]
    pub sigma: f64,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum FileKind {
    Chain,
    Rig,
    Scene,
    Human,
    Trajectory,
    Reference,
    Checkpoint,
    Library,
    Tasks,
}

#[derive(Args, Debug)]
pub struct ValidateArgs {
    /// Kind of the files given on the command line.
    #[arg(long, value_enum)]
    pub kind: Option<FileKind>,
    /// Files to check instead of those listed in the config.
    pub files: Vec<PathBuf>,
}

/// Usage and configuration problems exit with 2, everything else with 1.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidArgument(_) | Error::NotFound(_) | Error::Io { .. } | Error::Json { .. } | Error::Version { .. } => 2,
        Error::AtFrame { source, .. } | Error::AtEnv { source, .. } => exit_code(source),
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let project = match &cli.config {
        Some(path) => ProjectConfig::load(path),
        None => Ok(ProjectConfig::default()),
    };
    let level = cli
        .log_level
        .clone()
        .or_else(|| project.as_ref().ok().and_then(|p| p.log_level.clone()))
        .unwrap_or_else(|| "warn".to_string());
    env_logger::Builder::new().parse_filters(&level).parse_default_env().init();

    let result = project.and_then(|p| commands::run(cli.command, &p));
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
