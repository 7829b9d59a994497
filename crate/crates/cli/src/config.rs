//! Project configuration file (TOML).
//!
//! Relative paths are resolved against the directory holding the file.
//! Command-line flags take precedence over file values, which take
//! precedence over built-in defaults.

use std::path::{Path, PathBuf};

use dexgrasp::curriculum::CurriculumConfig;
use dexgrasp::format;
use dexgrasp::retarget::RetargetParams;
use dexgrasp::reward::RewardConfig;
use dexgrasp::trainer::TrainConfig;
use dexgrasp::{Error, Result};
use serde::Deserialize;

/// Input files. Every path given here must exist when the file is loaded.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub rig: Option<PathBuf>,
    pub scene: Option<PathBuf>,
    pub human: Option<PathBuf>,
    pub trajectory: Option<PathBuf>,
    pub reference: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub library: Option<PathBuf>,
    pub tasks: Option<PathBuf>,
}

impl Paths {
    pub fn entries(&self) -> Vec<(&'static str, &Option<PathBuf>)> {
        vec![
            ("rig", &self.rig),
            ("scene", &self.scene),
            ("human", &self.human),
            ("trajectory", &self.trajectory),
            ("reference", &self.reference),
            ("checkpoint", &self.checkpoint),
            ("library", &self.library),
            ("tasks", &self.tasks),
        ]
    }

    fn entries_mut(&mut self) -> Vec<&mut Option<PathBuf>> {
        vec![
            &mut self.rig,
            &mut self.scene,
            &mut self.human,
            &mut self.trajectory,
            &mut self.reference,
            &mut self.checkpoint,
            &mut self.library,
            &mut self.tasks,
        ]
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProjectConfig {
    pub version: String,
    /// `error`, `warn`, `info`, `debug` or `trace`.
    pub log_level: Option<String>,
    /// Directory for outputs whose path is not given on the command line.
    pub out_dir: PathBuf,
    pub paths: Paths,
    pub reward: RewardConfig,
    /// Replaces `train.curriculum` when present.
    pub curriculum: Option<CurriculumConfig>,
    pub train: TrainConfig,
    pub retarget: RetargetParams,
    /// Savitzky–Golay window for `retarget`; 0 disables smoothing.
    pub smooth_window: usize,
}

pub const DEFAULT_SMOOTH_WINDOW: usize = 7;

impl Default for ProjectConfig {
    fn default() -> Self {
        ProjectConfig {
            version: format::current_version(),
            log_level: None,
            out_dir: PathBuf::from("out"),
            paths: Paths::default(),
            reward: RewardConfig::default(),
            curriculum: None,
            train: TrainConfig::default(),
            retarget: RetargetParams::default(),
            smooth_window: DEFAULT_SMOOTH_WINDOW,
        }
    }
}

impl ProjectConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg: ProjectConfig = toml::from_str(&text)
            .map_err(|e| Error::invalid(format!("{}: {}", path.display(), e.message())))?;
        format::check_version("project config", &cfg.version)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in cfg.paths.entries_mut().into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if cfg.out_dir.is_relative() {
            cfg.out_dir = base.join(&cfg.out_dir);
        }
        if let Some(c) = cfg.curriculum {
            cfg.train.curriculum = c;
        }
        let missing: Vec<String> = cfg
            .paths
            .entries()
            .into_iter()
            .filter_map(|(name, p)| p.as_ref().filter(|p| !p.exists()).map(|p| format!("paths.{name} = {}", p.display())))
            .collect();
        if !missing.is_empty() {
            return Err(Error::NotFound(format!(
                "{} lists missing files: {}",
                path.display(),
                missing.join("; ")
            )));
        }
        Ok(cfg)
    }

    /// Every problem with the numeric settings, not just the first.
    pub fn violations(&self) -> Vec<String> {
        let mut out = self.reward.violations();
        out.extend(self.train.violations());
        if let Err(e) = self.retarget.validate() {
            out.push(format!("retarget: {e}"));
        }
        if self.smooth_window != 0 && (self.smooth_window < 3 || self.smooth_window % 2 == 0) {
            out.push(format!(
                "smooth_window must be 0 or an odd number of at least 3, got {}",
                self.smooth_window
            ));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::invalid(format!("configuration has {} problem(s):\n  {}", v.len(), v.join("\n  "))))
        }
    }
}

/// Flag value, else file value, else an error naming both.
pub fn pick(flag: Option<PathBuf>, file: &Option<PathBuf>, flag_name: &str, key: &str) -> Result<PathBuf> {
    flag.or_else(|| file.clone())
        .ok_or_else(|| Error::invalid(format!("no {key} given: pass --{flag_name} or set paths.{key} in the config")))
}
