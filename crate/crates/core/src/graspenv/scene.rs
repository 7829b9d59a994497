use std::path::Path;

use serde::{Deserialize, Serialize};

use super::geometry::{Primitive, PrimitiveKind};
use crate::error::{Error, Result};
use crate::format;
use crate::kinematics::{ChainFile, KinematicChain, Pose, Rig};

pub const DEFAULT_HORIZON: usize = 80;
pub const DEFAULT_TARGET_HEIGHT: f64 = 0.20;
pub const DEFAULT_ACTION_SCALE: f64 = 0.05;
pub const DEFAULT_CONTACT_TOLERANCE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectSpec {
    pub name: String,
    pub primitive: Primitive,
    pub init_pose: Pose,
}

/// Axis-aligned xy rectangle the object must start inside.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TableBounds {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Default for TableBounds {
    fn default() -> Self {
        TableBounds {
            min: [-1.0, -1.0],
            max: [1.0, 1.0],
        }
    }
}

impl TableBounds {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        (self.min[0]..=self.max[0]).contains(&x) && (self.min[1]..=self.max[1]).contains(&y)
    }
}

#[derive(Debug, Clone)]
pub struct EnvConfig {
    pub name: String,
    pub rig: Rig,
    pub object: ObjectSpec,
    /// Episode horizon H, steps.
    pub horizon: usize,
    /// Joint displacement per unit action, rad (or m for prismatic joints).
    pub action_scale: f64,
    /// Contact tolerance δ on fingertip signed distance, m.
    pub contact_tolerance: f64,
    pub target_height: f64,
    pub table_height: f64,
    pub table_bounds: TableBounds,
    /// End the episode as soon as the object is lifted. Training may turn
    /// this off to run fixed-horizon episodes.
    pub terminate_on_success: bool,
}

impl EnvConfig {
    pub fn new(name: impl Into<String>, rig: Rig, object: ObjectSpec) -> Self {
        EnvConfig {
            name: name.into(),
            rig,
            object,
            horizon: DEFAULT_HORIZON,
            action_scale: DEFAULT_ACTION_SCALE,
            contact_tolerance: DEFAULT_CONTACT_TOLERANCE,
            target_height: DEFAULT_TARGET_HEIGHT,
            table_height: 0.0,
            table_bounds: TableBounds::default(),
            terminate_on_success: true,
        }
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.horizon < 1 {
            out.push("H must be at least 1".to_string());
        }
        if !(self.contact_tolerance > 0.0 && self.contact_tolerance.is_finite()) {
            out.push(format!("delta must be positive, got {}", self.contact_tolerance));
        }
        if !(self.action_scale > 0.0 && self.action_scale.is_finite()) {
            out.push(format!("action_scale must be positive, got {}", self.action_scale));
        }
        if !(self.target_height > 0.0 && self.target_height.is_finite()) {
            out.push(format!("target_height must be positive, got {}", self.target_height));
        }
        if !self.table_height.is_finite() {
            out.push("table_height must be finite".to_string());
        }
        let b = &self.table_bounds;
        if !(b.min[0] < b.max[0] && b.min[1] < b.max[1]) {
            out.push("table_bounds min must be below max".to_string());
        }
        let p = &self.object.init_pose;
        if !p.is_finite() {
            out.push("object init_pose must be finite".to_string());
        } else if !b.contains(p.position.x, p.position.y) {
            out.push("object init_pose lies outside the table bounds".to_string());
        }
        let home = (self.rig.arm.home(), self.rig.hand.home());
        if !self.rig.arm.within_limits(home.0.as_slice()) || !self.rig.hand.within_limits(home.1.as_slice()) {
            out.push("home joints violate the chain limits".to_string());
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::invalid(v.join("; ")))
        }
    }

    pub fn observation_len(&self) -> usize {
        self.rig.arm.dof() + self.rig.hand.dof() + 15 + 7 + 1
    }

    pub fn action_len(&self) -> usize {
        self.rig.arm.dof() + self.rig.hand.dof()
    }

    pub fn to_file(&self) -> SceneFile {
        SceneFile {
            version: format::current_version(),
            name: self.name.clone(),
            chains: ChainsRecord {
                arm: self.rig.arm.to_record(),
                hand: self.rig.hand.to_record(),
            },
            object: ObjectRecord {
                name: self.object.name.clone(),
                kind: self.object.primitive.kind(),
                dims: self.object.primitive.dims(),
                init_pose: self.object.init_pose,
            },
            table_height: self.table_height,
            table_bounds: self.table_bounds,
            horizon: self.horizon,
            action_scale: self.action_scale,
            delta: self.contact_tolerance,
            target_height: self.target_height,
            terminate_on_success: self.terminate_on_success,
        }
    }

    pub fn from_file(file: SceneFile) -> Result<Self> {
        format::check_version("scene", &file.version)?;
        let rig = Rig::new(
            KinematicChain::from_file_record(file.chains.arm)?,
            KinematicChain::from_file_record(file.chains.hand)?,
        )?;
        let cfg = EnvConfig {
            name: file.name,
            rig,
            object: ObjectSpec {
                name: file.object.name,
                primitive: Primitive::from_dims(file.object.kind, &file.object.dims)?,
                init_pose: file.object.init_pose,
            },
            horizon: file.horizon,
            action_scale: file.action_scale,
            contact_tolerance: file.delta,
            target_height: file.target_height,
            table_height: file.table_height,
            table_bounds: file.table_bounds,
            terminate_on_success: file.terminate_on_success,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_file(format::read_json(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        format::write_json(path, &self.to_file())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainsRecord {
    pub arm: ChainFile,
    pub hand: ChainFile,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObjectRecord {
    #[serde(default)]
    pub name: String,
    pub kind: PrimitiveKind,
    pub dims: Vec<f64>,
    pub init_pose: Pose,
}

fn default_horizon() -> usize {
    DEFAULT_HORIZON
}
fn default_action_scale() -> f64 {
    DEFAULT_ACTION_SCALE
}
fn default_delta() -> f64 {
    DEFAULT_CONTACT_TOLERANCE
}
fn default_target_height() -> f64 {
    DEFAULT_TARGET_HEIGHT
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneFile {
    pub version: String,
    #[serde(default)]
    pub name: String,
    pub chains: ChainsRecord,
    pub object: ObjectRecord,
    #[serde(default)]
    pub table_height: f64,
    #[serde(default)]
    pub table_bounds: TableBounds,
    #[serde(rename = "H", default = "default_horizon")]
    pub horizon: usize,
    #[serde(default = "default_action_scale")]
    pub action_scale: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_target_height")]
    pub target_height: f64,
    #[serde(default = "default_true")]
    pub terminate_on_success: bool,
}
