use std::collections::HashMap;
use std::path::Path;

use nalgebra::{DMatrix, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::pose::{Pose, PoseRecord};
use crate::error::{Error, Result};
use crate::format;

/// Name of the implicit root frame every chain hangs from.
pub const ROOT_FRAME: &str = "base";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JointType {
    Revolute,
    Prismatic,
    Fixed,
}

#[derive(Debug, Clone)]
pub struct Joint {
    pub name: String,
    pub kind: JointType,
    /// Unit axis in the joint frame (after `origin`).
    pub axis: Vector3<f64>,
    pub origin: Pose,
    pub lower: f64,
    pub upper: f64,
    /// Index of the parent joint; `None` means the root frame.
    pub parent: Option<usize>,
    /// Position in the joint-state vector for actuated joints.
    pub dof_index: Option<usize>,
}

/// Tree of joints, each of which also names the frame it produces.
///
/// Joints are stored in topological order: a parent always precedes its
/// children, so forward kinematics is a single pass.
#[derive(Debug, Clone)]
pub struct KinematicChain {
    pub name: String,
    joints: Vec<Joint>,
    fingertips: Vec<usize>,
    palm: usize,
    dof: usize,
    home: Option<Vec<f64>>,
    index: HashMap<String, usize>,
    /// Actuated joint index for each dof slot.
    actuated: Vec<usize>,
}

/// Joint positions for a chain, one entry per actuated joint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct JointState(pub Vec<f64>);

impl JointState {
    pub fn new(q: Vec<f64>) -> Self {
        JointState(q)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for JointState {
    fn from(v: Vec<f64>) -> Self {
        JointState(v)
    }
}

/// Chain description file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainFile {
    pub version: String,
    pub name: String,
    pub joints: Vec<JointRecord>,
    pub fingertips: Vec<String>,
    pub palm: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub home: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JointRecord {
    pub name: String,
    #[serde(rename = "type")]
    pub kind: JointType,
    /// Parent frame name; defaults to the previous joint, or the root for the first.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<String>,
    #[serde(default = "default_axis")]
    pub axis: [f64; 3],
    #[serde(default = "default_origin")]
    pub origin: PoseRecord,
    #[serde(default)]
    pub lower: f64,
    #[serde(default)]
    pub upper: f64,
}

fn default_axis() -> [f64; 3] {
    [0.0, 0.0, 1.0]
}

fn default_origin() -> PoseRecord {
    PoseRecord::from(Pose::identity())
}

impl KinematicChain {
    pub fn from_file_record(file: ChainFile) -> Result<Self> {
        format::check_version("chain", &file.version)?;
        Self::from_record(file)
    }

    /// Builds a chain without checking the file version (for in-memory construction).
    pub fn from_record(file: ChainFile) -> Result<Self> {
        let mut joints: Vec<Joint> = Vec::with_capacity(file.joints.len());
        let mut index: HashMap<String, usize> = HashMap::new();
        let mut actuated = Vec::new();
        for (i, rec) in file.joints.iter().enumerate() {
            if rec.name == ROOT_FRAME {
                return Err(Error::invalid(format!("joint name {ROOT_FRAME:?} is reserved")));
            }
            if index.contains_key(&rec.name) {
                return Err(Error::invalid(format!("duplicate joint name {:?}", rec.name)));
            }
            let parent = match rec.parent.as_deref() {
                None if i == 0 => None,
                None => Some(i - 1),
                Some(ROOT_FRAME) => None,
                Some(p) => Some(*index.get(p).ok_or_else(|| {
                    Error::invalid(format!(
                        "joint {:?}: parent {p:?} must be declared before its children",
                        rec.name
                    ))
                })?),
            };
            let origin = Pose::try_from(rec.origin)?;
            let axis = Vector3::from(rec.axis);
            let dof_index = match rec.kind {
                JointType::Fixed => None,
                _ => {
                    let n = axis.norm();
                    if !(n.is_finite() && n > 1e-12) {
                        return Err(Error::invalid(format!("joint {:?}: zero axis", rec.name)));
                    }
                    if !(rec.lower <= rec.upper) {
                        return Err(Error::invalid(format!(
                            "joint {:?}: lower {} > upper {}",
                            rec.name, rec.lower, rec.upper
                        )));
                    }
                    actuated.push(i);
                    Some(actuated.len() - 1)
                }
            };
            let axis = if axis.norm() > 1e-12 { axis.normalize() } else { Vector3::z() };
            index.insert(rec.name.clone(), i);
            joints.push(Joint {
                name: rec.name.clone(),
                kind: rec.kind,
                axis,
                origin,
                lower: rec.lower,
                upper: rec.upper,
                parent,
                dof_index,
            });
        }
        let lookup = |name: &str| {
            index
                .get(name)
                .copied()
                .ok_or_else(|| Error::invalid(format!("unknown frame {name:?}")))
        };
        if file.fingertips.is_empty() {
            return Err(Error::invalid("chain declares no fingertip frames"));
        }
        let fingertips = file
            .fingertips
            .iter()
            .map(|f| lookup(f))
            .collect::<Result<Vec<_>>>()?;
        let palm = lookup(&file.palm)?;
        let dof = actuated.len();
        if let Some(home) = &file.home {
            if home.len() != dof {
                return Err(Error::invalid(format!(
                    "home has {} entries, chain has {dof} dof",
                    home.len()
                )));
            }
        }
        let chain = KinematicChain {
            name: file.name,
            joints,
            fingertips,
            palm,
            dof,
            home: file.home,
            index,
            actuated,
        };
        if let Some(home) = &chain.home {
            if !chain.within_limits(home) {
                return Err(Error::invalid("home configuration violates joint limits"));
            }
        }
        Ok(chain)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file: ChainFile = format::read_json(path)?;
        Self::from_file_record(file)
    }

    pub fn to_record(&self) -> ChainFile {
        ChainFile {
            version: format::current_version(),
            name: self.name.clone(),
            joints: self
                .joints
                .iter()
                .map(|j| JointRecord {
                    name: j.name.clone(),
                    kind: j.kind,
                    parent: Some(
                        j.parent
                            .map(|p| self.joints[p].name.clone())
                            .unwrap_or_else(|| ROOT_FRAME.to_string()),
                    ),
                    axis: [j.axis.x, j.axis.y, j.axis.z],
                    origin: PoseRecord::from(&j.origin),
                    lower: j.lower,
                    upper: j.upper,
                })
                .collect(),
            fingertips: self.fingertip_names().map(str::to_string).collect(),
            palm: self.joints[self.palm].name.clone(),
            home: self.home.clone(),
        }
    }

    pub fn dof(&self) -> usize {
        self.dof
    }

    pub fn joints(&self) -> &[Joint] {
        &self.joints
    }

    /// Actuated joints in state-vector order.
    pub fn actuated_joints(&self) -> impl Iterator<Item = &Joint> {
        self.actuated.iter().map(move |&i| &self.joints[i])
    }

    pub fn frame_index(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn frame_name(&self, index: usize) -> &str {
        &self.joints[index].name
    }

    pub fn fingertip_frames(&self) -> &[usize] {
        &self.fingertips
    }

    pub fn fingertip_names(&self) -> impl Iterator<Item = &str> {
        self.fingertips.iter().map(move |&i| self.joints[i].name.as_str())
    }

    pub fn palm_frame(&self) -> usize {
        self.palm
    }

    pub fn lower_limits(&self) -> Vec<f64> {
        self.actuated_joints().map(|j| j.lower).collect()
    }

    pub fn upper_limits(&self) -> Vec<f64> {
        self.actuated_joints().map(|j| j.upper).collect()
    }

    pub fn mid_range(&self) -> JointState {
        JointState(self.actuated_joints().map(|j| 0.5 * (j.lower + j.upper)).collect())
    }

    /// Configured home joints, falling back to mid-range.
    pub fn home(&self) -> JointState {
        match &self.home {
            Some(h) => JointState(h.clone()),
            None => self.mid_range(),
        }
    }

    pub fn within_limits(&self, q: &[f64]) -> bool {
        q.len() == self.dof
            && self
                .actuated_joints()
                .zip(q)
                .all(|(j, &v)| v >= j.lower && v <= j.upper)
    }

    pub fn clamp_in_place(&self, q: &mut [f64]) {
        for (j, v) in self.actuated_joints().zip(q.iter_mut()) {
            *v = v.clamp(j.lower, j.upper);
        }
    }

    pub fn clamp(&self, q: &[f64]) -> JointState {
        let mut out = q.to_vec();
        self.clamp_in_place(&mut out);
        JointState(out)
    }

    fn check_dim(&self, q: &[f64]) -> Result<()> {
        if q.len() != self.dof {
            return Err(Error::invalid(format!(
                "chain {:?} has {} dof, got a joint state of length {}",
                self.name,
                self.dof,
                q.len()
            )));
        }
        Ok(())
    }

    /// World pose of every frame, indexed like [`KinematicChain::joints`].
    pub fn frame_poses(&self, q: &[f64]) -> Result<Vec<Pose>> {
        self.check_dim(q)?;
        let mut poses: Vec<Pose> = Vec::with_capacity(self.joints.len());
        for joint in &self.joints {
            let parent = match joint.parent {
                Some(p) => poses[p],
                None => Pose::identity(),
            };
            let mut pose = parent.compose(&joint.origin);
            if let Some(k) = joint.dof_index {
                pose = pose.compose(&joint_motion(joint, q[k]));
            }
            poses.push(pose);
        }
        Ok(poses)
    }

    /// Geometric Jacobian (6 × dof, linear rows first) of `frame` in world coordinates.
    pub fn jacobian_from_poses(&self, poses: &[Pose], frame: usize) -> DMatrix<f64> {
        let mut jac = DMatrix::zeros(6, self.dof);
        let target = poses[frame].position;
        let mut cursor = Some(frame);
        while let Some(i) = cursor {
            let joint = &self.joints[i];
            if let Some(k) = joint.dof_index {
                let axis = poses[i].rotation * joint.axis;
                match joint.kind {
                    JointType::Revolute => {
                        let lin = axis.cross(&(target - poses[i].position));
                        jac.fixed_view_mut::<3, 1>(0, k).copy_from(&lin);
                        jac.fixed_view_mut::<3, 1>(3, k).copy_from(&axis);
                    }
                    JointType::Prismatic => {
                        jac.fixed_view_mut::<3, 1>(0, k).copy_from(&axis);
                    }
                    JointType::Fixed => {}
                }
            }
            cursor = joint.parent;
        }
        jac
    }
}

fn joint_motion(joint: &Joint, value: f64) -> Pose {
    match joint.kind {
        JointType::Revolute => Pose {
            position: Vector3::zeros(),
            rotation: UnitQuaternion::from_axis_angle(
                &nalgebra::Unit::new_unchecked(joint.axis),
                value,
            ),
        },
        JointType::Prismatic => Pose {
            position: joint.axis * value,
            rotation: UnitQuaternion::identity(),
        },
        JointType::Fixed => Pose::identity(),
    }
}

/// World poses of all named frames produced by [`forward_kinematics`].
#[derive(Debug, Clone)]
pub struct FramePoses<'a> {
    chain: &'a KinematicChain,
    poses: Vec<Pose>,
}

impl<'a> FramePoses<'a> {
    pub fn get(&self, name: &str) -> Option<&Pose> {
        self.chain.frame_index(name).map(|i| &self.poses[i])
    }

    pub fn by_index(&self, index: usize) -> &Pose {
        &self.poses[index]
    }

    pub fn fingertips(&self) -> impl Iterator<Item = &Pose> {
        self.chain.fingertips.iter().map(move |&i| &self.poses[i])
    }

    pub fn palm(&self) -> &Pose {
        &self.poses[self.chain.palm]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Pose)> {
        self.chain
            .joints
            .iter()
            .map(|j| j.name.as_str())
            .zip(self.poses.iter())
    }

    pub fn into_poses(self) -> Vec<Pose> {
        self.poses
    }
}

pub fn forward_kinematics<'a>(chain: &'a KinematicChain, q: &JointState) -> Result<FramePoses<'a>> {
    let poses = chain.frame_poses(&q.0)?;
    Ok(FramePoses { chain, poses })
}

pub fn jacobian(chain: &KinematicChain, q: &JointState, frame: &str) -> Result<DMatrix<f64>> {
    let idx = chain
        .frame_index(frame)
        .ok_or_else(|| Error::NotFound(format!("frame {frame:?} in chain {:?}", chain.name)))?;
    let poses = chain.frame_poses(&q.0)?;
    Ok(chain.jacobian_from_poses(&poses, idx))
}
