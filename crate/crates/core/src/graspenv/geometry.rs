use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::Pose;

/// Object shape in its own frame, centered at the origin. Cylinders run
/// along the local z axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Primitive {
    /// Full side lengths, m.
    Box { dims: [f64; 3] },
    Cylinder { radius: f64, height: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrimitiveKind {
    Box,
    Cylinder,
}

impl Primitive {
    /// Builds from the file form: box dims `[x, y, z]`, cylinder dims `[r, h]`.
    pub fn from_dims(kind: PrimitiveKind, dims: &[f64]) -> Result<Self> {
        let p = match (kind, dims) {
            (PrimitiveKind::Box, &[x, y, z]) => Primitive::Box { dims: [x, y, z] },
            (PrimitiveKind::Cylinder, &[radius, height]) => Primitive::Cylinder { radius, height },
            (PrimitiveKind::Box, _) => return Err(Error::invalid("box dims must be [x, y, z]")),
            (PrimitiveKind::Cylinder, _) => return Err(Error::invalid("cylinder dims must be [radius, height]")),
        };
        if p.dims().iter().any(|d| !(d.is_finite() && *d > 0.0)) {
            return Err(Error::invalid(format!("object dims must be positive, got {dims:?}")));
        }
        Ok(p)
    }

    pub fn kind(&self) -> PrimitiveKind {
        match self {
            Primitive::Box { .. } => PrimitiveKind::Box,
            Primitive::Cylinder { .. } => PrimitiveKind::Cylinder,
        }
    }

    pub fn dims(&self) -> Vec<f64> {
        match *self {
            Primitive::Box { dims } => dims.to_vec(),
            Primitive::Cylinder { radius, height } => vec![radius, height],
        }
    }

    /// Signed distance from a point in the object frame; negative inside.
    pub fn local_signed_distance(&self, p: &Vector3<f64>) -> f64 {
        match *self {
            Primitive::Box { dims } => {
                let q = p.abs() - Vector3::from(dims) / 2.0;
                q.map(|v| v.max(0.0)).norm() + q.max().min(0.0)
            }
            Primitive::Cylinder { radius, height } => {
                let q = Vector2::new(p.xy().norm() - radius, p.z.abs() - height / 2.0);
                q.map(|v| v.max(0.0)).norm() + q.max().min(0.0)
            }
        }
    }

    /// Lowest world z of the primitive placed at `pose`.
    pub fn lowest_point(&self, pose: &Pose) -> f64 {
        let r = pose.rotation.to_rotation_matrix();
        let m = r.matrix();
        match *self {
            Primitive::Box { dims } => {
                let extent: f64 = (0..3).map(|i| m[(2, i)].abs() * dims[i] / 2.0).sum();
                pose.position.z - extent
            }
            Primitive::Cylinder { radius, height } => {
                let az = m[(2, 2)];
                let extent = az.abs() * height / 2.0 + radius * (1.0 - az * az).max(0.0).sqrt();
                pose.position.z - extent
            }
        }
    }
}

/// Signed distance from a world point to a primitive placed at `pose`.
pub fn signed_distance(point: &Vector3<f64>, primitive: &Primitive, pose: &Pose) -> f64 {
    primitive.local_signed_distance(&pose.inverse_transform_point(point))
}
