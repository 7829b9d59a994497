use nalgebra::{Quaternion, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

/// Rigid transform: translation in meters plus a unit quaternion.
///
/// Quaternions are stored and serialized in `(w, x, y, z)` order everywhere in
/// this crate. Every constructor and operation renormalizes the rotation so
/// its norm stays within `1e-9` of one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub position: Vector3<f64>,
    pub rotation: UnitQuaternion<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Pose {
            position: Vector3::zeros(),
            rotation: UnitQuaternion::identity(),
        }
    }

    pub fn new(position: Vector3<f64>, rotation: UnitQuaternion<f64>) -> Self {
        Pose {
            position,
            rotation: renormalize(rotation),
        }
    }

    pub fn from_translation(x: f64, y: f64, z: f64) -> Self {
        Pose::new(Vector3::new(x, y, z), UnitQuaternion::identity())
    }

    /// Builds a pose from a raw `(w, x, y, z)` quaternion, normalizing it.
    /// Returns `None` for a zero or non-finite quaternion.
    pub fn from_wxyz(position: [f64; 3], wxyz: [f64; 4]) -> Option<Self> {
        let q = Quaternion::new(wxyz[0], wxyz[1], wxyz[2], wxyz[3]);
        let n = q.norm();
        if !(n.is_finite() && n > 1e-12) || position.iter().any(|v| !v.is_finite()) {
            return None;
        }
        Some(Pose {
            position: Vector3::from(position),
            rotation: UnitQuaternion::new_unchecked(q / n),
        })
    }

    pub fn from_axis_angle(position: Vector3<f64>, axis: Vector3<f64>, angle: f64) -> Self {
        let rotation = match Unit::try_new(axis, 1e-12) {
            Some(axis) => UnitQuaternion::from_axis_angle(&axis, angle),
            None => UnitQuaternion::identity(),
        };
        Pose::new(position, rotation)
    }

    pub fn wxyz(&self) -> [f64; 4] {
        let q = self.rotation.quaternion();
        [q.w, q.i, q.j, q.k]
    }

    /// `self ∘ other`: applies `other` first, expressed in `self`'s frame.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            position: self.position + self.rotation * other.position,
            rotation: renormalize(self.rotation * other.rotation),
        }
    }

    pub fn inverse(&self) -> Pose {
        let inv = self.rotation.inverse();
        Pose {
            position: -(inv * self.position),
            rotation: renormalize(inv),
        }
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.position + self.rotation * p
    }

    pub fn inverse_transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.inverse() * (p - self.position)
    }

    /// Rotation error `target · self⁻¹` as a scaled axis (world frame).
    pub fn rotation_error_to(&self, target: &Pose) -> Vector3<f64> {
        (target.rotation * self.rotation.inverse()).scaled_axis()
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|v| v.is_finite())
            && self.rotation.coords.iter().all(|v| v.is_finite())
    }

    /// Rotation of the pose about the world z-axis, in radians.
    pub fn yaw(&self) -> f64 {
        let x_axis = self.rotation * Vector3::x();
        x_axis.y.atan2(x_axis.x)
    }
}

fn renormalize(q: UnitQuaternion<f64>) -> UnitQuaternion<f64> {
    let c = q.into_inner();
    UnitQuaternion::new_unchecked(c / c.norm())
}

/// Geodesic angle between two rotations in `[0, π]`, computed as
/// `2·acos(|⟨q₁, q₂⟩|)` with the dot product clamped to `[0, 1]`.
pub fn geodesic_angle(a: &UnitQuaternion<f64>, b: &UnitQuaternion<f64>) -> f64 {
    let dot = a.coords.dot(&b.coords).abs().min(1.0);
    2.0 * dot.acos()
}

/// On-disk representation `{pos: [x, y, z], quat: [w, x, y, z]}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseRecord {
    pub pos: [f64; 3],
    pub quat: [f64; 4],
}

impl From<&Pose> for PoseRecord {
    fn from(p: &Pose) -> Self {
        PoseRecord {
            pos: [p.position.x, p.position.y, p.position.z],
            quat: p.wxyz(),
        }
    }
}

impl From<Pose> for PoseRecord {
    fn from(p: Pose) -> Self {
        PoseRecord::from(&p)
    }
}

impl TryFrom<PoseRecord> for Pose {
    type Error = crate::Error;

    fn try_from(r: PoseRecord) -> crate::Result<Pose> {
        Pose::from_wxyz(r.pos, r.quat)
            .ok_or_else(|| crate::Error::invalid(format!("degenerate pose record {r:?}")))
    }
}

impl Serialize for Pose {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        PoseRecord::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for Pose {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rec = PoseRecord::deserialize(d)?;
        Pose::try_from(rec).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn arb_pose() -> impl Strategy<Value = Pose> {
        (
            prop::array::uniform3(-2.0..2.0f64),
            prop::array::uniform4(-1.0..1.0f64),
        )
            .prop_filter_map("degenerate quaternion", |(p, q)| Pose::from_wxyz(p, q))
    }

    #[test]
    fn geodesic_half_turn() {
        let a = UnitQuaternion::identity();
        let b = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), PI);
        assert_relative_eq!(geodesic_angle(&a, &b), PI, epsilon = 1e-7);
        // q and -q are the same rotation
        let neg = UnitQuaternion::new_unchecked(-b.into_inner());
        assert_relative_eq!(geodesic_angle(&b, &neg), 0.0, epsilon = 1e-7);
    }

    #[test]
    fn rejects_zero_quaternion() {
        assert!(Pose::from_wxyz([0.0; 3], [0.0; 4]).is_none());
        assert!(Pose::from_wxyz([f64::NAN, 0.0, 0.0], [1.0, 0.0, 0.0, 0.0]).is_none());
    }

    proptest! {
        #[test]
        fn compose_with_inverse_is_identity(p in arb_pose()) {
            let id = p.compose(&p.inverse());
            prop_assert!(id.position.norm() < 1e-9);
            prop_assert!(geodesic_angle(&id.rotation, &UnitQuaternion::identity()) < 1e-7);
            prop_assert!((id.rotation.coords.norm() - 1.0).abs() < 1e-9);
        }

        #[test]
        fn compose_is_associative(a in arb_pose(), b in arb_pose(), c in arb_pose()) {
            let left = a.compose(&b).compose(&c);
            let right = a.compose(&b.compose(&c));
            prop_assert!((left.position - right.position).norm() < 1e-9);
            prop_assert!(geodesic_angle(&left.rotation, &right.rotation) < 1e-7);
        }

        #[test]
        fn unit_norm_preserved(a in arb_pose(), b in arb_pose()) {
            for p in [a.compose(&b), a.inverse(), b.compose(&a).inverse()] {
                prop_assert!((p.rotation.coords.norm() - 1.0).abs() < 1e-9);
            }
        }
    }
}
