use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

/// Largest quaternion norm deviation from 1 that is silently renormalized on load.
pub const QUATERNION_NORM_TOLERANCE: f64 = 1e-3;

/// Deviations at or below this are treated as already unit-length and left bit-for-bit intact.
const RENORMALIZE_EPSILON: f64 = 1e-12;

/// Direction of a rigid transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PoseConvention {
    /// Maps world coordinates into the camera frame (`x_cam = R x_world + t`), as stored by SfM tools.
    WorldToCamera,
    /// Maps camera coordinates into the world frame; the translation is the camera center.
    CameraToWorld,
}

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
#[error("quaternion norm {norm} deviates from 1 by more than {QUATERNION_NORM_TOLERANCE}")]
pub struct InvalidQuaternion {
    pub norm: f64,
}

/// Rigid transform with an explicit direction convention.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: UnitQuaternion<f64>,
    pub translation: Vector3<f64>,
    pub convention: PoseConvention,
}

impl Pose {
    pub fn identity(convention: PoseConvention) -> Self {
        Self {
            rotation: UnitQuaternion::identity(),
            translation: Vector3::zeros(),
            convention,
        }
    }

    /// Builds a pose from a raw `(qw, qx, qy, qz)` quaternion.
    ///
    /// Quaternions within [`QUATERNION_NORM_TOLERANCE`] of unit length are renormalized,
    /// anything further off (or non-finite) is rejected.
    pub fn from_wxyz(
        wxyz: [f64; 4],
        translation: Vector3<f64>,
        convention: PoseConvention,
    ) -> Result<Self, InvalidQuaternion> {
        let q = Quaternion::new(wxyz[0], wxyz[1], wxyz[2], wxyz[3]);
        let norm = q.norm();
        if !norm.is_finite() || (norm - 1.0).abs() > QUATERNION_NORM_TOLERANCE {
            return Err(InvalidQuaternion { norm });
        }
        let rotation = if (norm - 1.0).abs() > RENORMALIZE_EPSILON {
            UnitQuaternion::from_quaternion(q)
        } else {
            UnitQuaternion::new_unchecked(q)
        };
        Ok(Self {
            rotation,
            translation,
            convention,
        })
    }

    /// Quaternion components as `(qw, qx, qy, qz)`.
    pub fn wxyz(&self) -> [f64; 4] {
        let q = self.rotation.quaternion();
        [q.w, q.i, q.j, q.k]
    }

    /// Rotation matrix expanded directly from the quaternion components.
    ///
    /// A quaternion with zero vector part yields the exact identity matrix.
    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        quaternion_to_matrix(&self.rotation)
    }

    /// The same transform expressed in the opposite convention.
    pub fn inverse(&self) -> Self {
        let rotation = self.rotation.inverse();
        let translation = -(quaternion_to_matrix(&rotation) * self.translation);
        let convention = match self.convention {
            PoseConvention::WorldToCamera => PoseConvention::CameraToWorld,
            PoseConvention::CameraToWorld => PoseConvention::WorldToCamera,
        };
        Self {
            rotation,
            translation,
            convention,
        }
    }

    pub fn to_camera_to_world(&self) -> Self {
        match self.convention {
            PoseConvention::CameraToWorld => *self,
            PoseConvention::WorldToCamera => self.inverse(),
        }
    }

    pub fn to_world_to_camera(&self) -> Self {
        match self.convention {
            PoseConvention::WorldToCamera => *self,
            PoseConvention::CameraToWorld => self.inverse(),
        }
    }

    /// Camera center in world coordinates: `-Rᵀt` for world-to-camera poses,
    /// the translation itself for camera-to-world poses.
    pub fn camera_center(&self) -> Vector3<f64> {
        match self.convention {
            PoseConvention::CameraToWorld => self.translation,
            PoseConvention::WorldToCamera => {
                -(self.rotation_matrix().transpose() * self.translation)
            }
        }
    }

    /// Applies the transform in its own direction: `R x + t`.
    pub fn transform_point(&self, point: &Vector3<f64>) -> Vector3<f64> {
        self.rotation_matrix() * point + self.translation
    }

    /// Maps a world point into this camera's frame regardless of convention.
    pub fn world_to_camera_point(&self, point: &Vector3<f64>) -> Vector3<f64> {
        match self.convention {
            PoseConvention::WorldToCamera => self.transform_point(point),
            PoseConvention::CameraToWorld => {
                self.rotation_matrix().transpose() * (point - self.translation)
            }
        }
    }
}

/// Camera center of a pose; see [`Pose::camera_center`].
pub fn camera_center(pose: &Pose) -> Vector3<f64> {
    pose.camera_center()
}

pub(crate) fn quaternion_to_matrix(q: &UnitQuaternion<f64>) -> Matrix3<f64> {
    let q = q.quaternion();
    let (w, x, y, z) = (q.w, q.i, q.j, q.k);
    Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}
