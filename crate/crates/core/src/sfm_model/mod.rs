//! Sparse SfM reconstructions: cameras, registered images with poses, and 3D points,
//! read from and written to the COLMAP text model format.

mod pose;
mod text;

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::Vector3;

pub use pose::{camera_center, InvalidQuaternion, Pose, PoseConvention, QUATERNION_NORM_TOLERANCE};
pub(crate) use pose::quaternion_to_matrix;
pub use text::{
    parse_cameras, parse_images, parse_points3d, write_cameras, write_images, write_points3d,
};

pub type CameraId = u32;
pub type ImageId = u32;
pub type Point3dId = u64;

#[derive(Debug, thiserror::Error)]
pub enum SfmError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("line {line}: unsupported camera model {model} (only SIMPLE_PINHOLE and PINHOLE are accepted)")]
    UnsupportedCameraModel { line: usize, model: String },

    #[error("line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },

    #[error("line {line}: observation list length is not a multiple of 3")]
    OddObservationTriples { line: usize },

    #[error("line {line}: track list length is not a multiple of 2")]
    OddTrackPairs { line: usize },

    #[error("line {line}: {source}")]
    InvalidQuaternion {
        line: usize,
        #[source]
        source: InvalidQuaternion,
    },

    #[error("camera {camera_id}: {reason}")]
    InvalidIntrinsics { camera_id: CameraId, reason: String },

    #[error("line {line}: duplicate {kind} id {id}")]
    DuplicateId {
        line: usize,
        kind: &'static str,
        id: u64,
    },

    #[error("referential integrity violated: {0}")]
    Integrity(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CameraModel {
    SimplePinhole,
    Pinhole,
}

impl CameraModel {
    pub fn name(self) -> &'static str {
        match self {
            CameraModel::SimplePinhole => "SIMPLE_PINHOLE",
            CameraModel::Pinhole => "PINHOLE",
        }
    }
}

/// Undistorted pinhole intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub camera_id: CameraId,
    pub model: CameraModel,
    pub width: u32,
    pub height: u32,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraIntrinsics {
    #[allow(clippy::too_many_arguments)]
    pub fn pinhole(
        camera_id: CameraId,
        width: u32,
        height: u32,
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
    ) -> Result<Self, SfmError> {
        let cam = Self {
            camera_id,
            model: CameraModel::Pinhole,
            width,
            height,
            fx,
            fy,
            cx,
            cy,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn simple_pinhole(
        camera_id: CameraId,
        width: u32,
        height: u32,
        f: f64,
        cx: f64,
        cy: f64,
    ) -> Result<Self, SfmError> {
        let cam = Self {
            camera_id,
            model: CameraModel::SimplePinhole,
            width,
            height,
            fx: f,
            fy: f,
            cx,
            cy,
        };
        cam.validate()?;
        Ok(cam)
    }

    /// The principal point may sit anywhere as long as it is finite.
    pub fn validate(&self) -> Result<(), SfmError> {
        let fail = |reason: &str| {
            Err(SfmError::InvalidIntrinsics {
                camera_id: self.camera_id,
                reason: reason.to_string(),
            })
        };
        if self.width == 0 || self.height == 0 {
            return fail("image size must be positive");
        }
        if !(self.fx > 0.0 && self.fx.is_finite() && self.fy > 0.0 && self.fy.is_finite()) {
            return fail("focal lengths must be positive and finite");
        }
        if !(self.cx.is_finite() && self.cy.is_finite()) {
            return fail("principal point must be finite");
        }
        if self.model == CameraModel::SimplePinhole && self.fx != self.fy {
            return fail("SIMPLE_PINHOLE requires fx == fy");
        }
        Ok(())
    }

    /// Replaces the focal lengths and principal point, keeping id and image size.
    pub fn with_override(&self, fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self, SfmError> {
        let model = if fx == fy && self.model == CameraModel::SimplePinhole {
            CameraModel::SimplePinhole
        } else {
            CameraModel::Pinhole
        };
        let cam = Self {
            model,
            fx,
            fy,
            cx,
            cy,
            ..*self
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn size(&self) -> (usize, usize) {
        (self.width as usize, self.height as usize)
    }

    /// Continuous pixel coordinates of a camera-frame point; `None` when `z <= 0`.
    pub fn project(&self, p: &Vector3<f64>) -> Option<(f64, f64)> {
        if p.z > 0.0 {
            Some((self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy))
        } else {
            None
        }
    }

    /// Nearest integer pixel of a camera-frame point, if it lands inside the image.
    pub fn project_to_pixel(&self, p: &Vector3<f64>) -> Option<(usize, usize)> {
        let (u, v) = self.project(p)?;
        let (u, v) = (u.round(), v.round());
        if u >= 0.0 && v >= 0.0 && u < self.width as f64 && v < self.height as f64 {
            Some((u as usize, v as usize))
        } else {
            None
        }
    }

    /// Camera-frame point at depth `z` along the ray of pixel `(u, v)`.
    pub fn backproject(&self, u: f64, v: f64, z: f64) -> Vector3<f64> {
        Vector3::new((u - self.cx) * z / self.fx, (v - self.cy) * z / self.fy, z)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub x: f64,
    pub y: f64,
    pub point3d_id: Option<Point3dId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegisteredImage {
    pub image_id: ImageId,
    pub name: String,
    /// Stored exactly as read: world-to-camera.
    pub pose: Pose,
    pub camera_id: CameraId,
    pub observations: Vec<Observation>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrackElement {
    pub image_id: ImageId,
    pub point2d_idx: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Point3D {
    pub point3d_id: Point3dId,
    pub position: Vector3<f64>,
    pub color: [u8; 3],
    pub reprojection_error: f64,
    pub track: Vec<TrackElement>,
}

/// A parsed reconstruction. Immutable once loaded; maps are ordered by id so every
/// traversal is deterministic.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseModel {
    pub cameras: BTreeMap<CameraId, CameraIntrinsics>,
    pub images: BTreeMap<ImageId, RegisteredImage>,
    pub points: BTreeMap<Point3dId, Point3D>,
}

impl SparseModel {
    /// Assembles a model and checks referential integrity across the three maps.
    pub fn new(
        cameras: BTreeMap<CameraId, CameraIntrinsics>,
        images: BTreeMap<ImageId, RegisteredImage>,
        points: BTreeMap<Point3dId, Point3D>,
    ) -> Result<Self, SfmError> {
        let model = Self {
            cameras,
            images,
            points,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<(), SfmError> {
        for image in self.images.values() {
            if !self.cameras.contains_key(&image.camera_id) {
                return Err(SfmError::Integrity(format!(
                    "image {} references missing camera {}",
                    image.image_id, image.camera_id
                )));
            }
            for obs in &image.observations {
                if let Some(pid) = obs.point3d_id {
                    if !self.points.contains_key(&pid) {
                        return Err(SfmError::Integrity(format!(
                            "image {} observes missing point {}",
                            image.image_id, pid
                        )));
                    }
                }
            }
        }
        for point in self.points.values() {
            for el in &point.track {
                let Some(image) = self.images.get(&el.image_id) else {
                    return Err(SfmError::Integrity(format!(
                        "point {} track references missing image {}",
                        point.point3d_id, el.image_id
                    )));
                };
                if el.point2d_idx as usize >= image.observations.len() {
                    return Err(SfmError::Integrity(format!(
                        "point {} track references observation {} of image {} which has {}",
                        point.point3d_id,
                        el.point2d_idx,
                        el.image_id,
                        image.observations.len()
                    )));
                }
            }
        }
        Ok(())
    }

    /// Reads `cameras.txt`, `images.txt` and `points3D.txt` from a model directory.
    pub fn read_text_dir(dir: impl AsRef<Path>) -> Result<Self, SfmError> {
        let dir = dir.as_ref();
        let open = |name: &str| -> Result<_, SfmError> {
            Ok(std::io::BufReader::new(std::fs::File::open(dir.join(name))?))
        };
        let cameras = parse_cameras(open("cameras.txt")?)?;
        let images = parse_images(open("images.txt")?)?;
        let points = parse_points3d(open("points3D.txt")?)?;
        Self::new(cameras, images, points)
    }

    pub fn write_text_dir(&self, dir: impl AsRef<Path>) -> Result<(), SfmError> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let create = |name: &str| -> Result<_, SfmError> {
            Ok(std::io::BufWriter::new(std::fs::File::create(dir.join(name))?))
        };
        write_cameras(create("cameras.txt")?, &self.cameras)?;
        write_images(create("images.txt")?, &self.images)?;
        write_points3d(create("points3D.txt")?, &self.points)?;
        Ok(())
    }

    pub fn image_by_name(&self, name: &str) -> Option<&RegisteredImage> {
        self.images.values().find(|im| im.name == name)
    }

    pub fn intrinsics_for(&self, image_id: ImageId) -> Option<&CameraIntrinsics> {
        self.images
            .get(&image_id)
            .and_then(|im| self.cameras.get(&im.camera_id))
    }
}
