//! Forward warping of the metric anchor depth into co-registered frames.
//!
//! Each valid anchor pixel is lifted to 3D, moved into the target camera, projected and
//! rounded to the nearest integer pixel. Collisions keep the nearest depth; pixels no
//! sample reaches stay invalid. Integer pixel indices are used as sample coordinates
//! (no half-pixel offset) in both directions.

use std::collections::BTreeMap;

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;

use crate::depth_io::{DepthMap, DepthUnit};
use crate::sfm_model::{quaternion_to_matrix, CameraIntrinsics, ImageId, Pose, SparseModel};

#[derive(Debug, thiserror::Error)]
pub enum ReprojectionError {
    #[error("anchor depth must be in millimeters, got {0:?}")]
    NonMetricInput(DepthUnit),

    #[error("anchor depth is {found:?} but its intrinsics describe {expected:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("no intrinsics for image {0}")]
    MissingIntrinsics(ImageId),

    #[error("anchor image {0} has no metric pose")]
    AnchorNotInPoseMap(ImageId),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BackprojectedSample {
    pub u: usize,
    pub v: usize,
    /// Camera-frame point in the depth map's units.
    pub point: Vector3<f64>,
}

/// Lifts every valid pixel to a camera-frame point, in row-major scan order.
pub fn backproject(depth: &DepthMap, intrinsics: &CameraIntrinsics) -> Vec<BackprojectedSample> {
    depth
        .valid_indices()
        .map(|i| {
            let (u, v) = (i % depth.width(), i / depth.width());
            BackprojectedSample {
                u,
                v,
                point: intrinsics.backproject(u as f64, v as f64, depth.values()[i]),
            }
        })
        .collect()
}

/// Rotation and translation taking anchor-camera coordinates into target-camera coordinates.
///
/// Identical rotations give the exact identity, so pure translations (and the identity
/// warp) carry no rotation round-off.
fn relative_transform(anchor: &Pose, target: &Pose) -> (Matrix3<f64>, Vector3<f64>) {
    let anchor = anchor.to_camera_to_world();
    let target = target.to_camera_to_world();
    let target_rt = quaternion_to_matrix(&target.rotation).transpose();
    let rotation = if anchor.rotation == target.rotation {
        Matrix3::identity()
    } else {
        target_rt * quaternion_to_matrix(&anchor.rotation)
    };
    let translation = target_rt * (anchor.translation - target.translation);
    (rotation, translation)
}

/// Warps a metric anchor depth map into a target view.
///
/// Poses may be given in either convention; both are interpreted as metric.
pub fn reproject_depth(
    anchor_depth: &DepthMap,
    anchor_pose: &Pose,
    target_pose: &Pose,
    anchor_intrinsics: &CameraIntrinsics,
    target_intrinsics: &CameraIntrinsics,
    target_size: (usize, usize),
) -> Result<DepthMap, ReprojectionError> {
    if anchor_depth.unit() != DepthUnit::Millimeters {
        return Err(ReprojectionError::NonMetricInput(anchor_depth.unit()));
    }
    if anchor_depth.size() != anchor_intrinsics.size() {
        return Err(ReprojectionError::DimensionMismatch {
            expected: anchor_intrinsics.size(),
            found: anchor_depth.size(),
        });
    }
    let (rotation, translation) = relative_transform(anchor_pose, target_pose);
    let (width, height) = target_size;
    let (w, h) = (width as f64, height as f64);
    let mut zbuf = vec![f64::INFINITY; width * height];
    for sample in backproject(anchor_depth, anchor_intrinsics) {
        let p = rotation * sample.point + translation;
        let Some((u, v)) = target_intrinsics.project(&p) else {
            continue;
        };
        let (u, v) = (u.round(), v.round());
        if !(u >= 0.0 && v >= 0.0 && u < w && v < h) {
            continue;
        }
        let slot = &mut zbuf[v as usize * width + u as usize];
        // Strict comparison: the first sample in scan order wins exact ties.
        if p.z < *slot {
            *slot = p.z;
        }
    }
    Ok(DepthMap::new(width, height, zbuf, DepthUnit::Millimeters)
        .expect("buffer sized from target dimensions"))
}

/// One frame of a video sequence; `image_id` is `None` when the SfM run did not register it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SequenceFrame {
    pub name: String,
    pub image_id: Option<ImageId>,
}

impl SequenceFrame {
    /// Every registered image of the model, in id order.
    pub fn registered(model: &SparseModel) -> Vec<SequenceFrame> {
        model
            .images
            .values()
            .map(|im| SequenceFrame {
                name: im.name.clone(),
                image_id: Some(im.image_id),
            })
            .collect()
    }

    /// Resolves frame names against the model's registered images.
    pub fn from_names<S: AsRef<str>>(model: &SparseModel, names: &[S]) -> Vec<SequenceFrame> {
        let by_name: BTreeMap<&str, ImageId> = model
            .images
            .values()
            .map(|im| (im.name.as_str(), im.image_id))
            .collect();
        names
            .iter()
            .map(|n| SequenceFrame {
                name: n.as_ref().to_string(),
                image_id: by_name.get(n.as_ref()).copied(),
            })
            .collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SequenceReprojection {
    pub depths: BTreeMap<ImageId, DepthMap>,
    /// Frames that could not be metricized because they have no pose, in input order.
    pub unregistered: Vec<String>,
}

/// Warps the anchor depth into every frame of a sequence except the anchor itself.
///
/// `target_size` overrides the per-image size taken from the intrinsics.
pub fn reproject_sequence(
    anchor_id: ImageId,
    anchor_depth: &DepthMap,
    metric_poses: &BTreeMap<ImageId, Pose>,
    intrinsics_by_image: &BTreeMap<ImageId, CameraIntrinsics>,
    target_size: Option<(usize, usize)>,
    frames: &[SequenceFrame],
) -> Result<SequenceReprojection, ReprojectionError> {
    let anchor_pose = metric_poses
        .get(&anchor_id)
        .ok_or(ReprojectionError::AnchorNotInPoseMap(anchor_id))?;
    let anchor_intrinsics = intrinsics_by_image
        .get(&anchor_id)
        .ok_or(ReprojectionError::MissingIntrinsics(anchor_id))?;

    let mut unregistered = Vec::new();
    let mut targets = Vec::new();
    for frame in frames {
        match frame.image_id {
            Some(id) if id == anchor_id => {}
            Some(id) if metric_poses.contains_key(&id) => {
                let intr = intrinsics_by_image
                    .get(&id)
                    .ok_or(ReprojectionError::MissingIntrinsics(id))?;
                targets.push((id, metric_poses[&id], *intr));
            }
            _ => unregistered.push(frame.name.clone()),
        }
    }
    targets.sort_by_key(|t| t.0);
    targets.dedup_by_key(|t| t.0);

    let depths = targets
        .par_iter()
        .map(|(id, pose, intr)| {
            let size = target_size.unwrap_or_else(|| intr.size());
            reproject_depth(anchor_depth, anchor_pose, pose, anchor_intrinsics, intr, size)
                .map(|d| (*id, d))
        })
        .collect::<Result<BTreeMap<_, _>, _>>()?;
    Ok(SequenceReprojection {
        depths,
        unregistered,
    })
}
