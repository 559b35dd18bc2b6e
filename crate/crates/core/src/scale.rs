//! Metric scale recovery for an up-to-scale reconstruction.
//!
//! The sparse cloud is splatted into the anchor view to form an unscaled depth map.
//! The scale is the median of the per-pixel ratio between the metric anchor depth and
//! that unscaled depth, taken over pixels valid in both. Poses are metricized by scaling
//! camera centers only; rotations are untouched.

use std::collections::{BTreeMap, HashSet};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::depth_io::{valid_intersection, DepthIoError, DepthMap, DepthUnit};
use crate::sfm_model::{CameraIntrinsics, ImageId, Point3dId, Pose, PoseConvention, SparseModel};

pub const DEFAULT_MIN_SAMPLES: usize = 50;

#[derive(Debug, thiserror::Error)]
pub enum ScaleError {
    #[error("image {0} is not registered in the model")]
    ImageNotRegistered(ImageId),

    #[error("only {found} common valid pixels, at least {required} required")]
    InsufficientSamples { found: usize, required: usize },

    #[error("non-positive depth ratio {ratio} at pixel {index}")]
    NonPositiveRatio { index: usize, ratio: f64 },

    #[error("expected a {expected:?} map, got {found:?}")]
    UnitMismatch { expected: DepthUnit, found: DepthUnit },

    #[error(transparent)]
    Depth(#[from] DepthIoError),
}

/// Which 3D points are splatted into the anchor view.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PointSelection {
    /// Every point of the reconstruction.
    #[default]
    All,
    /// Only points the view itself observes.
    TrackedOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleResult {
    /// Millimeters per model unit.
    pub scale: f64,
    pub sample_count: usize,
    /// Median absolute deviation of the ratios around `scale`.
    pub ratio_median_abs_deviation: f64,
}

/// Sample median; an even count averages the two middle values. NaNs sort last.
pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_unstable_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    })
}

/// Splats the sparse cloud into the view of `image_id` with a nearest-depth z-buffer.
///
/// Points are visited in id order; on exact depth ties the first point wins.
pub fn project_sparse_depth(
    model: &SparseModel,
    image_id: ImageId,
    intrinsics: &CameraIntrinsics,
    selection: PointSelection,
) -> Result<DepthMap, ScaleError> {
    let image = model
        .images
        .get(&image_id)
        .ok_or(ScaleError::ImageNotRegistered(image_id))?;
    let tracked: Option<HashSet<Point3dId>> = match selection {
        PointSelection::All => None,
        PointSelection::TrackedOnly => Some(
            image
                .observations
                .iter()
                .filter_map(|o| o.point3d_id)
                .collect(),
        ),
    };
    let (width, height) = intrinsics.size();
    let mut depth = vec![f64::INFINITY; width * height];
    for point in model.points.values() {
        if let Some(ids) = &tracked {
            if !ids.contains(&point.point3d_id) {
                continue;
            }
        }
        let p_cam = image.pose.world_to_camera_point(&point.position);
        let Some((u, v)) = intrinsics.project_to_pixel(&p_cam) else {
            continue;
        };
        let slot = &mut depth[v * width + u];
        if p_cam.z < *slot {
            *slot = p_cam.z;
        }
    }
    Ok(DepthMap::new(width, height, depth, DepthUnit::Unscaled)?)
}

/// Median of `metric / unscaled` over the pixels valid in both maps.
pub fn recover_scale(
    metric: &DepthMap,
    unscaled: &DepthMap,
    min_samples: usize,
) -> Result<ScaleResult, ScaleError> {
    if metric.unit() != DepthUnit::Millimeters {
        return Err(ScaleError::UnitMismatch {
            expected: DepthUnit::Millimeters,
            found: metric.unit(),
        });
    }
    if unscaled.unit() != DepthUnit::Unscaled {
        return Err(ScaleError::UnitMismatch {
            expected: DepthUnit::Unscaled,
            found: unscaled.unit(),
        });
    }
    let common = valid_intersection(metric, unscaled)?;
    if common.len() < min_samples || common.is_empty() {
        return Err(ScaleError::InsufficientSamples {
            found: common.len(),
            required: min_samples.max(1),
        });
    }
    let (m, d) = (metric.values(), unscaled.values());
    let mut ratios = Vec::with_capacity(common.len());
    for &i in &common {
        let ratio = m[i] / d[i];
        if !(ratio > 0.0 && ratio.is_finite()) {
            return Err(ScaleError::NonPositiveRatio { index: i, ratio });
        }
        ratios.push(ratio);
    }
    let scale = median(&mut ratios).expect("non-empty");
    let mut deviations: Vec<f64> = ratios.iter().map(|r| (r - scale).abs()).collect();
    let mad = median(&mut deviations).expect("non-empty");
    Ok(ScaleResult {
        scale,
        sample_count: common.len(),
        ratio_median_abs_deviation: mad,
    })
}

/// Camera-to-world pose with its camera center multiplied by `scale`.
pub fn metricize_pose(pose: &Pose, scale: f64) -> Pose {
    let c2w = pose.to_camera_to_world();
    Pose {
        rotation: c2w.rotation,
        translation: c2w.translation * scale,
        convention: PoseConvention::CameraToWorld,
    }
}

/// Metric camera-to-world pose of every registered image.
pub fn metricize_poses(model: &SparseModel, scale: &ScaleResult) -> BTreeMap<ImageId, Pose> {
    model
        .images
        .iter()
        .map(|(&id, image)| (id, metricize_pose(&image.pose, scale.scale)))
        .collect()
}

/// Point positions in the same metric frame as [`metricize_poses`].
pub fn metricize_points(
    model: &SparseModel,
    scale: &ScaleResult,
) -> BTreeMap<Point3dId, Vector3<f64>> {
    model
        .points
        .iter()
        .map(|(&id, p)| (id, p.position * scale.scale))
        .collect()
}

/// Copy of the model in metric units, poses kept in the stored world-to-camera convention.
pub fn metricize_model(model: &SparseModel, scale: &ScaleResult) -> SparseModel {
    let mut out = model.clone();
    for image in out.images.values_mut() {
        image.pose = metricize_pose(&image.pose, scale.scale).to_world_to_camera();
    }
    for point in out.points.values_mut() {
        point.position *= scale.scale;
    }
    out
}
