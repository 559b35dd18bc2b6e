//! Metric scale recovery for up-to-scale SfM reconstructions.
//!
//! A sparse reconstruction is anchored to metric units with a single dense depth map
//! of one registered view. The anchor depth is then warped into every other registered
//! frame to produce metric RGB-D supervision. Prediction quality is scored with
//! standard stereo disparity and depth metrics.

pub mod depth_io;
pub mod manifest;
pub mod metrics;
pub mod pipeline;
pub mod reproject;
pub mod scale;
pub mod sfm_model;
pub mod synth;

pub use depth_io::{DepthFormat, DepthMap, DepthUnit};
pub use metrics::{MetricReport, StereoRig};
pub use scale::ScaleResult;
pub use sfm_model::{CameraIntrinsics, Pose, PoseConvention, SparseModel};
