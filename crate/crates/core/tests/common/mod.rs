#![allow(dead_code)]

use std::collections::BTreeMap;
use std::io::Cursor;
use std::path::{Path, PathBuf};

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use sfm_metricize::sfm_model::{
    parse_cameras, parse_images, parse_points3d, CameraIntrinsics, Observation, Point3D,
    RegisteredImage, SfmError, SparseModel, TrackElement,
};
use sfm_metricize::{Pose, PoseConvention};

pub fn random_unit_quaternion<R: Rng>(rng: &mut R) -> UnitQuaternion<f64> {
    let mut q = [0.0f64; 4];
    for c in &mut q {
        *c = StandardNormal.sample(rng);
    }
    UnitQuaternion::from_quaternion(Quaternion::new(q[0], q[1], q[2], q[3]))
}

pub fn random_vector<R: Rng>(rng: &mut R, half_range: f64) -> Vector3<f64> {
    Vector3::new(
        rng.random_range(-half_range..half_range),
        rng.random_range(-half_range..half_range),
        rng.random_range(-half_range..half_range),
    )
}

pub fn random_pose<R: Rng>(rng: &mut R, convention: PoseConvention) -> Pose {
    Pose {
        rotation: random_unit_quaternion(rng),
        translation: random_vector(rng, 100.0),
        convention,
    }
}

/// A referentially consistent model with arbitrary (full-precision) float fields.
pub fn random_model<R: Rng>(rng: &mut R) -> SparseModel {
    let mut cameras = BTreeMap::new();
    for id in 1..=rng.random_range(1..=3u32) {
        let (w, h) = (rng.random_range(1..4000u32), rng.random_range(1..4000u32));
        let cam = if rng.random_bool(0.5) {
            CameraIntrinsics::pinhole(
                id,
                w,
                h,
                rng.random_range(1.0..3000.0),
                rng.random_range(1.0..3000.0),
                rng.random_range(-100.0..4100.0),
                rng.random_range(-100.0..4100.0),
            )
        } else {
            CameraIntrinsics::simple_pinhole(
                id,
                w,
                h,
                rng.random_range(1.0..3000.0),
                rng.random_range(0.0..4000.0),
                rng.random_range(0.0..4000.0),
            )
        };
        cameras.insert(id, cam.unwrap());
    }
    let n_points = rng.random_range(0..40u64);
    let point_ids: Vec<u64> = (0..n_points).map(|i| i * 7 + rng.random_range(0..7)).collect();
    let mut tracks: BTreeMap<u64, Vec<TrackElement>> = BTreeMap::new();
    let mut images = BTreeMap::new();
    let n_images = rng.random_range(0..8u32);
    for k in 0..n_images {
        let image_id = k * 3 + 1;
        let mut observations = Vec::new();
        for idx in 0..rng.random_range(0..30u32) {
            let point3d_id = if !point_ids.is_empty() && rng.random_bool(0.7) {
                let pid = point_ids[rng.random_range(0..point_ids.len())];
                tracks.entry(pid).or_default().push(TrackElement {
                    image_id,
                    point2d_idx: idx,
                });
                Some(pid)
            } else {
                None
            };
            observations.push(Observation {
                x: rng.random_range(-10.0..4000.0),
                y: rng.random_range(-10.0..4000.0),
                point3d_id,
            });
        }
        let name = if rng.random_bool(0.3) {
            format!("seq {k}/frame {k:04}.png")
        } else {
            format!("frame_{k:04}.png")
        };
        images.insert(
            image_id,
            RegisteredImage {
                image_id,
                name,
                pose: random_pose(rng, PoseConvention::WorldToCamera),
                camera_id: rng.random_range(1..=cameras.len() as u32),
                observations,
            },
        );
    }
    let points = point_ids
        .iter()
        .map(|&pid| {
            let point = Point3D {
                point3d_id: pid,
                position: random_vector(rng, 1e3),
                color: [rng.random(), rng.random(), rng.random()],
                reprojection_error: rng.random_range(0.0..5.0),
                track: tracks.remove(&pid).unwrap_or_default(),
            };
            (pid, point)
        })
        .collect();
    SparseModel::new(cameras, images, points).unwrap()
}

pub fn write_then_read(model: &SparseModel) -> Result<SparseModel, SfmError> {
    let dir = tempfile::tempdir().unwrap();
    model.write_text_dir(dir.path())?;
    SparseModel::read_text_dir(dir.path())
}

/// Variant name of a parser error, written out here so the corpus does not depend on
/// the CLI's code table.
pub fn sfm_error_kind(e: &SfmError) -> &'static str {
    match e {
        SfmError::Io(_) => "Io",
        SfmError::UnsupportedCameraModel { .. } => "UnsupportedCameraModel",
        SfmError::MalformedLine { .. } => "MalformedLine",
        SfmError::OddObservationTriples { .. } => "OddObservationTriples",
        SfmError::OddTrackPairs { .. } => "OddTrackPairs",
        SfmError::InvalidQuaternion { .. } => "InvalidQuaternion",
        SfmError::InvalidIntrinsics { .. } => "InvalidIntrinsics",
        SfmError::DuplicateId { .. } => "DuplicateId",
        SfmError::Integrity(_) => "Integrity",
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Target {
    Cameras,
    Images,
    Points,
    /// Full directory: cameras, images, points separated by `---`.
    Model,
}

pub struct MalformedCase {
    pub name: &'static str,
    pub target: Target,
    pub text: &'static str,
    pub expected: &'static str,
}

pub fn malformed_corpus() -> Vec<MalformedCase> {
    use Target::*;
    let case = |name, target, text, expected| MalformedCase {
        name,
        target,
        text,
        expected,
    };
    vec![
        case("opencv_model", Cameras, "3 OPENCV 640 480 500 500 320 240 0.1 0.01 0 0\n", "UnsupportedCameraModel"),
        case("camera_too_few_fields", Cameras, "1 PINHOLE 640\n", "MalformedLine"),
        case("camera_wrong_param_count", Cameras, "1 PINHOLE 640 480 500 320 240\n", "MalformedLine"),
        case("camera_non_numeric_width", Cameras, "1 PINHOLE wide 480 500 500 320 240\n", "MalformedLine"),
        case("camera_nan_focal", Cameras, "1 PINHOLE 640 480 NaN 500 320 240\n", "MalformedLine"),
        case("camera_negative_focal", Cameras, "1 PINHOLE 640 480 -500 500 320 240\n", "InvalidIntrinsics"),
        case("camera_zero_width", Cameras, "1 SIMPLE_PINHOLE 0 480 500 320 240\n", "InvalidIntrinsics"),
        case("camera_duplicate", Cameras, "1 PINHOLE 640 480 500 500 320 240\n1 PINHOLE 640 480 500 500 320 240\n", "DuplicateId"),
        case("image_short_header", Images, "1 1 0 0 0 0 0 0\n\n", "MalformedLine"),
        case("image_bad_quaternion", Images, "1 2 0 0 0 0 0 0 1 a.png\n\n", "InvalidQuaternion"),
        case("image_zero_quaternion", Images, "1 0 0 0 0 0 0 0 1 a.png\n\n", "InvalidQuaternion"),
        case("image_odd_triples", Images, "1 1 0 0 0 0 0 0 1 a.png\n10 10\n", "OddObservationTriples"),
        case("image_bad_point_ref", Images, "1 1 0 0 0 0 0 0 1 a.png\n10 10 x\n", "MalformedLine"),
        case("image_comment_as_observations", Images, "1 1 0 0 0 0 0 0 1 a.png\n# oops\n", "MalformedLine"),
        case("image_duplicate", Images, "1 1 0 0 0 0 0 0 1 a.png\n\n1 1 0 0 0 0 0 0 1 b.png\n\n", "DuplicateId"),
        case("point_odd_track", Points, "5 1 2 3 255 0 0 0.8 7\n", "OddTrackPairs"),
        case("point_short", Points, "5 1 2 3 255 0\n", "MalformedLine"),
        case("point_color_overflow", Points, "5 1 2 3 256 0 0 0.8\n", "MalformedLine"),
        case("point_infinite_coordinate", Points, "5 inf 2 3 255 0 0 0.8\n", "MalformedLine"),
        case(
            "missing_camera",
            Model,
            "1 PINHOLE 640 480 500 500 320 240\n---\n1 1 0 0 0 0 0 0 2 a.png\n\n---\n",
            "Integrity",
        ),
        case(
            "observation_of_missing_point",
            Model,
            "1 PINHOLE 640 480 500 500 320 240\n---\n1 1 0 0 0 0 0 0 1 a.png\n10 10 99\n---\n",
            "Integrity",
        ),
        case(
            "track_index_out_of_range",
            Model,
            "1 PINHOLE 640 480 500 500 320 240\n---\n1 1 0 0 0 0 0 0 1 a.png\n10 10 5\n---\n5 1 2 3 0 0 0 0.1 1 3\n",
            "Integrity",
        ),
    ]
}

/// Parses one corpus entry and returns the error variant name, or `"Ok"`.
pub fn run_case(case: &MalformedCase) -> &'static str {
    let kind = |r: Result<(), SfmError>| match r {
        Ok(()) => "Ok",
        Err(e) => sfm_error_kind(&e),
    };
    let bytes = Cursor::new(case.text.as_bytes());
    match case.target {
        Target::Cameras => kind(parse_cameras(bytes).map(drop)),
        Target::Images => kind(parse_images(bytes).map(drop)),
        Target::Points => kind(parse_points3d(bytes).map(drop)),
        Target::Model => {
            let parts: Vec<&str> = case.text.split("---\n").collect();
            let dir = tempfile::tempdir().unwrap();
            for (name, text) in ["cameras.txt", "images.txt", "points3D.txt"].iter().zip(parts) {
                std::fs::write(dir.path().join(name), text).unwrap();
            }
            kind(SparseModel::read_text_dir(dir.path()).map(drop))
        }
    }
}

/// Every file below `root` keyed by relative path.
pub fn snapshot_tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_path_buf();
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests")
        .join("fixtures")
        .join(name)
}
