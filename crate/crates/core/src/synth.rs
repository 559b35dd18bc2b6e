//! Synthetic scenes with known geometry and scale, plus an independent brute-force
//! reprojection oracle.
//!
//! Scenes are laid out in the anchor camera's frame: the anchor sits at the origin
//! looking down +z at an analytic surface. An optional random rigid transform then moves
//! everything into an arbitrary world frame. The returned reconstruction has every
//! position and camera center divided by the true scale, mimicking monocular SfM.
//!
//! The oracle code here does not share projection or transform code with the
//! reprojection module; it goes through `nalgebra` isometries instead.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use nalgebra::{Isometry3, Point3, Translation3, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::depth_io::{save_depth, DepthFormat, DepthIoError, DepthMap, DepthUnit};
use crate::sfm_model::{
    CameraIntrinsics, ImageId, Observation, Point3D, Point3dId, Pose, PoseConvention,
    RegisteredImage, SfmError, SparseModel, TrackElement,
};

pub const ANCHOR_IMAGE_NAME: &str = "keyframe.png";

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("degenerate scene: {0}")]
    DegenerateSpec(String),

    #[error(transparent)]
    Model(#[from] SfmError),

    #[error(transparent)]
    Depth(#[from] DepthIoError),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

/// Analytic surface, expressed in the anchor camera frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Surface {
    /// Fronto-parallel plane `z = depth`.
    Plane { depth: f64 },
    /// Near cap of a sphere centered on the optical axis.
    SpherePatch { center_depth: f64, radius: f64 },
}

impl Surface {
    /// Distance along a ray `origin + t * dir` to the first surface hit with `t > 0`.
    pub fn intersect(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<f64> {
        match *self {
            Surface::Plane { depth } => {
                if dir.z == 0.0 {
                    return None;
                }
                let t = (depth - origin.z) / dir.z;
                (t > 0.0).then_some(t)
            }
            Surface::SpherePatch {
                center_depth,
                radius,
            } => {
                let oc = origin - Vector3::new(0.0, 0.0, center_depth);
                let a = dir.dot(dir);
                let b = oc.dot(dir);
                let c = oc.dot(&oc) - radius * radius;
                let disc = b * b - a * c;
                if disc < 0.0 {
                    return None;
                }
                let sq = disc.sqrt();
                [(-b - sq) / a, (-b + sq) / a]
                    .into_iter()
                    .find(|&t| t > 0.0)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Trajectory {
    /// Frame `i` sits `i * step` mm along the anchor's optical axis, same orientation.
    Forward { step: f64 },
    /// Random jitter around the anchor: translations within `max_translation` mm and
    /// rotations up to `max_rotation_deg`.
    Jitter {
        max_translation: f64,
        max_rotation_deg: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SceneSpec {
    pub surface: Surface,
    pub n_points: usize,
    /// Registered frames including the anchor.
    pub n_frames: usize,
    /// Extra frame names listed for the sequence but absent from the reconstruction.
    pub unregistered_frames: usize,
    /// Millimeters per model unit.
    pub true_scale: f64,
    #[serde(skip)]
    pub intrinsics: CameraIntrinsics,
    /// Standard deviation (mm) of isotropic noise added to the 3D points.
    pub noise_sigma: f64,
    pub trajectory: Trajectory,
    /// Move the scene into a random world frame instead of the anchor frame.
    pub randomize_world_frame: bool,
    pub seed: u64,
}

impl SceneSpec {
    /// 128x128 view of a plane at 100 mm with jittered cameras.
    pub fn plane(seed: u64) -> Self {
        Self {
            surface: Surface::Plane { depth: 100.0 },
            n_points: 400,
            n_frames: 5,
            unregistered_frames: 0,
            true_scale: 1.0,
            intrinsics: default_intrinsics(),
            noise_sigma: 0.0,
            trajectory: Trajectory::Jitter {
                max_translation: 5.0,
                max_rotation_deg: 3.0,
            },
            randomize_world_frame: true,
            seed,
        }
    }

    /// 128x128 view of a sphere cap whose apex is 50 mm away.
    pub fn sphere_patch(seed: u64) -> Self {
        Self {
            surface: Surface::SpherePatch {
                center_depth: 200.0,
                radius: 150.0,
            },
            ..Self::plane(seed)
        }
    }
}

pub fn default_intrinsics() -> CameraIntrinsics {
    CameraIntrinsics::pinhole(1, 128, 128, 160.0, 160.0, 63.2, 64.7)
        .expect("valid default intrinsics")
}

#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub spec: SceneSpec,
    /// Reconstruction in model units (metric / true scale).
    pub model: SparseModel,
    pub anchor_image_id: ImageId,
    pub anchor_name: String,
    /// Analytically rendered metric depth of the anchor view.
    pub anchor_depth: DepthMap,
    /// Metric camera-to-world poses.
    pub metric_poses: BTreeMap<ImageId, Pose>,
    /// Metric point positions (including noise).
    pub metric_points: BTreeMap<Point3dId, Vector3<f64>>,
    /// All frame names of the sequence, registered or not.
    pub frame_names: Vec<String>,
}

fn pose_to_isometry(pose: &Pose) -> Isometry3<f64> {
    let c2w = pose.to_camera_to_world();
    Isometry3::from_parts(Translation3::from(c2w.translation), c2w.rotation)
}

fn isometry_to_pose(iso: &Isometry3<f64>) -> Pose {
    Pose {
        rotation: iso.rotation,
        translation: iso.translation.vector,
        convention: PoseConvention::CameraToWorld,
    }
}

/// Per-pixel analytic depth of a surface (anchor-frame coordinates) seen from `camera`,
/// a camera-to-anchor-frame transform.
pub fn render_depth(
    surface: &Surface,
    camera: &Isometry3<f64>,
    intrinsics: &CameraIntrinsics,
) -> DepthMap {
    let (w, h) = intrinsics.size();
    let origin = camera.translation.vector;
    DepthMap::from_fn(w, h, DepthUnit::Millimeters, |u, v| {
        let ray_cam = Vector3::new(
            (u as f64 - intrinsics.cx) / intrinsics.fx,
            (v as f64 - intrinsics.cy) / intrinsics.fy,
            1.0,
        );
        // With a unit-z camera ray the ray parameter is the depth.
        surface
            .intersect(&origin, &(camera.rotation * ray_cam))
            .unwrap_or(0.0)
    })
}

fn random_rotation(rng: &mut ChaCha8Rng, max_angle: f64) -> UnitQuaternion<f64> {
    let axis = Vector3::new(
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
    );
    let axis = if axis.norm() < 1e-6 {
        Vector3::z()
    } else {
        axis.normalize()
    };
    let angle = rng.random_range(-max_angle..=max_angle);
    UnitQuaternion::from_scaled_axis(axis * angle)
}

pub fn make_scene(spec: &SceneSpec) -> Result<SyntheticScene, SynthError> {
    let degenerate = |msg: String| Err(SynthError::DegenerateSpec(msg));
    if !(spec.true_scale > 0.0 && spec.true_scale.is_finite()) {
        return degenerate(format!("true scale {} must be positive", spec.true_scale));
    }
    if spec.n_points == 0 || spec.n_frames == 0 {
        return degenerate("need at least one point and one frame".into());
    }
    if !(spec.noise_sigma >= 0.0 && spec.noise_sigma.is_finite()) {
        return degenerate(format!("noise sigma {} must be non-negative", spec.noise_sigma));
    }
    spec.intrinsics.validate()?;
    let intr = spec.intrinsics;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let anchor_depth = render_depth(&spec.surface, &Isometry3::identity(), &intr);
    let candidates: Vec<usize> = anchor_depth.valid_indices().collect();
    if candidates.is_empty() {
        return degenerate("anchor camera does not see the surface".into());
    }
    if candidates.len() < spec.n_points {
        return degenerate(format!(
            "{} points requested but only {} surface pixels are visible",
            spec.n_points,
            candidates.len()
        ));
    }

    // Camera-to-anchor-frame poses; frame 0 is the anchor.
    let mut cameras = vec![Isometry3::identity()];
    for i in 1..spec.n_frames {
        let cam = match spec.trajectory {
            Trajectory::Forward { step } => {
                Isometry3::translation(0.0, 0.0, step * i as f64)
            }
            Trajectory::Jitter {
                max_translation: m,
                max_rotation_deg,
            } => {
                let t = Vector3::new(
                    rng.random_range(-m..=m),
                    rng.random_range(-m..=m),
                    rng.random_range(0.0..=m),
                );
                let r = random_rotation(&mut rng, max_rotation_deg.to_radians());
                Isometry3::from_parts(Translation3::from(t), r)
            }
        };
        cameras.push(cam);
    }

    let world_from_anchor = if spec.randomize_world_frame {
        let t = Vector3::new(
            rng.random_range(-50.0..50.0),
            rng.random_range(-50.0..50.0),
            rng.random_range(-50.0..50.0),
        );
        Isometry3::from_parts(
            Translation3::from(t),
            random_rotation(&mut rng, std::f64::consts::PI),
        )
    } else {
        Isometry3::identity()
    };

    let picks = rand::seq::index::sample(&mut rng, candidates.len(), spec.n_points).into_vec();
    let mut picks: Vec<usize> = picks.into_iter().map(|k| candidates[k]).collect();
    picks.sort_unstable();
    let noise = Normal::new(0.0, spec.noise_sigma.max(0.0))
        .map_err(|e| SynthError::DegenerateSpec(e.to_string()))?;
    let w = anchor_depth.width();
    let metric_points: BTreeMap<Point3dId, Vector3<f64>> = picks
        .iter()
        .enumerate()
        .map(|(k, &i)| {
            let (u, v) = ((i % w) as f64, (i / w) as f64);
            let z = anchor_depth.values()[i];
            let mut p = Vector3::new((u - intr.cx) * z / intr.fx, (v - intr.cy) * z / intr.fy, z);
            if spec.noise_sigma > 0.0 {
                p += Vector3::new(
                    noise.sample(&mut rng),
                    noise.sample(&mut rng),
                    noise.sample(&mut rng),
                );
            }
            let world = world_from_anchor * Point3::from(p);
            (k as Point3dId + 1, world.coords)
        })
        .collect();

    let s = spec.true_scale;
    let mut metric_poses = BTreeMap::new();
    let mut images = BTreeMap::new();
    let mut frame_names = Vec::new();
    let mut tracks: BTreeMap<Point3dId, Vec<TrackElement>> = BTreeMap::new();
    for (i, cam) in cameras.iter().enumerate() {
        let image_id = i as ImageId + 1;
        let name = if i == 0 {
            ANCHOR_IMAGE_NAME.to_string()
        } else {
            format!("frame_{i:04}.png")
        };
        let world_cam = world_from_anchor * cam;
        metric_poses.insert(image_id, isometry_to_pose(&world_cam));
        let unscaled_c2w = Isometry3::from_parts(
            Translation3::from(world_cam.translation.vector / s),
            world_cam.rotation,
        );
        let w2c = unscaled_c2w.inverse();
        let mut observations = Vec::new();
        for (&pid, p) in &metric_points {
            let pc = w2c * Point3::from(p / s);
            if pc.z <= 0.0 {
                continue;
            }
            let x = intr.fx * pc.x / pc.z + intr.cx;
            let y = intr.fy * pc.y / pc.z + intr.cy;
            if x < -0.5 || y < -0.5 || x >= intr.width as f64 - 0.5 || y >= intr.height as f64 - 0.5 {
                continue;
            }
            tracks.entry(pid).or_default().push(TrackElement {
                image_id,
                point2d_idx: observations.len() as u32,
            });
            observations.push(Observation {
                x,
                y,
                point3d_id: Some(pid),
            });
        }
        if observations.is_empty() {
            return degenerate(format!("frame {i} sees none of the scene points"));
        }
        images.insert(
            image_id,
            RegisteredImage {
                image_id,
                name: name.clone(),
                pose: Pose {
                    rotation: w2c.rotation,
                    translation: w2c.translation.vector,
                    convention: PoseConvention::WorldToCamera,
                },
                camera_id: intr.camera_id,
                observations,
            },
        );
        frame_names.push(name);
    }
    for k in 0..spec.unregistered_frames {
        frame_names.push(format!("unregistered_{k:04}.png"));
    }

    let points = metric_points
        .iter()
        .map(|(&pid, p)| {
            (
                pid,
                Point3D {
                    point3d_id: pid,
                    position: p / s,
                    color: [200, 120, 110],
                    reprojection_error: 0.0,
                    track: tracks.remove(&pid).unwrap_or_default(),
                },
            )
        })
        .collect();
    let model = SparseModel::new(BTreeMap::from([(intr.camera_id, intr)]), images, points)?;

    Ok(SyntheticScene {
        spec: spec.clone(),
        model,
        anchor_image_id: 1,
        anchor_name: ANCHOR_IMAGE_NAME.to_string(),
        anchor_depth,
        metric_poses,
        metric_points,
        frame_names,
    })
}

#[derive(Serialize)]
struct SceneRecord<'a> {
    spec: &'a SceneSpec,
    anchor_image: &'a str,
    anchor_depth: &'a str,
    model_dir: &'a str,
    frames: &'a str,
}

/// Writes `sparse/` (text model), `anchor.depth.<ext>`, `frames.txt` and `scene.json`.
pub fn export_scene(
    scene: &SyntheticScene,
    dir: impl AsRef<Path>,
    format: DepthFormat,
) -> Result<(), SynthError> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    scene.model.write_text_dir(dir.join("sparse"))?;
    let depth_name = format!("anchor.depth.{}", format.extension());
    save_depth(&scene.anchor_depth, dir.join(&depth_name), format)?;
    let mut frames = scene.frame_names.join("\n");
    frames.push('\n');
    std::fs::write(dir.join("frames.txt"), frames)?;
    let record = SceneRecord {
        spec: &scene.spec,
        anchor_image: &scene.anchor_name,
        anchor_depth: &depth_name,
        model_dir: "sparse",
        frames: "frames.txt",
    };
    let mut json = serde_json::to_string_pretty(&record).expect("serializable record");
    json.push('\n');
    std::fs::write(dir.join("scene.json"), json)?;
    Ok(())
}

/// Brute-force forward warp: every anchor sample is transformed on its own through the
/// world frame, and each target pixel takes the minimum over all samples landing on it.
pub fn oracle_reproject(
    anchor_depth: &DepthMap,
    anchor_pose: &Pose,
    target_pose: &Pose,
    anchor_intrinsics: &CameraIntrinsics,
    target_intrinsics: &CameraIntrinsics,
    target_size: (usize, usize),
) -> DepthMap {
    let world_from_anchor = pose_to_isometry(anchor_pose);
    let target_from_world = pose_to_isometry(target_pose).inverse();
    let (w, h) = target_size;
    let mut hits: HashMap<usize, Vec<f64>> = HashMap::new();
    for v in 0..anchor_depth.height() {
        for u in 0..anchor_depth.width() {
            let Some(z) = anchor_depth.get(u, v) else {
                continue;
            };
            let a = anchor_intrinsics;
            let p_anchor = Point3::new(
                (u as f64 - a.cx) / a.fx * z,
                (v as f64 - a.cy) / a.fy * z,
                z,
            );
            let p_target = target_from_world * (world_from_anchor * p_anchor);
            if p_target.z <= 0.0 {
                continue;
            }
            let t = target_intrinsics;
            let x = (t.fx * p_target.x / p_target.z + t.cx).round();
            let y = (t.fy * p_target.y / p_target.z + t.cy).round();
            if x < 0.0 || y < 0.0 || x >= w as f64 || y >= h as f64 {
                continue;
            }
            hits.entry(y as usize * w + x as usize)
                .or_default()
                .push(p_target.z);
        }
    }
    let mut values = vec![0.0; w * h];
    for (idx, depths) in hits {
        values[idx] = depths.into_iter().fold(f64::INFINITY, f64::min);
    }
    DepthMap::new(w, h, values, DepthUnit::Millimeters).expect("sized buffer")
}
