//! End-to-end commands: metricize a sequence, evaluate predictions, build manifests and
//! export synthetic scenes.
//!
//! Every file written here is formatted deterministically, so rerunning a command on the
//! same inputs reproduces its outputs byte for byte.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::depth_io::{load_depth_sized, save_depth, DepthFormat, DepthIoError, DepthUnit};
use crate::manifest::{
    build_manifest, default_split, ManifestError, ManifestSummary, SequenceFrames, SequenceId,
    SplitAssignment,
};
use crate::metrics::{
    aggregate, evaluate_pair, read_csv, write_csv, AggregateReport, Aggregation, MetricReport,
    MetricsError, StereoRig, DEFAULT_BAD_THRESHOLD, DEFAULT_DELTA_BASE,
};
use crate::reproject::{reproject_sequence, ReprojectionError, SequenceFrame};
use crate::scale::{
    metricize_points, metricize_poses, project_sparse_depth, recover_scale, PointSelection,
    ScaleError, ScaleResult, DEFAULT_MIN_SAMPLES,
};
use crate::sfm_model::{CameraIntrinsics, ImageId, SfmError, SparseModel};
use crate::synth::{export_scene, make_scene, SceneSpec, SynthError};

pub const SCALE_FILE: &str = "scale.json";
pub const POSES_FILE: &str = "poses_c2w.txt";
pub const POINTS_FILE: &str = "points_metric.txt";
pub const SKIP_REPORT_FILE: &str = "skip_report.json";
pub const DEPTH_DIR: &str = "depth";
pub const ERRORS_FILE: &str = "errors.json";

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("anchor image {0:?} is not registered in the reconstruction")]
    AnchorNotRegistered(String),

    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Model(#[from] SfmError),

    #[error(transparent)]
    Depth(#[from] DepthIoError),

    #[error(transparent)]
    Scale(#[from] ScaleError),

    #[error(transparent)]
    Reprojection(#[from] ReprojectionError),

    #[error(transparent)]
    Metrics(#[from] MetricsError),

    #[error(transparent)]
    Manifest(#[from] ManifestError),

    #[error(transparent)]
    Synth(#[from] SynthError),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn sfm_code(e: &SfmError) -> &'static str {
    match e {
        SfmError::Io(_) => "Io",
        SfmError::UnsupportedCameraModel { .. } => "UnsupportedCameraModel",
        SfmError::MalformedLine { .. } => "MalformedLine",
        SfmError::OddObservationTriples { .. } => "OddObservationTriples",
        SfmError::OddTrackPairs { .. } => "OddTrackPairs",
        SfmError::InvalidQuaternion { .. } => "InvalidQuaternion",
        SfmError::InvalidIntrinsics { .. } => "InvalidIntrinsics",
        SfmError::DuplicateId { .. } => "DuplicateId",
        SfmError::Integrity(_) => "IntegrityViolation",
    }
}

fn depth_code(e: &DepthIoError) -> &'static str {
    match e {
        DepthIoError::Io(_) => "Io",
        DepthIoError::UnsupportedDepthFormat(_) => "UnsupportedDepthFormat",
        DepthIoError::DimensionMismatch { .. } => "DimensionMismatch",
        DepthIoError::ValueOutOfRange { .. } => "ValueOutOfRange",
        DepthIoError::LengthMismatch { .. } => "LengthMismatch",
    }
}

impl PipelineError {
    /// Stable machine-readable error code.
    pub fn code(&self) -> &'static str {
        match self {
            PipelineError::AnchorNotRegistered(_) => "AnchorNotRegistered",
            PipelineError::Usage(_) => "Usage",
            PipelineError::Io { .. } => "Io",
            PipelineError::Model(e) => sfm_code(e),
            PipelineError::Depth(e) => depth_code(e),
            PipelineError::Scale(e) => match e {
                ScaleError::ImageNotRegistered(_) => "ImageNotRegistered",
                ScaleError::InsufficientSamples { .. } => "InsufficientSamples",
                ScaleError::NonPositiveRatio { .. } => "NonPositiveRatio",
                ScaleError::UnitMismatch { .. } => "UnitMismatch",
                ScaleError::Depth(e) => depth_code(e),
            },
            PipelineError::Reprojection(e) => match e {
                ReprojectionError::NonMetricInput(_) => "NonMetricInput",
                ReprojectionError::DimensionMismatch { .. } => "DimensionMismatch",
                ReprojectionError::MissingIntrinsics(_) => "MissingIntrinsics",
                ReprojectionError::AnchorNotInPoseMap(_) => "AnchorNotRegistered",
            },
            PipelineError::Metrics(e) => match e {
                MetricsError::EmptyOverlap => "EmptyOverlap",
                MetricsError::NonPositiveGroundTruth(_) => "NonPositiveGroundTruth",
                MetricsError::UnitMismatch { .. } => "UnitMismatch",
                MetricsError::InvalidRig(_) => "InvalidRig",
                MetricsError::EmptyAggregate => "EmptyAggregate",
                MetricsError::MalformedCsv { .. } => "MalformedCsv",
                MetricsError::Depth(e) => depth_code(e),
                MetricsError::Io(_) => "Io",
            },
            PipelineError::Manifest(e) => match e {
                ManifestError::OverlappingSplits(_) => "OverlappingSplits",
                ManifestError::ExcludedDataset(_) => "ExcludedDataset",
                ManifestError::UnassignedSequence(_) => "UnassignedSequence",
                ManifestError::InvalidSequenceId(_) => "InvalidSequenceId",
                ManifestError::Malformed { .. } => "MalformedManifest",
                ManifestError::SplitFile(_) => "MalformedSplitFile",
                ManifestError::Io(_) => "Io",
            },
            PipelineError::Synth(e) => match e {
                SynthError::DegenerateSpec(_) => "DegenerateSpec",
                SynthError::Model(e) => sfm_code(e),
                SynthError::Depth(e) => depth_code(e),
                SynthError::Io(_) => "Io",
            },
        }
    }

    pub fn record(&self, sequence: Option<&str>) -> ErrorRecord {
        ErrorRecord {
            code: self.code().to_string(),
            message: self.to_string(),
            sequence: sequence.map(str::to_string),
        }
    }
}

/// Machine-readable error emitted by the CLI.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub code: String,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub sequence: Option<String>,
}

/// Formats `x` with `digits` significant digits, dropping trailing zeros.
pub fn format_significant(x: f64, digits: usize) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { "0".into() } else { x.to_string() };
    }
    let sci = format!("{:.*e}", digits.saturating_sub(1), x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -5 || exp >= digits as i32 {
        let mantissa = mantissa.trim_end_matches('0').trim_end_matches('.');
        return format!("{mantissa}e{exp}");
    }
    let decimals = (digits as i32 - 1 - exp).max(0) as usize;
    let fixed = format!("{:.*}", decimals, x);
    if fixed.contains('.') {
        fixed.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        fixed
    }
}

/// `x` rounded to 12 significant digits.
fn round12(x: f64) -> f64 {
    format!("{x:.11e}").parse().expect("round-trips")
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    std::fs::write(path, text).map_err(io_err(path))
}

#[derive(Debug, Clone)]
pub struct MetricizeOptions {
    pub min_samples: usize,
    /// Replaces `fx, fy, cx, cy` of every camera.
    pub intrinsics_override: Option<[f64; 4]>,
    pub selection: PointSelection,
    pub format: DepthFormat,
    pub sequence: Option<String>,
    /// File listing every frame name of the sequence, one per line.
    pub frames_file: Option<PathBuf>,
}

impl Default for MetricizeOptions {
    fn default() -> Self {
        Self {
            min_samples: DEFAULT_MIN_SAMPLES,
            intrinsics_override: None,
            selection: PointSelection::All,
            format: DepthFormat::Pfm,
            sequence: None,
            frames_file: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleRecord {
    pub sequence: Option<String>,
    pub scale: f64,
    pub sample_count: usize,
    pub mad: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkipReport {
    pub sequence: Option<String>,
    pub anchor: String,
    pub reprojected: Vec<String>,
    pub unregistered: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricizeSummary {
    pub scale: ScaleResult,
    pub skip_report: SkipReport,
}

fn read_frame_list(path: &Path) -> Result<Vec<String>, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect())
}

/// Recovers the metric scale of one sequence and warps its anchor depth into every
/// co-registered frame.
///
/// Writes `scale.json`, `poses_c2w.txt`, `points_metric.txt`, `skip_report.json` and
/// `depth/<image_name>.depth.<ext>` under `out_dir`.
pub fn cmd_metricize(
    model_dir: &Path,
    anchor_depth_path: &Path,
    anchor_image_name: &str,
    out_dir: &Path,
    options: &MetricizeOptions,
) -> Result<MetricizeSummary, PipelineError> {
    let model = SparseModel::read_text_dir(model_dir)?;
    let anchor = model
        .image_by_name(anchor_image_name)
        .ok_or_else(|| PipelineError::AnchorNotRegistered(anchor_image_name.to_string()))?;
    let anchor_id = anchor.image_id;

    let mut intrinsics_by_image: BTreeMap<ImageId, CameraIntrinsics> = BTreeMap::new();
    for (&id, image) in &model.images {
        let cam = model.cameras[&image.camera_id];
        let cam = match options.intrinsics_override {
            Some([fx, fy, cx, cy]) => cam.with_override(fx, fy, cx, cy)?,
            None => cam,
        };
        intrinsics_by_image.insert(id, cam);
    }
    let anchor_intrinsics = intrinsics_by_image[&anchor_id];

    let anchor_depth = load_depth_sized(
        anchor_depth_path,
        DepthUnit::Millimeters,
        anchor_intrinsics.size(),
    )?;
    let unscaled = project_sparse_depth(&model, anchor_id, &anchor_intrinsics, options.selection)?;
    let scale = recover_scale(&anchor_depth, &unscaled, options.min_samples)?;
    let metric_poses = metricize_poses(&model, &scale);

    let frames = match &options.frames_file {
        Some(path) => SequenceFrame::from_names(&model, &read_frame_list(path)?),
        None => SequenceFrame::registered(&model),
    };
    let warped = reproject_sequence(
        anchor_id,
        &anchor_depth,
        &metric_poses,
        &intrinsics_by_image,
        None,
        &frames,
    )?;

    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let depth_dir = out_dir.join(DEPTH_DIR);
    std::fs::create_dir_all(&depth_dir).map_err(io_err(&depth_dir))?;
    let mut reprojected = Vec::with_capacity(warped.depths.len());
    for (id, depth) in &warped.depths {
        let name = &model.images[id].name;
        let path = depth_dir.join(format!("{name}.depth.{}", options.format.extension()));
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(io_err(parent))?;
        }
        save_depth(depth, &path, options.format)?;
        reprojected.push(name.clone());
    }

    write_json(
        &out_dir.join(SCALE_FILE),
        &ScaleRecord {
            sequence: options.sequence.clone(),
            scale: round12(scale.scale),
            sample_count: scale.sample_count,
            mad: round12(scale.ratio_median_abs_deviation),
        },
    )?;

    let mut poses = String::from("# Metric camera-to-world poses, translation in millimeters\n");
    poses.push_str("# IMAGE_ID QW QX QY QZ TX TY TZ NAME\n");
    for (id, pose) in &metric_poses {
        let [qw, qx, qy, qz] = pose.wxyz();
        let t = pose.translation;
        let fields: Vec<String> = [qw, qx, qy, qz, t.x, t.y, t.z]
            .iter()
            .map(|v| format_significant(*v, 12))
            .collect();
        poses.push_str(&format!(
            "{} {} {}\n",
            id,
            fields.join(" "),
            model.images[id].name
        ));
    }
    let path = out_dir.join(POSES_FILE);
    std::fs::write(&path, poses).map_err(io_err(&path))?;

    let mut points = String::from("# Metric point positions in millimeters\n# POINT3D_ID X Y Z\n");
    for (id, p) in metricize_points(&model, &scale) {
        points.push_str(&format!(
            "{} {} {} {}\n",
            id,
            format_significant(p.x, 12),
            format_significant(p.y, 12),
            format_significant(p.z, 12)
        ));
    }
    let path = out_dir.join(POINTS_FILE);
    std::fs::write(&path, points).map_err(io_err(&path))?;

    let skip_report = SkipReport {
        sequence: options.sequence.clone(),
        anchor: anchor_image_name.to_string(),
        reprojected,
        unregistered: warped.unregistered,
    };
    write_json(&out_dir.join(SKIP_REPORT_FILE), &skip_report)?;

    Ok(MetricizeSummary { scale, skip_report })
}

/// One entry of a batch job file. Relative paths resolve against the job file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceJob {
    pub sequence: String,
    pub model_dir: PathBuf,
    pub anchor_depth: PathBuf,
    pub anchor_image: String,
    #[serde(default)]
    pub frames: Option<PathBuf>,
}

#[derive(Debug, Default)]
pub struct BatchReport {
    pub succeeded: BTreeMap<String, MetricizeSummary>,
    pub failed: Vec<ErrorRecord>,
}

pub fn read_jobs(path: &Path) -> Result<Vec<SequenceJob>, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let mut jobs: Vec<SequenceJob> = serde_json::from_str(&text)
        .map_err(|e| PipelineError::Usage(format!("job file {}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    for job in &mut jobs {
        for p in [&mut job.model_dir, &mut job.anchor_depth] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if let Some(f) = job.frames.as_mut().filter(|f| f.is_relative()) {
            *f = base.join(&*f);
        }
    }
    Ok(jobs)
}

/// Runs [`cmd_metricize`] for every job on up to `jobs` threads, each into
/// `out_root/<sequence>`. Failures are collected and written to `errors.json`.
pub fn cmd_metricize_batch(
    jobs: &[SequenceJob],
    out_root: &Path,
    options: &MetricizeOptions,
    threads: usize,
) -> Result<BatchReport, PipelineError> {
    use rayon::prelude::*;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| PipelineError::Usage(e.to_string()))?;
    let results: Vec<(String, Result<MetricizeSummary, PipelineError>)> = pool.install(|| {
        jobs.par_iter()
            .map(|job| {
                let opts = MetricizeOptions {
                    sequence: Some(job.sequence.clone()),
                    frames_file: job.frames.clone(),
                    ..options.clone()
                };
                let result = cmd_metricize(
                    &job.model_dir,
                    &job.anchor_depth,
                    &job.anchor_image,
                    &out_root.join(&job.sequence),
                    &opts,
                );
                (job.sequence.clone(), result)
            })
            .collect()
    });
    let mut report = BatchReport::default();
    for (sequence, result) in results {
        match result {
            Ok(summary) => {
                report.succeeded.insert(sequence, summary);
            }
            Err(e) => report.failed.push(e.record(Some(&sequence))),
        }
    }
    std::fs::create_dir_all(out_root).map_err(io_err(out_root))?;
    write_json(&out_root.join(ERRORS_FILE), &report.failed)?;
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PredictionKind {
    #[default]
    Disparity,
    Depth,
}

#[derive(Debug, Clone)]
pub struct EvaluateOptions {
    pub rig: Option<StereoRig>,
    pub input: PredictionKind,
    pub bad_threshold: f64,
    pub delta_base: f64,
    pub aggregation: Aggregation,
    /// Aggregate an existing per-sequence table instead of reading depth files.
    pub from_csv: Option<PathBuf>,
}

impl Default for EvaluateOptions {
    fn default() -> Self {
        Self {
            rig: None,
            input: PredictionKind::Disparity,
            bad_threshold: DEFAULT_BAD_THRESHOLD,
            delta_base: DEFAULT_DELTA_BASE,
            aggregation: Aggregation::PerSequence,
            from_csv: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluateSummary {
    pub aggregation: Aggregation,
    pub mean: MetricReport,
    pub variance: [f64; 7],
    pub images_evaluated: usize,
    /// Files present on only one side, relative paths.
    pub unmatched: Vec<String>,
    pub failed: Vec<ErrorRecord>,
}

fn is_depth_file(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()),
        Some("pfm") | Some("png")
    )
}

/// Relative paths of depth files below `root`, sorted.
fn list_depth_files(root: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), PipelineError> {
        for entry in std::fs::read_dir(dir).map_err(io_err(dir))? {
            let path = entry.map_err(io_err(dir))?.path();
            if path.is_dir() {
                walk(root, &path, out)?;
            } else if is_depth_file(&path) {
                out.push(path.strip_prefix(root).expect("below root").to_path_buf());
            }
        }
        Ok(())
    }
    let mut out = Vec::new();
    walk(root, root, &mut out)?;
    out.sort();
    Ok(out)
}

/// Nested files belong to their top-level directory; top-level files are their own
/// sequence, named by the file name up to its first dot.
fn sequence_of(rel: &Path) -> String {
    let mut comps = rel.components();
    let first = comps
        .next()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .unwrap_or_default();
    if comps.next().is_some() {
        first
    } else {
        first.split('.').next().unwrap_or_default().to_string()
    }
}

/// Scores predictions against ground-truth depth and writes the per-sequence table
/// (plus a mean row) to `out_csv` and a JSON summary next to it.
pub fn cmd_evaluate(
    pred_dir: &Path,
    gt_dir: &Path,
    out_csv: &Path,
    options: &EvaluateOptions,
) -> Result<EvaluateSummary, PipelineError> {
    let mut unmatched = Vec::new();
    let mut failed = Vec::new();
    let mut images_evaluated = 0;

    let rows: Vec<(String, MetricReport)> = if let Some(csv) = &options.from_csv {
        let file = std::fs::File::open(csv).map_err(io_err(csv))?;
        read_csv(std::io::BufReader::new(file))?
    } else {
        let rig = options.rig.ok_or_else(|| {
            PipelineError::Usage("--rig fx,baseline is required to evaluate depth files".into())
        })?;
        let pred_files = list_depth_files(pred_dir)?;
        let gt_files = list_depth_files(gt_dir)?;
        for rel in &gt_files {
            if pred_files.binary_search(rel).is_err() {
                unmatched.push(rel.to_string_lossy().into_owned());
            }
        }
        let pred_unit = match options.input {
            PredictionKind::Disparity => DepthUnit::DisparityPixels,
            PredictionKind::Depth => DepthUnit::Millimeters,
        };
        let mut per_sequence: BTreeMap<String, Vec<(String, MetricReport)>> = BTreeMap::new();
        for rel in &pred_files {
            let label = rel.to_string_lossy().into_owned();
            if gt_files.binary_search(rel).is_err() {
                unmatched.push(label);
                continue;
            }
            let result = (|| -> Result<MetricReport, PipelineError> {
                let gt = crate::depth_io::load_depth(gt_dir.join(rel), DepthUnit::Millimeters)?;
                let pred = load_depth_sized(pred_dir.join(rel), pred_unit, gt.size())?;
                Ok(evaluate_pair(
                    &pred,
                    &gt,
                    &rig,
                    options.bad_threshold,
                    options.delta_base,
                )?)
            })();
            match result {
                Ok(report) => {
                    images_evaluated += 1;
                    per_sequence
                        .entry(sequence_of(rel))
                        .or_default()
                        .push((label, report));
                }
                Err(e) => failed.push(e.record(Some(&label))),
            }
        }
        unmatched.sort();
        for u in &unmatched {
            eprintln!("warning: no counterpart for {u}, excluded");
        }
        per_sequence
            .into_iter()
            .map(|(seq, images)| Ok((seq, aggregate(&images, options.aggregation)?.mean)))
            .collect::<Result<_, MetricsError>>()?
    };

    let report: AggregateReport = aggregate(&rows, options.aggregation)?;
    if let Some(parent) = out_csv.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    let file = std::fs::File::create(out_csv).map_err(io_err(out_csv))?;
    write_csv(std::io::BufWriter::new(file), &report).map_err(io_err(out_csv))?;

    let summary = EvaluateSummary {
        aggregation: options.aggregation,
        mean: report.mean,
        variance: report.variance,
        images_evaluated,
        unmatched,
        failed,
    };
    write_json(&out_csv.with_extension("json"), &summary)?;
    Ok(summary)
}

/// Frame names of one metricized sequence directory: the reprojected depth files under
/// `depth/` (or the directory itself) with their `.depth.<ext>` suffix stripped.
pub fn read_sequence_dir(dir: &Path) -> Result<SequenceFrames, PipelineError> {
    let depth_dir = dir.join(DEPTH_DIR);
    let root = if depth_dir.is_dir() { depth_dir } else { dir.to_path_buf() };
    let frames = list_depth_files(&root)?
        .into_iter()
        .filter_map(|rel| {
            let s = rel.to_string_lossy().replace('\\', "/");
            s.strip_suffix(".depth.pfm")
                .or_else(|| s.strip_suffix(".depth.png"))
                .map(str::to_string)
        })
        .collect();
    let report = dir.join(SKIP_REPORT_FILE);
    let anchor = if report.is_file() {
        let text = std::fs::read_to_string(&report).map_err(io_err(&report))?;
        let parsed: SkipReport = serde_json::from_str(&text)
            .map_err(|e| PipelineError::Usage(format!("{}: {e}", report.display())))?;
        Some(parsed.anchor)
    } else {
        None
    };
    Ok(SequenceFrames { frames, anchor })
}

/// Builds `manifest.csv` and `summary.json` in `out_dir` from metricized sequence
/// directories named `<dataset>_<keyframe>`.
pub fn cmd_manifest(
    sequence_dirs: &[PathBuf],
    split_file: Option<&Path>,
    out_dir: &Path,
) -> Result<ManifestSummary, PipelineError> {
    let assignment = match split_file {
        Some(path) => {
            SplitAssignment::from_json(&std::fs::read_to_string(path).map_err(io_err(path))?)?
        }
        None => default_split(),
    };
    let mut outputs = BTreeMap::new();
    for dir in sequence_dirs {
        let name = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        let id: SequenceId = name.parse()?;
        outputs.insert(id, read_sequence_dir(dir)?);
    }
    let manifest = build_manifest(&outputs, &assignment)?;
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let csv_path = out_dir.join("manifest.csv");
    let file = std::fs::File::create(&csv_path).map_err(io_err(&csv_path))?;
    manifest
        .write_csv(std::io::BufWriter::new(file))
        .map_err(io_err(&csv_path))?;
    let summary = manifest.summary();
    write_json(&out_dir.join("summary.json"), &summary)?;
    Ok(summary)
}

/// Generates a synthetic scene and exports it for the other commands.
pub fn cmd_synth(
    spec: &SceneSpec,
    out_dir: &Path,
    format: DepthFormat,
) -> Result<(), PipelineError> {
    let scene = make_scene(spec)?;
    export_scene(&scene, out_dir, format)?;
    Ok(())
}
