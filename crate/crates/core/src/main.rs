use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use sfm_metricize::depth_io::DepthFormat;
use sfm_metricize::metrics::{Aggregation, StereoRig, DEFAULT_BAD_THRESHOLD, DEFAULT_DELTA_BASE};
use sfm_metricize::pipeline::{
    cmd_evaluate, cmd_manifest, cmd_metricize, cmd_metricize_batch, cmd_synth, read_jobs,
    EvaluateOptions, MetricizeOptions, PipelineError, PredictionKind,
};
use sfm_metricize::scale::{PointSelection, DEFAULT_MIN_SAMPLES};
use sfm_metricize::synth::SceneSpec;

#[derive(Parser)]
#[command(name = "sfm-metricize", version, about = "Metric depth from SfM reconstructions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Recover the metric scale of a sequence and warp its anchor depth into every frame.
    Metricize(MetricizeArgs),
    /// Score predicted disparity or depth against ground truth.
    Evaluate(EvaluateArgs),
    /// Build the train/validation frame manifest from metricized sequences.
    Manifest(ManifestArgs),
    /// Write a synthetic scene with known scale.
    Synth(SynthArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Pfm,
    Png16,
}

impl From<FormatArg> for DepthFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Pfm => DepthFormat::Pfm,
            FormatArg::Png16 => DepthFormat::Png16,
        }
    }
}

#[derive(Args)]
struct MetricizeArgs {
    /// Directory with cameras.txt, images.txt and points3D.txt.
    #[arg(required_unless_present = "batch")]
    model_dir: Option<PathBuf>,
    /// Metric depth of the anchor image (PFM or 16-bit PNG, millimeters).
    #[arg(required_unless_present = "batch")]
    anchor_depth: Option<PathBuf>,
    /// Image name of the anchor inside the reconstruction.
    #[arg(required_unless_present = "batch")]
    anchor_image_name: Option<String>,
    /// Output directory (root directory in batch mode).
    #[arg(long, short)]
    out: PathBuf,
    /// JSON list of jobs {sequence, model_dir, anchor_depth, anchor_image, frames?}.
    #[arg(long, conflicts_with_all = ["model_dir", "anchor_depth", "anchor_image_name"])]
    batch: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long, default_value_t = DEFAULT_MIN_SAMPLES)]
    min_samples: usize,
    /// Replacement pinhole intrinsics as fx,fy,cx,cy.
    #[arg(long, value_parser = parse_floats::<4>)]
    intrinsics_override: Option<[f64; 4]>,
    /// Only use points seen in the anchor image.
    #[arg(long)]
    tracked_only: bool,
    #[arg(long, value_enum, default_value = "pfm")]
    format: FormatArg,
    /// Sequence identifier recorded in the outputs.
    #[arg(long)]
    sequence: Option<String>,
    /// All frame names of the sequence, one per line; unregistered ones are reported.
    #[arg(long)]
    frames: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum InputArg {
    Disparity,
    Depth,
}

#[derive(Clone, Copy, ValueEnum)]
enum AggregationArg {
    PerSequence,
    PixelWeighted,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(required_unless_present = "from_csv")]
    pred_dir: Option<PathBuf>,
    #[arg(required_unless_present = "from_csv")]
    gt_dir: Option<PathBuf>,
    /// Output CSV; a JSON summary is written next to it.
    #[arg(long, short)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "disparity")]
    input: InputArg,
    /// Stereo rig as fx,baseline (pixels, millimeters).
    #[arg(long, value_parser = parse_floats::<2>)]
    rig: Option<[f64; 2]>,
    #[arg(long, default_value_t = DEFAULT_BAD_THRESHOLD)]
    bad_threshold: f64,
    #[arg(long, default_value_t = DEFAULT_DELTA_BASE)]
    delta_base: f64,
    #[arg(long, value_enum, default_value = "per-sequence")]
    aggregation: AggregationArg,
    /// Aggregate an existing per-sequence CSV instead of reading depth files.
    #[arg(long, conflicts_with_all = ["pred_dir", "gt_dir"])]
    from_csv: Option<PathBuf>,
}

#[derive(Args)]
struct ManifestArgs {
    /// Metricized sequence directories named <dataset>_<keyframe>.
    #[arg(required = true)]
    sequence_dirs: Vec<PathBuf>,
    /// JSON object {"train": [...], "validation": [...]}; defaults to the built-in split.
    #[arg(long)]
    split_file: Option<PathBuf>,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum SurfaceArg {
    Plane,
    Sphere,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, short)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "plane")]
    surface: SurfaceArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Millimeters per model unit.
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    #[arg(long, default_value_t = 5)]
    frames: usize,
    #[arg(long, default_value_t = 0)]
    unregistered: usize,
    #[arg(long, default_value_t = 400)]
    points: usize,
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, value_enum, default_value = "pfm")]
    format: FormatArg,
}

fn parse_floats<const N: usize>(s: &str) -> Result<[f64; N], String> {
    let values = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<Vec<_>, _>>()?;
    values
        .try_into()
        .map_err(|v: Vec<f64>| format!("expected {N} comma-separated numbers, got {}", v.len()))
}

fn run(cli: Cli) -> Result<ExitCode, PipelineError> {
    match cli.command {
        Command::Metricize(a) => {
            let options = MetricizeOptions {
                min_samples: a.min_samples,
                intrinsics_override: a.intrinsics_override,
                selection: if a.tracked_only {
                    PointSelection::TrackedOnly
                } else {
                    PointSelection::All
                },
                format: a.format.into(),
                sequence: a.sequence,
                frames_file: a.frames,
            };
            if let Some(batch) = a.batch {
                let jobs = read_jobs(&batch)?;
                let report = cmd_metricize_batch(&jobs, &a.out, &options, a.jobs)?;
                for rec in &report.failed {
                    println!("{}", serde_json::to_string(rec).expect("serializable"));
                }
                eprintln!(
                    "{} sequences metricized, {} failed",
                    report.succeeded.len(),
                    report.failed.len()
                );
                return Ok(if report.failed.is_empty() {
                    ExitCode::SUCCESS
                } else {
                    ExitCode::FAILURE
                });
            }
            let (Some(model), Some(depth), Some(anchor)) =
                (a.model_dir, a.anchor_depth, a.anchor_image_name)
            else {
                return Err(PipelineError::Usage("missing positional arguments".into()));
            };
            let summary = cmd_metricize(&model, &depth, &anchor, &a.out, &options)?;
            eprintln!(
                "scale {} from {} samples, {} frames reprojected, {} unregistered",
                summary.scale.scale,
                summary.scale.sample_count,
                summary.skip_report.reprojected.len(),
                summary.skip_report.unregistered.len()
            );
        }
        Command::Evaluate(a) => {
            let rig = a
                .rig
                .map(|[fx, baseline]| StereoRig::new(fx, baseline))
                .transpose()?;
            let options = EvaluateOptions {
                rig,
                input: match a.input {
                    InputArg::Disparity => PredictionKind::Disparity,
                    InputArg::Depth => PredictionKind::Depth,
                },
                bad_threshold: a.bad_threshold,
                delta_base: a.delta_base,
                aggregation: match a.aggregation {
                    AggregationArg::PerSequence => Aggregation::PerSequence,
                    AggregationArg::PixelWeighted => Aggregation::PixelWeighted,
                },
                from_csv: a.from_csv,
            };
            let pred = a.pred_dir.unwrap_or_default();
            let gt = a.gt_dir.unwrap_or_default();
            let summary = cmd_evaluate(&pred, &gt, &a.out, &options)?;
            for rec in &summary.failed {
                println!("{}", serde_json::to_string(rec).expect("serializable"));
            }
            if !summary.failed.is_empty() {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Manifest(a) => {
            let summary = cmd_manifest(&a.sequence_dirs, a.split_file.as_deref(), &a.out)?;
            eprintln!(
                "train {} frames, validation {} frames",
                summary.train_total, summary.validation_total
            );
        }
        Command::Synth(a) => {
            let mut spec = match a.surface {
                SurfaceArg::Plane => SceneSpec::plane(a.seed),
                SurfaceArg::Sphere => SceneSpec::sphere_patch(a.seed),
            };
            spec.true_scale = a.scale;
            spec.n_frames = a.frames;
            spec.unregistered_frames = a.unregistered;
            spec.n_points = a.points;
            spec.noise_sigma = a.noise;
            cmd_synth(&spec, &a.out, a.format.into())?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            println!(
                "{}",
                serde_json::to_string(&e.record(None)).expect("serializable")
            );
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
