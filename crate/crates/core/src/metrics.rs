//! Disparity and depth error metrics, disparity/depth conversion, and per-sequence
//! aggregation.
//!
//! Threshold comparisons are strict: a disparity error counts as "bad" only when it
//! exceeds the threshold, and a pixel is δ-accurate only when its ratio is below the base.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::depth_io::{valid_intersection, DepthIoError, DepthMap, DepthUnit};

pub const DEFAULT_BAD_THRESHOLD: f64 = 3.0;
pub const DEFAULT_DELTA_BASE: f64 = 1.25;
/// Disparities at or below this are treated as no match.
pub const DISPARITY_EPSILON: f64 = 1e-6;

pub const CSV_HEADER: &str = "sequence,epe,disp_rmse,bad3,abs_rel,depth_rmse,mae,delta1";
pub const MEAN_ROW_LABEL: &str = "mean";

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("prediction and ground truth share no valid pixels")]
    EmptyOverlap,

    #[error("non-positive ground-truth depth {0}")]
    NonPositiveGroundTruth(f64),

    #[error("expected a {expected:?} map, got {found:?}")]
    UnitMismatch { expected: DepthUnit, found: DepthUnit },

    #[error("invalid stereo rig: {0}")]
    InvalidRig(String),

    #[error("nothing to aggregate")]
    EmptyAggregate,

    #[error("CSV line {line}: {reason}")]
    MalformedCsv { line: usize, reason: String },

    #[error(transparent)]
    Depth(#[from] DepthIoError),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

fn expect_unit(map: &DepthMap, expected: DepthUnit) -> Result<(), MetricsError> {
    if map.unit() == expected {
        Ok(())
    } else {
        Err(MetricsError::UnitMismatch {
            expected,
            found: map.unit(),
        })
    }
}

/// Rectified stereo pair geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StereoRig {
    /// Focal length in pixels.
    pub fx: f64,
    /// Baseline in millimeters.
    pub baseline: f64,
}

impl StereoRig {
    pub fn new(fx: f64, baseline: f64) -> Result<Self, MetricsError> {
        if !(fx > 0.0 && fx.is_finite() && baseline > 0.0 && baseline.is_finite()) {
            return Err(MetricsError::InvalidRig(format!(
                "fx={fx}, baseline={baseline}; both must be positive and finite"
            )));
        }
        Ok(Self { fx, baseline })
    }

    fn product(&self) -> f64 {
        self.fx * self.baseline
    }
}

/// `depth = fx * baseline / disparity`; disparities at or below [`DISPARITY_EPSILON`] become invalid.
pub fn depth_from_disparity(disp: &DepthMap, rig: &StereoRig) -> Result<DepthMap, MetricsError> {
    expect_unit(disp, DepthUnit::DisparityPixels)?;
    let k = rig.product();
    Ok(disp.map_valid(DepthUnit::Millimeters, |d| {
        if d > DISPARITY_EPSILON {
            k / d
        } else {
            0.0
        }
    }))
}

/// Inverse of [`depth_from_disparity`].
pub fn disparity_from_depth(depth: &DepthMap, rig: &StereoRig) -> Result<DepthMap, MetricsError> {
    expect_unit(depth, DepthUnit::Millimeters)?;
    let k = rig.product();
    Ok(depth.map_valid(DepthUnit::DisparityPixels, |z| k / z))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisparityMetrics {
    pub epe: f64,
    pub rmse: f64,
    /// Percentage of pixels whose error exceeds the threshold.
    pub bad_percent: f64,
    pub count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthMetrics {
    pub abs_rel: f64,
    pub rmse: f64,
    pub mae: f64,
    pub delta1_percent: f64,
    pub count: usize,
}

/// Disparity metrics over `(pred, gt)` pairs.
pub fn disparity_metrics_from_pairs(
    pairs: impl IntoIterator<Item = (f64, f64)>,
    bad_threshold: f64,
) -> Result<DisparityMetrics, MetricsError> {
    let (mut n, mut abs, mut sq, mut bad) = (0usize, 0.0, 0.0, 0usize);
    for (pred, gt) in pairs {
        let e = (pred - gt).abs();
        n += 1;
        abs += e;
        sq += e * e;
        if e > bad_threshold {
            bad += 1;
        }
    }
    if n == 0 {
        return Err(MetricsError::EmptyOverlap);
    }
    let nf = n as f64;
    Ok(DisparityMetrics {
        epe: abs / nf,
        rmse: (sq / nf).sqrt(),
        bad_percent: 100.0 * bad as f64 / nf,
        count: n,
    })
}

/// Depth metrics over `(pred, gt)` pairs; any `gt <= 0` is an error.
pub fn depth_metrics_from_pairs(
    pairs: impl IntoIterator<Item = (f64, f64)>,
    delta_base: f64,
) -> Result<DepthMetrics, MetricsError> {
    let (mut n, mut rel, mut abs, mut sq, mut good) = (0usize, 0.0, 0.0, 0.0, 0usize);
    for (pred, gt) in pairs {
        if !(gt > 0.0) {
            return Err(MetricsError::NonPositiveGroundTruth(gt));
        }
        let e = (pred - gt).abs();
        n += 1;
        rel += e / gt;
        abs += e;
        sq += e * e;
        if (pred / gt).max(gt / pred) < delta_base {
            good += 1;
        }
    }
    if n == 0 {
        return Err(MetricsError::EmptyOverlap);
    }
    let nf = n as f64;
    Ok(DepthMetrics {
        abs_rel: rel / nf,
        rmse: (sq / nf).sqrt(),
        mae: abs / nf,
        delta1_percent: 100.0 * good as f64 / nf,
        count: n,
    })
}

fn paired(pred: &DepthMap, gt: &DepthMap) -> Result<Vec<(f64, f64)>, MetricsError> {
    let common = valid_intersection(pred, gt)?;
    Ok(common
        .into_iter()
        .map(|i| (pred.values()[i], gt.values()[i]))
        .collect())
}

/// EPE, RMSE and bad-pixel percentage over the pixels valid in both disparity maps.
pub fn disparity_metrics(
    pred: &DepthMap,
    gt: &DepthMap,
    bad_threshold: f64,
) -> Result<DisparityMetrics, MetricsError> {
    expect_unit(pred, DepthUnit::DisparityPixels)?;
    expect_unit(gt, DepthUnit::DisparityPixels)?;
    disparity_metrics_from_pairs(paired(pred, gt)?, bad_threshold)
}

/// Abs Rel, RMSE, MAE and δ accuracy over the pixels valid in both depth maps.
pub fn depth_metrics(
    pred: &DepthMap,
    gt: &DepthMap,
    delta_base: f64,
) -> Result<DepthMetrics, MetricsError> {
    expect_unit(pred, DepthUnit::Millimeters)?;
    expect_unit(gt, DepthUnit::Millimeters)?;
    depth_metrics_from_pairs(paired(pred, gt)?, delta_base)
}

/// One row of the evaluation table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub epe: f64,
    pub disp_rmse: f64,
    pub bad3: f64,
    pub abs_rel: f64,
    pub depth_rmse: f64,
    pub mae: f64,
    pub delta1: f64,
    pub valid_pixel_count: usize,
}

impl MetricReport {
    pub fn from_parts(disp: &DisparityMetrics, depth: &DepthMetrics) -> Self {
        Self {
            epe: disp.epe,
            disp_rmse: disp.rmse,
            bad3: disp.bad_percent,
            abs_rel: depth.abs_rel,
            depth_rmse: depth.rmse,
            mae: depth.mae,
            delta1: depth.delta1_percent,
            valid_pixel_count: disp.count,
        }
    }

    /// Metric values in table column order.
    pub fn columns(&self) -> [f64; 7] {
        [
            self.epe,
            self.disp_rmse,
            self.bad3,
            self.abs_rel,
            self.depth_rmse,
            self.mae,
            self.delta1,
        ]
    }

    fn from_columns(c: [f64; 7], valid_pixel_count: usize) -> Self {
        Self {
            epe: c[0],
            disp_rmse: c[1],
            bad3: c[2],
            abs_rel: c[3],
            depth_rmse: c[4],
            mae: c[5],
            delta1: c[6],
            valid_pixel_count,
        }
    }
}

/// Disparity and depth metrics for one prediction against a metric depth ground truth.
///
/// `pred` may be a disparity map (converted to depth with the rig) or a depth map
/// (converted to disparity). The ground truth is converted to disparity for the
/// disparity columns.
pub fn evaluate_pair(
    pred: &DepthMap,
    gt_depth: &DepthMap,
    rig: &StereoRig,
    bad_threshold: f64,
    delta_base: f64,
) -> Result<MetricReport, MetricsError> {
    expect_unit(gt_depth, DepthUnit::Millimeters)?;
    let (pred_disp, pred_depth) = match pred.unit() {
        DepthUnit::DisparityPixels => (pred.clone(), depth_from_disparity(pred, rig)?),
        DepthUnit::Millimeters => (disparity_from_depth(pred, rig)?, pred.clone()),
        found => {
            return Err(MetricsError::UnitMismatch {
                expected: DepthUnit::DisparityPixels,
                found,
            })
        }
    };
    let gt_disp = disparity_from_depth(gt_depth, rig)?;
    let disp = disparity_metrics(&pred_disp, &gt_disp, bad_threshold)?;
    let depth = depth_metrics(&pred_depth, gt_depth, delta_base)?;
    Ok(MetricReport::from_parts(&disp, &depth))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Unweighted arithmetic mean of the rows.
    #[default]
    PerSequence,
    /// Rows weighted by their valid pixel counts; RMSE columns pooled in quadrature.
    PixelWeighted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub mean: MetricReport,
    /// Population variance of each column across rows.
    pub variance: [f64; 7],
    pub rows: Vec<(String, MetricReport)>,
}

pub fn aggregate(
    reports: &[(String, MetricReport)],
    mode: Aggregation,
) -> Result<AggregateReport, MetricsError> {
    if reports.is_empty() {
        return Err(MetricsError::EmptyAggregate);
    }
    let n = reports.len() as f64;
    let total_pixels: usize = reports.iter().map(|(_, r)| r.valid_pixel_count).sum();
    let mut mean = [0.0; 7];
    match mode {
        Aggregation::PerSequence => {
            for (_, r) in reports {
                for (m, v) in mean.iter_mut().zip(r.columns()) {
                    *m += v;
                }
            }
            mean.iter_mut().for_each(|m| *m /= n);
        }
        Aggregation::PixelWeighted => {
            if total_pixels == 0 {
                return Err(MetricsError::EmptyAggregate);
            }
            let w_total = total_pixels as f64;
            for (_, r) in reports {
                let w = r.valid_pixel_count as f64 / w_total;
                for (k, (m, v)) in mean.iter_mut().zip(r.columns()).enumerate() {
                    // columns 1 and 4 are RMSEs
                    *m += if k == 1 || k == 4 { w * v * v } else { w * v };
                }
            }
            mean[1] = mean[1].sqrt();
            mean[4] = mean[4].sqrt();
        }
    }
    let mut variance = [0.0; 7];
    for (_, r) in reports {
        for (k, v) in r.columns().into_iter().enumerate() {
            variance[k] += (v - mean[k]).powi(2) / n;
        }
    }
    Ok(AggregateReport {
        mean: MetricReport::from_columns(mean, total_pixels),
        variance,
        rows: reports.to_vec(),
    })
}

fn csv_row(label: &str, r: &MetricReport) -> String {
    let c = r.columns();
    format!(
        "{label},{:.3},{:.3},{:.3},{:.3},{:.3},{:.3},{:.3}",
        c[0], c[1], c[2], c[3], c[4], c[5], c[6]
    )
}

/// Writes the per-row table followed by the mean row, three decimals per metric.
pub fn write_csv<W: Write>(mut out: W, report: &AggregateReport) -> std::io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for (label, r) in &report.rows {
        writeln!(out, "{}", csv_row(label, r))?;
    }
    writeln!(out, "{}", csv_row(MEAN_ROW_LABEL, &report.mean))?;
    out.flush()
}

/// Reads rows in [`CSV_HEADER`] layout; any `mean` row is skipped.
///
/// Rows carry no pixel counts, so `valid_pixel_count` is 0 for every parsed row.
pub fn read_csv<R: BufRead>(reader: R) -> Result<Vec<(String, MetricReport)>, MetricsError> {
    let mut rows = Vec::new();
    let mut saw_header = false;
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if !saw_header {
            if trimmed.replace(' ', "") != CSV_HEADER {
                return Err(MetricsError::MalformedCsv {
                    line: lineno,
                    reason: format!("expected header {CSV_HEADER:?}"),
                });
            }
            saw_header = true;
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        if fields.len() != 8 {
            return Err(MetricsError::MalformedCsv {
                line: lineno,
                reason: format!("expected 8 fields, found {}", fields.len()),
            });
        }
        if fields[0].eq_ignore_ascii_case(MEAN_ROW_LABEL) {
            continue;
        }
        let mut cols = [0.0; 7];
        for (slot, f) in cols.iter_mut().zip(&fields[1..]) {
            *slot = f
                .replace('_', "")
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite() && *v >= 0.0)
                .ok_or_else(|| MetricsError::MalformedCsv {
                    line: lineno,
                    reason: format!("bad metric value {f:?}"),
                })?;
        }
        rows.push((fields[0].to_string(), MetricReport::from_columns(cols, 0)));
    }
    Ok(rows)
}
