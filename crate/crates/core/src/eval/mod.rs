//! Offline ground truth and the alignment-quality metrics.
//!
//! Ground truth comes from an unconstrained DTW between the performance and
//! score rolls. Each follower tick is compared with the score frame the path
//! pairs with the last performance frame the tick had seen.

mod ablation;
mod dtw;
mod report;

pub use ablation::{run_ablation, write_ablation, AblationRow, AblationSetup};
pub use dtw::{dtw_align, hamming_cost_matrix, WarpingPath};
pub use report::{
    latency_stats, misalign_rate, read_report, write_report, write_sweep, EvalReport, ThresholdRow,
    REPORT_HEADER, SWEEP_HEADER,
};

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::follower::{run_follow, FollowTrace, FollowerConfig, Source};
use crate::midi_io::PianoRoll;
use crate::tyke::ModelParams;

pub const DEFAULT_THRESHOLDS_MS: [f64; 9] = [25.0, 50.0, 75.0, 100.0, 125.0, 300.0, 500.0, 750.0, 1000.0];

/// Score frame paired with `perf_frame` on the path; the lower median when
/// several pairs share it.
pub fn ground_truth_position(path: &WarpingPath, perf_frame: usize) -> Result<usize> {
    let start = path.pairs.partition_point(|&(p, _)| p < perf_frame);
    let end = path.pairs.partition_point(|&(p, _)| p <= perf_frame);
    if start == end {
        return Err(Error::Data(format!("performance frame {perf_frame} not on the warping path")));
    }
    Ok(path.pairs[start + (end - start - 1) / 2].1)
}

/// Last performance frame visible to a tick at `sim_time_s`.
pub fn perf_frame_at(sim_time_s: f64, frame_duration: f64, n_perf: usize) -> usize {
    let consumed = ((sim_time_s / frame_duration).round() as usize).min(n_perf);
    consumed.saturating_sub(1)
}

/// Absolute error in milliseconds for each tick, skipping the stabilization
/// phase unless `include_stabilizing`.
pub fn alignment_errors(
    trace: &FollowTrace,
    path: &WarpingPath,
    frame_duration: f64,
    include_stabilizing: bool,
) -> Result<Vec<f64>> {
    let n_perf = path.n_perf();
    trace
        .entries
        .iter()
        .filter(|e| include_stabilizing || e.source != Source::Stabilizing)
        .map(|e| {
            let truth = ground_truth_position(path, perf_frame_at(e.sim_time_s, frame_duration, n_perf))?;
            Ok(truth.abs_diff(e.score_frame) as f64 * frame_duration * 1000.0)
        })
        .collect()
}

/// Output column `t` reads input column `floor(t / factor)`; the output has
/// `round(n * factor)` columns, at least one for a non-empty roll.
pub fn tempo_rescale(roll: &PianoRoll, factor: f64) -> Result<PianoRoll> {
    if !(factor > 0.0) || !factor.is_finite() {
        return Err(Error::InvalidConfig(format!("tempo factor {factor} must be positive")));
    }
    let n = roll.n_frames();
    let len = ((n as f64 * factor).round() as usize).max(n.min(1));
    let mut out = PianoRoll::zeros(len, roll.frame_duration());
    for t in 0..len {
        let src = ((t as f64 / factor + 1e-9).floor() as usize).min(n - 1);
        for p in 0..crate::midi_io::PITCHES {
            if roll.get(p, src) {
                out.set(p, t, true);
            }
        }
    }
    Ok(out)
}

/// Aligns, scores and times a finished trace.
pub fn evaluate(
    trace: &FollowTrace,
    score: &PianoRoll,
    performance: &PianoRoll,
    thresholds_ms: &[f64],
    include_stabilizing: bool,
) -> Result<EvalReport> {
    let path = dtw_align(performance, score)?;
    evaluate_with_path(trace, &path, performance.frame_duration(), thresholds_ms, include_stabilizing)
}

pub fn evaluate_with_path(
    trace: &FollowTrace,
    path: &WarpingPath,
    frame_duration: f64,
    thresholds_ms: &[f64],
    include_stabilizing: bool,
) -> Result<EvalReport> {
    let errors = alignment_errors(trace, path, frame_duration, include_stabilizing)?;
    let rows = thresholds_ms
        .iter()
        .map(|&t| misalign_rate(&errors, t))
        .collect::<Result<Vec<_>>>()?;
    let (latency_mean_ms, latency_sd_ms) = latency_stats(trace)?;
    Ok(EvalReport {
        rows,
        n_events: errors.len(),
        latency_mean_ms,
        latency_sd_ms,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepKind {
    /// Grid values are tempo factors applied to the score.
    TempoMismatch,
    /// Grid values are inference rates in Hz.
    InferenceRate,
}

impl fmt::Display for SweepKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepKind::TempoMismatch => "tempo",
            SweepKind::InferenceRate => "fe",
        })
    }
}

impl FromStr for SweepKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tempo" | "tempo_mismatch" => Ok(SweepKind::TempoMismatch),
            "fe" | "inference_rate" => Ok(SweepKind::InferenceRate),
            _ => Err(Error::InvalidConfig(format!("unknown sweep {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub grid_value: f64,
    pub report: EvalReport,
}

impl SweepPoint {
    /// Misalign rate at `theta_ms`, if that threshold was evaluated.
    pub fn rate_at(&self, theta_ms: f64) -> Option<f64> {
        self.report.row(theta_ms).map(|r| r.misalign_rate_pct)
    }
}

/// Runs the follower once per grid value and evaluates each run.
pub fn sweep(
    kind: SweepKind,
    grid: &[f64],
    score: &PianoRoll,
    performance: &PianoRoll,
    params: &ModelParams,
    cfg: &FollowerConfig,
    thresholds_ms: &[f64],
) -> Result<Vec<SweepPoint>> {
    if grid.is_empty() {
        return Err(Error::Empty("sweep grid"));
    }
    let fd = performance.frame_duration();
    let fixed_path = match kind {
        SweepKind::InferenceRate => Some(dtw_align(performance, score)?),
        SweepKind::TempoMismatch => None,
    };
    grid.iter()
        .map(|&g| {
            let report = match kind {
                SweepKind::TempoMismatch => {
                    let rescaled = tempo_rescale(score, g)?;
                    let trace = run_follow(&rescaled, performance, params, cfg)?;
                    evaluate(&trace, &rescaled, performance, thresholds_ms, false)?
                }
                SweepKind::InferenceRate => {
                    let cfg = FollowerConfig { f_e: g, ..cfg.clone() };
                    let trace = run_follow(score, performance, params, &cfg)?;
                    let path = fixed_path.as_ref().expect("path computed for rate sweep");
                    evaluate_with_path(&trace, path, fd, thresholds_ms, false)?
                }
            };
            Ok(SweepPoint { grid_value: g, report })
        })
        .collect()
}
