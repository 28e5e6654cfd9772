use std::io::Write;

use super::{dtw_align, evaluate_with_path, EvalReport};
use crate::augment::{ablation_variants, AugmentSpec};
use crate::dataset::{Corpus, ManifestRow};
use crate::error::Result;
use crate::follower::{run_follow, FollowerConfig};
use crate::midi_io::PianoRoll;
use crate::tyke::{train, ModelParams, TrainConfig};

/// What the ablation harness trains and where it evaluates.
#[derive(Debug, Clone)]
pub struct AblationSetup<'a> {
    pub corpus: &'a Corpus,
    pub train_rows: &'a [ManifestRow],
    pub val_rows: &'a [ManifestRow],
    /// Training context and window sizes.
    pub c: usize,
    pub w: usize,
    pub train: TrainConfig,
    pub base_chain: &'a [AugmentSpec],
    pub score: &'a PianoRoll,
    pub performance: &'a PianoRoll,
    pub follower: FollowerConfig,
    pub thresholds_ms: &'a [f64],
}

#[derive(Debug, Clone)]
pub struct AblationRow {
    pub label: String,
    pub params: ModelParams,
    pub val_acc: f64,
    pub report: EvalReport,
}

/// Trains one model per ablation variant with the same seed and evaluates
/// each on the same score/performance pair.
pub fn run_ablation(setup: &AblationSetup<'_>, variants: usize) -> Result<Vec<AblationRow>> {
    let chains = ablation_variants(setup.base_chain, variants)?;
    let path = dtw_align(setup.performance, setup.score)?;
    let fd = setup.performance.frame_duration();
    chains
        .into_iter()
        .map(|(label, chain)| {
            log::info!("ablation variant {label}");
            let outcome = train(
                setup.corpus,
                setup.train_rows,
                setup.val_rows,
                setup.c,
                setup.w,
                &setup.train,
                &chain,
            )?;
            let trace = run_follow(setup.score, setup.performance, &outcome.best, &setup.follower)?;
            let report = evaluate_with_path(&trace, &path, fd, setup.thresholds_ms, false)?;
            Ok(AblationRow {
                label,
                val_acc: outcome.best_metrics().val_acc,
                params: outcome.best,
                report,
            })
        })
        .collect()
}

/// `variant,theta_ms,misalign_rate_pct,mean_err_ms,sd_err_ms`, variants in
/// run order.
pub fn write_ablation<W: Write>(rows: &[AblationRow], mut out: W) -> Result<()> {
    writeln!(out, "variant,theta_ms,misalign_rate_pct,mean_err_ms,sd_err_ms")?;
    for row in rows {
        for r in &row.report.rows {
            writeln!(
                out,
                "{},{},{:.6},{:.6},{:.6}",
                row.label, r.theta_ms, r.misalign_rate_pct, r.mean_err_ms, r.sd_err_ms
            )?;
        }
        writeln!(
            out,
            "{},latency_ms,,{:.6},{:.6}",
            row.label, row.report.latency_mean_ms, row.report.latency_sd_ms
        )?;
    }
    Ok(())
}
