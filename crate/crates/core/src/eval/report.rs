use std::io::{BufRead, Write};

use super::SweepPoint;
use crate::error::{Error, Result};
use crate::follower::FollowTrace;

pub const REPORT_HEADER: &str = "theta_ms,misalign_rate_pct,mean_err_ms,sd_err_ms";
pub const SWEEP_HEADER: &str = "grid_value,misalign_rate_pct";
const LATENCY_KEY: &str = "latency_ms";

/// Metrics at one misalignment threshold. The error statistics cover only
/// the events aligned at that threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdRow {
    pub theta_ms: f64,
    pub misalign_rate_pct: f64,
    pub mean_err_ms: f64,
    pub sd_err_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<ThresholdRow>,
    pub n_events: usize,
    pub latency_mean_ms: f64,
    pub latency_sd_ms: f64,
}

impl EvalReport {
    pub fn row(&self, theta_ms: f64) -> Option<&ThresholdRow> {
        self.rows.iter().find(|r| (r.theta_ms - theta_ms).abs() < 1e-9)
    }
}

/// Mean and sample standard deviation; the deviation of a single value is 0.
fn mean_sd(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn misalign_rate(errors: &[f64], theta_ms: f64) -> Result<ThresholdRow> {
    if errors.is_empty() {
        return Err(Error::Empty("alignment errors"));
    }
    if !(theta_ms > 0.0) {
        return Err(Error::InvalidConfig(format!("threshold {theta_ms} must be positive")));
    }
    let aligned: Vec<f64> = errors.iter().copied().filter(|&e| e <= theta_ms).collect();
    let missed = errors.len() - aligned.len();
    let (mean, sd) = mean_sd(&aligned);
    Ok(ThresholdRow {
        theta_ms,
        misalign_rate_pct: 100.0 * missed as f64 / errors.len() as f64,
        mean_err_ms: mean,
        sd_err_ms: sd,
    })
}

/// Mean and sample standard deviation of per-tick wall latency.
pub fn latency_stats(trace: &FollowTrace) -> Result<(f64, f64)> {
    if trace.is_empty() {
        return Err(Error::Empty("trace"));
    }
    let xs: Vec<f64> = trace.entries.iter().map(|e| e.wall_latency_ms).collect();
    Ok(mean_sd(&xs))
}

/// One row per threshold, then `latency_ms,,mean,sd`.
pub fn write_report<W: Write>(report: &EvalReport, mut out: W) -> Result<()> {
    writeln!(out, "{REPORT_HEADER}")?;
    for r in &report.rows {
        writeln!(
            out,
            "{},{:.6},{:.6},{:.6}",
            r.theta_ms, r.misalign_rate_pct, r.mean_err_ms, r.sd_err_ms
        )?;
    }
    writeln!(out, "{LATENCY_KEY},,{:.6},{:.6}", report.latency_mean_ms, report.latency_sd_ms)?;
    Ok(())
}

/// Reads a report written by [`write_report`]. The event count is not
/// stored and comes back as 0.
pub fn read_report<R: BufRead>(input: R) -> Result<EvalReport> {
    let mut report = EvalReport {
        rows: Vec::new(),
        n_events: 0,
        latency_mean_ms: 0.0,
        latency_sd_ms: 0.0,
    };
    for (idx, line) in input.lines().enumerate() {
        let line = line?;
        let err = |msg: String| Error::Parse { line: idx + 1, msg };
        if idx == 0 {
            if line.trim_end() != REPORT_HEADER {
                return Err(err(format!("expected header {REPORT_HEADER:?}")));
            }
            continue;
        }
        let f: Vec<&str> = line.trim_end().split(',').collect();
        if f.len() != 4 {
            return Err(err(format!("expected 4 fields, got {}", f.len())));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| err(format!("bad number {s:?}")));
        if f[0] == LATENCY_KEY {
            report.latency_mean_ms = num(f[2])?;
            report.latency_sd_ms = num(f[3])?;
        } else {
            report.rows.push(ThresholdRow {
                theta_ms: num(f[0])?,
                misalign_rate_pct: num(f[1])?,
                mean_err_ms: num(f[2])?,
                sd_err_ms: num(f[3])?,
            });
        }
    }
    Ok(report)
}

/// Misalign rate at `theta_ms` for each grid point.
pub fn write_sweep<W: Write>(points: &[SweepPoint], theta_ms: f64, mut out: W) -> Result<()> {
    writeln!(out, "{SWEEP_HEADER}")?;
    for p in points {
        let rate = p
            .rate_at(theta_ms)
            .ok_or_else(|| Error::InvalidConfig(format!("threshold {theta_ms} ms was not evaluated")))?;
        writeln!(out, "{},{:.6}", p.grid_value, rate)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::follower::{Source, TraceEntry};

    #[test]
    fn rate_arithmetic() {
        let row = misalign_rate(&[10.0, 30.0, 60.0], 25.0).unwrap();
        assert!((row.misalign_rate_pct - 200.0 / 3.0).abs() < 1e-12);
        assert_eq!(row.mean_err_ms, 10.0);
        assert_eq!(row.sd_err_ms, 0.0);
        let zero = misalign_rate(&[0.0; 4], 25.0).unwrap();
        assert_eq!(zero.misalign_rate_pct, 0.0);
        assert!(misalign_rate(&[], 25.0).is_err());
        assert!(misalign_rate(&[1.0], 0.0).is_err());
    }

    #[test]
    fn latency() {
        let entry = |ms| TraceEntry {
            tick: 1,
            sim_time_s: 0.1,
            wall_latency_ms: ms,
            score_frame: 0,
            source: Source::Model,
        };
        let one = FollowTrace { entries: vec![entry(4.0)] };
        assert_eq!(latency_stats(&one).unwrap(), (4.0, 0.0));
        let two = FollowTrace { entries: vec![entry(2.0), entry(4.0)] };
        let (m, s) = latency_stats(&two).unwrap();
        assert_eq!(m, 3.0);
        assert!((s - 2f64.sqrt()).abs() < 1e-12);
        assert!(latency_stats(&FollowTrace::default()).is_err());
    }

    #[test]
    fn report_round_trip() {
        let report = EvalReport {
            rows: vec![
                misalign_rate(&[10.0, 30.0, 60.0], 25.0).unwrap(),
                misalign_rate(&[10.0, 30.0, 60.0], 100.0).unwrap(),
            ],
            n_events: 0,
            latency_mean_ms: 3.5,
            latency_sd_ms: 0.25,
        };
        let mut buf = Vec::new();
        write_report(&report, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.ends_with("latency_ms,,3.500000,0.250000\n"));
        let back = read_report(&buf[..]).unwrap();
        assert_eq!(back.rows.len(), 2);
        assert!((back.rows[0].misalign_rate_pct - report.rows[0].misalign_rate_pct).abs() < 1e-6);
        assert_eq!(back.latency_mean_ms, 3.5);
    }
}
