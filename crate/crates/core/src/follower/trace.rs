use std::io::{BufRead, Write};

use super::Source;
use crate::error::{Error, Result};

pub const TRACE_HEADER: &str = "tick,sim_time_s,wall_latency_ms,score_frame,source";

#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry {
    /// 1-based tick number.
    pub tick: usize,
    pub sim_time_s: f64,
    pub wall_latency_ms: f64,
    pub score_frame: usize,
    pub source: Source,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FollowTrace {
    pub entries: Vec<TraceEntry>,
}

impl FollowTrace {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

pub fn write_trace<W: Write>(trace: &FollowTrace, mut out: W) -> Result<()> {
    writeln!(out, "{TRACE_HEADER}")?;
    for e in &trace.entries {
        writeln!(
            out,
            "{},{:.6},{:.6},{},{}",
            e.tick, e.sim_time_s, e.wall_latency_ms, e.score_frame, e.source
        )?;
    }
    Ok(())
}

pub fn read_trace<R: BufRead>(input: R) -> Result<FollowTrace> {
    let mut entries = Vec::new();
    for (idx, line) in input.lines().enumerate() {
        let line = line?;
        let err = |msg: String| Error::Parse { line: idx + 1, msg };
        if idx == 0 {
            if line.trim_end() != TRACE_HEADER {
                return Err(err(format!("expected header {TRACE_HEADER:?}")));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.trim_end().split(',').collect();
        if f.len() != 5 {
            return Err(err(format!("expected 5 fields, got {}", f.len())));
        }
        let real = |s: &str| s.parse::<f64>().map_err(|_| err(format!("bad number {s:?}")));
        let int = |s: &str| s.parse::<usize>().map_err(|_| err(format!("bad integer {s:?}")));
        entries.push(TraceEntry {
            tick: int(f[0])?,
            sim_time_s: real(f[1])?,
            wall_latency_ms: real(f[2])?,
            score_frame: int(f[3])?,
            source: f[4].parse().map_err(|_| err(format!("bad source {:?}", f[4])))?,
        });
    }
    Ok(FollowTrace { entries })
}
