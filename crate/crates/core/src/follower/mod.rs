//! Heuristic layer on top of the correlation model, and the fixed-rate
//! simulated following loop.
//!
//! Each tick the model scores every candidate position inside the current
//! score context. The scores are smoothed, significant peaks are extracted,
//! and the candidates are checked against a line fitted through recent
//! predictions. Until enough predictions exist the strongest peak is taken
//! as is.

mod signal;
mod trace;

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

pub use signal::{find_peaks, local_maxima, ols_fit, prominence, smooth, Peak};
pub use trace::{read_trace, write_trace, FollowTrace, TraceEntry, TRACE_HEADER};

use crate::error::{Error, Result};
use crate::midi_io::{PianoRoll, DEFAULT_FRAME_DURATION};
use crate::tyke::ModelParams;

#[derive(Debug, Clone, PartialEq)]
pub struct FollowerConfig {
    /// Inference rate in Hz.
    pub f_e: f64,
    pub w: usize,
    pub c: usize,
    pub smooth_window: usize,
    pub buffer_capacity: usize,
    pub stabilization_count: usize,
    pub prominence_min: f64,
    /// Frames; negative.
    pub lower_bound: f64,
    /// Frames; positive.
    pub upper_bound: f64,
    pub rate_min: f64,
    pub rate_max: f64,
    pub max_consecutive_buffer: usize,
    pub frame_duration: f64,
    /// Fraction of the context placed before the last prediction.
    pub anchor_ratio: f64,
}

impl Default for FollowerConfig {
    fn default() -> Self {
        Self {
            f_e: 10.0,
            w: 500,
            c: 1250,
            smooth_window: 5,
            buffer_capacity: 20,
            stabilization_count: 5,
            prominence_min: 3.0,
            lower_bound: -48.0,
            upper_bound: 96.0,
            rate_min: 0.5,
            rate_max: 1.5,
            max_consecutive_buffer: 5,
            frame_duration: DEFAULT_FRAME_DURATION,
            anchor_ratio: 0.6,
        }
    }
}

impl FollowerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.w == 0 || self.c <= self.w {
            return bad("need c > w > 0");
        }
        if !(self.f_e > 0.0) || !(self.frame_duration > 0.0) {
            return bad("f_e and frame_duration must be positive");
        }
        if self.smooth_window % 2 == 0 {
            return bad("smooth_window must be odd");
        }
        if self.stabilization_count < 2 || self.buffer_capacity < self.stabilization_count {
            return bad("need buffer_capacity >= stabilization_count >= 2");
        }
        if !(self.rate_min < self.rate_max) {
            return bad("rate_min must be below rate_max");
        }
        if !(self.lower_bound <= 0.0 && self.upper_bound >= 0.0) {
            return bad("lower_bound must be <= 0 <= upper_bound");
        }
        if !(0.0..=1.0).contains(&self.anchor_ratio) {
            return bad("anchor_ratio must lie in [0, 1]");
        }
        Ok(())
    }

    /// Score frames per tick when the performer plays at score tempo.
    pub fn frames_per_tick(&self) -> f64 {
        1.0 / (self.f_e * self.frame_duration)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Source {
    Model,
    Buffer,
    Mean,
    Stabilizing,
}

impl Source {
    pub fn name(self) -> &'static str {
        match self {
            Source::Model => "model",
            Source::Buffer => "buffer",
            Source::Mean => "mean",
            Source::Stabilizing => "stabilizing",
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Source {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [Source::Model, Source::Buffer, Source::Mean, Source::Stabilizing]
            .into_iter()
            .find(|src| src.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown source {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FollowerState {
    /// `(tick, score_position)`, oldest first.
    pub buffer: VecDeque<(usize, f64)>,
    pub consecutive_buffer_uses: usize,
    pub last_prediction: Option<usize>,
    pub context_anchor: usize,
    /// Ticks processed so far.
    pub tick: usize,
}

impl FollowerState {
    fn push(&mut self, position: f64, capacity: usize) {
        if self.buffer.len() == capacity {
            self.buffer.pop_front();
        }
        self.buffer.push_back((self.tick, position));
    }
}

/// Extrapolates the buffer's least-squares line to the tick after its newest
/// entry.
pub fn regress_extrapolate(buffer: &VecDeque<(usize, f64)>) -> Result<f64> {
    let points: Vec<_> = buffer.iter().map(|&(t, p)| (t as f64, p)).collect();
    let (a, b) = ols_fit(&points)?;
    let next = buffer.back().map_or(0, |e| e.0) + 1;
    Ok(a + b * next as f64)
}

fn buffer_slope(buffer: &VecDeque<(usize, f64)>) -> Result<f64> {
    let points: Vec<_> = buffer.iter().map(|&(t, p)| (t as f64, p)).collect();
    Ok(ols_fit(&points)?.1)
}

/// Argmax of `raw` within `radius` of `center`, lowest index on ties.
fn refine(raw: &[f64], center: usize, radius: usize) -> usize {
    let lo = center.saturating_sub(radius);
    let hi = (center + radius + 1).min(raw.len());
    let mut best = lo;
    for i in lo..hi {
        if raw[i] > raw[best] {
            best = i;
        }
    }
    best
}

/// Candidate positions within the correlation output, strongest first.
fn candidates(raw: &[f64], cfg: &FollowerConfig) -> Result<Vec<usize>> {
    if raw.is_empty() {
        return Err(Error::Empty("correlation output"));
    }
    let smoothed = smooth(raw, cfg.smooth_window)?;
    let mut peaks = find_peaks(&smoothed, cfg.prominence_min);
    if peaks.is_empty() {
        let top = crate::tyke::predict(&smoothed)?;
        return Ok(vec![refine(raw, top, cfg.smooth_window / 2)]);
    }
    peaks.sort_by(|a, b| b.prominence.total_cmp(&a.prominence).then(a.index.cmp(&b.index)));
    Ok(peaks
        .iter()
        .map(|p| refine(raw, p.index, cfg.smooth_window / 2))
        .collect())
}

/// One heuristic decision for correlation output `raw`, computed against the
/// context that starts at `state.context_anchor`. Returns the absolute score
/// frame chosen and where it came from, and updates the state.
pub fn heuristic_step(
    state: &mut FollowerState,
    raw: &[f64],
    cfg: &FollowerConfig,
    score_len: usize,
) -> Result<(usize, Source)> {
    let last_frame = score_len.saturating_sub(1) as f64;
    let absolute = |k: usize| ((state.context_anchor + k) as f64).min(last_frame);
    let cands: Vec<f64> = candidates(raw, cfg)?.into_iter().map(absolute).collect();
    let best = cands[0];

    let (chosen, source) = if state.buffer.len() < cfg.stabilization_count {
        (best, Source::Stabilizing)
    } else {
        let predicted = regress_extrapolate(&state.buffer)?;
        let slope = buffer_slope(&state.buffer)?;
        let last = state.last_prediction.map_or(0.0, |p| p as f64);
        let valid = |q: f64| {
            let rate_ok = slope <= 0.0 || {
                let rate = (q - last) / slope;
                rate >= cfg.rate_min && rate <= cfg.rate_max
            };
            q >= last + cfg.lower_bound
                && q - predicted >= cfg.lower_bound
                && q - predicted <= cfg.upper_bound
                && rate_ok
        };
        if let Some(&q) = cands.iter().find(|&&q| valid(q)) {
            state.consecutive_buffer_uses = 0;
            (q, Source::Model)
        } else {
            state.consecutive_buffer_uses += 1;
            if state.consecutive_buffer_uses > cfg.max_consecutive_buffer {
                state.consecutive_buffer_uses = 0;
                (best, Source::Model)
            } else {
                let mean = (predicted + best) / 2.0;
                if (mean - best).abs() <= cfg.upper_bound {
                    (mean, Source::Mean)
                } else {
                    (predicted, Source::Buffer)
                }
            }
        }
    };

    let position = chosen.round().clamp(0.0, last_frame) as usize;
    state.push(position as f64, cfg.buffer_capacity);
    state.last_prediction = Some(position);
    state.tick += 1;
    Ok((position, source))
}

/// Context start that puts the last prediction `anchor_ratio` of the way
/// into the context while keeping the context inside the score.
pub fn advance_context(state: &FollowerState, cfg: &FollowerConfig, score_len: usize) -> usize {
    let Some(last) = state.last_prediction else {
        return 0;
    };
    let back = (cfg.anchor_ratio * cfg.c as f64).floor() as usize;
    last.saturating_sub(back).min(score_len.saturating_sub(cfg.c))
}

/// A follower bound to one score and one model.
#[derive(Debug, Clone)]
pub struct Follower<'a> {
    score: &'a PianoRoll,
    params: &'a ModelParams,
    cfg: FollowerConfig,
    pub state: FollowerState,
}

impl<'a> Follower<'a> {
    pub fn new(score: &'a PianoRoll, params: &'a ModelParams, cfg: FollowerConfig) -> Result<Self> {
        cfg.validate()?;
        if score.n_frames() == 0 {
            return Err(Error::Empty("score roll"));
        }
        Ok(Self {
            score,
            params,
            cfg,
            state: FollowerState::default(),
        })
    }

    pub fn config(&self) -> &FollowerConfig {
        &self.cfg
    }

    /// Current score context, zero-padded when the score is shorter than `c`.
    pub fn context(&self) -> Result<PianoRoll> {
        self.score.slice(self.state.context_anchor as isize, self.cfg.c, true)
    }

    /// Scores `window` against the current context, decides a position and
    /// moves the context.
    pub fn step(&mut self, window: &PianoRoll) -> Result<(usize, Source)> {
        let context = self.context()?;
        let out = self.params.forward(&context, window)?;
        let n = self.score.n_frames();
        let decision = heuristic_step(&mut self.state, out.values(), &self.cfg, n)?;
        self.state.context_anchor = advance_context(&self.state, &self.cfg, n);
        Ok(decision)
    }
}

/// Performance frame count consumed by the end of tick `tick` (1-based).
pub fn frames_at_tick(tick: usize, cfg: &FollowerConfig) -> usize {
    (tick as f64 * cfg.frames_per_tick()).round() as usize
}

/// Number of ticks needed to consume a performance of `n_perf` frames; at
/// least one.
pub fn tick_count(n_perf: usize, cfg: &FollowerConfig) -> usize {
    ((n_perf as f64 / cfg.frames_per_tick() - 1e-9).ceil() as usize).max(1)
}

/// Simulates real-time following. Tick `i` (from 1) happens at `i / f_e`
/// seconds; its window holds the `w` performance frames ending there,
/// zero-padded before the start. Ticks run until the performance is used up.
pub fn run_follow(
    score: &PianoRoll,
    performance: &PianoRoll,
    params: &ModelParams,
    cfg: &FollowerConfig,
) -> Result<FollowTrace> {
    run_follow_with(score, performance, params, cfg, |_| Ok(()))
}

/// [`run_follow`] that hands the trace so far to `on_tick` after every tick.
pub fn run_follow_with<F>(
    score: &PianoRoll,
    performance: &PianoRoll,
    params: &ModelParams,
    cfg: &FollowerConfig,
    mut on_tick: F,
) -> Result<FollowTrace>
where
    F: FnMut(&FollowTrace) -> Result<()>,
{
    if (score.frame_duration() - performance.frame_duration()).abs() > 1e-12 {
        return Err(Error::DimensionMismatch(format!(
            "score frame duration {} differs from performance frame duration {}",
            score.frame_duration(),
            performance.frame_duration()
        )));
    }
    let mut follower = Follower::new(score, params, cfg.clone())?;
    let n_perf = performance.n_frames();
    let mut trace = FollowTrace { entries: Vec::new() };
    for tick in 1..=tick_count(n_perf, cfg) {
        let f = frames_at_tick(tick, cfg).min(n_perf);
        let window = performance.slice(f as isize - cfg.w as isize, cfg.w, true)?;
        let started = Instant::now();
        let (score_frame, source) = follower.step(&window)?;
        let latency = started.elapsed().as_secs_f64() * 1000.0;
        trace.entries.push(TraceEntry {
            tick,
            sim_time_s: tick as f64 / cfg.f_e,
            wall_latency_ms: latency,
            score_frame,
            source,
        });
        on_tick(&trace)?;
    }
    Ok(trace)
}
