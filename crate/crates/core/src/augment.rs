//! Randomized MIDI transforms that imitate performer imperfections.
//!
//! Each transform visits notes independently with its configured `probability`.
//! All randomness flows through a caller-owned [`AugmentRng`], so a fixed
//! seed reproduces the output exactly.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};

use crate::error::{Error, Result};
use crate::midi_io::{MidiSequence, NoteEvent, DEFAULT_FRAME_DURATION};

/// The random stream used throughout the crate.
pub type AugmentRng = ChaCha8Rng;

/// Seed for a deterministic random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct RngSeed(pub u64);

impl RngSeed {
    pub fn rng(self) -> AugmentRng {
        ChaCha8Rng::seed_from_u64(self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AugmentKind {
    PitchShift,
    OnsetTimeShift,
    DurationShift,
    NoteDelete,
    NoteAdd,
}

impl AugmentKind {
    pub const ALL: [AugmentKind; 5] = [
        AugmentKind::PitchShift,
        AugmentKind::OnsetTimeShift,
        AugmentKind::DurationShift,
        AugmentKind::NoteDelete,
        AugmentKind::NoteAdd,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AugmentKind::PitchShift => "PitchShift",
            AugmentKind::OnsetTimeShift => "OnsetTimeShift",
            AugmentKind::DurationShift => "DurationShift",
            AugmentKind::NoteDelete => "NoteDelete",
            AugmentKind::NoteAdd => "NoteAdd",
        }
    }
}

impl fmt::Display for AugmentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AugmentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AugmentKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown augmentation {s:?}")))
    }
}

/// Direction of a shift. `Both` draws from the closed interval including
/// zero; `Up` and `Down` never draw zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ShiftMode {
    Up,
    Down,
    Both,
}

impl fmt::Display for ShiftMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ShiftMode::Up => "up",
            ShiftMode::Down => "down",
            ShiftMode::Both => "both",
        })
    }
}

impl FromStr for ShiftMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "up" => Ok(ShiftMode::Up),
            "down" => Ok(ShiftMode::Down),
            "both" => Ok(ShiftMode::Both),
            _ => Err(Error::InvalidConfig(format!("unknown shift mode {s:?}"))),
        }
    }
}

/// Configuration of one transform. Fields irrelevant to `kind` are ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentSpec {
    pub kind: AugmentKind,
    /// Semitones for pitch shifts, seconds for time shifts.
    pub max_shift: f64,
    pub mode: ShiftMode,
    pub probability: f64,
    pub note_num_range: (u8, u8),
    pub note_duration_range: (f64, f64),
    pub restrict_to_instrument_time: bool,
}

impl AugmentSpec {
    pub fn new(kind: AugmentKind) -> Self {
        Self {
            kind,
            max_shift: 0.0,
            mode: ShiftMode::Both,
            probability: 0.0,
            note_num_range: (20, 120),
            note_duration_range: (0.5, 1.5),
            restrict_to_instrument_time: true,
        }
    }

    pub fn pitch_shift(max_semitones: u8, mode: ShiftMode, probability: f64) -> Self {
        Self {
            max_shift: f64::from(max_semitones),
            mode,
            probability,
            ..Self::new(AugmentKind::PitchShift)
        }
    }

    pub fn onset_time_shift(max_seconds: f64, mode: ShiftMode, probability: f64) -> Self {
        Self {
            max_shift: max_seconds,
            mode,
            probability,
            ..Self::new(AugmentKind::OnsetTimeShift)
        }
    }

    pub fn duration_shift(max_seconds: f64, mode: ShiftMode, probability: f64) -> Self {
        Self {
            max_shift: max_seconds,
            mode,
            probability,
            ..Self::new(AugmentKind::DurationShift)
        }
    }

    pub fn note_delete(probability: f64) -> Self {
        Self {
            probability,
            ..Self::new(AugmentKind::NoteDelete)
        }
    }

    pub fn note_add(
        probability: f64,
        note_num_range: (u8, u8),
        note_duration_range: (f64, f64),
        restrict_to_instrument_time: bool,
    ) -> Self {
        Self {
            probability,
            note_num_range,
            note_duration_range,
            restrict_to_instrument_time,
            ..Self::new(AugmentKind::NoteAdd)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidConfig(format!("{}: {msg}", self.kind)));
        if !(0.0..=1.0).contains(&self.probability) {
            return fail(format!("probability {} outside [0, 1]", self.probability));
        }
        if !(self.max_shift >= 0.0 && self.max_shift.is_finite()) {
            return fail(format!("max_shift {} must be finite and >= 0", self.max_shift));
        }
        if self.kind == AugmentKind::PitchShift && self.max_shift.fract() != 0.0 {
            return fail("pitch max_shift must be a whole number of semitones".into());
        }
        let (lo, hi) = self.note_num_range;
        if lo > hi || hi > 127 {
            return fail(format!("note_num_range ({lo}, {hi}) invalid"));
        }
        let (dmin, dmax) = self.note_duration_range;
        if !(dmin > 0.0 && dmin <= dmax) {
            return fail(format!("note_duration_range ({dmin}, {dmax}) invalid"));
        }
        Ok(())
    }
}

/// The five transforms with the settings used to train the matcher:
/// every probability 0.1; pitch +-5 semitones, onset +-0.5 s, duration
/// +-0.25 s; added notes pitched 20..=120 lasting 0.5-1.5 s.
pub fn default_chain() -> Vec<AugmentSpec> {
    vec![
        AugmentSpec::pitch_shift(5, ShiftMode::Both, 0.1),
        AugmentSpec::onset_time_shift(0.5, ShiftMode::Both, 0.1),
        AugmentSpec::duration_shift(0.25, ShiftMode::Both, 0.1),
        AugmentSpec::note_delete(0.1),
        AugmentSpec::note_add(0.1, (20, 120), (0.5, 1.5), true),
    ]
}

fn selected<R: Rng + ?Sized>(rng: &mut R, probability: f64) -> bool {
    // Always draw so the stream position does not depend on the probability.
    rng.random::<f64>() < probability
}

fn real_shift<R: Rng + ?Sized>(rng: &mut R, max: f64, mode: ShiftMode) -> f64 {
    let u: f64 = rng.random();
    match mode {
        ShiftMode::Both => (2.0 * u - 1.0) * max,
        // (0, max]
        ShiftMode::Up => (1.0 - u) * max,
        ShiftMode::Down => -(1.0 - u) * max,
    }
}

fn int_shift<R: Rng + ?Sized>(rng: &mut R, max: i32, mode: ShiftMode) -> i32 {
    match mode {
        ShiftMode::Both => rng.random_range(-max..=max),
        _ if max == 0 => 0,
        ShiftMode::Up => rng.random_range(1..=max),
        ShiftMode::Down => -rng.random_range(1..=max),
    }
}

/// Transposes each selected note; results clamp to 0..=127.
pub fn pitch_shift<R: Rng + ?Sized>(seq: &MidiSequence, spec: &AugmentSpec, rng: &mut R) -> MidiSequence {
    debug_assert_eq!(spec.kind, AugmentKind::PitchShift);
    let max = spec.max_shift as i32;
    let notes = seq
        .notes
        .iter()
        .map(|n| {
            if selected(rng, spec.probability) {
                let shift = int_shift(rng, max, spec.mode);
                NoteEvent {
                    pitch: (i32::from(n.pitch) + shift).clamp(0, 127) as u8,
                    ..*n
                }
            } else {
                *n
            }
        })
        .collect();
    MidiSequence {
        notes,
        total_duration: seq.total_duration,
    }
}

/// Moves onsets of selected notes, keeping durations; onsets clamp at 0.
pub fn onset_time_shift<R: Rng + ?Sized>(
    seq: &MidiSequence,
    spec: &AugmentSpec,
    rng: &mut R,
) -> MidiSequence {
    debug_assert_eq!(spec.kind, AugmentKind::OnsetTimeShift);
    let notes = seq
        .notes
        .iter()
        .map(|n| {
            if selected(rng, spec.probability) {
                let shift = real_shift(rng, spec.max_shift, spec.mode);
                NoteEvent {
                    onset: (n.onset + shift).max(0.0),
                    ..*n
                }
            } else {
                *n
            }
        })
        .collect();
    MidiSequence::from_notes(notes)
}

/// Stretches or shortens selected notes, keeping onsets. Durations never
/// fall below one default frame.
pub fn duration_shift<R: Rng + ?Sized>(
    seq: &MidiSequence,
    spec: &AugmentSpec,
    rng: &mut R,
) -> MidiSequence {
    debug_assert_eq!(spec.kind, AugmentKind::DurationShift);
    let notes = seq
        .notes
        .iter()
        .map(|n| {
            if selected(rng, spec.probability) {
                let shift = real_shift(rng, spec.max_shift, spec.mode);
                NoteEvent {
                    duration: (n.duration + shift).max(DEFAULT_FRAME_DURATION),
                    ..*n
                }
            } else {
                *n
            }
        })
        .collect();
    MidiSequence::from_notes(notes)
}

pub fn note_delete<R: Rng + ?Sized>(seq: &MidiSequence, spec: &AugmentSpec, rng: &mut R) -> MidiSequence {
    debug_assert_eq!(spec.kind, AugmentKind::NoteDelete);
    let notes = seq
        .notes
        .iter()
        .filter(|_| !selected(rng, spec.probability))
        .copied()
        .collect();
    MidiSequence::from_notes(notes)
}

/// Inserts Binomial(note count, probability) random notes. With
/// `restrict_to_instrument_time` every added note ends within the original
/// span. An empty input is returned unchanged.
pub fn note_add<R: Rng + ?Sized>(seq: &MidiSequence, spec: &AugmentSpec, rng: &mut R) -> MidiSequence {
    debug_assert_eq!(spec.kind, AugmentKind::NoteAdd);
    if seq.notes.is_empty() || spec.probability <= 0.0 {
        return seq.clone();
    }
    let count = Binomial::new(seq.notes.len() as u64, spec.probability)
        .expect("probability validated")
        .sample(rng);
    let (lo, hi) = spec.note_num_range;
    let (dmin, dmax) = spec.note_duration_range;
    let total = seq.total_duration;
    let track = seq.notes[0].track;

    let mut notes = seq.notes.clone();
    for _ in 0..count {
        let pitch = rng.random_range(lo..=hi);
        let mut duration = rng.random_range(dmin..=dmax);
        let onset = if spec.restrict_to_instrument_time {
            duration = duration.min(total);
            rng.random_range(0.0..=(total - duration))
        } else {
            rng.random_range(0.0..=total)
        };
        notes.push(NoteEvent {
            pitch,
            onset,
            duration,
            velocity: 64,
            track,
        });
    }
    MidiSequence::from_notes(notes)
}

/// Applies a single transform.
pub fn apply<R: Rng + ?Sized>(seq: &MidiSequence, spec: &AugmentSpec, rng: &mut R) -> MidiSequence {
    match spec.kind {
        AugmentKind::PitchShift => pitch_shift(seq, spec, rng),
        AugmentKind::OnsetTimeShift => onset_time_shift(seq, spec, rng),
        AugmentKind::DurationShift => duration_shift(seq, spec, rng),
        AugmentKind::NoteDelete => note_delete(seq, spec, rng),
        AugmentKind::NoteAdd => note_add(seq, spec, rng),
    }
}

/// Applies transforms in order, threading one random stream through all.
pub fn apply_chain<R: Rng + ?Sized>(
    seq: &MidiSequence,
    specs: &[AugmentSpec],
    rng: &mut R,
) -> MidiSequence {
    specs
        .iter()
        .fold(seq.clone(), |acc, spec| apply(&acc, spec, rng))
}

/// Parses a chain file: one `[Kind]` section per transform, in application
/// order, each followed by `key = value` lines named after [`AugmentSpec`]
/// fields. Ranges are written `low, high`. `#` starts a comment.
pub fn parse_chain(text: &str) -> Result<Vec<AugmentSpec>> {
    let mut chain: Vec<AugmentSpec> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let err = |msg: String| Error::Parse { line: line_no, msg };
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            let kind = name.trim().parse().map_err(|e: Error| err(e.to_string()))?;
            chain.push(AugmentSpec::new(kind));
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| err(format!("expected key = value, got {line:?}")))?;
        let (key, value) = (key.trim(), value.trim());
        let spec = chain
            .last_mut()
            .ok_or_else(|| err("key before any [section]".into()))?;
        let num = |s: &str| s.trim().parse::<f64>().map_err(|_| err(format!("bad number {s:?}")));
        let pair = |s: &str| -> Result<(f64, f64)> {
            let (a, b) = s
                .split_once(',')
                .ok_or_else(|| err(format!("expected `low, high`, got {s:?}")))?;
            Ok((num(a)?, num(b)?))
        };
        match key {
            "max_shift" => spec.max_shift = num(value)?,
            "mode" => spec.mode = value.parse().map_err(|e: Error| err(e.to_string()))?,
            "probability" => spec.probability = num(value)?,
            "note_num_range" => {
                let (a, b) = pair(value)?;
                if !(0.0..=127.0).contains(&a) || !(0.0..=127.0).contains(&b) {
                    return Err(err("note numbers must lie in 0..=127".into()));
                }
                spec.note_num_range = (a as u8, b as u8);
            }
            "note_duration_range" => spec.note_duration_range = pair(value)?,
            "restrict_to_instrument_time" => {
                spec.restrict_to_instrument_time = value
                    .parse()
                    .map_err(|_| err(format!("expected true/false, got {value:?}")))?
            }
            other => return Err(err(format!("unknown key {other:?}"))),
        }
    }
    for spec in &chain {
        spec.validate()?;
    }
    Ok(chain)
}

/// Writes a chain in the format read by [`parse_chain`].
pub fn format_chain(chain: &[AugmentSpec]) -> String {
    let mut out = String::new();
    for spec in chain {
        out.push_str(&format!("[{}]\n", spec.kind));
        match spec.kind {
            AugmentKind::PitchShift | AugmentKind::OnsetTimeShift | AugmentKind::DurationShift => {
                out.push_str(&format!("max_shift = {}\nmode = {}\n", spec.max_shift, spec.mode));
            }
            AugmentKind::NoteDelete => {}
            AugmentKind::NoteAdd => {
                let (lo, hi) = spec.note_num_range;
                let (dmin, dmax) = spec.note_duration_range;
                out.push_str(&format!(
                    "note_num_range = {lo}, {hi}\nnote_duration_range = {dmin}, {dmax}\nrestrict_to_instrument_time = {}\n",
                    spec.restrict_to_instrument_time
                ));
            }
        }
        out.push_str(&format!("probability = {}\n\n", spec.probability));
    }
    out
}

/// Order in which augmentations are switched off for ablation runs.
pub const ABLATION_ORDER: [AugmentKind; 5] = [
    AugmentKind::NoteAdd,
    AugmentKind::NoteDelete,
    AugmentKind::DurationShift,
    AugmentKind::OnsetTimeShift,
    AugmentKind::PitchShift,
];

/// The first `count` ablation variants of `base`: the full chain, then the
/// chain with one more kind removed each time, following [`ABLATION_ORDER`].
/// Each variant is labelled with the kinds it keeps, or `none`.
pub fn ablation_variants(base: &[AugmentSpec], count: usize) -> Result<Vec<(String, Vec<AugmentSpec>)>> {
    if count == 0 || count > ABLATION_ORDER.len() + 1 {
        return Err(Error::InvalidConfig(format!(
            "ablation needs between 1 and {} variants, got {count}",
            ABLATION_ORDER.len() + 1
        )));
    }
    Ok((0..count)
        .map(|dropped| {
            let removed = &ABLATION_ORDER[..dropped];
            let chain: Vec<AugmentSpec> = base
                .iter()
                .filter(|s| !removed.contains(&s.kind))
                .cloned()
                .collect();
            let label = if chain.is_empty() {
                "none".to_string()
            } else {
                chain.iter().map(|s| s.kind.name()).collect::<Vec<_>>().join("+")
            };
            (label, chain)
        })
        .collect())
}
