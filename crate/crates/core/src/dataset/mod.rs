//! Static training set: a CSV manifest of (file, context start, window
//! start, out-of-context flag) rows, materialized into (C, W, Y) samples on
//! demand.
//!
//! Label convention: the correlation axis has `c + w - 1` positions and
//! position `k` puts the window's right edge on context column `k`. A window
//! starting `s` frames after the context start therefore has label
//! `s + w - 1`, for any `s` in `-(w-1)..=c-1`. Windows that share no column
//! with the context are out of context and carry no label.

mod manifest;
pub mod synth;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use log::warn;
use rand::Rng;

pub use manifest::{read_manifest, write_manifest, MANIFEST_HEADER};

use crate::augment::{apply_chain, AugmentKind, AugmentSpec, RngSeed};
use crate::error::{Error, Result};
use crate::midi_io::{parse_smf, to_piano_roll, MidiSequence, PianoRoll};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "validation" | "val" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            _ => Err(Error::InvalidConfig(format!("unknown split {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitConfig {
    pub split: Split,
    pub n_split: usize,
    /// Context length in frames.
    pub c: usize,
    /// Window length in frames.
    pub w: usize,
    pub seed: RngSeed,
    /// Chance that a row's window is drawn inside its context; otherwise it
    /// is drawn fully outside.
    pub in_context_prob: f64,
    pub frame_duration: f64,
}

impl SplitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_split == 0 {
            return Err(Error::InvalidConfig("n_split must be positive".into()));
        }
        if !(self.c > self.w && self.w > 0) {
            return Err(Error::InvalidConfig(format!(
                "need c > w > 0, got c={} w={}",
                self.c, self.w
            )));
        }
        if !(0.0..=1.0).contains(&self.in_context_prob) {
            return Err(Error::InvalidConfig("in_context_prob outside [0, 1]".into()));
        }
        if self.frame_duration <= 0.0 {
            return Err(Error::InvalidConfig("frame_duration must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestRow {
    pub midi_path: String,
    pub context_start: usize,
    pub window_start: usize,
    pub out_of_context: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    pub context: PianoRoll,
    pub window: PianoRoll,
    /// Right-edge position on the correlation axis; `None` out of context.
    pub label: Option<usize>,
    pub out_of_context: bool,
}

/// True when `[window_start, window_start + w)` and
/// `[context_start, context_start + c)` share no frame.
pub fn is_out_of_context(context_start: usize, window_start: usize, c: usize, w: usize) -> bool {
    window_start + w <= context_start || window_start >= context_start + c
}

/// Correlation-axis label of a window relative to its context.
pub fn window_label(context_start: usize, window_start: usize, c: usize, w: usize) -> Option<usize> {
    let k = window_start as isize - context_start as isize + w as isize - 1;
    (0..(c + w - 1) as isize).contains(&k).then_some(k as usize)
}

/// A parsed MIDI file and its piano roll.
#[derive(Debug, Clone)]
pub struct CorpusEntry {
    pub sequence: MidiSequence,
    pub roll: PianoRoll,
}

/// Named pieces rendered at one frame duration.
#[derive(Debug, Clone)]
pub struct Corpus {
    frame_duration: f64,
    entries: BTreeMap<String, CorpusEntry>,
}

impl Corpus {
    pub fn new(frame_duration: f64) -> Self {
        Self {
            frame_duration,
            entries: BTreeMap::new(),
        }
    }

    /// Parses and renders every file, keyed by its path as given.
    pub fn load<P: AsRef<Path>>(paths: &[P], frame_duration: f64) -> Result<Self> {
        let mut corpus = Self::new(frame_duration);
        for path in paths {
            corpus.load_file(path.as_ref())?;
        }
        Ok(corpus)
    }

    pub fn load_file(&mut self, path: &Path) -> Result<()> {
        let key = path.to_string_lossy().into_owned();
        if self.entries.contains_key(&key) {
            return Ok(());
        }
        let bytes = std::fs::read(path)
            .map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
        let sequence = parse_smf(&bytes)
            .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        self.insert(key, sequence);
        Ok(())
    }

    /// Loads every piece named in `rows`, keyed by the manifest path. Paths
    /// that do not exist as given are looked up relative to `base_dir`.
    pub fn for_manifest(rows: &[ManifestRow], base_dir: &Path, frame_duration: f64) -> Result<Self> {
        let mut corpus = Self::new(frame_duration);
        for row in rows {
            if corpus.entries.contains_key(&row.midi_path) {
                continue;
            }
            let given = Path::new(&row.midi_path);
            let path = if given.exists() { given.to_path_buf() } else { base_dir.join(given) };
            let bytes = std::fs::read(&path)
                .map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
            let sequence = parse_smf(&bytes).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
            corpus.insert(row.midi_path.clone(), sequence);
        }
        Ok(corpus)
    }

    /// Adds every piece of `other` not already present.
    pub fn merge(&mut self, other: &Corpus) {
        for (name, entry) in &other.entries {
            self.entries.entry(name.clone()).or_insert_with(|| entry.clone());
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, sequence: MidiSequence) {
        let roll = to_piano_roll(&sequence, self.frame_duration);
        self.entries.insert(name.into(), CorpusEntry { sequence, roll });
    }

    pub fn get(&self, name: &str) -> Result<&CorpusEntry> {
        self.entries
            .get(name)
            .ok_or_else(|| Error::Data(format!("{name} not in corpus")))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn frame_duration(&self) -> f64 {
        self.frame_duration
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn draw_window<R: Rng + ?Sized>(
    rng: &mut R,
    n: usize,
    context_start: usize,
    cfg: &SplitConfig,
) -> usize {
    let (c, w) = (cfg.c, cfg.w);
    let inside = |rng: &mut R| context_start + rng.random_range(0..=c - w);
    if rng.random::<f64>() < cfg.in_context_prob {
        return inside(rng);
    }
    // Fully disjoint windows that still lie inside the piece.
    let left = if context_start >= w { context_start - w + 1 } else { 0 };
    let right_lo = context_start + c;
    let right = if n >= right_lo + w { n - w - right_lo + 1 } else { 0 };
    if left + right == 0 {
        return inside(rng);
    }
    let pick = rng.random_range(0..left + right);
    if pick < left {
        pick
    } else {
        right_lo + (pick - left)
    }
}

/// Draws `n_split` rows: a uniformly chosen piece, a uniform context start,
/// and a window inside the context with probability `in_context_prob`
/// (otherwise fully outside it). Pieces shorter than `c` frames are skipped.
pub fn generate_manifest(corpus: &Corpus, cfg: &SplitConfig) -> Result<Vec<ManifestRow>> {
    cfg.validate()?;
    let mut eligible = Vec::new();
    for name in corpus.names() {
        let n = corpus.get(name)?.roll.n_frames();
        if n >= cfg.c {
            eligible.push((name, n));
        } else {
            warn!("skipping {name}: {n} frames is shorter than the {}-frame context", cfg.c);
        }
    }
    if eligible.is_empty() {
        return Err(Error::Data(format!(
            "no MIDI file is at least {} frames long",
            cfg.c
        )));
    }
    let mut rng = cfg.seed.rng();
    let rows = (0..cfg.n_split)
        .map(|_| {
            let (name, n) = eligible[rng.random_range(0..eligible.len())];
            let context_start = rng.random_range(0..=n - cfg.c);
            let window_start = draw_window(&mut rng, n, context_start, cfg);
            ManifestRow {
                midi_path: name.to_string(),
                context_start,
                window_start,
                out_of_context: is_out_of_context(context_start, window_start, cfg.c, cfg.w),
            }
        })
        .collect();
    Ok(rows)
}

/// Loads `paths` and draws a manifest from them.
pub fn generate_manifest_from_files<P: AsRef<Path>>(
    paths: &[P],
    cfg: &SplitConfig,
) -> Result<Vec<ManifestRow>> {
    if paths.is_empty() {
        return Err(Error::Data("no MIDI files given".into()));
    }
    let corpus = Corpus::load(paths, cfg.frame_duration)?;
    generate_manifest(&corpus, cfg)
}

/// Renders the context and window of a row. Windows running past the end of
/// the piece are zero padded.
pub fn materialize(row: &ManifestRow, corpus: &Corpus, c: usize, w: usize) -> Result<TrainingSample> {
    let roll = &corpus.get(&row.midi_path)?.roll;
    let context = roll.slice(row.context_start as isize, c, true)?;
    let window = roll.slice(row.window_start as isize, w, true)?;
    let label = window_label(row.context_start, row.window_start, c, w);
    Ok(TrainingSample {
        context,
        window,
        label,
        out_of_context: row.out_of_context || label.is_none(),
    })
}

/// Frames of neighbouring material that a chain can move into the window.
fn augment_margin(chain: &[AugmentSpec], frame_duration: f64) -> usize {
    let reach: f64 = chain
        .iter()
        .filter(|s| matches!(s.kind, AugmentKind::OnsetTimeShift | AugmentKind::DurationShift))
        .map(|s| s.max_shift)
        .sum();
    (reach / frame_duration).ceil() as usize + 1
}

/// Renders the window of `row` after passing its notes through `chain` in
/// the MIDI domain. The notes around the window are clipped out, augmented,
/// rendered and cut back to the same frame span.
pub fn augmented_window<R: Rng + ?Sized>(
    row: &ManifestRow,
    corpus: &Corpus,
    w: usize,
    chain: &[AugmentSpec],
    rng: &mut R,
) -> Result<PianoRoll> {
    let entry = corpus.get(&row.midi_path)?;
    let fd = corpus.frame_duration();
    let margin = augment_margin(chain, fd);
    let start = row.window_start.saturating_sub(margin);
    let end = row.window_start + w + margin;
    let clip = entry.sequence.clip(start as f64 * fd, end as f64 * fd);
    let augmented = apply_chain(&clip, chain, rng);
    let roll = to_piano_roll(&augmented, fd);
    roll.slice((row.window_start - start) as isize, w, true)
}

/// Materializes rows, augmenting each window (never the context) with
/// `chain`. Labels are unchanged. An empty chain skips the MIDI round trip.
pub fn training_batch<R: Rng + ?Sized>(
    rows: &[ManifestRow],
    corpus: &Corpus,
    c: usize,
    w: usize,
    chain: &[AugmentSpec],
    rng: &mut R,
) -> Result<Vec<TrainingSample>> {
    rows.iter()
        .map(|row| {
            let mut sample = materialize(row, corpus, c, w)?;
            if !chain.is_empty() {
                sample.window = augmented_window(row, corpus, w, chain, rng)?;
            }
            Ok(sample)
        })
        .collect()
}
