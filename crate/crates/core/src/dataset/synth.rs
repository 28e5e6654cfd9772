//! Random but non-repetitive piano pieces for desk-scale corpora.
//!
//! A piece is a random-walk melody over a slower bass line, with occasional
//! rests and added chord tones. Every onset and duration is a whole number
//! of grid frames, so rendering at the grid frame duration is exact.

use rand::Rng;

use crate::augment::RngSeed;
use crate::midi_io::{MidiSequence, NoteEvent, DEFAULT_FRAME_DURATION};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub duration: f64,
    pub grid: f64,
    /// Melody note lengths to choose from, in grid frames.
    pub melody_frames: Vec<usize>,
    pub melody_range: (u8, u8),
    pub bass_range: (u8, u8),
    /// Bass note length range in grid frames.
    pub bass_frames: (usize, usize),
    pub rest_prob: f64,
    pub chord_prob: f64,
    /// Frames of a leading chord above the melody range, held before the
    /// piece starts. Its pitches occur nowhere else in the piece.
    pub count_in_frames: usize,
}

impl SynthConfig {
    pub fn new(duration: f64) -> Self {
        Self {
            duration,
            grid: DEFAULT_FRAME_DURATION,
            melody_frames: vec![6, 12, 12, 18, 24, 24, 36],
            melody_range: (55, 88),
            bass_range: (33, 54),
            bass_frames: (36, 96),
            rest_prob: 0.1,
            chord_prob: 0.25,
            count_in_frames: 0,
        }
    }

    pub fn with_count_in(mut self, frames: usize) -> Self {
        self.count_in_frames = frames;
        self
    }
}

/// Pitches of the count-in chord for a melody range topping out at `top`.
pub fn count_in_pitches(top: u8) -> [u8; 3] {
    [top + 4, top + 7, top + 11].map(|p| p.min(127))
}

/// Generates one piece; the same seed always yields the same notes.
pub fn synth_piece(cfg: &SynthConfig, seed: RngSeed) -> MidiSequence {
    let mut rng = seed.rng();
    let total = (cfg.duration / cfg.grid).round() as usize;
    let lead = cfg.count_in_frames.min(total);
    let at = |frames: usize| frames as f64 * cfg.grid;
    let total = total - lead;
    let mut notes = Vec::new();
    let mut push = |pitch: u8, start: usize, len: usize, velocity: u8, track: usize| {
        let len = len.min(total.saturating_sub(start));
        if len > 0 {
            notes.push(NoteEvent {
                pitch,
                onset: at(start + lead),
                duration: at(len),
                velocity,
                track,
            });
        }
    };

    let (mlo, mhi) = cfg.melody_range;
    let mut pitch = rng.random_range(mlo..=mhi) as i32;
    let mut t = 0;
    while t < total {
        let len = cfg.melody_frames[rng.random_range(0..cfg.melody_frames.len())];
        if rng.random::<f64>() >= cfg.rest_prob {
            let step = rng.random_range(-7..=7);
            pitch = (pitch + step).clamp(i32::from(mlo), i32::from(mhi));
            let velocity = rng.random_range(50..110);
            push(pitch as u8, t, len, velocity, 0);
            if rng.random::<f64>() < cfg.chord_prob {
                let third = rng.random_range(3..=4);
                let lower = (pitch - third - rng.random_range(3..=5)).max(0);
                push((pitch - third).max(0) as u8, t, len, velocity, 0);
                if rng.random::<bool>() {
                    push(lower as u8, t, len, velocity, 0);
                }
            }
        }
        t += len;
    }

    let (blo, bhi) = cfg.bass_range;
    let mut t = 0;
    while t < total {
        let len = rng.random_range(cfg.bass_frames.0..=cfg.bass_frames.1);
        let pitch = rng.random_range(blo..=bhi);
        push(pitch, t, len.saturating_sub(2).max(1), rng.random_range(50..90), 1);
        t += len;
    }
    if lead > 0 {
        for p in count_in_pitches(cfg.melody_range.1) {
            notes.push(NoteEvent {
                pitch: p,
                onset: 0.0,
                duration: lead as f64 * cfg.grid,
                velocity: 80,
                track: 0,
            });
        }
    }
    MidiSequence::from_notes(notes)
}
