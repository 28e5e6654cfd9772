#![allow(dead_code)]

pub mod checks;

use rand::Rng;
use scorefollow::augment::{AugmentRng, RngSeed};
use scorefollow::dataset::synth::{synth_piece, SynthConfig};
use scorefollow::midi_io::{to_piano_roll, MidiSequence, NoteEvent, PianoRoll, DEFAULT_FRAME_DURATION, PITCHES};
use scorefollow::tyke::{ConvEncoder, LatentRoll};

pub const FD: f64 = DEFAULT_FRAME_DURATION;

pub fn rng(seed: u64) -> AugmentRng {
    RngSeed(seed).rng()
}

pub fn random_roll<R: Rng>(rng: &mut R, n: usize, density: f64) -> PianoRoll {
    let mut roll = PianoRoll::zeros(n, FD);
    for p in 0..PITCHES {
        for t in 0..n {
            if rng.random::<f64>() < density {
                roll.set(p, t, true);
            }
        }
    }
    roll
}

pub fn random_latent<R: Rng>(rng: &mut R, channels: usize, n: usize) -> LatentRoll {
    let data = (0..channels * n).map(|_| rng.random_range(-1.0..1.0)).collect();
    LatentRoll::from_rows(channels, n, data)
}

pub fn random_encoder<R: Rng>(rng: &mut R, out_channels: usize, in_channels: usize, kernel: usize) -> ConvEncoder {
    let mut enc = ConvEncoder::zeros(out_channels, in_channels, kernel);
    for w in &mut enc.weights {
        *w = rng.random_range(-1.0..1.0);
    }
    for b in &mut enc.bias {
        *b = rng.random_range(-1.0..1.0);
    }
    enc
}

/// Direct same-length convolution with zero padding.
pub fn naive_conv1d(x: &LatentRoll, enc: &ConvEncoder) -> LatentRoll {
    let half = (enc.kernel / 2) as isize;
    let mut out = LatentRoll::zeros(enc.out_channels, x.n);
    for o in 0..enc.out_channels {
        for j in 0..x.n {
            let mut acc = enc.bias[o];
            for ch in 0..enc.in_channels {
                for d in 0..enc.kernel {
                    let src = j as isize + d as isize - half;
                    if src >= 0 && (src as usize) < x.n {
                        acc += enc.weights[enc.index(o, ch, d)] * x.row(ch)[src as usize];
                    }
                }
            }
            out.data[o * x.n + j] = acc;
        }
    }
    out
}

/// Correlation against an explicitly zero-padded copy of the target.
pub fn naive_xcorr(target: &LatentRoll, template: &LatentRoll) -> Vec<f64> {
    let (c, w) = (target.n, template.n);
    let padded_len = c + 2 * (w - 1);
    let mut out = vec![0.0; c + w - 1];
    for i in 0..target.channels {
        let mut padded = vec![0.0; padded_len];
        padded[w - 1..w - 1 + c].copy_from_slice(target.row(i));
        for (k, o) in out.iter_mut().enumerate() {
            for j in 0..w {
                *o += template.row(i)[j] * padded[k + j];
            }
        }
    }
    out
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

/// Synthetic piece opened by a count-in chord, so its first frames occur
/// nowhere else.
pub fn fixture_piece(secs: f64, seed: u64) -> PianoRoll {
    to_piano_roll(&synth_piece(&SynthConfig::new(secs).with_count_in(96), RngSeed(seed)), FD)
}

/// Notes whose onsets and durations are whole frames.
pub fn frame_aligned_sequence<R: Rng>(rng: &mut R, count: usize) -> MidiSequence {
    let notes = (0..count)
        .map(|_| NoteEvent {
            pitch: rng.random_range(21..=108),
            onset: rng.random_range(0..400) as f64 * FD,
            duration: rng.random_range(1..60) as f64 * FD,
            velocity: rng.random_range(1..=127),
            track: 0,
        })
        .collect();
    MidiSequence::from_notes(notes)
}

/// Notes with arbitrary real timing.
pub fn random_sequence<R: Rng>(rng: &mut R, count: usize, span: f64) -> MidiSequence {
    let notes = (0..count)
        .map(|_| NoteEvent {
            pitch: rng.random_range(0..=127),
            onset: rng.random_range(0.0..span),
            duration: rng.random_range(0.02..1.5),
            velocity: rng.random_range(1..=127),
            track: 0,
        })
        .collect();
    MidiSequence::from_notes(notes)
}
