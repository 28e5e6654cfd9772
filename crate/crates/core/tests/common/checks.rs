//! Implementation-vs-oracle comparisons shared by the oracle tests and the
//! acceptance target. Each returns the worst discrepancy it saw.

use rand::Rng;
use scorefollow::augment::{
    apply_chain, default_chain, duration_shift, note_add, note_delete, onset_time_shift, pitch_shift, AugmentSpec,
    ShiftMode,
};
use scorefollow::eval::dtw_align;
use scorefollow::follower::{ols_fit, smooth};
use scorefollow::midi_io::{MidiSequence, NoteEvent, PianoRoll, DEFAULT_FRAME_DURATION, PITCHES};
use scorefollow::tyke::kernels::{conv1d_forward, conv1d_roll, cross_correlate};
use scorefollow::tyke::{loss, loss_and_grad, CorrelationOutput, LatentRoll, ModelParams};

use super::{naive_conv1d, naive_xcorr, random_encoder, random_latent, random_roll, random_sequence, rng, FD};

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

fn worst(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "length mismatch");
    a.iter().zip(b).map(|(&x, &y)| rel_err(x, y)).fold(0.0, f64::max)
}

/// Dense and sparse convolution against the direct formula.
pub fn conv1d(trials: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut max = 0.0f64;
    for _ in 0..trials {
        let (e, k, n) = (r.random_range(1..5), [1, 3, 5][r.random_range(0..3)], r.random_range(1..20));
        let dense_in = r.random_range(1..6);
        let x = random_latent(&mut r, dense_in, n);
        let enc = random_encoder(&mut r, e, dense_in, k);
        max = max.max(worst(&conv1d_forward(&x, &enc).unwrap().data, &naive_conv1d(&x, &enc).data));

        let roll = random_roll(&mut r, n, 0.05);
        let enc = random_encoder(&mut r, e, PITCHES, k);
        let got = conv1d_roll(&roll, &enc).unwrap();
        max = max.max(worst(&got.data, &naive_conv1d(&LatentRoll::from_roll(&roll), &enc).data));
    }
    max
}

pub fn xcorr(trials: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut max = 0.0f64;
    for _ in 0..trials {
        let ch = r.random_range(1..5);
        let c = r.random_range(1..25);
        let w = r.random_range(1..=c);
        let target = random_latent(&mut r, ch, c);
        let template = random_latent(&mut r, ch, w);
        let got = cross_correlate(&target, &template).unwrap();
        assert_eq!(got.len(), c + w - 1);
        max = max.max(worst(&got, &naive_xcorr(&target, &template)));
    }
    max
}

/// Cross-entropy and its output gradient against `-ln(exp(x_l) / sum exp)`
/// computed without any stabilisation.
pub fn softmax_ce(trials: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut max = 0.0f64;
    for _ in 0..trials {
        let n = r.random_range(1..40);
        let x: Vec<f64> = (0..n).map(|_| r.random_range(-20.0..20.0)).collect();
        let label = r.random_range(0..n);
        let z: f64 = x.iter().map(|v| v.exp()).sum();
        let expect = -(x[label].exp() / z).ln();
        let out = CorrelationOutput(x.clone());
        max = max.max(rel_err(loss(&out, label).unwrap(), expect));
        let (_, grad) = loss_and_grad(&out, label).unwrap();
        let oracle: Vec<f64> = x
            .iter()
            .enumerate()
            .map(|(i, v)| v.exp() / z - if i == label { 1.0 } else { 0.0 })
            .collect();
        max = max.max(worst(&grad, &oracle));
    }
    max
}

/// Centred moving average, averaging only over samples that exist.
pub fn moving_average(trials: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut max = 0.0f64;
    for _ in 0..trials {
        let n = r.random_range(1..60);
        let window = [1, 3, 5, 7][r.random_range(0..4)];
        let v: Vec<f64> = (0..n).map(|_| r.random_range(-50.0..50.0)).collect();
        let h = window / 2;
        let oracle: Vec<f64> = (0..n)
            .map(|i| {
                let span: Vec<f64> = (0..n).filter(|&j| j + h >= i && j <= i + h).map(|j| v[j]).collect();
                span.iter().sum::<f64>() / span.len() as f64
            })
            .collect();
        max = max.max(worst(&smooth(&v, window).unwrap(), &oracle));
    }
    max
}

/// Least squares against the closed-form normal equations.
pub fn ols(trials: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut max = 0.0f64;
    for _ in 0..trials {
        let n = r.random_range(2..25);
        let start = r.random_range(0..1000) as f64;
        let pts: Vec<(f64, f64)> = (0..n)
            .map(|i| (start + i as f64, r.random_range(-500.0..5000.0)))
            .collect();
        let nf = n as f64;
        let sx: f64 = pts.iter().map(|p| p.0).sum();
        let sy: f64 = pts.iter().map(|p| p.1).sum();
        let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
        let slope = (nf * sxy - sx * sy) / (nf * sxx - sx * sx);
        let intercept = (sy - slope * sx) / nf;
        let (a, b) = ols_fit(&pts).unwrap();
        max = max.max(rel_err(b, slope)).max(rel_err(a, intercept));
    }
    max
}

fn hamming(a: &PianoRoll, i: usize, b: &PianoRoll, j: usize) -> u64 {
    (0..PITCHES).filter(|&p| a.get(p, i) != b.get(p, j)).count() as u64
}

/// Minimum over every monotone unit-step path, enumerated one by one.
pub fn exhaustive_dtw_cost(perf: &PianoRoll, score: &PianoRoll) -> u64 {
    fn walk(i: usize, j: usize, acc: u64, cost: &dyn Fn(usize, usize) -> u64, n: usize, m: usize, best: &mut u64) {
        let acc = acc + cost(i, j);
        if i == n - 1 && j == m - 1 {
            *best = (*best).min(acc);
            return;
        }
        if i + 1 < n {
            walk(i + 1, j, acc, cost, n, m, best);
        }
        if j + 1 < m {
            walk(i, j + 1, acc, cost, n, m, best);
        }
        if i + 1 < n && j + 1 < m {
            walk(i + 1, j + 1, acc, cost, n, m, best);
        }
    }
    let (n, m) = (perf.n_frames(), score.n_frames());
    let table: Vec<u64> = (0..n * m).map(|x| hamming(perf, x / m, score, x % m)).collect();
    let cost = |i: usize, j: usize| table[i * m + j];
    let mut best = u64::MAX;
    walk(0, 0, 0, &cost, n, m, &mut best);
    best
}

/// Rolls on a few pitches so that costs tie often.
pub fn small_roll<R: Rng>(r: &mut R, n: usize) -> PianoRoll {
    let mut roll = PianoRoll::zeros(n, FD);
    for t in 0..n {
        for p in 60..64 {
            if r.random::<bool>() {
                roll.set(p, t, true);
            }
        }
    }
    roll
}

/// Number of instances where the DP cost, the cost summed along the
/// returned path, and the exhaustive optimum disagree, or the path is
/// invalid.
pub fn dtw(trials: usize, seed: u64) -> usize {
    let mut r = rng(seed);
    let mut bad = 0;
    for _ in 0..trials {
        let (n, m) = (r.random_range(1..=8), r.random_range(1..=8));
        let perf = small_roll(&mut r, n);
        let score = small_roll(&mut r, m);
        let path = dtw_align(&perf, &score).unwrap();
        let along: u64 = path.pairs.iter().map(|&(i, j)| hamming(&perf, i, &score, j)).sum();
        let ends = path.n_perf() == perf.n_frames() && path.n_score() == score.n_frames();
        if !path.is_valid() || !ends || along != path.cost || path.cost != exhaustive_dtw_cost(&perf, &score) {
            bad += 1;
        }
    }
    bad
}

/// Worst relative error between analytic and central-difference gradients
/// over `trials` random models on `c = 8`, `w = 4`, `e = 2`, `k = 3`.
/// Instances with a pre-activation within 1e-3 of the ReLU kink are drawn
/// again. Relative error is `|a - n| / max(|a|, |n|, 1e-6)`.
pub fn gradient(trials: usize, seed: u64) -> f64 {
    const H: f64 = 1e-4;
    let (c, w, e, k) = (8, 4, 2, 3);
    let mut r = rng(seed);
    let mut max = 0.0f64;
    let mut done = 0;
    while done < trials {
        let params = ModelParams {
            enc_c: random_encoder(&mut r, e, PITCHES, k),
            enc_w: random_encoder(&mut r, e, PITCHES, k),
        };
        let context = random_roll(&mut r, c, 0.02);
        let window = random_roll(&mut r, w, 0.02);
        let near_kink = |roll: &PianoRoll, enc| {
            conv1d_roll(roll, enc).unwrap().data.iter().any(|v: &f64| v.abs() < 1e-3)
        };
        if near_kink(&context, &params.enc_c) || near_kink(&window, &params.enc_w) {
            continue;
        }
        let label = r.random_range(0..c + w - 1);
        let analytic = params.backward(&context, &window, label).unwrap();
        let loss_at = |p: &ModelParams| loss(&p.forward(&context, &window).unwrap(), label).unwrap();
        let mut probe = params.clone();
        for t in 0..4 {
            for i in 0..analytic.tensors()[t].len() {
                let orig = probe.tensors()[t][i];
                probe.tensors_mut()[t][i] = orig + H;
                let up = loss_at(&probe);
                probe.tensors_mut()[t][i] = orig - H;
                let down = loss_at(&probe);
                probe.tensors_mut()[t][i] = orig;
                let numeric = (up - down) / (2.0 * H);
                let a = analytic.tensors()[t][i];
                let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
                max = max.max(err);
            }
        }
        done += 1;
    }
    max
}

fn key(n: &NoteEvent) -> (u8, u64, u64, u8) {
    (n.pitch, n.onset.to_bits(), n.duration.to_bits(), n.velocity)
}

fn sorted<T: Ord + Clone>(mut v: Vec<T>) -> Vec<T> {
    v.sort();
    v
}

fn is_sub_multiset(small: &MidiSequence, big: &MidiSequence) -> bool {
    let mut pool = sorted(big.notes.iter().map(key).collect());
    for k in small.notes.iter().map(key) {
        match pool.binary_search(&k) {
            Ok(i) => {
                pool.remove(i);
            }
            Err(_) => return false,
        }
    }
    true
}

fn random_mode<R: Rng>(r: &mut R) -> ShiftMode {
    [ShiftMode::Up, ShiftMode::Down, ShiftMode::Both][r.random_range(0..3)]
}

/// Runs every augmentation law on `trials` random sequences and specs.
/// Returns the first violation.
pub fn augment_suite(trials: usize, seed: u64) -> Result<(), String> {
    let mut r = rng(seed);
    for trial in 0..trials {
        let fail = |what: &str| Err(format!("trial {trial}: {what}"));
        let count = r.random_range(0..50);
        let seq = random_sequence(&mut r, count, 10.0);
        let p = r.random_range(0.0..=1.0);
        let trial_seed = r.random::<u64>();
        let mut tr = rng(trial_seed);
        let n = seq.notes.len();

        let max = r.random_range(0..=12u8);
        let out = pitch_shift(&seq, &AugmentSpec::pitch_shift(max, random_mode(&mut r), p), &mut tr);
        let timing = |s: &MidiSequence| sorted(s.notes.iter().map(|n| (n.onset.to_bits(), n.duration.to_bits())).collect::<Vec<_>>());
        if out.notes.len() != n || timing(&out) != timing(&seq) {
            return fail("pitch shift changed note count or timing");
        }
        if seq.notes.iter().zip(&out.notes).any(|(a, b)| a.pitch.abs_diff(b.pitch) > max) {
            return fail("pitch shift exceeded its range");
        }

        let max = r.random_range(0.0..1.0);
        let out = onset_time_shift(&seq, &AugmentSpec::onset_time_shift(max, random_mode(&mut r), p), &mut tr);
        let durations = |s: &MidiSequence| sorted(s.notes.iter().map(|n| (n.pitch, n.duration.to_bits(), n.velocity)).collect::<Vec<_>>());
        if out.notes.len() != n || durations(&out) != durations(&seq) {
            return fail("onset shift changed note count or durations");
        }
        if out.notes.iter().any(|n| n.onset < 0.0) || out.notes.windows(2).any(|w| w[0].onset > w[1].onset) {
            return fail("onset shift produced a negative or unsorted onset");
        }

        let max = r.random_range(0.0..0.5);
        let out = duration_shift(&seq, &AugmentSpec::duration_shift(max, random_mode(&mut r), p), &mut tr);
        let onsets = |s: &MidiSequence| sorted(s.notes.iter().map(|n| (n.pitch, n.onset.to_bits(), n.velocity)).collect::<Vec<_>>());
        if out.notes.len() != n || onsets(&out) != onsets(&seq) {
            return fail("duration shift changed note count or onsets");
        }
        if out.notes.iter().any(|n| n.duration < DEFAULT_FRAME_DURATION) {
            return fail("duration shift went below one frame");
        }

        let out = note_delete(&seq, &AugmentSpec::note_delete(p), &mut tr);
        if !is_sub_multiset(&out, &seq) {
            return fail("note delete invented a note");
        }

        let lo = r.random_range(0..=127u8);
        let hi = r.random_range(lo..=127u8);
        let dmin = r.random_range(0.05..1.0);
        let dmax = dmin + r.random_range(0.0..1.0);
        let restrict = r.random::<bool>();
        let out = note_add(&seq, &AugmentSpec::note_add(p, (lo, hi), (dmin, dmax), restrict), &mut tr);
        if !is_sub_multiset(&seq, &out) {
            return fail("note add lost an original note");
        }
        let mut added = sorted(out.notes.iter().map(key).collect::<Vec<_>>());
        for k in seq.notes.iter().map(key) {
            let i = added.binary_search(&k).expect("original present");
            added.remove(i);
        }
        for (pitch, onset, duration, _) in added {
            let (onset, duration) = (f64::from_bits(onset), f64::from_bits(duration));
            if pitch < lo || pitch > hi || duration > dmax || onset < 0.0 {
                return fail("added note outside its ranges");
            }
            if restrict && onset + duration > seq.total_duration + 1e-9 {
                return fail("restricted added note ends after the sequence");
            }
            if !restrict && onset > seq.total_duration + 1e-9 {
                return fail("added note starts after the sequence");
            }
        }

        let chain = default_chain();
        let a = apply_chain(&seq, &chain, &mut rng(trial_seed));
        let b = apply_chain(&seq, &chain, &mut rng(trial_seed));
        if a != b {
            return fail("chain is not deterministic");
        }
        let zero: Vec<AugmentSpec> = chain.iter().map(|s| AugmentSpec { probability: 0.0, ..s.clone() }).collect();
        if apply_chain(&seq, &zero, &mut tr) != seq {
            return fail("zero-probability chain changed the sequence");
        }
    }
    Ok(())
}
