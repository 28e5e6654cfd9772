//! The acceptance suite. Runs every criterion at its stated tolerance and
//! prints one PASS/FAIL line each; exits non-zero if any fails.

mod common;

use std::net::UdpSocket;
use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::thread;
use std::time::{Duration, Instant};

use rand::Rng;
use scorefollow::augment::{default_chain, RngSeed};
use scorefollow::dataset::synth::{synth_piece, SynthConfig};
use scorefollow::dataset::{generate_manifest, Corpus, Split, SplitConfig};
use scorefollow::eval::{
    evaluate, evaluate_with_path, misalign_rate, run_ablation, sweep, AblationSetup, SweepKind, WarpingPath,
    DEFAULT_THRESHOLDS_MS,
};
use scorefollow::follower::{run_follow, FollowTrace, FollowerConfig, Source, TraceEntry};
use scorefollow::midi_io::PianoRoll;
use scorefollow::osc::{decode, encode, stream_trace, AddressMap, OscArg, OscMessage, POSITION_ADDRESS, TEMPO_DEV_ADDRESS};
use scorefollow::tyke::{train, ModelParams, TrainConfig};

use common::{checks, fixture_piece, rng, FD};

type Outcome = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn architecture() -> Outcome {
    let params = ModelParams::random(64, 3, &mut rng(0));
    let out = params.forward(&PianoRoll::zeros(512, FD), &PianoRoll::zeros(256, FD)).map_err(|e| e.to_string())?;
    let detail = format!("params {}, output length {}", params.param_count(), out.len());
    ensure(params.param_count() == 49_280 && out.len() == 767, detail)
}

fn kernels() -> Outcome {
    let trials = 100;
    let linear = [
        ("conv1d", checks::conv1d(trials, 21)),
        ("xcorr", checks::xcorr(trials, 22)),
        ("softmax-ce", checks::softmax_ce(trials, 23)),
        ("moving-average", checks::moving_average(trials, 24)),
        ("ols", checks::ols(trials, 25)),
    ];
    let dtw_bad = checks::dtw(trials, 26);
    let mut detail: Vec<String> = linear.iter().map(|(n, e)| format!("{n} {e:.1e}")).collect();
    detail.push(format!("dtw mismatches {dtw_bad}/{trials}"));
    ensure(linear.iter().all(|(_, e)| *e <= 1e-9) && dtw_bad == 0, detail.join(", "))
}

fn gradients() -> Outcome {
    let err = checks::gradient(100, 31);
    ensure(err < 1e-4, format!("max relative error {err:.2e} over 100 trials"))
}

fn training() -> Outcome {
    let (c, w) = (128, 64);
    let mut corpus = Corpus::new(FD);
    let mut train_names = Corpus::new(FD);
    let mut val_names = Corpus::new(FD);
    for i in 0..12 {
        train_names.insert(format!("train_{i}"), synth_piece(&SynthConfig::new(20.0), RngSeed(100 + i)));
    }
    for i in 0..4 {
        val_names.insert(format!("val_{i}"), synth_piece(&SynthConfig::new(20.0), RngSeed(200 + i)));
    }
    corpus.merge(&train_names);
    corpus.merge(&val_names);
    let split = |split, n_split, seed| SplitConfig {
        split,
        n_split,
        c,
        w,
        seed: RngSeed(seed),
        in_context_prob: 0.9,
        frame_duration: FD,
    };
    let err = |e: scorefollow::Error| e.to_string();
    let train_rows = generate_manifest(&train_names, &split(Split::Train, 300, 1)).map_err(err)?;
    let val_rows = generate_manifest(&val_names, &split(Split::Validation, 60, 2)).map_err(err)?;
    let cfg = TrainConfig {
        epochs: 25,
        train_samples: 300,
        val_samples: 50,
        lr: 2e-3,
        batch_size: 16,
        ..Default::default()
    };
    let outcome = train(&corpus, &train_rows, &val_rows, c, w, &cfg, &default_chain()).map_err(err)?;
    let m = outcome.best_metrics();
    let ratio = if m.train_acc > 0.0 { m.val_acc / m.train_acc } else { 0.0 };
    let detail = format!(
        "best epoch {}: val_acc {:.3}, val_bacc {:.3}, train_acc {:.3}, ratio {:.3}",
        m.epoch, m.val_acc, m.val_bacc, m.train_acc, ratio
    );
    ensure(m.val_acc >= m.val_bacc && m.val_acc >= 0.8 && ratio >= 0.75, detail)
}

fn self_following() -> Outcome {
    let cfg = FollowerConfig::default();
    let delta = ModelParams::delta(3);
    let mut worst = 0.0f64;
    let pieces = 3;
    for seed in 0..pieces {
        let roll = fixture_piece(30.0, seed);
        let trace = run_follow(&roll, &roll, &delta, &cfg).map_err(|e| e.to_string())?;
        let report = evaluate(&trace, &roll, &roll, &DEFAULT_THRESHOLDS_MS, false).map_err(|e| e.to_string())?;
        for row in &report.rows {
            worst = worst.max(row.misalign_rate_pct).max(row.mean_err_ms);
        }
    }
    ensure(
        worst == 0.0,
        format!("{pieces} pieces, worst misalign rate / mean error over nine thresholds {worst}"),
    )
}

fn tempo_mismatch() -> Outcome {
    let roll = fixture_piece(30.0, 0);
    let points = sweep(
        SweepKind::TempoMismatch,
        &[0.8, 1.0, 1.2],
        &roll,
        &roll,
        &ModelParams::delta(3),
        &FollowerConfig::default(),
        &[100.0],
    )
    .map_err(|e| e.to_string())?;
    let r: Vec<f64> = points.iter().map(|p| p.rate_at(100.0).unwrap_or(f64::NAN)).collect();
    let detail = format!("r_e(100 ms) at 0.8/1.0/1.2: {:.1}% / {:.1}% / {:.1}%", r[0], r[1], r[2]);
    ensure(r[1] < r[0] && r[1] < r[2] && r[2] > 50.0, detail)
}

fn latency() -> Outcome {
    let cfg = FollowerConfig::default();
    let params = ModelParams::random(64, 3, &mut rng(7));
    let roll = fixture_piece(12.0, 5);
    let trace = run_follow(&roll, &roll, &params, &cfg).map_err(|e| e.to_string())?;
    let ms: Vec<f64> = trace.entries.iter().take(100).map(|e| e.wall_latency_ms).collect();
    if ms.len() < 100 {
        return Err(format!("only {} ticks", ms.len()));
    }
    let mean = ms.iter().sum::<f64>() / ms.len() as f64;
    let max = ms.iter().copied().fold(0.0, f64::max);
    ensure(mean < 50.0, format!("mean {mean:.2} ms, max {max:.2} ms over 100 ticks"))
}

fn metric_arithmetic() -> Outcome {
    let path = WarpingPath {
        pairs: (0..20).map(|i| (i, i)).collect(),
        cost: 0,
    };
    // 10 ms frames, 5 frames per tick; predictions off by 0, 2 and 6 frames
    let entry = |tick: usize, frame: usize| TraceEntry {
        tick,
        sim_time_s: tick as f64 * 0.05,
        wall_latency_ms: 1.0,
        score_frame: frame,
        source: Source::Model,
    };
    let trace = FollowTrace {
        entries: vec![entry(1, 4), entry(2, 11), entry(3, 8)],
    };
    let report = evaluate_with_path(&trace, &path, 0.01, &DEFAULT_THRESHOLDS_MS, false).map_err(|e| e.to_string())?;
    let mut bad = Vec::new();
    for row in &report.rows {
        let (rate, mean, sd) = if row.theta_ms < 60.0 {
            (100.0 / 3.0, 10.0, 200f64.sqrt())
        } else {
            (0.0, 80.0 / 3.0, 8400f64.sqrt() / 3.0)
        };
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * b.abs().max(1.0);
        if !(close(row.misalign_rate_pct, rate) && close(row.mean_err_ms, mean) && close(row.sd_err_ms, sd)) {
            bad.push(row.theta_ms);
        }
    }
    let mut r = rng(41);
    let mut non_monotone = 0;
    for _ in 0..200 {
        let n = r.random_range(1..60);
        let errors: Vec<f64> = (0..n).map(|_| r.random_range(0.0..1500.0)).collect();
        let rates: Vec<f64> = DEFAULT_THRESHOLDS_MS
            .iter()
            .map(|&t| misalign_rate(&errors, t).map(|row| row.misalign_rate_pct))
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        non_monotone += usize::from(rates.windows(2).any(|p| p[1] > p[0]));
    }
    ensure(
        bad.is_empty() && non_monotone == 0,
        format!("hand fixture mismatched thresholds {bad:?}, non-monotone random traces {non_monotone}/200"),
    )
}

fn augmentation() -> Outcome {
    checks::augment_suite(1000, 51).map(|()| "all laws held over 1000 trials".to_string())
}

fn osc() -> Outcome {
    let mut golden = b"/sf/position\0\0\0\0,f\0\0".to_vec();
    golden.extend([0x3f, 0x00, 0x00, 0x00]);
    let mut golden_dev = b"/sf/tempo_dev\0\0\0,f\0\0".to_vec();
    golden_dev.extend([0x3f, 0x80, 0x00, 0x00]);
    let pos = encode(&OscMessage::new(POSITION_ADDRESS, vec![OscArg::Float(0.5)])).map_err(|e| e.to_string())?;
    let dev = encode(&OscMessage::new(TEMPO_DEV_ADDRESS, vec![OscArg::Float(1.0)])).map_err(|e| e.to_string())?;
    if pos != golden || dev != golden_dev {
        return Err("golden bytes differ".into());
    }

    let mut r = rng(61);
    for _ in 0..500 {
        let args = (0..r.random_range(0..5))
            .map(|_| match r.random_range(0..3) {
                0 => OscArg::Int(r.random()),
                1 => OscArg::Float(r.random_range(-1e6f32..1e6)),
                _ => OscArg::Str((0..r.random_range(0..9)).map(|_| r.random_range('a'..='z')).collect()),
            })
            .collect();
        let msg = OscMessage::new(format!("/t{}", r.random_range(0..1000)), args);
        let bytes = encode(&msg).map_err(|e| e.to_string())?;
        if bytes.len() % 4 != 0 || decode(&bytes).map_err(|e| e.to_string())? != msg {
            return Err(format!("round trip failed for {msg:?}"));
        }
    }

    let listener = UdpSocket::bind("127.0.0.1:0").map_err(|e| e.to_string())?;
    listener.set_read_timeout(Some(Duration::from_secs(2))).map_err(|e| e.to_string())?;
    let port = listener.local_addr().map_err(|e| e.to_string())?.port();
    let receiver = thread::spawn(move || {
        let mut buf = [0u8; 128];
        let mut got = Vec::new();
        while let Ok(n) = listener.recv(&mut buf) {
            got.push(decode(&buf[..n]).map(|m| m.address));
        }
        got
    });
    let trace = FollowTrace {
        entries: (1..=40)
            .map(|tick| TraceEntry {
                tick,
                sim_time_s: tick as f64 / 10.0,
                wall_latency_ms: 1.0,
                score_frame: tick * 10,
                source: Source::Model,
            })
            .collect(),
    };
    let sent = stream_trace(&trace, "127.0.0.1", port, FD, 9.6, &AddressMap::default()).map_err(|e| e.to_string())?;
    let got = receiver.join().map_err(|_| "receiver panicked".to_string())?;
    let in_order = got.iter().enumerate().all(|(i, a)| {
        let expect = if i % 2 == 0 { POSITION_ADDRESS } else { TEMPO_DEV_ADDRESS };
        a.as_deref().ok() == Some(expect)
    });
    ensure(
        sent == 80 && got.len() == 80 && in_order,
        format!("golden ok, 500 round trips ok, loopback {} datagrams for {} entries", got.len(), trace.len()),
    )
}

fn ablation() -> Outcome {
    let (c, w) = (96, 48);
    let mut corpus = Corpus::new(FD);
    for i in 0..3 {
        corpus.insert(format!("piece_{i}"), synth_piece(&SynthConfig::new(4.0), RngSeed(300 + i)));
    }
    let split = |split, n_split, seed| SplitConfig {
        split,
        n_split,
        c,
        w,
        seed: RngSeed(seed),
        in_context_prob: 0.9,
        frame_duration: FD,
    };
    let err = |e: scorefollow::Error| e.to_string();
    let train_rows = generate_manifest(&corpus, &split(Split::Train, 24, 1)).map_err(err)?;
    let val_rows = generate_manifest(&corpus, &split(Split::Validation, 8, 2)).map_err(err)?;
    let score = fixture_piece(8.0, 9);
    let chain = default_chain();
    let setup = AblationSetup {
        corpus: &corpus,
        train_rows: &train_rows,
        val_rows: &val_rows,
        c,
        w,
        train: TrainConfig {
            latent_channels: 4,
            epochs: 2,
            batch_size: 8,
            train_samples: 24,
            val_samples: 8,
            ..Default::default()
        },
        base_chain: &chain,
        score: &score,
        performance: &score,
        follower: FollowerConfig {
            c: 300,
            w: 100,
            ..Default::default()
        },
        thresholds_ms: &DEFAULT_THRESHOLDS_MS,
    };
    let rows = run_ablation(&setup, 6).map_err(err)?;
    let labels: Vec<&str> = rows.iter().map(|r| r.label.as_str()).collect();
    let expect = [
        "PitchShift+OnsetTimeShift+DurationShift+NoteDelete+NoteAdd",
        "PitchShift+OnsetTimeShift+DurationShift+NoteDelete",
        "PitchShift+OnsetTimeShift+DurationShift",
        "PitchShift+OnsetTimeShift",
        "PitchShift",
        "none",
    ];
    let complete = rows.iter().all(|r| r.report.rows.len() == DEFAULT_THRESHOLDS_MS.len());
    ensure(labels == expect && complete, format!("rows: {}", labels.join(" | ")))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("architecture parity", architecture),
        ("kernels vs oracles", kernels),
        ("gradient check", gradients),
        ("training thresholds", training),
        ("self-following", self_following),
        ("tempo-mismatch trend", tempo_mismatch),
        ("inference latency", latency),
        ("metric arithmetic", metric_arithmetic),
        ("augmentation invariants", augmentation),
        ("OSC wire format", osc),
        ("ablation harness", ablation),
    ];
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let n = i + 1;
        if !only.is_empty() && !only.contains(&n) {
            continue;
        }
        let started = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|_| Err("panicked".into()));
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {n:>2} {name}: PASS ({detail}) [{secs:.1}s]"),
            Err(detail) => {
                failed += 1;
                println!("criterion {n:>2} {name}: FAIL ({detail}) [{secs:.1}s]");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
