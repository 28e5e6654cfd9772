mod common;

use scorefollow::eval::{evaluate, DEFAULT_THRESHOLDS_MS};
use scorefollow::follower::{frames_at_tick, run_follow, FollowerConfig, Source};
use scorefollow::midi_io::PianoRoll;
use scorefollow::osc::tempo_deviation;
use scorefollow::tyke::ModelParams;

use common::{fixture_piece, FD};

fn delayed(roll: &PianoRoll, frames: usize) -> PianoRoll {
    let mut out = PianoRoll::zeros(roll.n_frames() + frames, FD);
    for (p, t) in roll.active_cells() {
        out.set(p, t + frames, true);
    }
    out
}

#[test]
fn self_following_tracks_the_diagonal() {
    let cfg = FollowerConfig::default();
    let delta = ModelParams::delta(3);
    for seed in 0..3 {
        let roll = fixture_piece(20.0, seed);
        let trace = run_follow(&roll, &roll, &delta, &cfg).unwrap();
        for e in trace.entries.iter().filter(|e| e.source != Source::Stabilizing) {
            let truth = frames_at_tick(e.tick, &cfg).min(roll.n_frames()) - 1;
            assert_eq!(e.score_frame, truth, "seed {seed} tick {}", e.tick);
        }
        let report = evaluate(&trace, &roll, &roll, &DEFAULT_THRESHOLDS_MS, false).unwrap();
        assert!(report.rows.iter().all(|r| r.misalign_rate_pct == 0.0));
    }
}

#[test]
fn delayed_performance_is_tracked_with_the_offset() {
    let cfg = FollowerConfig::default();
    let roll = fixture_piece(20.0, 4);
    let perf = delayed(&roll, 96);
    let trace = run_follow(&roll, &perf, &ModelParams::delta(3), &cfg).unwrap();
    let offset_truth = |tick| (frames_at_tick(tick, &cfg).min(perf.n_frames()) - 1).saturating_sub(96);
    let locked = trace
        .entries
        .iter()
        .rposition(|e| e.score_frame != offset_truth(e.tick))
        .map_or(0, |i| i + 1);
    assert!(locked < 30, "still off at tick {locked}");
    assert!(trace.len() > 150);
}

#[test]
fn tempo_deviation_is_near_one_when_tempos_match() {
    let cfg = FollowerConfig::default();
    let roll = fixture_piece(20.0, 1);
    let trace = run_follow(&roll, &roll, &ModelParams::delta(3), &cfg).unwrap();
    let dev = tempo_deviation(&trace, 20, cfg.frames_per_tick());
    for (e, d) in trace.entries.iter().zip(&dev).skip(cfg.stabilization_count + 20) {
        assert!((d - 1.0).abs() <= 0.05, "tick {}: {d}", e.tick);
    }
}

#[test]
fn empty_performance_only_stabilizes() {
    let cfg = FollowerConfig::default();
    let roll = fixture_piece(5.0, 2);
    let trace = run_follow(&roll, &PianoRoll::zeros(0, FD), &ModelParams::delta(3), &cfg).unwrap();
    assert_eq!(trace.len(), 1);
    assert!(trace.entries.iter().all(|e| e.source == Source::Stabilizing));
}
