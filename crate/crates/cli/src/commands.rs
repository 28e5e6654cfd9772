use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use scorefollow::augment::{ablation_variants, apply_chain, default_chain, parse_chain, AugmentSpec, RngSeed};
use scorefollow::dataset::synth::{synth_piece, SynthConfig};
use scorefollow::dataset::{generate_manifest_from_files, read_manifest, write_manifest, Corpus, ManifestRow, Split, SplitConfig};
use scorefollow::eval::{
    evaluate, run_ablation, sweep, tempo_rescale, write_ablation, write_report, write_sweep,
    AblationSetup, EvalReport, SweepKind,
};
use scorefollow::follower::{read_trace, run_follow_with, write_trace, FollowerConfig};
use scorefollow::midi_io::{parse_smf, to_piano_roll, write_smf, MidiSequence, PianoRoll, PITCHES};
use scorefollow::osc::{AddressMap, OscStream};
use scorefollow::tyke::{read_checkpoint, train, write_checkpoint, write_metrics_csv, ModelParams, TrainConfig};

use crate::{Cli, Command, Common, Failure, FollowArgs, TrainArgs};

type CmdResult<T = ()> = Result<T, Failure>;

fn require_file(path: &Path) -> CmdResult {
    if path.is_file() {
        Ok(())
    } else {
        Err(Failure::data(anyhow!("{} does not exist", path.display())))
    }
}

fn read_midi(path: &Path) -> CmdResult<MidiSequence> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display())).map_err(Failure::data)?;
    parse_smf(&bytes)
        .with_context(|| format!("parsing {}", path.display()))
        .map_err(Failure::data)
}

fn load_roll(path: &Path, frame_duration: f64) -> CmdResult<PianoRoll> {
    Ok(to_piano_roll(&read_midi(path)?, frame_duration))
}

fn create(path: &Path) -> CmdResult<BufWriter<File>> {
    let file = File::create(path)
        .with_context(|| format!("creating {}", path.display()))
        .map_err(Failure::data)?;
    Ok(BufWriter::new(file))
}

fn load_chain(path: Option<&Path>, disabled: bool) -> CmdResult<Vec<AugmentSpec>> {
    if disabled {
        return Ok(Vec::new());
    }
    match path {
        None => Ok(default_chain()),
        Some(p) => {
            require_file(p)?;
            let text = fs::read_to_string(p)?;
            Ok(parse_chain(&text).map_err(|e| Failure::config(anyhow!("{}: {e}", p.display())))?)
        }
    }
}

fn load_manifest(path: &Path) -> CmdResult<Vec<ManifestRow>> {
    require_file(path)?;
    let file = File::open(path)?;
    read_manifest(BufReader::new(file))
        .with_context(|| format!("reading {}", path.display()))
        .map_err(Failure::data)
}

fn load_checkpoint(path: &Path) -> CmdResult<ModelParams> {
    require_file(path)?;
    read_checkpoint(BufReader::new(File::open(path)?))
        .with_context(|| format!("reading {}", path.display()))
        .map_err(Failure::data)
}

/// Training and validation rows plus a corpus holding every piece they use.
fn load_training_data(train_path: &Path, val_path: &Path, fd: f64) -> CmdResult<(Corpus, Vec<ManifestRow>, Vec<ManifestRow>)> {
    let train_rows = load_manifest(train_path)?;
    let val_rows = load_manifest(val_path)?;
    let base = |p: &Path| p.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut corpus = Corpus::for_manifest(&train_rows, &base(train_path), fd)?;
    corpus.merge(&Corpus::for_manifest(&val_rows, &base(val_path), fd)?);
    Ok((corpus, train_rows, val_rows))
}

fn train_config(args: &TrainArgs, seed: u64) -> CmdResult<TrainConfig> {
    let cfg = TrainConfig {
        latent_channels: args.latent,
        kernel: args.kernel,
        lr: args.lr,
        weight_decay: args.weight_decay,
        epochs: args.epochs,
        batch_size: args.batch_size,
        min_lr: args.min_lr,
        quarter_cycle: args.quarter_cycle,
        train_samples: args.train_samples,
        val_samples: args.val_samples,
        seed: RngSeed(seed),
        ..TrainConfig::default()
    };
    cfg.validate()?;
    if args.w == 0 || args.c <= args.w {
        return Err(Failure::config(anyhow!("need c > w > 0")));
    }
    Ok(cfg)
}

fn follower_config(c: usize, w: usize, fe: f64, fd: f64) -> CmdResult<FollowerConfig> {
    let cfg = FollowerConfig {
        c,
        w,
        f_e: fe,
        frame_duration: fd,
        ..FollowerConfig::default()
    };
    cfg.validate()?;
    Ok(cfg)
}

fn follow_config(args: &FollowArgs, fd: f64) -> CmdResult<FollowerConfig> {
    follower_config(args.c, args.w, args.fe, fd)
}

fn print_report(report: &EvalReport) {
    println!("theta_ms  misalign_%  mean_err_ms  sd_err_ms");
    for r in &report.rows {
        println!(
            "{:>8}  {:>10.2}  {:>11.2}  {:>9.2}",
            r.theta_ms, r.misalign_rate_pct, r.mean_err_ms, r.sd_err_ms
        );
    }
    println!("latency {:.3} ± {:.3} ms", report.latency_mean_ms, report.latency_sd_ms);
}

fn out_path(given: &Option<PathBuf>, common: &Common, default: &str) -> PathBuf {
    given.clone().unwrap_or_else(|| common.out_dir.join(default))
}

/// Places `b` to the right of `a` with a blank gap in between.
fn side_by_side(a: &PianoRoll, b: &PianoRoll, gap: usize) -> PianoRoll {
    let mut out = PianoRoll::zeros(a.n_frames() + gap + b.n_frames(), a.frame_duration());
    for p in 0..PITCHES {
        for t in 0..a.n_frames() {
            out.set(p, t, a.get(p, t));
        }
        for t in 0..b.n_frames() {
            out.set(p, a.n_frames() + gap + t, b.get(p, t));
        }
    }
    out
}

pub fn run(cli: &Cli, echo: &str) -> CmdResult {
    let common = &cli.common;
    let fd = common.frame_duration;
    if !(fd > 0.0) {
        return Err(Failure::config(anyhow!("frame duration must be positive")));
    }
    fs::create_dir_all(&common.out_dir)
        .with_context(|| format!("creating {}", common.out_dir.display()))
        .map_err(Failure::data)?;
    fs::write(common.out_dir.join(format!("config_{}.txt", cli.command.name())), echo)?;

    match &cli.command {
        Command::Synth { count, duration, prefix, count_in } => {
            if *count == 0 || !(*duration > 0.0) {
                return Err(Failure::config(anyhow!("count and duration must be positive")));
            }
            let cfg = SynthConfig::new(*duration).with_count_in(*count_in);
            for i in 0..*count {
                let seq = synth_piece(&cfg, RngSeed(common.seed.wrapping_add(i as u64)));
                let path = common.out_dir.join(format!("{prefix}_{i:03}.mid"));
                fs::write(&path, write_smf(&seq, 480))?;
                println!("{}", path.display());
            }
        }

        Command::Dataset { paths, split, n_split, c, w, in_context_prob, out } => {
            let split: Split = split.parse()?;
            let cfg = SplitConfig {
                split,
                n_split: *n_split,
                c: *c,
                w: *w,
                seed: RngSeed(common.seed),
                in_context_prob: *in_context_prob,
                frame_duration: fd,
            };
            cfg.validate()?;
            if paths.is_empty() {
                return Err(Failure::data(anyhow!("no MIDI files given")));
            }
            for p in paths {
                require_file(p)?;
            }
            let rows = generate_manifest_from_files(paths, &cfg)?;
            let path = out_path(out, common, &format!("manifest_{split}.csv"));
            let mut file = create(&path)?;
            write_manifest(&rows, &mut file)?;
            file.flush()?;
            let ooc = rows.iter().filter(|r| r.out_of_context).count();
            println!("{}: {} rows ({ooc} out of context)", path.display(), rows.len());
        }

        Command::Train { train_manifest, val_manifest, train: args } => {
            let cfg = train_config(args, common.seed)?;
            let chain = load_chain(args.augment_config.as_deref(), args.no_augment)?;
            let (corpus, train_rows, val_rows) = load_training_data(train_manifest, val_manifest, fd)?;
            let outcome = train(&corpus, &train_rows, &val_rows, args.c, args.w, &cfg, &chain)?;
            println!("epoch  lr         train_loss  val_loss  train_acc  val_acc  val_bacc");
            for m in &outcome.history {
                println!(
                    "{:>5}  {:<9.3e}  {:>10.4}  {:>8.4}  {:>9.3}  {:>7.3}  {:>8.3}",
                    m.epoch, m.lr, m.train_loss, m.val_loss, m.train_acc, m.val_acc, m.val_bacc
                );
            }
            let best = outcome.best_metrics();
            println!("best epoch {} val_acc {:.3} val_bacc {:.3}", best.epoch, best.val_acc, best.val_bacc);
            let mut ck = create(&common.out_dir.join("model.tyke"))?;
            write_checkpoint(&outcome.best, &mut ck)?;
            ck.flush()?;
            let mut metrics = create(&common.out_dir.join("metrics.csv"))?;
            write_metrics_csv(&outcome.history, &mut metrics)?;
            metrics.flush()?;
        }

        Command::Follow {
            checkpoint,
            score,
            performance,
            follow,
            tempo_factor,
            osc_host,
            osc_port,
            osc_map,
            out,
        } => {
            let cfg = follow_config(follow, fd)?;
            let params = load_checkpoint(checkpoint)?;
            let score = tempo_rescale(&load_roll(score, fd)?, *tempo_factor)?;
            let perf = load_roll(performance, fd)?;
            let map = match osc_map {
                Some(p) => {
                    require_file(p)?;
                    AddressMap::parse(BufReader::new(File::open(p)?))?
                }
                None => AddressMap::default(),
            };
            let mut stream = match osc_host {
                Some(host) => Some(OscStream::connect(host, *osc_port, fd, cfg.frames_per_tick(), map)?),
                None => None,
            };
            let trace = run_follow_with(&score, &perf, &params, &cfg, |t| match stream.as_mut() {
                Some(s) => s.send_latest(t),
                None => Ok(()),
            })?;
            let path = out_path(out, common, "trace.csv");
            let mut file = create(&path)?;
            write_trace(&trace, &mut file)?;
            file.flush()?;
            println!("{}: {} ticks", path.display(), trace.len());
            if let (Some(s), Some(host)) = (stream, osc_host) {
                println!("sent {} OSC messages to {host}:{osc_port}", s.sent());
            }
        }

        Command::Eval {
            trace,
            score,
            performance,
            thresholds,
            tempo_factor,
            include_stabilizing,
            out,
        } => {
            if thresholds.is_empty() || thresholds.iter().any(|t| !(*t > 0.0)) {
                return Err(Failure::config(anyhow!("thresholds must be positive")));
            }
            require_file(trace)?;
            let trace = read_trace(BufReader::new(File::open(trace)?))?;
            let score = tempo_rescale(&load_roll(score, fd)?, *tempo_factor)?;
            let perf = load_roll(performance, fd)?;
            let report = evaluate(&trace, &score, &perf, thresholds, *include_stabilizing)?;
            let path = out_path(out, common, "report.csv");
            let mut file = create(&path)?;
            write_report(&report, &mut file)?;
            file.flush()?;
            print_report(&report);
        }

        Command::Sweep { kind, grid, checkpoint, score, performance, follow, theta, out } => {
            let kind: SweepKind = kind.parse()?;
            if grid.is_empty() {
                return Err(Failure::config(anyhow!("empty grid")));
            }
            let cfg = follow_config(follow, fd)?;
            let params = load_checkpoint(checkpoint)?;
            let score = load_roll(score, fd)?;
            let perf = load_roll(performance, fd)?;
            let points = sweep(kind, grid, &score, &perf, &params, &cfg, &[*theta])?;
            let path = out_path(out, common, "sweep.csv");
            let mut file = create(&path)?;
            write_sweep(&points, *theta, &mut file)?;
            file.flush()?;
            for p in &points {
                println!("{kind}={} misalign {:.2}%", p.grid_value, p.rate_at(*theta).unwrap_or(f64::NAN));
            }
        }

        Command::Ablate {
            train_manifest,
            val_manifest,
            train: args,
            score,
            performance,
            follow_c,
            follow_w,
            fe,
            variants,
            thresholds,
        } => {
            let cfg = train_config(args, common.seed)?;
            let base = load_chain(args.augment_config.as_deref(), args.no_augment)?;
            ablation_variants(&base, *variants)?;
            let follower = follower_config(*follow_c, *follow_w, *fe, fd)?;
            let (corpus, train_rows, val_rows) = load_training_data(train_manifest, val_manifest, fd)?;
            let score = load_roll(score, fd)?;
            let perf = load_roll(performance, fd)?;
            let setup = AblationSetup {
                corpus: &corpus,
                train_rows: &train_rows,
                val_rows: &val_rows,
                c: args.c,
                w: args.w,
                train: cfg,
                base_chain: &base,
                score: &score,
                performance: &perf,
                follower,
                thresholds_ms: thresholds,
            };
            let rows = run_ablation(&setup, *variants)?;
            for (i, row) in rows.iter().enumerate() {
                let mut ck = create(&common.out_dir.join(format!("ablation_{i}.tyke")))?;
                write_checkpoint(&row.params, &mut ck)?;
                ck.flush()?;
                let mut rep = create(&common.out_dir.join(format!("ablation_{i}_report.csv")))?;
                write_report(&row.report, &mut rep)?;
                rep.flush()?;
                println!("[{i}] {} (val_acc {:.3})", row.label, row.val_acc);
                print_report(&row.report);
            }
            let mut file = create(&common.out_dir.join("ablation.csv"))?;
            write_ablation(&rows, &mut file)?;
            file.flush()?;
        }

        Command::AugmentPreview { midi, augment_config } => {
            let chain = load_chain(augment_config.as_deref(), false)?;
            let seq = read_midi(midi)?;
            let augmented = apply_chain(&seq, &chain, &mut RngSeed(common.seed).rng());
            let original = to_piano_roll(&seq, fd);
            let changed = to_piano_roll(&augmented, fd);
            let stem = midi.file_stem().map_or("preview".into(), |s| s.to_string_lossy().into_owned());
            let outputs = [
                ("original", original.render_pgm()),
                ("augmented", changed.render_pgm()),
                ("side_by_side", side_by_side(&original, &changed, 8).render_pgm()),
            ];
            for (suffix, bytes) in outputs {
                let path = common.out_dir.join(format!("{stem}_{suffix}.pgm"));
                fs::write(&path, bytes)?;
                println!("{}", path.display());
            }
        }
    }
    Ok(())
}
