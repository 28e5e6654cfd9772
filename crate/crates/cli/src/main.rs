//! `scorefollow` command-line tool.
//!
//! Exit codes: 0 on success, 2 for usage or configuration errors, 3 for data
//! and runtime errors.

mod commands;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use scorefollow::midi_io::DEFAULT_FRAME_DURATION;

#[derive(Debug, Parser)]
#[command(name = "scorefollow", version, about = "Piano-roll score following toolkit")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Piano-roll frame duration in seconds.
    #[arg(long, global = true, default_value_t = DEFAULT_FRAME_DURATION)]
    pub frame_duration: f64,
    /// Directory for outputs and the config echo file.
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    /// Log more (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    /// Training context length in frames.
    #[arg(long, default_value_t = 512)]
    pub c: usize,
    /// Training window length in frames.
    #[arg(long, default_value_t = 256)]
    pub w: usize,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 5e-4)]
    pub lr: f64,
    #[arg(long, default_value_t = 1e-2)]
    pub weight_decay: f64,
    #[arg(long, default_value_t = 1e-6)]
    pub min_lr: f64,
    /// Epochs per quarter of the cosine schedule.
    #[arg(long, default_value_t = 10.0)]
    pub quarter_cycle: f64,
    /// Latent channels per encoder.
    #[arg(long, default_value_t = 64)]
    pub latent: usize,
    #[arg(long, default_value_t = 3)]
    pub kernel: usize,
    #[arg(long, default_value_t = 500)]
    pub train_samples: usize,
    #[arg(long, default_value_t = 50)]
    pub val_samples: usize,
    /// Augmentation chain file; the built-in chain is used when absent.
    #[arg(long)]
    pub augment_config: Option<PathBuf>,
    /// Train without augmentation.
    #[arg(long, conflicts_with = "augment_config")]
    pub no_augment: bool,
}

#[derive(Debug, Clone, Args)]
pub struct FollowArgs {
    /// Score context length in frames.
    #[arg(long, default_value_t = 1250)]
    pub c: usize,
    /// Performance window length in frames.
    #[arg(long, default_value_t = 500)]
    pub w: usize,
    /// Inference rate in Hz.
    #[arg(long, default_value_t = 10.0)]
    pub fe: f64,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write synthetic piano pieces as MIDI files.
    Synth {
        #[arg(long, default_value_t = 10)]
        count: usize,
        /// Piece length in seconds.
        #[arg(long, default_value_t = 20.0)]
        duration: f64,
        #[arg(long, default_value = "piece")]
        prefix: String,
        /// Frames of a leading chord whose pitches occur nowhere else.
        #[arg(long, default_value_t = 0)]
        count_in: usize,
    },
    /// Draw a context/window manifest from MIDI files.
    Dataset {
        /// MIDI files to sample from.
        paths: Vec<PathBuf>,
        #[arg(long, default_value = "train")]
        split: String,
        /// Number of rows to draw.
        #[arg(long, default_value_t = 500)]
        n_split: usize,
        #[arg(long, default_value_t = 512)]
        c: usize,
        #[arg(long, default_value_t = 256)]
        w: usize,
        #[arg(long, default_value_t = 0.9)]
        in_context_prob: f64,
        /// Output CSV; defaults to `manifest_<split>.csv` in the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the correlation model and write a checkpoint and metrics.
    Train {
        #[arg(long)]
        train_manifest: PathBuf,
        #[arg(long)]
        val_manifest: PathBuf,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Follow a performance through a score in simulated real time.
    Follow {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        score: PathBuf,
        #[arg(long)]
        performance: PathBuf,
        #[command(flatten)]
        follow: FollowArgs,
        /// Stretch the score by this factor before following.
        #[arg(long, default_value_t = 1.0)]
        tempo_factor: f64,
        /// Stream positions to this host over OSC.
        #[arg(long)]
        osc_host: Option<String>,
        #[arg(long, default_value_t = 9000)]
        osc_port: u16,
        /// Address remapping file with `internal external` lines.
        #[arg(long)]
        osc_map: Option<PathBuf>,
        /// Output CSV; defaults to `trace.csv` in the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a follow trace against DTW ground truth.
    Eval {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        score: PathBuf,
        #[arg(long)]
        performance: PathBuf,
        /// Misalignment thresholds in milliseconds.
        #[arg(long, value_delimiter = ',', default_values_t = scorefollow::eval::DEFAULT_THRESHOLDS_MS)]
        thresholds: Vec<f64>,
        /// Tempo factor the trace was produced with.
        #[arg(long, default_value_t = 1.0)]
        tempo_factor: f64,
        /// Count ticks from the stabilization phase too.
        #[arg(long)]
        include_stabilizing: bool,
        /// Output CSV; defaults to `report.csv` in the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Misalign rate across tempo factors or inference rates.
    Sweep {
        /// `tempo` or `fe`.
        #[arg(long, default_value = "tempo")]
        kind: String,
        #[arg(long, value_delimiter = ',', required = true)]
        grid: Vec<f64>,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        score: PathBuf,
        #[arg(long)]
        performance: PathBuf,
        #[command(flatten)]
        follow: FollowArgs,
        /// Threshold reported in the sweep table, in milliseconds.
        #[arg(long, default_value_t = 100.0)]
        theta: f64,
        /// Output CSV; defaults to `sweep.csv` in the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train with progressively fewer augmentations and evaluate each model.
    Ablate {
        #[arg(long)]
        train_manifest: PathBuf,
        #[arg(long)]
        val_manifest: PathBuf,
        #[command(flatten)]
        train: TrainArgs,
        #[arg(long)]
        score: PathBuf,
        #[arg(long)]
        performance: PathBuf,
        /// Context length used when following.
        #[arg(long, default_value_t = 1250)]
        follow_c: usize,
        /// Window length used when following.
        #[arg(long, default_value_t = 500)]
        follow_w: usize,
        #[arg(long, default_value_t = 10.0)]
        fe: f64,
        /// Number of variants, from the full chain down to none.
        #[arg(long, default_value_t = 6)]
        variants: usize,
        #[arg(long, value_delimiter = ',', default_values_t = scorefollow::eval::DEFAULT_THRESHOLDS_MS)]
        thresholds: Vec<f64>,
    },
    /// Render a MIDI file before and after augmentation as PGM images.
    AugmentPreview {
        midi: PathBuf,
        /// Augmentation chain file; the built-in chain is used when absent.
        #[arg(long)]
        augment_config: Option<PathBuf>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Synth { .. } => "synth",
            Command::Dataset { .. } => "dataset",
            Command::Train { .. } => "train",
            Command::Follow { .. } => "follow",
            Command::Eval { .. } => "eval",
            Command::Sweep { .. } => "sweep",
            Command::Ablate { .. } => "ablate",
            Command::AugmentPreview { .. } => "augment-preview",
        }
    }
}

/// An error with the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn config(error: impl Into<anyhow::Error>) -> Self {
        Self { code: 2, error: error.into() }
    }

    pub fn data(error: impl Into<anyhow::Error>) -> Self {
        Self { code: 3, error: error.into() }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

impl From<scorefollow::Error> for Failure {
    fn from(e: scorefollow::Error) -> Self {
        match e {
            scorefollow::Error::InvalidConfig(_) => Self::config(e),
            _ => Self::data(e),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self::data(e)
    }
}

/// Flat `key=value` lines for every argument of the chosen subcommand,
/// defaults included.
fn config_echo(name: &str, matches: &clap::ArgMatches) -> String {
    let mut lines = vec![format!("subcommand={name}")];
    let mut ids: Vec<_> = matches.ids().map(|id| id.as_str().to_string()).collect();
    ids.sort();
    for id in ids {
        let Ok(Some(values)) = matches.try_get_raw(&id) else {
            continue;
        };
        let joined: Vec<String> = values.map(|v| v.to_string_lossy().into_owned()).collect();
        lines.push(format!("{id}={}", joined.join(",")));
    }
    lines.join("\n") + "\n"
}

fn main() -> ExitCode {
    let matches = Cli::command().get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    let level = match cli.common.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let name = cli.command.name();
    let sub = matches.subcommand().map(|(_, m)| m).expect("subcommand is required");
    let echo = config_echo(name, sub);
    match commands::run(&cli, &echo) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code)
        }
    }
}
