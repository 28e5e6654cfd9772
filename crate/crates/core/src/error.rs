use std::io;

use thiserror::Error;

/// Errors produced by the score-following toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed MIDI file: {0}")]
    MalformedMidi(String),

    #[error("unsupported MIDI format {0}")]
    UnsupportedFormat(u16),

    #[error("slice [{start}, {end}) out of bounds for roll of {len} frames")]
    SliceOutOfBounds { start: usize, end: usize, len: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("label {label} out of range for output of length {len}")]
    LabelOutOfRange { label: usize, len: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("unsupported OSC argument: {0}")]
    UnsupportedOscArg(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
