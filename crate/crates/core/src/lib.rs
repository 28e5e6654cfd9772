//! Neural score following on binary piano rolls.
//!
//! The pipeline turns MIDI into 128-row piano rolls, trains a pair of 1-D
//! convolutional encoders whose latent cross-correlation locates a
//! performance window inside a score context, and wraps the matcher in a
//! rule-based follower that validates predictions against a ring buffer of
//! past positions. Evaluation uses offline DTW between performance and score
//! as ground truth.
//!
//! ```text
//! MIDI -> PianoRoll -> (context C, window W) -> encoders -> C' * W' -> follower -> position
//! ```

pub mod augment;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod follower;
pub mod midi_io;
pub mod osc;
pub mod tyke;

pub use error::{Error, Result};
