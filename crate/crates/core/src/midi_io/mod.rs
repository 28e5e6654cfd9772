//! Standard MIDI File input and binary piano-roll rendering.

mod roll;
mod smf;

pub use roll::{note_runs, to_piano_roll, PianoRoll, DEFAULT_FRAME_DURATION, PITCHES};
pub use smf::{parse_smf, write_smf};

/// A single sounding note with absolute times in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoteEvent {
    pub pitch: u8,
    pub onset: f64,
    pub duration: f64,
    pub velocity: u8,
    pub track: usize,
}

impl NoteEvent {
    pub fn end(&self) -> f64 {
        self.onset + self.duration
    }
}

/// Parsed note content of a MIDI file, sorted by onset.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MidiSequence {
    pub notes: Vec<NoteEvent>,
    pub total_duration: f64,
}

impl MidiSequence {
    /// Builds a sequence from arbitrary notes, sorting them and deriving the
    /// total duration from the latest note end.
    pub fn from_notes(mut notes: Vec<NoteEvent>) -> Self {
        sort_notes(&mut notes);
        let total_duration = notes.iter().map(NoteEvent::end).fold(0.0, f64::max);
        Self { notes, total_duration }
    }

    pub fn is_empty(&self) -> bool {
        self.notes.is_empty()
    }

    /// Notes overlapping `[start, end)` seconds, clipped to the span and
    /// re-timed so `start` becomes zero.
    pub fn clip(&self, start: f64, end: f64) -> MidiSequence {
        let notes = self
            .notes
            .iter()
            .filter(|n| n.onset < end && n.end() > start)
            .filter_map(|n| {
                let on = n.onset.max(start);
                let off = n.end().min(end);
                (off > on).then(|| NoteEvent {
                    onset: on - start,
                    duration: off - on,
                    ..*n
                })
            })
            .collect();
        MidiSequence::from_notes(notes)
    }
}

pub(crate) fn sort_notes(notes: &mut [NoteEvent]) {
    notes.sort_by(|a, b| {
        a.onset
            .total_cmp(&b.onset)
            .then(a.pitch.cmp(&b.pitch))
            .then(a.track.cmp(&b.track))
            .then(a.duration.total_cmp(&b.duration))
    });
}
