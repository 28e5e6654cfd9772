use super::MidiSequence;
use crate::error::{Error, Result};

/// Number of piano-roll rows, one per MIDI note number.
pub const PITCHES: usize = 128;

/// Default seconds per piano-roll column.
pub const DEFAULT_FRAME_DURATION: f64 = 1.0 / 96.0;

const ROLL_MAGIC: &[u8; 8] = b"PROLL001";

/// Time comparisons snap to frame boundaries within this many frames.
const FRAME_EPS: f64 = 1e-9;

/// Binary 128 x n matrix: row = MIDI pitch, column = time frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PianoRoll {
    n: usize,
    frame_duration: f64,
    // Row-major, PITCHES rows of n cells, each 0 or 1.
    cells: Vec<u8>,
}

impl PianoRoll {
    pub fn zeros(n: usize, frame_duration: f64) -> Self {
        Self {
            n,
            frame_duration,
            cells: vec![0; PITCHES * n],
        }
    }

    /// Builds a roll from row-major bytes; any nonzero byte becomes 1.
    pub fn from_row_major(n: usize, frame_duration: f64, data: &[u8]) -> Result<Self> {
        if data.len() != PITCHES * n {
            return Err(Error::DimensionMismatch(format!(
                "expected {} cells, got {}",
                PITCHES * n,
                data.len()
            )));
        }
        Ok(Self {
            n,
            frame_duration,
            cells: data.iter().map(|&b| u8::from(b != 0)).collect(),
        })
    }

    pub fn n_frames(&self) -> usize {
        self.n
    }

    pub fn frame_duration(&self) -> f64 {
        self.frame_duration
    }

    pub fn get(&self, pitch: usize, frame: usize) -> bool {
        self.cells[pitch * self.n + frame] != 0
    }

    pub fn set(&mut self, pitch: usize, frame: usize, on: bool) {
        self.cells[pitch * self.n + frame] = u8::from(on);
    }

    pub fn row(&self, pitch: usize) -> &[u8] {
        &self.cells[pitch * self.n..(pitch + 1) * self.n]
    }

    /// Row-major cell bytes.
    pub fn as_bytes(&self) -> &[u8] {
        &self.cells
    }

    /// Column as a bitmask, bit `p` set when pitch `p` sounds.
    pub fn column_mask(&self, frame: usize) -> u128 {
        (0..PITCHES).fold(0u128, |acc, p| acc | (u128::from(self.get(p, frame)) << p))
    }

    /// All columns as bitmasks.
    pub fn column_masks(&self) -> Vec<u128> {
        let mut masks = vec![0u128; self.n];
        for p in 0..PITCHES {
            for (t, &cell) in self.row(p).iter().enumerate() {
                if cell != 0 {
                    masks[t] |= 1u128 << p;
                }
            }
        }
        masks
    }

    /// Active cells as (pitch, frame) pairs in row-major order.
    pub fn active_cells(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for p in 0..PITCHES {
            out.extend(
                self.row(p)
                    .iter()
                    .enumerate()
                    .filter(|(_, &c)| c != 0)
                    .map(|(t, _)| (p, t)),
            );
        }
        out
    }

    pub fn count_active(&self) -> usize {
        self.cells.iter().filter(|&&c| c != 0).count()
    }

    /// Extracts `len` columns starting at `start` (which may be negative when
    /// padding). With `pad`, columns outside the roll are zero; without it an
    /// out-of-range request is an error.
    pub fn slice(&self, start: isize, len: usize, pad: bool) -> Result<PianoRoll> {
        let end = start + len as isize;
        if !pad && (start < 0 || end > self.n as isize) {
            return Err(Error::SliceOutOfBounds {
                start: start.max(0) as usize,
                end: end.max(0) as usize,
                len: self.n,
            });
        }
        let mut out = PianoRoll::zeros(len, self.frame_duration);
        let lo = start.max(0);
        let hi = end.min(self.n as isize);
        if lo < hi {
            let (lo, hi) = (lo as usize, hi as usize);
            let dst = (lo as isize - start) as usize;
            for p in 0..PITCHES {
                out.cells[p * len + dst..p * len + dst + (hi - lo)]
                    .copy_from_slice(&self.row(p)[lo..hi]);
            }
        }
        Ok(out)
    }

    /// Grayscale binary PGM (P5, maxval 255), one pixel per cell. The top
    /// image row is pitch 127.
    pub fn render_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.n, PITCHES).into_bytes();
        out.reserve(PITCHES * self.n);
        for p in (0..PITCHES).rev() {
            out.extend(self.row(p).iter().map(|&c| if c != 0 { 255 } else { 0 }));
        }
        out
    }

    /// Reads an image written by [`PianoRoll::render_pgm`]. Pixels >= 128 are set.
    pub fn from_pgm(bytes: &[u8], frame_duration: f64) -> Result<PianoRoll> {
        let bad = |msg: &str| Error::Data(format!("PGM: {msg}"));
        let mut fields = Vec::with_capacity(4);
        let mut pos = 0;
        while fields.len() < 4 {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(bad("truncated header"));
            }
            fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("header"))?);
        }
        if fields[0] != "P5" {
            return Err(bad("not a P5 image"));
        }
        let parse = |s: &str| s.parse::<usize>().map_err(|_| bad("bad dimension"));
        let (width, height, maxval) = (parse(fields[1])?, parse(fields[2])?, parse(fields[3])?);
        if height != PITCHES || maxval != 255 {
            return Err(bad("expected height 128 and maxval 255"));
        }
        let pixels = bytes.get(pos + 1..).ok_or_else(|| bad("missing raster"))?;
        if pixels.len() != width * height {
            return Err(bad("raster size mismatch"));
        }
        let mut roll = PianoRoll::zeros(width, frame_duration);
        for (row, line) in pixels.chunks(width.max(1)).enumerate().take(height) {
            let p = PITCHES - 1 - row;
            for (t, &px) in line.iter().enumerate() {
                roll.set(p, t, px >= 128);
            }
        }
        Ok(roll)
    }

    /// Flat binary serialization: magic, u32 frame count, u64 frame duration
    /// in nanoseconds, then the row-major cells.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(20 + self.cells.len());
        out.extend_from_slice(ROLL_MAGIC);
        out.extend_from_slice(&(self.n as u32).to_le_bytes());
        let nanos = (self.frame_duration * 1e9).round() as u64;
        out.extend_from_slice(&nanos.to_le_bytes());
        out.extend_from_slice(&self.cells);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<PianoRoll> {
        if bytes.len() < 20 || &bytes[..8] != ROLL_MAGIC {
            return Err(Error::Data("not a PROLL001 roll file".into()));
        }
        let n = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let nanos = u64::from_le_bytes(bytes[12..20].try_into().unwrap());
        PianoRoll::from_row_major(n, nanos as f64 * 1e-9, &bytes[20..])
    }
}

/// Smallest frame index whose start time is at or after `seconds`.
pub(crate) fn frame_ceil(seconds: f64, frame_duration: f64) -> usize {
    (seconds / frame_duration - FRAME_EPS).ceil().max(0.0) as usize
}

/// Renders a sequence into a binary roll. A note occupies frame `t` iff
/// `onset <= t * frame_duration < onset + duration`; velocities are ignored and
/// all tracks are merged.
pub fn to_piano_roll(seq: &MidiSequence, frame_duration: f64) -> PianoRoll {
    assert!(frame_duration > 0.0, "frame duration must be positive");
    let n = frame_ceil(seq.total_duration, frame_duration);
    let mut roll = PianoRoll::zeros(n, frame_duration);
    for note in &seq.notes {
        let start = frame_ceil(note.onset, frame_duration);
        let end = frame_ceil(note.end(), frame_duration).min(n);
        let p = usize::from(note.pitch);
        for t in start..end {
            roll.set(p, t, true);
        }
    }
    roll
}

/// Maximal runs of set cells per pitch as (pitch, start frame, length).
pub fn note_runs(roll: &PianoRoll) -> Vec<(u8, usize, usize)> {
    let mut runs = Vec::new();
    for p in 0..PITCHES {
        let row = roll.row(p);
        let mut t = 0;
        while t < row.len() {
            if row[t] != 0 {
                let start = t;
                while t < row.len() && row[t] != 0 {
                    t += 1;
                }
                runs.push((p as u8, start, t - start));
            } else {
                t += 1;
            }
        }
    }
    runs
}
