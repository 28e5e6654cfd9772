use std::collections::{HashMap, VecDeque};

use log::warn;

use super::{sort_notes, MidiSequence, NoteEvent};
use crate::error::{Error, Result};

const DEFAULT_TEMPO_US: u64 = 500_000;

fn malformed(msg: impl Into<String>) -> Error {
    Error::MalformedMidi(msg.into())
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(data: &'a [u8]) -> Self {
        Self { data, pos: 0 }
    }

    fn remaining(&self) -> usize {
        self.data.len() - self.pos
    }

    fn bytes(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(malformed(format!(
                "truncated data: wanted {n} bytes at offset {}",
                self.pos
            )));
        }
        let out = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.bytes(1)?[0])
    }

    fn peek(&self) -> Option<u8> {
        self.data.get(self.pos).copied()
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.bytes(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    /// Variable-length quantity, at most four bytes.
    fn vlq(&mut self) -> Result<u32> {
        let mut value = 0u32;
        for _ in 0..4 {
            let b = self.u8()?;
            value = (value << 7) | u32::from(b & 0x7f);
            if b & 0x80 == 0 {
                return Ok(value);
            }
        }
        Err(malformed("variable-length quantity longer than 4 bytes"))
    }
}

#[derive(Debug, Clone, Copy)]
enum Timing {
    /// Ticks per quarter note, scaled by the tempo map.
    Metrical(u16),
    /// Frames per second times ticks per frame; tempo independent.
    Timecode(f64),
}

/// Set-tempo events merged over all tracks, converted to exact cumulative time.
struct TempoMap {
    timing: Timing,
    /// (tick, microseconds per quarter, cumulative microsecond-ticks at `tick`)
    segments: Vec<(u64, u64, u128)>,
}

impl TempoMap {
    fn new(timing: Timing, mut changes: Vec<(u64, u64)>) -> Self {
        changes.sort_by_key(|&(tick, _)| tick);
        let mut segments = vec![(0u64, DEFAULT_TEMPO_US, 0u128)];
        for (tick, tempo) in changes {
            let &(last_tick, last_tempo, acc) = segments.last().unwrap();
            let acc = acc + u128::from(tick - last_tick) * u128::from(last_tempo);
            if tick == last_tick {
                segments.pop();
            }
            segments.push((tick, tempo, acc));
        }
        Self { timing, segments }
    }

    fn seconds(&self, tick: u64) -> f64 {
        match self.timing {
            Timing::Timecode(ticks_per_second) => tick as f64 / ticks_per_second,
            Timing::Metrical(division) => {
                let idx = self.segments.partition_point(|&(t, _, _)| t <= tick) - 1;
                let (start, tempo, acc) = self.segments[idx];
                let total = acc + u128::from(tick - start) * u128::from(tempo);
                total as f64 / (f64::from(division) * 1e6)
            }
        }
    }
}

struct RawNote {
    pitch: u8,
    velocity: u8,
    track: usize,
    on_tick: u64,
    off_tick: u64,
}

#[derive(Default)]
struct TrackScan {
    notes: Vec<RawNote>,
    tempos: Vec<(u64, u64)>,
}

fn scan_track(data: &[u8], track: usize) -> Result<TrackScan> {
    let mut r = Reader::new(data);
    let mut scan = TrackScan::default();
    let mut open: HashMap<(u8, u8), VecDeque<(u64, u8)>> = HashMap::new();
    let mut tick = 0u64;
    let mut running: Option<u8> = None;

    while r.remaining() > 0 {
        tick += u64::from(r.vlq()?);
        let status = match r.peek() {
            Some(b) if b & 0x80 != 0 => {
                r.u8()?;
                b
            }
            Some(_) => running.ok_or_else(|| malformed("data byte without running status"))?,
            None => return Err(malformed("event missing after delta time")),
        };

        match status {
            0xff => {
                let kind = r.u8()?;
                let len = r.vlq()? as usize;
                let body = r.bytes(len)?;
                match kind {
                    0x51 if len == 3 => {
                        let tempo =
                            (u64::from(body[0]) << 16) | (u64::from(body[1]) << 8) | u64::from(body[2]);
                        if tempo > 0 {
                            scan.tempos.push((tick, tempo));
                        }
                    }
                    0x2f => break,
                    _ => {}
                }
            }
            0xf0 | 0xf7 => {
                let len = r.vlq()? as usize;
                r.bytes(len)?;
                running = None;
            }
            0xf1..=0xfe => return Err(malformed(format!("unexpected system status {status:#04x}"))),
            _ => {
                running = Some(status);
                let channel = status & 0x0f;
                match status & 0xf0 {
                    0x80 | 0x90 => {
                        let pitch = r.u8()? & 0x7f;
                        let velocity = r.u8()? & 0x7f;
                        let key = (channel, pitch);
                        if status & 0xf0 == 0x90 && velocity > 0 {
                            open.entry(key).or_default().push_back((tick, velocity));
                        } else if let Some((on_tick, vel)) =
                            open.get_mut(&key).and_then(VecDeque::pop_front)
                        {
                            scan.notes.push(RawNote {
                                pitch,
                                velocity: vel,
                                track,
                                on_tick,
                                off_tick: tick,
                            });
                        }
                    }
                    0xa0 | 0xb0 | 0xe0 => {
                        r.bytes(2)?;
                    }
                    0xc0 | 0xd0 => {
                        r.bytes(1)?;
                    }
                    _ => unreachable!("status byte has high bit set"),
                }
            }
        }
    }

    let mut dangling = 0usize;
    for ((_, pitch), queue) in open {
        for (on_tick, velocity) in queue {
            dangling += 1;
            scan.notes.push(RawNote {
                pitch,
                velocity,
                track,
                on_tick,
                off_tick: tick,
            });
        }
    }
    if dangling > 0 {
        warn!("track {track}: {dangling} note-on event(s) without note-off closed at end of track");
    }
    Ok(scan)
}

/// Parses a format 0 or 1 Standard MIDI File into absolute-time note events.
///
/// Tempo changes from every track form one global tempo map (120 BPM until the
/// first set-tempo). Note-on with velocity zero is a note-off. Controllers,
/// SysEx and other meta events are skipped. Notes still sounding at the end of
/// their track are closed there with a warning, and zero-length notes are
/// dropped.
pub fn parse_smf(bytes: &[u8]) -> Result<MidiSequence> {
    let mut r = Reader::new(bytes);
    if r.bytes(4).map_err(|_| malformed("missing header chunk"))? != b"MThd" {
        return Err(malformed("missing MThd header"));
    }
    let header_len = r.u32()? as usize;
    if header_len < 6 {
        return Err(malformed(format!("header chunk length {header_len} < 6")));
    }
    let header = r.bytes(header_len)?;
    let format = u16::from_be_bytes([header[0], header[1]]);
    let ntracks = u16::from_be_bytes([header[2], header[3]]);
    let division = u16::from_be_bytes([header[4], header[5]]);
    match format {
        0 | 1 => {}
        2 => return Err(Error::UnsupportedFormat(2)),
        other => return Err(malformed(format!("unknown format {other}"))),
    }
    let timing = if division & 0x8000 != 0 {
        let fps = -((division >> 8) as u8 as i8) as f64;
        let ticks_per_frame = f64::from(division & 0xff);
        if fps <= 0.0 || ticks_per_frame == 0.0 {
            return Err(malformed("invalid SMPTE division"));
        }
        Timing::Timecode(fps * ticks_per_frame)
    } else {
        if division == 0 {
            return Err(malformed("division of zero ticks per quarter"));
        }
        Timing::Metrical(division)
    };

    let mut raw = Vec::new();
    let mut tempos = Vec::new();
    let mut track = 0usize;
    while track < usize::from(ntracks) {
        if r.remaining() == 0 {
            return Err(malformed(format!(
                "header declares {ntracks} tracks but only {track} present"
            )));
        }
        let id = r.bytes(4)?;
        let len = r.u32()? as usize;
        let body = r
            .bytes(len)
            .map_err(|_| malformed(format!("truncated chunk: {len} bytes declared")))?;
        if id != b"MTrk" {
            // Unknown chunk types are skipped.
            continue;
        }
        let scan = scan_track(body, track)?;
        raw.extend(scan.notes);
        tempos.extend(scan.tempos);
        track += 1;
    }

    let map = TempoMap::new(timing, tempos);
    let mut notes: Vec<NoteEvent> = raw
        .into_iter()
        .filter_map(|n| {
            let onset = map.seconds(n.on_tick);
            let duration = map.seconds(n.off_tick) - onset;
            (duration > 0.0).then_some(NoteEvent {
                pitch: n.pitch,
                onset,
                duration,
                velocity: n.velocity,
                track: n.track,
            })
        })
        .collect();
    sort_notes(&mut notes);
    let total_duration = notes.iter().map(NoteEvent::end).fold(0.0, f64::max);
    Ok(MidiSequence { notes, total_duration })
}

fn push_vlq(out: &mut Vec<u8>, mut value: u32) {
    let mut buf = [0u8; 4];
    let mut i = 3;
    buf[i] = (value & 0x7f) as u8;
    value >>= 7;
    while value > 0 {
        i -= 1;
        buf[i] = ((value & 0x7f) as u8) | 0x80;
        value >>= 7;
    }
    out.extend_from_slice(&buf[i..]);
}

/// Writes a format 1 file at 120 BPM with one track per distinct
/// `NoteEvent::track`. Times are quantized to `division` ticks per quarter.
pub fn write_smf(seq: &MidiSequence, division: u16) -> Vec<u8> {
    let ticks_per_second = f64::from(division) * 1e6 / DEFAULT_TEMPO_US as f64;
    let mut track_ids: Vec<usize> = seq.notes.iter().map(|n| n.track).collect();
    track_ids.sort_unstable();
    track_ids.dedup();
    if track_ids.is_empty() {
        track_ids.push(0);
    }

    let mut out = Vec::new();
    out.extend_from_slice(b"MThd");
    out.extend_from_slice(&6u32.to_be_bytes());
    out.extend_from_slice(&1u16.to_be_bytes());
    out.extend_from_slice(&(track_ids.len() as u16).to_be_bytes());
    out.extend_from_slice(&division.to_be_bytes());

    for (i, &id) in track_ids.iter().enumerate() {
        // (tick, is_on, pitch, velocity); offs sort before ons at equal ticks.
        let mut events: Vec<(u64, bool, u8, u8)> = Vec::new();
        for n in seq.notes.iter().filter(|n| n.track == id) {
            let on = (n.onset * ticks_per_second).round() as u64;
            let off = ((n.end() * ticks_per_second).round() as u64).max(on + 1);
            events.push((on, true, n.pitch, n.velocity.max(1)));
            events.push((off, false, n.pitch, 0));
        }
        events.sort_by_key(|&(tick, is_on, pitch, _)| (tick, is_on, pitch));

        let mut body = Vec::new();
        if i == 0 {
            push_vlq(&mut body, 0);
            body.extend_from_slice(&[0xff, 0x51, 0x03]);
            body.extend_from_slice(&DEFAULT_TEMPO_US.to_be_bytes()[5..]);
        }
        let mut last = 0u64;
        for (tick, is_on, pitch, velocity) in events {
            push_vlq(&mut body, (tick - last) as u32);
            last = tick;
            let status = if is_on { 0x90 } else { 0x80 };
            body.extend_from_slice(&[status, pitch, velocity]);
        }
        push_vlq(&mut body, 0);
        body.extend_from_slice(&[0xff, 0x2f, 0x00]);

        out.extend_from_slice(b"MTrk");
        out.extend_from_slice(&(body.len() as u32).to_be_bytes());
        out.extend_from_slice(&body);
    }
    out
}
