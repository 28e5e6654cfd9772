//! OSC 1.0 messages for score position and tempo deviation, sent as one
//! UDP datagram per message.

use std::collections::HashMap;
use std::io::BufRead;
use std::net::{SocketAddr, ToSocketAddrs, UdpSocket};

use crate::error::{Error, Result};
use crate::follower::{ols_fit, FollowTrace};

pub const POSITION_ADDRESS: &str = "/sf/position";
pub const TEMPO_DEV_ADDRESS: &str = "/sf/tempo_dev";

#[derive(Debug, Clone, PartialEq)]
pub enum OscArg {
    Int(i32),
    Float(f32),
    Str(String),
}

impl OscArg {
    fn tag(&self) -> char {
        match self {
            OscArg::Int(_) => 'i',
            OscArg::Float(_) => 'f',
            OscArg::Str(_) => 's',
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OscMessage {
    pub address: String,
    pub args: Vec<OscArg>,
}

impl OscMessage {
    pub fn new(address: impl Into<String>, args: Vec<OscArg>) -> Self {
        Self {
            address: address.into(),
            args,
        }
    }
}

fn push_padded_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(s.as_bytes());
    let pad = 4 - s.len() % 4;
    out.extend(std::iter::repeat_n(0u8, pad));
}

pub fn encode(msg: &OscMessage) -> Result<Vec<u8>> {
    if !msg.address.starts_with('/') || msg.address.contains('\0') {
        return Err(Error::InvalidConfig(format!("bad OSC address {:?}", msg.address)));
    }
    let mut out = Vec::new();
    push_padded_str(&mut out, &msg.address);
    let tags: String = std::iter::once(',').chain(msg.args.iter().map(OscArg::tag)).collect();
    push_padded_str(&mut out, &tags);
    for arg in &msg.args {
        match arg {
            OscArg::Int(v) => out.extend_from_slice(&v.to_be_bytes()),
            OscArg::Float(v) => out.extend_from_slice(&v.to_be_bytes()),
            OscArg::Str(s) => {
                if s.contains('\0') {
                    return Err(Error::UnsupportedOscArg("string with embedded NUL".into()));
                }
                push_padded_str(&mut out, s);
            }
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn padded_str(&mut self) -> Result<String> {
        let rest = &self.buf[self.pos..];
        let nul = rest
            .iter()
            .position(|&b| b == 0)
            .ok_or_else(|| Error::Data("unterminated OSC string".into()))?;
        let s = std::str::from_utf8(&rest[..nul])
            .map_err(|_| Error::Data("OSC string is not UTF-8".into()))?
            .to_string();
        let len = (nul / 4 + 1) * 4;
        if len > rest.len() || rest[nul..len].iter().any(|&b| b != 0) {
            return Err(Error::Data("bad OSC string padding".into()));
        }
        self.pos += len;
        Ok(s)
    }

    fn word(&mut self) -> Result<[u8; 4]> {
        let bytes = self
            .buf
            .get(self.pos..self.pos + 4)
            .ok_or_else(|| Error::Data("truncated OSC argument".into()))?;
        self.pos += 4;
        Ok(bytes.try_into().expect("four bytes"))
    }
}

pub fn decode(bytes: &[u8]) -> Result<OscMessage> {
    if bytes.len() % 4 != 0 {
        return Err(Error::Data("OSC packet length is not a multiple of 4".into()));
    }
    let mut cur = Cursor { buf: bytes, pos: 0 };
    let address = cur.padded_str()?;
    if !address.starts_with('/') {
        return Err(Error::Data(format!("bad OSC address {address:?}")));
    }
    let tags = cur.padded_str()?;
    let Some(tags) = tags.strip_prefix(',') else {
        return Err(Error::Data("type tag string must start with ','".into()));
    };
    let mut args = Vec::new();
    for tag in tags.chars() {
        args.push(match tag {
            'i' => OscArg::Int(i32::from_be_bytes(cur.word()?)),
            'f' => OscArg::Float(f32::from_be_bytes(cur.word()?)),
            's' => OscArg::Str(cur.padded_str()?),
            other => return Err(Error::UnsupportedOscArg(format!("type tag {other:?}"))),
        });
    }
    if cur.pos != bytes.len() {
        return Err(Error::Data("trailing bytes after OSC arguments".into()));
    }
    Ok(OscMessage { address, args })
}

/// Internal-to-external address mapping read from `internal external` lines.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AddressMap(HashMap<String, String>);

impl AddressMap {
    pub fn parse<R: BufRead>(input: R) -> Result<Self> {
        let mut map = HashMap::new();
        for (idx, line) in input.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            match parts[..] {
                [from, to] if from.starts_with('/') && to.starts_with('/') => {
                    map.insert(from.to_string(), to.to_string());
                }
                _ => {
                    return Err(Error::Parse {
                        line: idx + 1,
                        msg: "expected `internal_address external_address`".into(),
                    })
                }
            }
        }
        Ok(Self(map))
    }

    pub fn resolve<'a>(&'a self, address: &'a str) -> &'a str {
        self.0.get(address).map_or(address, String::as_str)
    }
}

fn tempo_at(trace: &FollowTrace, i: usize, history: usize, frames_per_tick: f64) -> f64 {
    let lo = (i + 1).saturating_sub(history);
    let points: Vec<(f64, f64)> = trace.entries[lo..=i]
        .iter()
        .map(|e| (e.tick as f64, e.score_frame as f64))
        .collect();
    match ols_fit(&points) {
        Ok((_, slope)) => slope / frames_per_tick,
        Err(_) => 1.0,
    }
}

/// Tempo ratio after each trace entry: the least-squares slope of the last
/// `history` predicted positions, divided by the frames per tick expected at
/// score tempo. Entries with fewer than two points report 1.0.
pub fn tempo_deviation(trace: &FollowTrace, history: usize, frames_per_tick: f64) -> Vec<f64> {
    (0..trace.len())
        .map(|i| tempo_at(trace, i, history, frames_per_tick))
        .collect()
}

fn entry_messages(trace: &FollowTrace, i: usize, fd: f64, frames_per_tick: f64, history: usize, map: &AddressMap) -> [OscMessage; 2] {
    let position = trace.entries[i].score_frame as f64 * fd;
    let dev = tempo_at(trace, i, history, frames_per_tick);
    [
        OscMessage::new(map.resolve(POSITION_ADDRESS), vec![OscArg::Float(position as f32)]),
        OscMessage::new(map.resolve(TEMPO_DEV_ADDRESS), vec![OscArg::Float(dev as f32)]),
    ]
}

/// The two messages sent for each trace entry, in send order.
pub fn trace_messages(
    trace: &FollowTrace,
    frame_duration: f64,
    frames_per_tick: f64,
    history: usize,
    map: &AddressMap,
) -> Vec<OscMessage> {
    (0..trace.len())
        .flat_map(|i| entry_messages(trace, i, frame_duration, frames_per_tick, history, map))
        .collect()
}

/// A UDP sender for follower output.
#[derive(Debug)]
pub struct OscStream {
    socket: UdpSocket,
    target: SocketAddr,
    map: AddressMap,
    frame_duration: f64,
    frames_per_tick: f64,
    history: usize,
    sent: usize,
}

impl OscStream {
    pub fn connect(host: &str, port: u16, frame_duration: f64, frames_per_tick: f64, map: AddressMap) -> Result<Self> {
        let target = (host, port)
            .to_socket_addrs()?
            .next()
            .ok_or_else(|| Error::InvalidConfig(format!("cannot resolve {host}:{port}")))?;
        let bind = if target.is_ipv4() { "0.0.0.0:0" } else { "[::]:0" };
        Ok(Self {
            socket: UdpSocket::bind(bind)?,
            target,
            map,
            frame_duration,
            frames_per_tick,
            history: 20,
            sent: 0,
        })
    }

    /// Sends the messages for the last entry of `trace`.
    pub fn send_latest(&mut self, trace: &FollowTrace) -> Result<()> {
        let Some(i) = trace.len().checked_sub(1) else {
            return Ok(());
        };
        for msg in entry_messages(trace, i, self.frame_duration, self.frames_per_tick, self.history, &self.map) {
            self.socket.send_to(&encode(&msg)?, self.target)?;
            self.sent += 1;
        }
        Ok(())
    }

    /// Datagrams sent so far.
    pub fn sent(&self) -> usize {
        self.sent
    }
}

/// Sends every message of [`trace_messages`] as its own datagram and returns
/// the number sent.
pub fn stream_trace(
    trace: &FollowTrace,
    host: &str,
    port: u16,
    frame_duration: f64,
    frames_per_tick: f64,
    map: &AddressMap,
) -> Result<usize> {
    let mut stream = OscStream::connect(host, port, frame_duration, frames_per_tick, map.clone())?;
    for msg in trace_messages(trace, frame_duration, frames_per_tick, stream.history, map) {
        stream.socket.send_to(&encode(&msg)?, stream.target)?;
        stream.sent += 1;
    }
    Ok(stream.sent)
}
