use std::io::{Read, Write};

use super::{ConvEncoder, ModelParams};
use crate::error::{Error, Result};
use crate::midi_io::PITCHES;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"TYKE0001";

/// Writes `magic, u32 latent channels, u32 input channels, u32 kernel`, then
/// little-endian f32 arrays: context weights (e x 128 x k), context bias,
/// window weights, window bias.
pub fn write_checkpoint<W: Write>(params: &ModelParams, mut out: W) -> Result<()> {
    let e = params.latent_channels();
    let k = params.kernel();
    out.write_all(CHECKPOINT_MAGIC)?;
    for dim in [e, params.enc_c.in_channels, k] {
        out.write_all(&(dim as u32).to_le_bytes())?;
    }
    for enc in [&params.enc_c, &params.enc_w] {
        let mut buf = Vec::with_capacity(4 * enc.param_count());
        for o in 0..enc.out_channels {
            for ch in 0..enc.in_channels {
                for d in 0..enc.kernel {
                    buf.extend_from_slice(&(enc.weights[enc.index(o, ch, d)] as f32).to_le_bytes());
                }
            }
        }
        for &b in &enc.bias {
            buf.extend_from_slice(&(b as f32).to_le_bytes());
        }
        out.write_all(&buf)?;
    }
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut input: R) -> Result<ModelParams> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    if bytes.len() < 20 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(Error::Data("not a TYKE0001 checkpoint".into()));
    }
    let dim = |i: usize| u32::from_le_bytes(bytes[8 + 4 * i..12 + 4 * i].try_into().unwrap()) as usize;
    let (e, in_ch, k) = (dim(0), dim(1), dim(2));
    if in_ch != PITCHES || e == 0 || k == 0 {
        return Err(Error::Data(format!(
            "unsupported checkpoint dimensions e={e} in={in_ch} k={k}"
        )));
    }
    let per_encoder = e * in_ch * k + e;
    let body = &bytes[20..];
    if body.len() != 2 * 4 * per_encoder {
        return Err(Error::Data(format!(
            "checkpoint body is {} bytes, expected {}",
            body.len(),
            8 * per_encoder
        )));
    }
    let mut values = body
        .chunks_exact(4)
        .map(|b| f64::from(f32::from_le_bytes(b.try_into().unwrap())));
    let mut read_encoder = || {
        let mut enc = ConvEncoder::zeros(e, in_ch, k);
        for o in 0..e {
            for ch in 0..in_ch {
                for d in 0..k {
                    let idx = enc.index(o, ch, d);
                    enc.weights[idx] = values.next().unwrap();
                }
            }
        }
        for b in &mut enc.bias {
            *b = values.next().unwrap();
        }
        enc
    };
    let enc_c = read_encoder();
    let enc_w = read_encoder();
    let params = ModelParams { enc_c, enc_w };
    if !params.is_finite() {
        return Err(Error::Data("checkpoint contains non-finite values".into()));
    }
    Ok(params)
}
