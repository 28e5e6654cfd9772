//! Forward and backward kernels for the encoder/correlation stack.
//!
//! Latent matrices are row-major `channels x frames`. Piano-roll inputs go
//! through sparse paths that only touch active cells.

use super::{ConvEncoder, LatentRoll};
use crate::error::{Error, Result};
use crate::midi_io::{PianoRoll, PITCHES};

/// Dense 1-D convolution along time, stride 1, `k / 2` zero padding on each
/// side, so the output keeps the input length:
///
/// `out[o, j] = bias[o] + sum_{ch, d} w[o, ch, d] * x[ch, j + d - k/2]`
pub fn conv1d_forward(input: &LatentRoll, enc: &ConvEncoder) -> Result<LatentRoll> {
    if input.channels != enc.in_channels {
        return Err(Error::DimensionMismatch(format!(
            "encoder expects {} input channels, got {}",
            enc.in_channels, input.channels
        )));
    }
    let n = input.n;
    let k = enc.kernel;
    let half = k / 2;
    let mut out = LatentRoll::zeros(enc.out_channels, n);
    for o in 0..enc.out_channels {
        let row = &mut out.data[o * n..(o + 1) * n];
        row.fill(enc.bias[o]);
        for ch in 0..enc.in_channels {
            let x = input.row(ch);
            for d in 0..k {
                let w = enc.weights[enc.index(o, ch, d)];
                if w == 0.0 {
                    continue;
                }
                // input index j + d - half must lie in [0, n)
                let lo = half.saturating_sub(d);
                let hi = (n + half).saturating_sub(d).min(n);
                for j in lo..hi {
                    row[j] += w * x[j + d - half];
                }
            }
        }
    }
    Ok(out)
}

/// Same result as [`conv1d_forward`] on the roll's 0/1 cells, computed from
/// the active cells only.
pub fn conv1d_roll(roll: &PianoRoll, enc: &ConvEncoder) -> Result<LatentRoll> {
    if enc.in_channels != PITCHES {
        return Err(Error::DimensionMismatch(format!(
            "piano-roll input needs {PITCHES} encoder input channels, encoder has {}",
            enc.in_channels
        )));
    }
    let n = roll.n_frames();
    let e = enc.out_channels;
    let k = enc.kernel;
    let half = k / 2;
    // Column-major accumulator so each active cell adds contiguous e-vectors.
    let mut acc = vec![0.0; n * e];
    for p in 0..PITCHES {
        for (t, &cell) in roll.row(p).iter().enumerate() {
            if cell == 0 {
                continue;
            }
            for d in 0..k {
                // output column j reads input column t when j + d - half == t
                let j = t + half;
                if j < d || j - d >= n {
                    continue;
                }
                let j = j - d;
                let w = enc.tap(p, d);
                for (a, &wv) in acc[j * e..(j + 1) * e].iter_mut().zip(w) {
                    *a += wv;
                }
            }
        }
    }
    let mut out = LatentRoll::zeros(e, n);
    for o in 0..e {
        let b = enc.bias[o];
        for (j, v) in out.data[o * n..(o + 1) * n].iter_mut().enumerate() {
            *v = b + acc[j * e + o];
        }
    }
    Ok(out)
}

pub fn relu(x: &LatentRoll) -> LatentRoll {
    LatentRoll {
        channels: x.channels,
        n: x.n,
        data: x.data.iter().map(|&v| v.max(0.0)).collect(),
    }
}

/// Correlates a `e x w` template against a `e x c` target zero-padded by
/// `w - 1` columns on each side. Output index `k` places the template's
/// right edge on target column `k`, so its length is `c + w - 1`:
///
/// `out[k] = sum_{i, j} tpl[i, j] * padded[i, k + j]`
pub fn cross_correlate(target: &LatentRoll, template: &LatentRoll) -> Result<Vec<f64>> {
    if target.channels != template.channels {
        return Err(Error::DimensionMismatch(format!(
            "context has {} channels, window has {}",
            target.channels, template.channels
        )));
    }
    let (c, w) = (target.n, template.n);
    if c + w == 0 {
        return Ok(Vec::new());
    }
    let mut out = vec![0.0; c + w - 1];
    for i in 0..target.channels {
        let cp = target.row(i);
        for (j, &a) in template.row(i).iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            let off = w - 1 - j;
            for (o, &x) in out[off..off + c].iter_mut().zip(cp) {
                *o += a * x;
            }
        }
    }
    Ok(out)
}

/// Gradients of a scalar loss w.r.t. both correlation inputs, given
/// `grad_out = dL/d out`. Returns `(d target, d template)`.
pub fn cross_correlate_backward(
    target: &LatentRoll,
    template: &LatentRoll,
    grad_out: &[f64],
) -> (LatentRoll, LatentRoll) {
    let (c, w) = (target.n, template.n);
    debug_assert_eq!(grad_out.len(), c + w - 1);
    let mut d_target = LatentRoll::zeros(target.channels, c);
    let mut d_template = LatentRoll::zeros(template.channels, w);
    for i in 0..target.channels {
        let cp = target.row(i);
        let tpl = template.row(i);
        let dt = &mut d_target.data[i * c..(i + 1) * c];
        for j in 0..w {
            let g = &grad_out[w - 1 - j..w - 1 - j + c];
            d_template.data[i * w + j] = g.iter().zip(cp).map(|(a, b)| a * b).sum();
            let a = tpl[j];
            if a != 0.0 {
                for (d, &gv) in dt.iter_mut().zip(g) {
                    *d += a * gv;
                }
            }
        }
    }
    (d_target, d_template)
}

/// Parameter gradients of a piano-roll-fed encoder given the gradient at
/// its pre-activation output. Accumulates into `grad`.
pub fn conv1d_roll_backward(roll: &PianoRoll, grad_pre: &LatentRoll, grad: &mut ConvEncoder) {
    let n = roll.n_frames();
    let e = grad.out_channels;
    let k = grad.kernel;
    let half = k / 2;
    // column-major copy of the upstream gradient
    let mut g = vec![0.0; n * e];
    for o in 0..e {
        let row = grad_pre.row(o);
        grad.bias[o] += row.iter().sum::<f64>();
        for (j, &v) in row.iter().enumerate() {
            g[j * e + o] = v;
        }
    }
    for p in 0..PITCHES {
        for (t, &cell) in roll.row(p).iter().enumerate() {
            if cell == 0 {
                continue;
            }
            for d in 0..k {
                let j = t + half;
                if j < d || j - d >= n {
                    continue;
                }
                let j = j - d;
                let tap = grad.tap_mut(p, d);
                for (w, &gv) in tap.iter_mut().zip(&g[j * e..(j + 1) * e]) {
                    *w += gv;
                }
            }
        }
    }
}

/// Masks `grad` by the ReLU derivative evaluated at the activation `act`.
pub fn relu_backward(act: &LatentRoll, grad: &mut LatentRoll) {
    for (g, &a) in grad.data.iter_mut().zip(&act.data) {
        if a <= 0.0 {
            *g = 0.0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_input_gives_bias() {
        let mut enc = ConvEncoder::zeros(3, 4, 3);
        enc.bias = vec![0.5, -1.0, 2.0];
        enc.weights.iter_mut().enumerate().for_each(|(i, w)| *w = i as f64);
        let out = conv1d_forward(&LatentRoll::zeros(4, 6), &enc).unwrap();
        for o in 0..3 {
            assert!(out.row(o).iter().all(|&v| v == enc.bias[o]));
        }
    }

    #[test]
    fn delta_kernel_shifts() {
        // one weight on tap 0 reads the previous column
        let mut enc = ConvEncoder::zeros(1, 2, 3);
        let idx = enc.index(0, 1, 0);
        enc.weights[idx] = 1.0;
        let input = LatentRoll::from_rows(2, 5, vec![0.0; 5].into_iter().chain([1.0, 2.0, 3.0, 4.0, 5.0]).collect());
        let out = conv1d_forward(&input, &enc).unwrap();
        assert_eq!(out.row(0), &[0.0, 1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn relu_cases() {
        let neg = LatentRoll::from_rows(1, 3, vec![-1.0, -0.5, -3.0]);
        assert!(relu(&neg).data.iter().all(|&v| v == 0.0));
        let pos = LatentRoll::from_rows(1, 3, vec![1.0, 0.5, 3.0]);
        assert_eq!(relu(&pos), pos);
        let mixed = LatentRoll::from_rows(2, 2, vec![-2.0, 0.0, 1.5, -0.1]);
        assert_eq!(relu(&mixed).data, vec![0.0, 0.0, 1.5, 0.0]);
    }

    #[test]
    fn delta_template() {
        let target = LatentRoll::from_rows(1, 4, vec![0.0, 0.0, 1.0, 0.0]);
        let tpl = LatentRoll::from_rows(1, 1, vec![1.0]);
        assert_eq!(cross_correlate(&target, &tpl).unwrap(), vec![0.0, 0.0, 1.0, 0.0]);
        let zero = LatentRoll::zeros(1, 3);
        assert!(cross_correlate(&target, &zero).unwrap().iter().all(|&v| v == 0.0));
        assert_eq!(cross_correlate(&target, &zero).unwrap().len(), 6);
        assert!(cross_correlate(&target, &LatentRoll::zeros(2, 3)).is_err());
    }

    #[test]
    fn channel_mismatch() {
        let enc = ConvEncoder::zeros(2, 5, 3);
        assert!(conv1d_forward(&LatentRoll::zeros(4, 3), &enc).is_err());
        assert!(conv1d_roll(&PianoRoll::zeros(3, 0.01), &enc).is_err());
    }
}
