//! Dual-encoder correlation matcher.
//!
//! A score context `C` (128 x c) and a performance window `W` (128 x w) are
//! each encoded by a single 1-D convolution + ReLU into `e` latent channels.
//! Cross-correlating the latent window against the zero-padded latent
//! context yields `c + w - 1` scores, one per candidate right-edge position;
//! training treats them as logits of a categorical distribution.

mod checkpoint;
pub mod kernels;
mod optim;
mod train;

use rand::Rng;

pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};
pub use kernels::{conv1d_forward, cross_correlate, relu};
pub use optim::{AdamW, CosineSchedule};
pub use train::{
    evaluate_split, train, write_metrics_csv, EpochMetrics, SplitScore, TrainConfig, TrainOutcome,
};

use crate::error::{Error, Result};
use crate::midi_io::{PianoRoll, PITCHES};

/// Row-major `channels x n` real matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentRoll {
    pub channels: usize,
    pub n: usize,
    pub data: Vec<f64>,
}

impl LatentRoll {
    pub fn zeros(channels: usize, n: usize) -> Self {
        Self {
            channels,
            n,
            data: vec![0.0; channels * n],
        }
    }

    pub fn from_rows(channels: usize, n: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), channels * n, "latent data length");
        Self { channels, n, data }
    }

    pub fn from_roll(roll: &PianoRoll) -> Self {
        Self {
            channels: PITCHES,
            n: roll.n_frames(),
            data: roll.as_bytes().iter().map(|&b| f64::from(b)).collect(),
        }
    }

    pub fn row(&self, channel: usize) -> &[f64] {
        &self.data[channel * self.n..(channel + 1) * self.n]
    }
}

/// Correlation scores over candidate window right-edge positions.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationOutput(pub Vec<f64>);

impl CorrelationOutput {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// One convolutional encoder: `out_channels` kernels of shape
/// `in_channels x kernel`, plus a bias per output channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvEncoder {
    pub out_channels: usize,
    pub in_channels: usize,
    pub kernel: usize,
    // Stored tap-major as [in_channel][tap][out_channel] so a single input
    // cell touches one contiguous slice. Use `index` for (o, ch, d) access.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ConvEncoder {
    pub fn zeros(out_channels: usize, in_channels: usize, kernel: usize) -> Self {
        Self {
            out_channels,
            in_channels,
            kernel,
            weights: vec![0.0; out_channels * in_channels * kernel],
            bias: vec![0.0; out_channels],
        }
    }

    /// Uniform weights in `+-1/sqrt(in_channels * kernel)`, zero bias.
    pub fn random<R: Rng + ?Sized>(
        out_channels: usize,
        in_channels: usize,
        kernel: usize,
        rng: &mut R,
    ) -> Self {
        let bound = 1.0 / ((in_channels * kernel) as f64).sqrt();
        let mut enc = Self::zeros(out_channels, in_channels, kernel);
        for w in &mut enc.weights {
            *w = rng.random_range(-bound..bound);
        }
        enc
    }

    #[inline]
    pub fn index(&self, out: usize, ch: usize, tap: usize) -> usize {
        (ch * self.kernel + tap) * self.out_channels + out
    }

    /// Weights of every output channel for one (input channel, tap).
    #[inline]
    pub fn tap(&self, ch: usize, tap: usize) -> &[f64] {
        let start = (ch * self.kernel + tap) * self.out_channels;
        &self.weights[start..start + self.out_channels]
    }

    #[inline]
    pub fn tap_mut(&mut self, ch: usize, tap: usize) -> &mut [f64] {
        let start = (ch * self.kernel + tap) * self.out_channels;
        &mut self.weights[start..start + self.out_channels]
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    fn zeros_like(&self) -> Self {
        Self::zeros(self.out_channels, self.in_channels, self.kernel)
    }
}

/// Learnable state of the matcher: one encoder for the context, one for the
/// window.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub enc_c: ConvEncoder,
    pub enc_w: ConvEncoder,
}

/// Intermediate values kept from a forward pass for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub context_latent: LatentRoll,
    pub window_latent: LatentRoll,
    pub output: CorrelationOutput,
}

impl ModelParams {
    pub fn random<R: Rng + ?Sized>(latent: usize, kernel: usize, rng: &mut R) -> Self {
        Self {
            enc_c: ConvEncoder::random(latent, PITCHES, kernel, rng),
            enc_w: ConvEncoder::random(latent, PITCHES, kernel, rng),
        }
    }

    pub fn zeros(latent: usize, kernel: usize) -> Self {
        Self {
            enc_c: ConvEncoder::zeros(latent, PITCHES, kernel),
            enc_w: ConvEncoder::zeros(latent, PITCHES, kernel),
        }
    }

    /// Both encoders copy each pitch row to its own latent channel
    /// (128 channels, centre tap 1, zero bias). The model output is then the
    /// raw piano-roll cross-correlation.
    pub fn delta(kernel: usize) -> Self {
        let mut enc = ConvEncoder::zeros(PITCHES, PITCHES, kernel);
        for p in 0..PITCHES {
            let idx = enc.index(p, p, kernel / 2);
            enc.weights[idx] = 1.0;
        }
        Self {
            enc_c: enc.clone(),
            enc_w: enc,
        }
    }

    pub fn latent_channels(&self) -> usize {
        self.enc_c.out_channels
    }

    pub fn kernel(&self) -> usize {
        self.enc_c.kernel
    }

    /// `2 * (128 * k * e + e)`.
    pub fn param_count(&self) -> usize {
        self.enc_c.param_count() + self.enc_w.param_count()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            enc_c: self.enc_c.zeros_like(),
            enc_w: self.enc_w.zeros_like(),
        }
    }

    /// Parameter tensors in checkpoint order.
    pub fn tensors(&self) -> [&[f64]; 4] {
        [
            &self.enc_c.weights,
            &self.enc_c.bias,
            &self.enc_w.weights,
            &self.enc_w.bias,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 4] {
        [
            &mut self.enc_c.weights,
            &mut self.enc_c.bias,
            &mut self.enc_w.weights,
            &mut self.enc_w.bias,
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    fn check_compatible(&self) -> Result<()> {
        if self.enc_c.out_channels != self.enc_w.out_channels {
            return Err(Error::DimensionMismatch(format!(
                "encoders disagree on latent channels: {} vs {}",
                self.enc_c.out_channels, self.enc_w.out_channels
            )));
        }
        Ok(())
    }

    pub fn forward_cached(&self, context: &PianoRoll, window: &PianoRoll) -> Result<ForwardCache> {
        self.check_compatible()?;
        let context_latent = relu(&kernels::conv1d_roll(context, &self.enc_c)?);
        let window_latent = relu(&kernels::conv1d_roll(window, &self.enc_w)?);
        let output = CorrelationOutput(cross_correlate(&context_latent, &window_latent)?);
        Ok(ForwardCache {
            context_latent,
            window_latent,
            output,
        })
    }

    /// `xcorr(relu(conv(C)), relu(conv(W)))`, length `c + w - 1`.
    pub fn forward(&self, context: &PianoRoll, window: &PianoRoll) -> Result<CorrelationOutput> {
        Ok(self.forward_cached(context, window)?.output)
    }

    /// Loss, output and exact parameter gradients for one labelled pair.
    pub fn forward_backward(
        &self,
        context: &PianoRoll,
        window: &PianoRoll,
        label: usize,
    ) -> Result<(f64, CorrelationOutput, ModelParams)> {
        let cache = self.forward_cached(context, window)?;
        let (loss_value, grad_out) = loss_and_grad(&cache.output, label)?;
        let mut grads = self.zeros_like();
        self.backward_from(context, window, &cache, &grad_out, &mut grads);
        Ok((loss_value, cache.output, grads))
    }

    /// Gradients of the cross-entropy loss w.r.t. every parameter.
    pub fn backward(
        &self,
        context: &PianoRoll,
        window: &PianoRoll,
        label: usize,
    ) -> Result<ModelParams> {
        Ok(self.forward_backward(context, window, label)?.2)
    }

    /// Backpropagates `grad_out = dL/dP'` and accumulates into `grads`.
    pub fn backward_from(
        &self,
        context: &PianoRoll,
        window: &PianoRoll,
        cache: &ForwardCache,
        grad_out: &[f64],
        grads: &mut ModelParams,
    ) {
        let (mut d_context, mut d_window) =
            kernels::cross_correlate_backward(&cache.context_latent, &cache.window_latent, grad_out);
        kernels::relu_backward(&cache.context_latent, &mut d_context);
        kernels::relu_backward(&cache.window_latent, &mut d_window);
        kernels::conv1d_roll_backward(context, &d_context, &mut grads.enc_c);
        kernels::conv1d_roll_backward(window, &d_window, &mut grads.enc_w);
    }
}

/// Numerically stable `log(sum(exp(x)))`.
pub fn log_sum_exp(x: &[f64]) -> f64 {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || max == f64::INFINITY {
        return max;
    }
    max + x.iter().map(|&v| (v - max).exp()).sum::<f64>().ln()
}

/// Categorical cross-entropy `-log softmax(output)[label]`.
pub fn loss(output: &CorrelationOutput, label: usize) -> Result<f64> {
    let v = output.values();
    if label >= v.len() {
        return Err(Error::LabelOutOfRange {
            label,
            len: v.len(),
        });
    }
    Ok(log_sum_exp(v) - v[label])
}

/// Loss and its gradient w.r.t. the output: `softmax(output) - onehot(label)`.
pub fn loss_and_grad(output: &CorrelationOutput, label: usize) -> Result<(f64, Vec<f64>)> {
    let value = loss(output, label)?;
    let v = output.values();
    let lse = log_sum_exp(v);
    let mut grad: Vec<f64> = v.iter().map(|&x| (x - lse).exp()).collect();
    grad[label] -= 1.0;
    Ok((value, grad))
}

/// Index of the maximum; ties resolve to the lowest index.
pub fn predict(output: &[f64]) -> Result<usize> {
    if output.is_empty() {
        return Err(Error::Empty("correlation output"));
    }
    let mut best = 0;
    for (i, &v) in output.iter().enumerate().skip(1) {
        if v > output[best] {
            best = i;
        }
    }
    Ok(best)
}

/// Raw piano-roll correlation: the number of active cells the window shares
/// with the context at each right-edge position.
pub fn raw_correlation(context: &PianoRoll, window: &PianoRoll) -> Vec<u32> {
    let (c, w) = (context.n_frames(), window.n_frames());
    if c + w == 0 {
        return Vec::new();
    }
    let ctx = context.column_masks();
    let win = window.column_masks();
    let active: Vec<(usize, u128)> = win
        .iter()
        .copied()
        .enumerate()
        .filter(|&(_, m)| m != 0)
        .collect();
    (0..c + w - 1)
        .map(|k| {
            active
                .iter()
                .filter_map(|&(j, m)| {
                    // padded index k + j maps to context column k + j - (w - 1)
                    let col = (k + j).checked_sub(w - 1)?;
                    ctx.get(col).map(|&cm| (cm & m).count_ones())
                })
                .sum()
        })
        .collect()
}

/// Argmax of the unencoded correlation between window and context.
pub fn baseline_predict(context: &PianoRoll, window: &PianoRoll) -> Result<usize> {
    let raw = raw_correlation(context, window);
    if raw.is_empty() {
        return Err(Error::Empty("correlation output"));
    }
    let mut best = 0;
    for (i, &v) in raw.iter().enumerate().skip(1) {
        if v > raw[best] {
            best = i;
        }
    }
    Ok(best)
}
