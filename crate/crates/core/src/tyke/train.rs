use std::io::Write;

use log::info;
use rand::seq::SliceRandom;

use super::{baseline_predict, loss_and_grad, predict, AdamW, CosineSchedule, ModelParams};
use crate::augment::{AugmentSpec, RngSeed};
use crate::dataset::{materialize, training_batch, Corpus, ManifestRow};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub latent_channels: usize,
    pub kernel: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub min_lr: f64,
    /// Epochs per quarter of the cosine cycle.
    pub quarter_cycle: f64,
    pub train_samples: usize,
    pub val_samples: usize,
    pub seed: RngSeed,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            latent_channels: 64,
            kernel: 3,
            lr: 5e-4,
            weight_decay: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            epochs: 50,
            batch_size: 64,
            min_lr: 1e-6,
            quarter_cycle: 10.0,
            train_samples: 500,
            val_samples: 50,
            seed: RngSeed(0),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("latent_channels", self.latent_channels as f64),
            ("kernel", self.kernel as f64),
            ("lr", self.lr),
            ("epochs", self.epochs as f64),
            ("batch_size", self.batch_size as f64),
            ("min_lr", self.min_lr),
            ("quarter_cycle", self.quarter_cycle),
            ("train_samples", self.train_samples as f64),
            ("val_samples", self.val_samples as f64),
            ("eps", self.eps),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(Error::InvalidConfig(format!("{name} must be positive")));
            }
        }
        if self.min_lr > self.lr {
            return Err(Error::InvalidConfig("min_lr exceeds lr".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::InvalidConfig("betas must lie in [0, 1)".into()));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::InvalidConfig("weight_decay must be >= 0".into()));
        }
        Ok(())
    }

    pub fn schedule(&self) -> CosineSchedule {
        CosineSchedule::from_quarter_cycle(self.lr, self.min_lr, self.quarter_cycle)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: f64,
    pub train_acc: f64,
    pub val_acc: f64,
    /// Accuracy of the unencoded-correlation baseline on the same samples.
    pub val_bacc: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the highest validation accuracy.
    pub best: ModelParams,
    pub best_epoch: usize,
    pub last: ModelParams,
    pub history: Vec<EpochMetrics>,
}

impl TrainOutcome {
    pub fn best_metrics(&self) -> &EpochMetrics {
        &self.history[self.best_epoch]
    }
}

/// Mean loss and accuracies over the in-context rows of a split.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitScore {
    pub loss: f64,
    pub acc: f64,
    pub bacc: f64,
    pub count: usize,
}

/// Scores unaugmented samples. Out-of-context rows are skipped. A sample
/// is correct only when the argmax hits the label exactly.
pub fn evaluate_split(
    params: &ModelParams,
    corpus: &Corpus,
    rows: &[ManifestRow],
    c: usize,
    w: usize,
) -> Result<SplitScore> {
    let mut score = SplitScore {
        loss: 0.0,
        acc: 0.0,
        bacc: 0.0,
        count: 0,
    };
    for row in rows {
        let sample = materialize(row, corpus, c, w)?;
        let Some(label) = sample.label else { continue };
        let out = params.forward(&sample.context, &sample.window)?;
        score.loss += super::loss(&out, label)?;
        score.acc += f64::from(u8::from(predict(out.values())? == label));
        score.bacc += f64::from(u8::from(baseline_predict(&sample.context, &sample.window)? == label));
        score.count += 1;
    }
    if score.count > 0 {
        let n = score.count as f64;
        score.loss /= n;
        score.acc /= n;
        score.bacc /= n;
    }
    Ok(score)
}

fn cycle_take<T: Clone>(items: &[T], n: usize) -> Vec<T> {
    items.iter().cycle().take(n).cloned().collect()
}

/// Trains a fresh model with AdamW and a cosine learning-rate schedule.
///
/// Each epoch draws `train_samples` rows (reshuffled, cycling through the
/// manifest when it is shorter), augments their windows with `chain`, and
/// updates once per batch with the batch-mean gradient. Validation uses the
/// first `val_samples` rows unaugmented. Out-of-context rows never enter the
/// loss.
pub fn train(
    corpus: &Corpus,
    train_rows: &[ManifestRow],
    val_rows: &[ManifestRow],
    c: usize,
    w: usize,
    cfg: &TrainConfig,
    chain: &[AugmentSpec],
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if !train_rows.iter().any(|r| !r.out_of_context) {
        return Err(Error::Empty("training split has no in-context rows"));
    }
    if !val_rows.iter().any(|r| !r.out_of_context) {
        return Err(Error::Empty("validation split has no in-context rows"));
    }
    for spec in chain {
        spec.validate()?;
    }

    let mut rng = cfg.seed.rng();
    let mut params = ModelParams::random(cfg.latent_channels, cfg.kernel, &mut rng);
    let mut opt = AdamW::new(params.param_count(), cfg.beta1, cfg.beta2, cfg.eps, cfg.weight_decay);
    let schedule = cfg.schedule();
    let val_set = cycle_take(val_rows, cfg.val_samples);

    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best = (f64::NEG_INFINITY, 0, params.clone());

    for epoch in 0..cfg.epochs {
        let lr = schedule.lr(epoch);
        let mut order = train_rows.to_vec();
        order.shuffle(&mut rng);
        let epoch_rows = cycle_take(&order, cfg.train_samples);

        let (mut loss_sum, mut correct, mut seen) = (0.0, 0usize, 0usize);
        for batch_rows in epoch_rows.chunks(cfg.batch_size) {
            let batch = training_batch(batch_rows, corpus, c, w, chain, &mut rng)?;
            let mut grads = params.zeros_like();
            let mut in_batch = 0usize;
            for sample in &batch {
                let Some(label) = sample.label else { continue };
                let cache = params.forward_cached(&sample.context, &sample.window)?;
                let (loss, grad_out) = loss_and_grad(&cache.output, label)?;
                params.backward_from(&sample.context, &sample.window, &cache, &grad_out, &mut grads);
                loss_sum += loss;
                correct += usize::from(predict(cache.output.values())? == label);
                in_batch += 1;
            }
            if in_batch == 0 {
                continue;
            }
            let scale = 1.0 / in_batch as f64;
            for t in grads.tensors_mut() {
                t.iter_mut().for_each(|g| *g *= scale);
            }
            opt.step(&mut params, &grads, lr);
            seen += in_batch;
        }

        let val = evaluate_split(&params, corpus, &val_set, c, w)?;
        let metrics = EpochMetrics {
            epoch,
            lr,
            train_loss: if seen > 0 { loss_sum / seen as f64 } else { 0.0 },
            val_loss: val.loss,
            train_acc: if seen > 0 { correct as f64 / seen as f64 } else { 0.0 },
            val_acc: val.acc,
            val_bacc: val.bacc,
        };
        info!(
            "epoch {epoch}: lr {lr:.2e} train_loss {:.4} val_loss {:.4} train_acc {:.3} val_acc {:.3} val_bacc {:.3}",
            metrics.train_loss, metrics.val_loss, metrics.train_acc, metrics.val_acc, metrics.val_bacc
        );
        if metrics.val_acc > best.0 {
            best = (metrics.val_acc, epoch, params.clone());
        }
        history.push(metrics);
        if !params.is_finite() {
            return Err(Error::Data(format!("parameters diverged at epoch {epoch}")));
        }
    }

    Ok(TrainOutcome {
        best: best.2,
        best_epoch: best.1,
        last: params,
        history,
    })
}

/// `epoch,train_loss,val_loss,train_acc,val_acc,val_bacc`, one row per epoch.
pub fn write_metrics_csv<W: Write>(history: &[EpochMetrics], mut out: W) -> Result<()> {
    writeln!(out, "epoch,train_loss,val_loss,train_acc,val_acc,val_bacc")?;
    for m in history {
        writeln!(
            out,
            "{},{:.6},{:.6},{:.6},{:.6},{:.6}",
            m.epoch, m.train_loss, m.val_loss, m.train_acc, m.val_acc, m.val_bacc
        )?;
    }
    Ok(())
}
