//! Training loop, evaluation and run history.

pub mod metrics;
pub mod optim;

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use metrics::{ClassScores, ConfusionMatrix, Metrics};
pub use optim::{adam_step, sgd_momentum_step, AdamHyper, AdamState, MomentumState, Optimizer, OptimizerKind};

use crate::class::{argmax, NUM_CLASSES};
use crate::data::{batches, load_and_preprocess, SampleRef, Splits, StreamOptions};
use crate::error::{Error, Result};
use crate::net::{batch_grad, loss_and_logit_grad, LossKind, OctNet, DEFAULT_DROPOUT};
use crate::ops::{splitmix64, Mode};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    /// Only used by `sgd_momentum`.
    pub momentum: f64,
    pub loss: LossKind,
    pub seed: u64,
    /// Rate after the fourth pooling stage.
    pub conv_dropout: f64,
    /// Rate between the two dense layers.
    pub dense_dropout: f64,
    pub prefetch_depth: usize,
    pub decode_workers: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 64,
            epochs: 15,
            learning_rate: 1e-3,
            optimizer: OptimizerKind::Adam,
            momentum: 0.9,
            loss: LossKind::BceSigmoid,
            seed: 42,
            conv_dropout: DEFAULT_DROPOUT.0,
            dense_dropout: DEFAULT_DROPOUT.1,
            prefetch_depth: 8,
            decode_workers: 2,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Parameter("batch_size must be at least 1".into()));
        }
        // lr = 0 is allowed as a no-op run.
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Parameter(format!("learning_rate must be finite and non-negative, got {}", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Parameter(format!("momentum must be in [0, 1), got {}", self.momentum)));
        }
        for rate in [self.conv_dropout, self.dense_dropout] {
            if !(0.0..1.0).contains(&rate) {
                return Err(Error::Parameter(format!("dropout rate must be in [0, 1), got {rate}")));
            }
        }
        if self.prefetch_depth == 0 {
            return Err(Error::Parameter("prefetch_depth must be at least 1".into()));
        }
        Ok(())
    }

    pub fn stream_options(&self) -> StreamOptions {
        StreamOptions {
            prefetch_depth: self.prefetch_depth,
            workers: self.decode_workers,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: Option<f64>,
    pub val_acc: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunHistory {
    pub epochs: Vec<EpochRecord>,
    pub optimizer_steps: u64,
}

impl RunHistory {
    /// `epoch,train_loss,train_acc,val_loss,val_acc`; missing validation
    /// values are left empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,train_acc,val_loss,val_acc\n");
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        for r in &self.epochs {
            let _ = writeln!(
                out,
                "{},{:.6},{:.6},{},{}",
                r.epoch,
                r.train_loss,
                r.train_acc,
                opt(r.val_loss),
                opt(r.val_acc)
            );
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

fn batch_seed(seed: u64, epoch: usize, batch: usize) -> u64 {
    splitmix64(seed ^ splitmix64(((epoch as u64) << 32) | batch as u64))
}

/// Trains `net` in place for `config.epochs` epochs over the streamed train
/// split. `on_epoch` sees each record as it completes.
pub fn train_with(
    mut net: OctNet,
    splits: &Splits,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<(OctNet, RunHistory)> {
    config.validate()?;
    if splits.train.is_empty() {
        return Err(Error::Parameter("train split is empty".into()));
    }
    net.set_dropout_rates(config.conv_dropout, config.dense_dropout)?;
    let mut optimizer = Optimizer::new(config.optimizer, config.momentum);
    let mut history = RunHistory::default();

    for epoch in 1..=config.epochs {
        let stream = batches(
            &splits.train,
            config.batch_size,
            batch_seed(config.seed, epoch, usize::MAX),
            config.stream_options(),
        )?;
        let (mut loss_sum, mut correct, mut seen) = (0.0, 0usize, 0usize);
        for (b, batch) in stream.enumerate() {
            let images: Vec<Tensor<f32>> = (0..batch.len()).map(|i| batch.image(i)).collect();
            let out = batch_grad(
                &net,
                &images,
                &batch.labels,
                config.loss,
                Mode::Train,
                batch_seed(config.seed, epoch, b),
            )?;
            if !out.loss.is_finite() || out.grads.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: b,
                    loss: out.loss,
                });
            }
            let truth = batch.labels.data().chunks(NUM_CLASSES).map(argmax);
            correct += truth.zip(&out.predicted).filter(|(t, p)| t == *p).count();
            loss_sum += out.loss * batch.len() as f64;
            seen += batch.len();
            drop(images);
            drop(batch);
            optimizer.step(&mut net.params_mut(), &out.grads, config.learning_rate)?;
            history.optimizer_steps += 1;
        }
        if seen == 0 {
            return Err(Error::Parameter(format!("epoch {epoch}: no train sample could be decoded")));
        }
        let (val_loss, val_acc) = if splits.validation.is_empty() {
            (None, None)
        } else {
            let scored = score(&net, &splits.validation, config.loss)?;
            (Some(scored.mean_loss), Some(scored.metrics.accuracy))
        };
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / seen as f64,
            train_acc: correct as f64 / seen as f64,
            val_loss,
            val_acc,
        };
        log::info!(
            "epoch {epoch}: train loss {:.4} acc {:.3}{}",
            record.train_loss,
            record.train_acc,
            match (val_loss, val_acc) {
                (Some(l), Some(a)) => format!(", val loss {l:.4} acc {a:.3}"),
                _ => String::new(),
            }
        );
        on_epoch(&record);
        history.epochs.push(record);
    }
    Ok((net, history))
}

pub fn train(net: OctNet, splits: &Splits, config: &TrainConfig) -> Result<(OctNet, RunHistory)> {
    train_with(net, splits, config, |_| {})
}

/// Evaluation result with the mean loss and any samples that failed to load.
#[derive(Debug, Clone)]
pub struct Scored {
    pub metrics: Metrics,
    pub mean_loss: f64,
    pub skipped: Vec<SampleRef>,
}

/// Eval-mode inference over `samples`, fanned out across threads.
pub fn score(net: &OctNet, samples: &[SampleRef], kind: LossKind) -> Result<Scored> {
    if samples.is_empty() {
        return Err(Error::Parameter("nothing to evaluate".into()));
    }
    let results: Vec<Result<Option<(usize, usize, f64)>>> = samples
        .par_iter()
        .map(|s| {
            let image = match load_and_preprocess(&s.path) {
                Ok(img) => img,
                Err(e) => {
                    log::warn!("skipping {}: {e}", s.path.display());
                    return Ok(None);
                }
            };
            let fwd = net.forward(&image, Mode::Eval)?;
            let (loss, _) = loss_and_logit_grad(fwd.trace.logits(), &s.label.one_hot(), kind);
            Ok(Some((s.label.index(), argmax(fwd.probs.data()), loss)))
        })
        .collect();
    let mut confusion = ConfusionMatrix::new(NUM_CLASSES);
    let mut loss_sum = 0.0;
    let mut skipped = Vec::new();
    for (s, r) in samples.iter().zip(results) {
        match r? {
            Some((t, p, loss)) => {
                confusion.record(t, p);
                loss_sum += loss;
            }
            None => skipped.push(s.clone()),
        }
    }
    let n = confusion.total();
    if n == 0 {
        return Err(Error::Parameter("no sample could be decoded".into()));
    }
    Ok(Scored {
        metrics: Metrics::from_confusion(confusion),
        mean_loss: loss_sum / n as f64,
        skipped,
    })
}

pub fn evaluate(net: &OctNet, samples: &[SampleRef]) -> Result<Metrics> {
    score(net, samples, LossKind::default()).map(|s| s.metrics)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_defaults_validate() {
        let c = TrainConfig::default();
        assert_eq!((c.batch_size, c.epochs, c.learning_rate), (64, 15, 1e-3));
        c.validate().unwrap();
        let bad = TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            learning_rate: f64::NAN,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn csv_has_one_row_per_epoch() {
        let h = RunHistory {
            epochs: vec![
                EpochRecord {
                    epoch: 1,
                    train_loss: 0.5,
                    train_acc: 0.25,
                    val_loss: Some(0.4),
                    val_acc: Some(0.5),
                },
                EpochRecord {
                    epoch: 2,
                    train_loss: 0.3,
                    train_acc: 0.75,
                    val_loss: None,
                    val_acc: None,
                },
            ],
            optimizer_steps: 4,
        };
        let csv = h.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[1], "1,0.500000,0.250000,0.400000,0.500000");
        assert_eq!(lines[2], "2,0.300000,0.750000,,");
    }

    #[test]
    fn config_parses_partial_toml_shape() {
        let c: TrainConfig = serde_json::from_str(r#"{"epochs": 3, "optimizer": "sgd_momentum"}"#).unwrap();
        assert_eq!(c.epochs, 3);
        assert_eq!(c.optimizer, OptimizerKind::SgdMomentum);
        assert_eq!(c.batch_size, 64);
    }
}
