//! Language-model training, probe fine-tuning with a frozen body, and
//! teacher/student distillation.

mod distill;
mod lm;
mod optim;
mod probe;

pub use distill::{distill_student, soft_cross_entropy, student_architecture, teacher_agreement, DistillConfig};
pub use lm::{encode_corpus, sequence_loss, train_lm};
pub use optim::{clip_global_norm, Adam, Schedule, Scheduler};
pub use probe::{finetune_probe, probe_accuracy, ProbeOutcome};

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub schedule: Schedule,
    /// Global gradient-norm bound; `None` disables clipping.
    pub clip_norm: Option<f64>,
    pub seed: u64,
    /// Share of the data held out to drive the scheduler.
    pub validation_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 16,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            schedule: Schedule::default(),
            clip_norm: Some(1.0),
            seed: 0,
            validation_fraction: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0) || !self.lr.is_finite() {
            return Err(Error::invalid("learning rate must be finite and non-negative"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::invalid("validation fraction must lie in [0, 1)"));
        }
        if let Schedule::Plateau { factor, .. } = self.schedule {
            if !(factor > 0.0 && factor <= 1.0) {
                return Err(Error::invalid("plateau factor must lie in (0, 1]"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub lr: f64,
}

/// Mean losses before training and after each epoch.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTrace {
    pub initial_loss: f64,
    pub epochs: Vec<EpochRecord>,
}

impl LossTrace {
    pub fn final_loss(&self) -> f64 {
        self.epochs.last().map_or(self.initial_loss, |e| e.train_loss)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss,lr\n");
        let _ = writeln!(out, "0,{},,", self.initial_loss);
        for e in &self.epochs {
            let val = e.val_loss.map(|v| v.to_string()).unwrap_or_default();
            let _ = writeln!(out, "{},{},{},{}", e.epoch, e.train_loss, val, e.lr);
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Deterministic train/validation split of `0..n`.
pub(crate) fn split(n: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5917));
    let held = ((n as f64) * fraction).floor() as usize;
    // Keep at least one training example.
    let held = held.min(n.saturating_sub(1));
    let val = idx.split_off(n - held);
    (idx, val)
}

/// Batch loss: mean loss over `batch` and, when asked, the gradient of that
/// mean with respect to each trainable tensor.
pub(crate) type BatchLoss<'a, P> = dyn Fn(&P, &[usize], bool) -> Result<(f64, Vec<Tensor>)> + Sync + 'a;

fn evaluate<P>(target: &P, idx: &[usize], chunk: usize, loss: &BatchLoss<P>) -> Result<f64> {
    let mut total = 0.0;
    for batch in idx.chunks(chunk.max(1)) {
        total += loss(target, batch, false)?.0 * batch.len() as f64;
    }
    Ok(total / idx.len() as f64)
}

/// Mini-batch Adam over `train`, with the scheduler watching the
/// validation loss (or the training loss when nothing is held out).
pub(crate) fn fit<P>(
    target: &mut P,
    slots: fn(&mut P) -> &mut [Tensor],
    train: &[usize],
    val: &[usize],
    config: &TrainConfig,
    loss: &BatchLoss<P>,
) -> Result<LossTrace> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::invalid("no training examples"));
    }
    let eval_chunk = config.batch_size.max(64);
    let mut trace = LossTrace { initial_loss: evaluate(target, train, eval_chunk, loss)?, epochs: Vec::new() };
    let mut adam = Adam::new(config.lr, config.beta1, config.beta2, config.eps);
    let mut scheduler = Scheduler::new(config.schedule);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order = train.to_vec();
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(config.batch_size) {
            let (l, mut grads) = loss(target, batch, true)?;
            if !l.is_finite() {
                return Err(Error::invalid(format!("non-finite loss in epoch {epoch}")));
            }
            if let Some(max) = config.clip_norm {
                clip_global_norm(&mut grads, max);
            }
            adam.step(slots(target), &grads);
            total += l * batch.len() as f64;
        }
        let train_loss = total / order.len() as f64;
        let val_loss = if val.is_empty() { None } else { Some(evaluate(target, val, eval_chunk, loss)?) };
        trace.epochs.push(EpochRecord { epoch, train_loss, val_loss, lr: adam.lr });
        log::debug!("epoch {epoch}: train {train_loss:.4} val {val_loss:?} lr {}", adam.lr);
        adam.lr = scheduler.observe(val_loss.unwrap_or(train_loss), adam.lr);
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_is_partition() {
        let (t, v) = split(20, 0.25, 3);
        assert_eq!(v.len(), 5);
        let mut all: Vec<usize> = t.iter().chain(&v).copied().collect();
        all.sort();
        assert_eq!(all, (0..20).collect::<Vec<_>>());
        assert_eq!(split(20, 0.25, 3), (t, v));
        assert_eq!(split(1, 0.5, 0).0.len(), 1);
    }

    #[test]
    fn trace_csv() {
        let t = LossTrace {
            initial_loss: 2.0,
            epochs: vec![EpochRecord { epoch: 1, train_loss: 1.5, val_loss: Some(1.6), lr: 0.001 }],
        };
        assert_eq!(t.to_csv(), "epoch,train_loss,val_loss,lr\n0,2,,\n1,1.5,1.6,0.001\n");
        assert_eq!(t.final_loss(), 1.5);
    }

    #[test]
    fn rejects_bad_config() {
        assert!(TrainConfig { batch_size: 0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { lr: -1.0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { validation_fraction: 1.0, ..Default::default() }.validate().is_err());
    }
}
