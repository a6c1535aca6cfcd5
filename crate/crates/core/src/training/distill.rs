use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::lm::ordered_mean;
use super::{fit, split, LossTrace, TrainConfig};
use crate::autodiff::{Tape, Tensor};
use crate::error::{Error, Result};
use crate::models::{Architecture, Head, LanguageModel};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistillConfig {
    pub temperature: f64,
    /// Weight of the soft term; the hard term gets `1 - soft_weight`.
    pub soft_weight: f64,
    /// Student depth; defaults to one layer fewer than the teacher.
    pub student_layers: Option<usize>,
    /// Copy every teacher tensor whose name and shape exist in the student.
    pub init_from_teacher: bool,
}

impl Default for DistillConfig {
    fn default() -> Self {
        Self { temperature: 2.0, soft_weight: 0.5, student_layers: None, init_from_teacher: true }
    }
}

impl DistillConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0) || !self.temperature.is_finite() {
            return Err(Error::invalid("temperature must be positive"));
        }
        if !(0.0..=1.0).contains(&self.soft_weight) {
            return Err(Error::invalid("soft_weight must lie in [0, 1]"));
        }
        Ok(())
    }
}

pub fn student_architecture(teacher: &Architecture, config: &DistillConfig) -> Result<Architecture> {
    let layers = config.student_layers.unwrap_or(teacher.layers().saturating_sub(1));
    if layers < 1 {
        return Err(Error::invalid(format!("student depth {layers} is below 1")));
    }
    let arch = teacher.with_layers(layers);
    arch.validate()?;
    Ok(arch)
}

fn softmax_rows(logits: &Tensor, temperature: f64) -> Tensor {
    let (n, v) = (logits.rows(), logits.cols());
    let mut out = Vec::with_capacity(n * v);
    for r in 0..n {
        let row = logits.row(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = row.iter().map(|x| ((x - max) / temperature).exp()).collect();
        let z: f64 = e.iter().sum();
        out.extend(e.iter().map(|x| x / z));
    }
    Tensor::new(vec![n, v], out).expect("same shape")
}

/// Mean over positions of `-Σ_k p_T(k) log q_T(k)`, with both
/// distributions softened by `temperature`.
pub fn soft_cross_entropy(teacher_logits: &Tensor, student_logits: &Tensor, temperature: f64) -> f64 {
    let p = softmax_rows(teacher_logits, temperature);
    let q = softmax_rows(student_logits, temperature);
    let total: f64 = p.data().iter().zip(q.data()).map(|(a, b)| -a * b.ln()).sum();
    total / teacher_logits.rows() as f64
}

fn distill_loss(
    student: &LanguageModel,
    ids: &[usize],
    soft_targets: &Tensor,
    config: &DistillConfig,
    with_grad: bool,
) -> Result<(f64, Vec<Tensor>)> {
    let n = ids.len() - 1;
    let mut tape = Tape::new();
    let bound = student.bind(&mut tape, with_grad);
    let x = tape.gather(bound.param("embedding"), ids[..n].to_vec())?;
    let hidden = student.body(&mut tape, &bound, x)?;
    let logits = student.head(&mut tape, &bound, hidden, Head::Vocab)?;

    let logp = tape.log_softmax(logits)?;
    let picked = tape.pick_rows(logp, ids[1..].to_vec())?;
    let hard = tape.mean(picked)?;
    let hard = tape.scale(hard, -(1.0 - config.soft_weight))?;

    let cooled = tape.scale(logits, 1.0 / config.temperature)?;
    let logq = tape.log_softmax(cooled)?;
    let p = tape.constant(soft_targets.clone());
    let cross = tape.mul(p, logq)?;
    let soft = tape.sum(cross)?;
    let soft = tape.scale(soft, -config.soft_weight / n as f64)?;

    let loss = tape.add(hard, soft)?;
    let value = tape.value(loss).data()[0];
    if !with_grad {
        return Ok((value, Vec::new()));
    }
    let mut grads = tape.backward(loss)?;
    Ok((value, bound.nodes().iter().map(|&id| grads.take(id).expect("parameter gradient")).collect()))
}

fn params_of(model: &mut LanguageModel) -> &mut [Tensor] {
    model.params.tensors_mut()
}

/// Trains a shallower student on the teacher's softened next-token
/// distributions plus the corpus targets. The student has no probe; fine-tune
/// one afterwards exactly as for the teacher.
pub fn distill_student(
    teacher: &LanguageModel,
    corpus: &[Vec<usize>],
    distill: &DistillConfig,
    train: &TrainConfig,
) -> Result<(LanguageModel, LossTrace)> {
    distill.validate()?;
    if corpus.is_empty() {
        return Err(Error::invalid("empty distillation corpus"));
    }
    let arch = student_architecture(&teacher.arch, distill)?;
    let mut student = LanguageModel::new(format!("{}-student", teacher.id), teacher.vocab.clone(), arch, train.seed)?;
    if distill.init_from_teacher {
        let names: Vec<String> = student.params.names().to_vec();
        for name in names {
            if let (Some(src), Some(dst)) = (teacher.params.get(&name), student.params.get_mut(&name)) {
                if src.shape() == dst.shape() {
                    *dst = src.clone();
                }
            }
        }
    }
    for s in corpus {
        if s.len() < 2 {
            return Err(Error::invalid("corpus sequences need at least two tokens"));
        }
    }
    let targets = corpus
        .par_iter()
        .map(|s| Ok(softmax_rows(&teacher.vocab_logits(&s[..s.len() - 1])?, distill.temperature)))
        .collect::<Result<Vec<_>>>()?;
    let (tr, val) = split(corpus.len(), train.validation_fraction, train.seed);
    let loss = |m: &LanguageModel, batch: &[usize], with_grad: bool| -> Result<(f64, Vec<Tensor>)> {
        let parts = batch
            .par_iter()
            .map(|&i| distill_loss(m, &corpus[i], &targets[i], distill, with_grad))
            .collect::<Result<Vec<_>>>()?;
        Ok(ordered_mean(parts, with_grad))
    };
    let trace = fit(&mut student, params_of, &tr, &val, train, &loss)?;
    Ok((student, trace))
}

/// Share of positions where the student's top next-token prediction equals
/// the teacher's.
pub fn teacher_agreement(teacher: &LanguageModel, student: &LanguageModel, corpus: &[Vec<usize>]) -> Result<f64> {
    let argmax = |t: &Tensor| -> Vec<usize> {
        (0..t.rows())
            .map(|r| {
                let row = t.row(r);
                (0..row.len()).fold(0, |best, k| if row[k] > row[best] { k } else { best })
            })
            .collect()
    };
    let counts = corpus
        .par_iter()
        .map(|s| {
            let p = &s[..s.len() - 1];
            let a = argmax(&teacher.vocab_logits(p)?);
            let b = argmax(&student.vocab_logits(p)?);
            Ok((a.iter().zip(&b).filter(|(x, y)| x == y).count(), a.len()))
        })
        .collect::<Result<Vec<_>>>()?;
    let (hit, total) = counts.iter().fold((0, 0), |(h, t), (a, b)| (h + a, t + b));
    if total == 0 {
        return Err(Error::invalid("empty corpus"));
    }
    Ok(hit as f64 / total as f64)
}
