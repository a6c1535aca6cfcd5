use rayon::prelude::*;

use super::{fit, split, LossTrace, TrainConfig};
use crate::autodiff::{Tape, Tensor};
use crate::datasets::{AgreementKind, LabeledPrefix};
use crate::error::{Error, Result};
use crate::models::{LanguageModel, ProbeHead};

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeOutcome {
    pub trace: LossTrace,
    pub train_accuracy: f64,
    pub val_accuracy: Option<f64>,
}

fn probe_slots(p: &mut Vec<Tensor>) -> &mut [Tensor] {
    p
}

/// Cross-entropy of a linear probe over precomputed features.
fn probe_loss(params: &[Tensor], features: &Tensor, labels: &[usize], with_grad: bool) -> Result<(f64, Vec<Tensor>)> {
    let mut tape = Tape::new();
    let x = tape.constant(features.clone());
    let (w, b) = if with_grad {
        (tape.variable(params[0].clone()), tape.variable(params[1].clone()))
    } else {
        (tape.constant(params[0].clone()), tape.constant(params[1].clone()))
    };
    let y = tape.matmul(x, w)?;
    let logits = tape.add(y, b)?;
    let logp = tape.log_softmax(logits)?;
    let picked = tape.pick_rows(logp, labels.to_vec())?;
    let mean = tape.mean(picked)?;
    let loss = tape.scale(mean, -1.0)?;
    let value = tape.value(loss).data()[0];
    if !with_grad {
        return Ok((value, Vec::new()));
    }
    let mut g = tape.backward(loss)?;
    Ok((value, vec![g.take(w).expect("weight grad"), g.take(b).expect("bias grad")]))
}

fn features(model: &LanguageModel, examples: &[LabeledPrefix]) -> Result<Vec<Vec<f64>>> {
    examples
        .par_iter()
        .map(|ex| model.final_hidden(&model.vocab.encode(&ex.tokens)))
        .collect()
}

fn rows(features: &[Vec<f64>], idx: &[usize]) -> Result<Tensor> {
    let picked: Vec<Vec<f64>> = idx.iter().map(|&i| features[i].clone()).collect();
    Tensor::from_rows(&picked)
}

fn accuracy(params: &[Tensor], features: &[Vec<f64>], labels: &[usize], idx: &[usize]) -> Result<f64> {
    if idx.is_empty() {
        return Ok(f64::NAN);
    }
    let w = &params[0];
    let b = params[1].data();
    let mut right = 0usize;
    for &i in idx {
        let mut logits = [b[0], b[1]];
        for (k, x) in features[i].iter().enumerate() {
            logits[0] += x * w.at(k, 0);
            logits[1] += x * w.at(k, 1);
        }
        if crate::models::argmax_tag_class(logits) == labels[i] {
            right += 1;
        }
    }
    Ok(right as f64 / idx.len() as f64)
}

/// Trains a binary probe on the final hidden state while every other
/// parameter stays frozen. An existing probe of the same kind is the
/// starting point; otherwise a fresh one is drawn from `config.seed`.
pub fn finetune_probe(
    model: &LanguageModel,
    kind: AgreementKind,
    examples: &[LabeledPrefix],
    config: &TrainConfig,
) -> Result<(LanguageModel, ProbeOutcome)> {
    if examples.is_empty() {
        return Err(Error::invalid("no probe training examples"));
    }
    let mut labels = Vec::with_capacity(examples.len());
    for ex in examples {
        if ex.tag.kind() != kind {
            return Err(Error::invalid(format!("tag {} does not belong to {kind} probe", ex.tag)));
        }
        labels.push(ex.tag.class_index());
    }
    if labels.iter().all(|&l| l == labels[0]) {
        log::warn!("probe training set has a single class ({})", examples[0].tag);
    }
    let feats = features(model, examples)?;
    let init = match &model.probe {
        Some(p) if p.kind == kind => p.clone(),
        _ => ProbeHead::random(kind, model.output_dim(), config.seed),
    };
    let mut params = vec![init.weight, init.bias];
    let (train, val) = split(examples.len(), config.validation_fraction, config.seed);
    let loss = |p: &Vec<Tensor>, batch: &[usize], with_grad: bool| -> Result<(f64, Vec<Tensor>)> {
        let batch_labels: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
        probe_loss(p, &rows(&feats, batch)?, &batch_labels, with_grad)
    };
    let trace = fit(&mut params, probe_slots, &train, &val, config, &loss)?;
    let train_accuracy = accuracy(&params, &feats, &labels, &train)?;
    let val_accuracy = if val.is_empty() { None } else { Some(accuracy(&params, &feats, &labels, &val)?) };
    let bias = params.pop().expect("bias");
    let weight = params.pop().expect("weight");
    let trained = model.clone().with_probe(ProbeHead { kind, weight, bias });
    Ok((trained, ProbeOutcome { trace, train_accuracy, val_accuracy }))
}

/// Share of examples whose probe prediction matches their tag.
pub fn probe_accuracy(model: &LanguageModel, examples: &[LabeledPrefix]) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::invalid("no examples"));
    }
    let hits = examples
        .par_iter()
        .map(|ex| Ok(usize::from(model.predict_tag(&model.vocab.encode(&ex.tokens))?.0 == ex.tag)))
        .collect::<Result<Vec<usize>>>()?;
    Ok(hits.iter().sum::<usize>() as f64 / examples.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::Tag;
    use crate::models::{Architecture, RecurrentConfig, Vocabulary};

    fn model() -> LanguageModel {
        let vocab = Vocabulary::new(["the", "dog", "dogs", "cat", "cats", "near"]);
        let arch = Architecture::Recurrent(RecurrentConfig { embed_dim: 8, hidden: 12, layers: 2 });
        LanguageModel::new("p", vocab, arch, 9).unwrap()
    }

    fn examples() -> Vec<LabeledPrefix> {
        let words = [("dog", Tag::Singular), ("dogs", Tag::Plural), ("cat", Tag::Singular), ("cats", Tag::Plural)];
        let mut out = Vec::new();
        for (w, t) in words {
            for other in ["dog", "cats", "cat", "dogs"] {
                out.push(LabeledPrefix { tokens: vec!["the".into(), w.into(), "near".into(), other.into()], tag: t });
            }
        }
        out
    }

    #[test]
    fn body_is_frozen() {
        let m = model();
        let before = m.params.fingerprint();
        let cfg = TrainConfig { epochs: 3, lr: 1e-2, ..Default::default() };
        let (trained, _) = finetune_probe(&m, AgreementKind::Number, &examples(), &cfg).unwrap();
        assert_eq!(trained.params.fingerprint(), before);
        assert!(trained.probe.is_some());
    }

    #[test]
    fn separable_features_reach_full_accuracy() {
        // Features are the raw class sign in the first coordinate.
        let feats: Vec<Vec<f64>> = (0..40).map(|i| vec![if i % 2 == 0 { 1.0 } else { -1.0 }, (i as f64).sin()]).collect();
        let labels: Vec<usize> = (0..40).map(|i| i % 2).collect();
        let mut params = vec![Tensor::zeros(&[2, 2]), Tensor::zeros(&[2])];
        let idx: Vec<usize> = (0..40).collect();
        let loss = |p: &Vec<Tensor>, batch: &[usize], g: bool| {
            let l: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
            probe_loss(p, &rows(&feats, batch)?, &l, g)
        };
        let cfg = TrainConfig { epochs: 30, batch_size: 8, lr: 1e-2, validation_fraction: 0.0, ..Default::default() };
        fit(&mut params, probe_slots, &idx, &[], &cfg, &loss).unwrap();
        assert_eq!(accuracy(&params, &feats, &labels, &idx).unwrap(), 1.0);
    }

    #[test]
    fn single_class_still_trains() {
        let m = model();
        let ex: Vec<LabeledPrefix> = examples().into_iter().filter(|e| e.tag == Tag::Plural).collect();
        let cfg = TrainConfig { epochs: 2, ..Default::default() };
        let (_, out) = finetune_probe(&m, AgreementKind::Number, &ex, &cfg).unwrap();
        assert!(out.trace.final_loss() <= out.trace.initial_loss);
    }

    #[test]
    fn wrong_kind_rejected() {
        assert!(finetune_probe(&model(), AgreementKind::Gender, &examples(), &TrainConfig::default()).is_err());
    }
}
