use rayon::prelude::*;

use super::{fit, split, LossTrace, TrainConfig};
use crate::autodiff::{Tape, Tensor};
use crate::error::{Error, Result};
use crate::models::{Head, LanguageModel, Vocabulary};

/// Token ids wrapped in sentence boundaries: `EOS w1 .. wn EOS`.
pub fn encode_corpus<S: AsRef<str>>(vocab: &Vocabulary, sentences: &[Vec<S>]) -> Vec<Vec<usize>> {
    sentences
        .iter()
        .map(|s| {
            let mut ids: Vec<usize> = Vec::with_capacity(s.len() + 2);
            ids.push(Vocabulary::EOS_ID);
            ids.extend(vocab.encode(s.as_slice()));
            ids.push(Vocabulary::EOS_ID);
            ids
        })
        .collect()
}

/// Mean next-token cross-entropy over one sequence, plus its gradient for
/// every model parameter when `with_grad` is set.
pub fn sequence_loss(model: &LanguageModel, ids: &[usize], with_grad: bool) -> Result<(f64, Vec<Tensor>)> {
    if ids.len() < 2 {
        return Err(Error::invalid("sequence needs at least two tokens"));
    }
    model.check_prefix(ids)?;
    let n = ids.len() - 1;
    let mut tape = Tape::new();
    let bound = model.bind(&mut tape, with_grad);
    let x = tape.gather(bound.param("embedding"), ids[..n].to_vec())?;
    let hidden = model.body(&mut tape, &bound, x)?;
    let logits = model.head(&mut tape, &bound, hidden, Head::Vocab)?;
    let logp = tape.log_softmax(logits)?;
    let picked = tape.pick_rows(logp, ids[1..].to_vec())?;
    let mean = tape.mean(picked)?;
    let loss = tape.scale(mean, -1.0)?;
    let value = tape.value(loss).data()[0];
    if !with_grad {
        return Ok((value, Vec::new()));
    }
    let mut grads = tape.backward(loss)?;
    let out = bound.nodes().iter().map(|&id| grads.take(id).expect("parameter gradient")).collect();
    Ok((value, out))
}

/// Sums per-item results in index order so the reduction does not depend on
/// thread scheduling.
pub(crate) fn ordered_mean(parts: Vec<(f64, Vec<Tensor>)>, with_grad: bool) -> (f64, Vec<Tensor>) {
    let n = parts.len() as f64;
    let mut loss = 0.0;
    let mut acc: Vec<Tensor> = Vec::new();
    for (l, g) in parts {
        loss += l;
        if with_grad {
            if acc.is_empty() {
                acc = g;
            } else {
                for (a, b) in acc.iter_mut().zip(&g) {
                    a.add_assign(b);
                }
            }
        }
    }
    for a in &mut acc {
        a.scale_assign(1.0 / n);
    }
    (loss / n, acc)
}

fn params_of(model: &mut LanguageModel) -> &mut [Tensor] {
    model.params.tensors_mut()
}

/// Trains every body, embedding and vocabulary-head parameter on next-token
/// prediction. A probe head, if attached, is left alone.
pub fn train_lm(mut model: LanguageModel, corpus: &[Vec<usize>], config: &TrainConfig) -> Result<(LanguageModel, LossTrace)> {
    if corpus.is_empty() {
        return Err(Error::invalid("empty training corpus"));
    }
    for s in corpus {
        if s.len() < 2 {
            return Err(Error::invalid("corpus sequences need at least two tokens"));
        }
        model.check_prefix(s)?;
    }
    let (train, val) = split(corpus.len(), config.validation_fraction, config.seed);
    let loss = |m: &LanguageModel, batch: &[usize], with_grad: bool| -> Result<(f64, Vec<Tensor>)> {
        let parts = batch
            .par_iter()
            .map(|&i| sequence_loss(m, &corpus[i], with_grad))
            .collect::<Result<Vec<_>>>()?;
        Ok(ordered_mean(parts, with_grad))
    };
    let trace = fit(&mut model, params_of, &train, &val, config, &loss)?;
    Ok((model, trace))
}
