//! Tiny recurrent and self-attention language models with a vocabulary head
//! and a swappable binary probe head.

mod arch;
mod attention;
pub mod checkpoint;
mod params;
mod recurrent;
mod vocab;

pub use arch::{Architecture, AttentionConfig, Positions, RecurrentConfig};
pub use params::ParamStore;
pub use vocab::{Vocabulary, EOS, PAD, UNK};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{NodeId, Tape, Tensor};
use crate::datasets::{AgreementKind, Tag};
use crate::error::{Error, Result};

/// Which output layer sits on top of the body.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Head {
    Vocab,
    Probe,
}

/// The scalar differentiated for saliency.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreKind {
    /// Pre-softmax logit of the target class.
    #[default]
    Logit,
    Probability,
    LogProbability,
}

/// Linear `out_dim -> 2` layer predicting an agreement tag.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbeHead {
    pub kind: AgreementKind,
    /// `[out_dim, 2]`
    pub weight: Tensor,
    /// `[2]`
    pub bias: Tensor,
}

impl ProbeHead {
    pub fn zeros(kind: AgreementKind, out_dim: usize) -> Self {
        Self { kind, weight: Tensor::zeros(&[out_dim, 2]), bias: Tensor::zeros(&[2]) }
    }

    pub fn random(kind: AgreementKind, out_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = (6.0 / (out_dim + 2) as f64).sqrt();
        let w = (0..out_dim * 2).map(|_| rng.random_range(-a..a)).collect();
        Self {
            kind,
            weight: Tensor::new(vec![out_dim, 2], w).expect("probe shape"),
            bias: Tensor::zeros(&[2]),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelOutput {
    /// Logits at the final prefix position.
    pub logits: Vec<f64>,
    /// `[len, out_dim]` body output per position.
    pub hidden: Tensor,
}

/// Parameters placed on a tape for one forward pass.
pub(crate) struct Bound<'a> {
    store: &'a ParamStore,
    nodes: Vec<NodeId>,
    probe: Option<(NodeId, NodeId)>,
}

impl Bound<'_> {
    pub(crate) fn param(&self, name: &str) -> NodeId {
        let i = self.store.position(name).unwrap_or_else(|| panic!("missing parameter {name}"));
        self.nodes[i]
    }

    pub(crate) fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LanguageModel {
    pub id: String,
    pub vocab: Vocabulary,
    pub arch: Architecture,
    pub params: ParamStore,
    pub probe: Option<ProbeHead>,
}

impl LanguageModel {
    pub fn new(id: impl Into<String>, vocab: Vocabulary, arch: Architecture, seed: u64) -> Result<Self> {
        arch.validate()?;
        let params = arch.init(vocab.len(), seed);
        Ok(Self { id: id.into(), vocab, arch, params, probe: None })
    }

    pub fn embed_dim(&self) -> usize {
        self.arch.embed_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.arch.output_dim()
    }

    pub fn embedding_table(&self) -> &Tensor {
        self.params.get("embedding").expect("embedding table")
    }

    pub fn with_probe(mut self, probe: ProbeHead) -> Self {
        self.probe = Some(probe);
        self
    }

    pub fn probe_kind(&self) -> Option<AgreementKind> {
        self.probe.as_ref().map(|p| p.kind)
    }

    pub fn class_count(&self, head: Head) -> Result<usize> {
        match head {
            Head::Vocab => Ok(self.vocab.len()),
            Head::Probe => self.probe.as_ref().map(|_| 2).ok_or_else(|| Error::invalid("no probe head attached")),
        }
    }

    pub fn check_prefix(&self, prefix: &[usize]) -> Result<()> {
        if prefix.is_empty() {
            return Err(Error::invalid("empty prefix"));
        }
        if let Some(&bad) = prefix.iter().find(|&&id| id >= self.vocab.len()) {
            return Err(Error::invalid(format!("token id {bad} out of range for vocabulary of {}", self.vocab.len())));
        }
        Ok(())
    }

    /// Embedding rows for `prefix` as a `[len, d]` matrix.
    pub fn lookup(&self, prefix: &[usize]) -> Result<Tensor> {
        self.check_prefix(prefix)?;
        let table = self.embedding_table();
        let rows: Vec<Vec<f64>> = prefix.iter().map(|&id| table.row(id).to_vec()).collect();
        Tensor::from_rows(&rows)
    }

    pub(crate) fn bind<'a>(&'a self, tape: &mut Tape, trainable: bool) -> Bound<'a> {
        let nodes = self
            .params
            .tensors()
            .iter()
            .map(|t| if trainable { tape.variable(t.clone()) } else { tape.constant(t.clone()) })
            .collect();
        let probe = self
            .probe
            .as_ref()
            .map(|p| (tape.constant(p.weight.clone()), tape.constant(p.bias.clone())));
        Bound { store: &self.params, nodes, probe }
    }

    /// Body forward from injected `[len, d]` embeddings to `[len, out_dim]`.
    pub(crate) fn body(&self, tape: &mut Tape, bound: &Bound, input: NodeId) -> Result<NodeId> {
        match &self.arch {
            Architecture::Recurrent(c) => recurrent::body(c, tape, bound, input),
            Architecture::Attention(c) => attention::body(c, tape, bound, input),
        }
    }

    /// Head logits for every row of `hidden`.
    pub(crate) fn head(&self, tape: &mut Tape, bound: &Bound, hidden: NodeId, head: Head) -> Result<NodeId> {
        let (w, b) = match head {
            Head::Vocab => (bound.param("lm_head.weight"), bound.param("lm_head.bias")),
            Head::Probe => bound.probe.ok_or_else(|| Error::invalid("no probe head attached"))?,
        };
        let y = tape.matmul(hidden, w)?;
        tape.add(y, b)
    }

    fn check_embeddings(&self, embeddings: &Tensor) -> Result<()> {
        let d = self.embed_dim();
        if embeddings.rank() != 2 || embeddings.cols() != d || embeddings.rows() == 0 {
            return Err(Error::ShapeMismatch { op: "embeddings", shapes: vec![embeddings.shape().to_vec(), vec![d]] });
        }
        Ok(())
    }

    fn check_class(&self, head: Head, target: usize) -> Result<()> {
        let classes = self.class_count(head)?;
        if target >= classes {
            return Err(Error::invalid(format!("target class {target} out of range for {classes} classes")));
        }
        Ok(())
    }

    /// Records the scalar score of `target` at the last position.
    fn record_score(
        &self,
        tape: &mut Tape,
        input: NodeId,
        target: usize,
        head: Head,
        kind: ScoreKind,
    ) -> Result<NodeId> {
        let bound = self.bind(tape, false);
        let hidden = self.body(tape, &bound, input)?;
        let n = tape.value(hidden).rows();
        let last = tape.slice_rows(hidden, n - 1, n)?;
        let logits = self.head(tape, &bound, last, head)?;
        let scores = match kind {
            ScoreKind::Logit => logits,
            ScoreKind::Probability => tape.softmax(logits)?,
            ScoreKind::LogProbability => tape.log_softmax(logits)?,
        };
        tape.select(scores, target)
    }

    pub fn forward(&self, prefix: &[usize], head: Head) -> Result<ModelOutput> {
        let emb = self.lookup(prefix)?;
        self.forward_embeddings(&emb, head)
    }

    pub fn forward_embeddings(&self, embeddings: &Tensor, head: Head) -> Result<ModelOutput> {
        self.check_embeddings(embeddings)?;
        self.class_count(head)?;
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, false);
        let x = tape.constant(embeddings.clone());
        let hidden = self.body(&mut tape, &bound, x)?;
        let n = tape.value(hidden).rows();
        let last = tape.slice_rows(hidden, n - 1, n)?;
        let logits = self.head(&mut tape, &bound, last, head)?;
        Ok(ModelOutput { logits: tape.value(logits).data().to_vec(), hidden: tape.value(hidden).clone() })
    }

    /// Score of `target` given injected embeddings.
    pub fn score(&self, embeddings: &Tensor, target: usize, head: Head, kind: ScoreKind) -> Result<f64> {
        self.check_embeddings(embeddings)?;
        self.check_class(head, target)?;
        let mut tape = Tape::new();
        let x = tape.constant(embeddings.clone());
        let s = self.record_score(&mut tape, x, target, head, kind)?;
        Ok(tape.value(s).data()[0])
    }

    /// Score of `target` and its gradient with respect to each injected
    /// embedding row.
    pub fn score_and_gradient(
        &self,
        embeddings: &Tensor,
        target: usize,
        head: Head,
        kind: ScoreKind,
    ) -> Result<(f64, Tensor)> {
        self.check_embeddings(embeddings)?;
        self.check_class(head, target)?;
        let mut tape = Tape::new();
        let x = tape.variable(embeddings.clone());
        let s = self.record_score(&mut tape, x, target, head, kind)?;
        let value = tape.value(s).data()[0];
        let grad = tape.backward(s)?.take(x).expect("embedding gradient");
        Ok((value, grad))
    }

    /// Per-position gradient of the target score with respect to the
    /// looked-up embedding vectors (before positional encoding).
    pub fn input_gradient(&self, prefix: &[usize], target: usize, head: Head, kind: ScoreKind) -> Result<Tensor> {
        let emb = self.lookup(prefix)?;
        Ok(self.score_and_gradient(&emb, target, head, kind)?.1)
    }

    /// Argmax probe tag; ties go to class 0.
    pub fn predict_tag(&self, prefix: &[usize]) -> Result<(Tag, [f64; 2])> {
        let kind = self.probe_kind().ok_or_else(|| Error::invalid("no probe head attached"))?;
        let out = self.forward(prefix, Head::Probe)?;
        let logits = [out.logits[0], out.logits[1]];
        let class = argmax_tag_class(logits);
        Ok((kind.tag(class).expect("binary tag"), logits))
    }

    /// Vocabulary logits at every position, `[len, vocab]`.
    pub fn vocab_logits(&self, prefix: &[usize]) -> Result<Tensor> {
        let emb = self.lookup(prefix)?;
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, false);
        let x = tape.constant(emb);
        let hidden = self.body(&mut tape, &bound, x)?;
        let logits = self.head(&mut tape, &bound, hidden, Head::Vocab)?;
        Ok(tape.value(logits).clone())
    }

    /// Body output at the last prefix position.
    pub fn final_hidden(&self, prefix: &[usize]) -> Result<Vec<f64>> {
        let emb = self.lookup(prefix)?;
        self.check_embeddings(&emb)?;
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, false);
        let x = tape.constant(emb);
        let hidden = self.body(&mut tape, &bound, x)?;
        let h = tape.value(hidden);
        Ok(h.row(h.rows() - 1).to_vec())
    }
}

/// Index of the larger logit, preferring class 0 on ties.
pub fn argmax_tag_class(logits: [f64; 2]) -> usize {
    usize::from(logits[1] > logits[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{finite_difference, max_relative_error, DEFAULT_EPSILON};

    fn vocab() -> Vocabulary {
        Vocabulary::new(["the", "dog", "dogs", "near", "cat", "cats", "barks", "bark"])
    }

    fn small_recurrent(seed: u64) -> LanguageModel {
        let arch = Architecture::Recurrent(RecurrentConfig { embed_dim: 6, hidden: 5, layers: 2 });
        let m = LanguageModel::new("r", vocab(), arch, seed).unwrap();
        let out = m.output_dim();
        m.with_probe(ProbeHead::random(AgreementKind::Number, out, seed + 1))
    }

    fn small_attention(seed: u64) -> LanguageModel {
        let arch = Architecture::Attention(AttentionConfig {
            embed_dim: 8,
            heads: 2,
            layers: 2,
            ffn: 12,
            positions: Positions::Sinusoidal,
        });
        let m = LanguageModel::new("a", vocab(), arch, seed).unwrap();
        let out = m.output_dim();
        m.with_probe(ProbeHead::random(AgreementKind::Number, out, seed + 1))
    }

    #[test]
    fn zero_parameters_give_uniform_logits() {
        let mut m = small_recurrent(1);
        for t in m.params.tensors_mut() {
            t.data_mut().fill(0.0);
        }
        let out = m.forward(&[3, 4, 5], Head::Vocab).unwrap();
        assert!(out.logits.iter().all(|&l| l == out.logits[0]));
    }

    #[test]
    fn single_step_matches_hand_rolled_lstm_cell() {
        let arch = Architecture::Recurrent(RecurrentConfig { embed_dim: 3, hidden: 2, layers: 1 });
        let m = LanguageModel::new("r", vocab(), arch, 7).unwrap();
        let x = m.embedding_table().row(4).to_vec();
        let w = m.params.get("lstm.0.w_ih").unwrap();
        let b = m.params.get("lstm.0.bias").unwrap();
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let pre: Vec<f64> = (0..8).map(|j| (0..3).map(|i| x[i] * w.at(i, j)).sum::<f64>() + b.data()[j]).collect();
        let expected: Vec<f64> = (0..2)
            .map(|k| {
                let (i, g, o) = (sig(pre[k]), pre[4 + k].tanh(), sig(pre[6 + k]));
                o * (i * g).tanh()
            })
            .collect();
        let out = m.forward(&[4], Head::Vocab).unwrap();
        for (a, e) in out.hidden.row(0).iter().zip(&expected) {
            assert!((a - e).abs() < 1e-14, "{a} vs {e}");
        }
    }

    #[test]
    fn forward_rejects_bad_prefixes() {
        let m = small_recurrent(1);
        assert!(m.forward(&[], Head::Vocab).is_err());
        assert!(m.forward(&[99], Head::Vocab).is_err());
        assert!(m.input_gradient(&[3], 2, Head::Probe, ScoreKind::Logit).is_err());
    }

    #[test]
    fn probe_head_has_two_logits() {
        let m = small_attention(2);
        assert_eq!(m.forward(&[3, 4], Head::Probe).unwrap().logits.len(), 2);
    }

    #[test]
    fn attention_is_causal() {
        let m = small_attention(3);
        let short = m.forward(&[3, 4, 6], Head::Vocab).unwrap();
        let long = m.forward(&[3, 4, 6, 5, 7], Head::Vocab).unwrap();
        for r in 0..3 {
            assert_eq!(short.hidden.row(r), long.hidden.row(r));
        }
    }

    #[test]
    fn recurrent_is_causal() {
        let m = small_recurrent(3);
        let short = m.forward(&[3, 4, 6], Head::Vocab).unwrap();
        let long = m.forward(&[3, 4, 6, 5, 7], Head::Vocab).unwrap();
        for r in 0..3 {
            assert_eq!(short.hidden.row(r), long.hidden.row(r));
        }
    }

    #[test]
    fn future_positions_get_zero_gradient() {
        // Score at position 2 of a 4-token input: rows 3.. must not matter.
        let m = small_attention(4);
        let emb = m.lookup(&[3, 4, 6, 5]).unwrap();
        let mut tape = Tape::new();
        let x = tape.variable(emb);
        let bound = m.bind(&mut tape, false);
        let hidden = m.body(&mut tape, &bound, x).unwrap();
        let row = tape.slice_rows(hidden, 2, 3).unwrap();
        let logits = m.head(&mut tape, &bound, row, Head::Probe).unwrap();
        let s = tape.select(logits, 0).unwrap();
        let g = tape.backward(s).unwrap().take(x).unwrap();
        assert!(g.row(3).iter().all(|&v| v == 0.0));
        assert!(g.row(0).iter().any(|&v| v != 0.0));
    }

    #[test]
    fn gradient_shape_is_len_by_d() {
        let m = small_recurrent(5);
        let g = m.input_gradient(&[3, 4, 6, 5], 1, Head::Probe, ScoreKind::Logit).unwrap();
        assert_eq!(g.shape(), &[4, 6]);
    }

    #[test]
    fn zero_probe_row_gives_zero_gradient() {
        let mut m = small_recurrent(5);
        let probe = m.probe.as_mut().unwrap();
        for r in 0..probe.weight.rows() {
            probe.weight.data_mut()[r * 2 + 1] = 0.0;
        }
        let g = m.input_gradient(&[3, 4, 6], 1, Head::Probe, ScoreKind::Logit).unwrap();
        assert!(g.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        for (m, prefix) in [(small_recurrent(11), vec![3, 4, 8, 6]), (small_attention(12), vec![3, 5, 9, 4, 7])] {
            for kind in [ScoreKind::Logit, ScoreKind::LogProbability, ScoreKind::Probability] {
                let emb = m.lookup(&prefix).unwrap();
                let (_, g) = m.score_and_gradient(&emb, 1, Head::Probe, kind).unwrap();
                let num = finite_difference(|e| m.score(e, 1, Head::Probe, kind), &emb, DEFAULT_EPSILON).unwrap();
                let err = max_relative_error(&g, &num);
                assert!(err < 1e-4, "{} {kind:?}: {err}", m.arch.name());
            }
        }
    }

    #[test]
    fn tie_goes_to_class_zero() {
        assert_eq!(argmax_tag_class([2.0, -1.0]), 0);
        assert_eq!(argmax_tag_class([0.0, 0.0]), 0);
        assert_eq!(argmax_tag_class([0.0, 0.1]), 1);
        let mut m = small_recurrent(1);
        m.probe = Some(ProbeHead::zeros(AgreementKind::Number, m.output_dim()));
        assert_eq!(m.predict_tag(&[3]).unwrap().0, Tag::Singular);
    }
}
