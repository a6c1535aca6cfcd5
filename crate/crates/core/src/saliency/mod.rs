//! Vanilla, SmoothGrad and Integrated Gradients saliency, composed into one
//! score per word.

mod methods;

pub use methods::{
    compose_gi, compose_gi_attribution, compose_vn, ig_alphas, integrated_gradients, smoothgrad, smoothgrad_sigma,
    vanilla,
};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::models::{Head, LanguageModel, ScoreKind};

/// A differentiable scalar function of injected embeddings.
pub trait EmbeddingScorer: Sync {
    fn score_and_gradient(&self, embeddings: &Tensor) -> Result<(f64, Tensor)>;

    fn score(&self, embeddings: &Tensor) -> Result<f64> {
        Ok(self.score_and_gradient(embeddings)?.0)
    }

    /// Frobenius norm of the embedding table, which scales SmoothGrad noise.
    fn table_norm(&self) -> f64;
}

/// Score of one class of a model head.
#[derive(Clone, Copy, Debug)]
pub struct ModelScorer<'a> {
    pub model: &'a LanguageModel,
    pub head: Head,
    pub target: usize,
    pub kind: ScoreKind,
}

impl EmbeddingScorer for ModelScorer<'_> {
    fn score_and_gradient(&self, embeddings: &Tensor) -> Result<(f64, Tensor)> {
        self.model.score_and_gradient(embeddings, self.target, self.head, self.kind)
    }

    fn score(&self, embeddings: &Tensor) -> Result<f64> {
        self.model.score(embeddings, self.target, self.head, self.kind)
    }

    fn table_norm(&self) -> f64 {
        self.model.embedding_table().frobenius_norm()
    }
}

/// `f(e) = Σ_w u_w · e_w + c`.
#[derive(Clone, Debug)]
pub struct LinearScorer {
    pub weights: Tensor,
    pub offset: f64,
    pub norm: f64,
}

impl EmbeddingScorer for LinearScorer {
    fn score_and_gradient(&self, embeddings: &Tensor) -> Result<(f64, Tensor)> {
        if embeddings.shape() != self.weights.shape() {
            return Err(Error::ShapeMismatch {
                op: "linear_scorer",
                shapes: vec![embeddings.shape().to_vec(), self.weights.shape().to_vec()],
            });
        }
        Ok((self.weights.dot(embeddings) + self.offset, self.weights.clone()))
    }

    fn table_norm(&self) -> f64 {
        self.norm
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "V")]
    Vanilla,
    #[serde(rename = "SG")]
    SmoothGrad,
    #[serde(rename = "IG")]
    IntegratedGradients,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Vanilla, Method::SmoothGrad, Method::IntegratedGradients];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Vanilla => "V",
            Method::SmoothGrad => "SG",
            Method::IntegratedGradients => "IG",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Composition {
    GI,
    VN,
}

impl Composition {
    pub const ALL: [Composition; 2] = [Composition::GI, Composition::VN];

    pub fn as_str(self) -> &'static str {
        match self {
            Composition::GI => "GI",
            Composition::VN => "VN",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Display for Composition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "V" | "VANILLA" => Ok(Method::Vanilla),
            "SG" | "SMOOTHGRAD" => Ok(Method::SmoothGrad),
            "IG" | "INTEGRATED_GRADIENTS" => Ok(Method::IntegratedGradients),
            _ => Err(Error::invalid(format!("unknown saliency method {s:?}"))),
        }
    }
}

impl FromStr for Composition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "GI" => Ok(Composition::GI),
            "VN" => Ok(Composition::VN),
            _ => Err(Error::invalid(format!("unknown composition {s:?}"))),
        }
    }
}

/// Riemann rule for the IG path integral.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Riemann {
    Right,
    #[default]
    Midpoint,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SaliencyConfig {
    pub method: Method,
    pub composition: Composition,
    pub sg_samples: usize,
    pub sg_variance_coefficient: f64,
    pub sg_seed: u64,
    pub ig_steps: usize,
    pub ig_rule: Riemann,
    pub score: ScoreKind,
}

impl Default for SaliencyConfig {
    fn default() -> Self {
        Self {
            method: Method::Vanilla,
            composition: Composition::GI,
            sg_samples: 30,
            sg_variance_coefficient: 0.15,
            sg_seed: 0,
            ig_steps: 100,
            ig_rule: Riemann::Midpoint,
            score: ScoreKind::Logit,
        }
    }
}

impl SaliencyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sg_samples == 0 {
            return Err(Error::invalid("sg_samples must be at least 1"));
        }
        if self.ig_steps == 0 {
            return Err(Error::invalid("ig_steps must be at least 1"));
        }
        if !(self.sg_variance_coefficient >= 0.0) || !self.sg_variance_coefficient.is_finite() {
            return Err(Error::invalid("sg_variance_coefficient must be finite and non-negative"));
        }
        Ok(())
    }

    pub fn with(&self, method: Method, composition: Composition) -> Self {
        Self { method, composition, ..self.clone() }
    }
}

/// Per-position vectors for a method (gradients, or attributions for IG).
pub fn method_vectors<S: EmbeddingScorer + ?Sized>(
    scorer: &S,
    embeddings: &Tensor,
    config: &SaliencyConfig,
) -> Result<Tensor> {
    config.validate()?;
    match config.method {
        Method::Vanilla => vanilla(scorer, embeddings),
        Method::SmoothGrad => {
            smoothgrad(scorer, embeddings, config.sg_samples, config.sg_variance_coefficient, config.sg_seed)
        }
        Method::IntegratedGradients => integrated_gradients(scorer, embeddings, config.ig_steps, config.ig_rule),
    }
}

/// Word scores for one method/composition pair. IG vectors already include
/// the input factor, so GI sums them instead of multiplying by `e` again;
/// VN takes the scaled L1 norm of whatever vectors the method returns.
pub fn compose(method: Method, composition: Composition, embeddings: &Tensor, vectors: &Tensor) -> Result<Vec<f64>> {
    match (composition, method) {
        (Composition::GI, Method::IntegratedGradients) => {
            if vectors.shape() != embeddings.shape() {
                return Err(Error::ShapeMismatch {
                    op: "compose_gi",
                    shapes: vec![vectors.shape().to_vec(), embeddings.shape().to_vec()],
                });
            }
            compose_gi_attribution(vectors)
        }
        (Composition::GI, _) => compose_gi(embeddings, vectors),
        (Composition::VN, _) => compose_vn(vectors),
    }
}

/// Word scores for arbitrary injected embeddings.
pub fn attribute<S: EmbeddingScorer + ?Sized>(
    scorer: &S,
    embeddings: &Tensor,
    config: &SaliencyConfig,
) -> Result<Vec<f64>> {
    let vectors = method_vectors(scorer, embeddings, config)?;
    compose(config.method, config.composition, embeddings, &vectors)
}

/// One signed importance score per prefix position.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SaliencyMap {
    pub tokens: Vec<String>,
    pub scores: Vec<f64>,
    /// `V`, `SG`, `IG`, or a baseline name.
    pub method: String,
    /// `GI`, `VN`, or `-` for baselines.
    pub composition: String,
    pub target: String,
    pub model_id: String,
}

impl SaliencyMap {
    pub fn validate(&self) -> Result<()> {
        if self.tokens.len() != self.scores.len() {
            return Err(Error::invalid(format!(
                "saliency map has {} tokens but {} scores",
                self.tokens.len(),
                self.scores.len()
            )));
        }
        if self.scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::invalid("saliency map contains a non-finite score"));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let map: SaliencyMap = serde_json::from_str(text)?;
        map.validate()?;
        Ok(map)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

/// Saliency of `target` on the model's `head` over a tokenized prefix.
pub fn word_saliency(
    model: &LanguageModel,
    prefix: &[usize],
    head: Head,
    target: usize,
    config: &SaliencyConfig,
) -> Result<SaliencyMap> {
    let mut maps = saliency_maps(model, prefix, head, target, config, &[config.method], &[config.composition])?;
    Ok(maps.pop().expect("one map"))
}

/// Maps for every method in `methods` crossed with every composition,
/// computing each method's vectors once. Settings other than method and
/// composition come from `base`.
pub fn saliency_maps(
    model: &LanguageModel,
    prefix: &[usize],
    head: Head,
    target: usize,
    base: &SaliencyConfig,
    methods: &[Method],
    compositions: &[Composition],
) -> Result<Vec<SaliencyMap>> {
    let embeddings = model.lookup(prefix)?;
    let scorer = ModelScorer { model, head, target, kind: base.score };
    let tokens: Vec<String> = prefix.iter().map(|&i| model.vocab.token(i).unwrap_or("<unk>").to_string()).collect();
    let target = match (head, model.probe_kind()) {
        (Head::Probe, Some(kind)) => kind.tag(target).map_or_else(|| target.to_string(), |t| t.to_string()),
        _ => model.vocab.token(target).map_or_else(|| target.to_string(), str::to_string),
    };
    let mut out = Vec::with_capacity(methods.len() * compositions.len());
    for &method in methods {
        let vectors = method_vectors(&scorer, &embeddings, &base.with(method, Composition::GI))?;
        for &composition in compositions {
            let map = SaliencyMap {
                tokens: tokens.clone(),
                scores: compose(method, composition, &embeddings, &vectors)?,
                method: method.to_string(),
                composition: composition.to_string(),
                target: target.clone(),
                model_id: model.id.clone(),
            };
            map.validate()?;
            out.push(map);
        }
    }
    Ok(out)
}
