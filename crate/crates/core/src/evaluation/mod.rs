//! Plausibility and faithfulness tests over saliency maps, with the Random
//! and Nearest baselines and scenario-split aggregation.

mod run;

pub use run::{
    input_consistency, input_consistency_from, interpret, interpret_all, model_consistency, model_consistency_from,
    plausibility_from, run_plausibility, ConsistencyRecord, ConsistencyRun, EvalConfig, Interpretation, Interpreter,
    PlausibilityRecord, PlausibilityRun,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datasets::{Tag, TestInstance};
use crate::saliency::SaliencyMap;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// The model predicts the gold tag.
    Expected,
    Alternative,
}

pub fn classify_scenario(predicted: Tag, gold: Tag) -> Scenario {
    if predicted == gold {
        Scenario::Expected
    } else {
        Scenario::Alternative
    }
}

fn max_at(scores: &[f64], idx: &[usize]) -> Option<f64> {
    idx.iter().map(|&i| scores.get(i).copied()).try_fold(f64::NEG_INFINITY, |m, s| s.map(|s| m.max(s)))
}

/// Maxima of the cue and attractor scores, or `None` when either set is
/// empty or out of range.
pub fn set_maxima(scores: &[f64], cues: &[usize], attractors: &[usize]) -> Option<(f64, f64)> {
    if cues.is_empty() || attractors.is_empty() {
        return None;
    }
    Some((max_at(scores, cues)?, max_at(scores, attractors)?))
}

/// Expected passes when the best cue strictly beats the best attractor,
/// Alternative when the reverse holds; ties fail both. `None` marks an
/// instance that cannot be tested.
pub fn plausibility_test(scores: &[f64], cues: &[usize], attractors: &[usize], scenario: Scenario) -> Option<bool> {
    let (c, a) = set_maxima(scores, cues, attractors)?;
    Some(match scenario {
        Scenario::Expected => c > a,
        Scenario::Alternative => a > c,
    })
}

/// I.i.d. uniform scores on (0, 1).
pub fn baseline_random(instance: &TestInstance, seed: u64) -> SaliencyMap {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scores = instance.tokens.iter().map(|_| rng.random::<f64>()).collect();
    baseline_map(instance, scores, "Random")
}

/// Score 1 on the cue or attractor closest to the end of the prefix, 0
/// elsewhere.
pub fn baseline_nearest(instance: &TestInstance) -> SaliencyMap {
    let mut scores = vec![0.0; instance.tokens.len()];
    if let Some(&i) = instance.cues.iter().chain(&instance.attractors).max() {
        if i < scores.len() {
            scores[i] = 1.0;
        }
    }
    baseline_map(instance, scores, "Nearest")
}

fn baseline_map(instance: &TestInstance, scores: Vec<f64>, name: &str) -> SaliencyMap {
    SaliencyMap {
        tokens: instance.tokens.clone(),
        scores,
        method: name.into(),
        composition: "-".into(),
        target: String::new(),
        model_id: "baseline".into(),
    }
}

/// Sample Pearson correlation computed in two passes; `None` if the lengths
/// differ, fewer than two points are given, or either vector is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Scenario-split summary of per-instance values (pass indicators or
/// correlations). Occurrence fractions are over included instances.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub all: Option<f64>,
    pub exp: Option<f64>,
    pub alt: Option<f64>,
    pub occ_exp: Option<f64>,
    pub occ_alt: Option<f64>,
    pub n: usize,
    pub n_exp: usize,
    pub n_alt: usize,
    pub excluded: usize,
}

/// Ordered accumulator behind [`Aggregate`].
#[derive(Clone, Debug, Default)]
pub struct Tally {
    exp: Vec<f64>,
    alt: Vec<f64>,
    excluded: usize,
}

impl Tally {
    pub fn push(&mut self, scenario: Scenario, value: Option<f64>) {
        match (value, scenario) {
            (None, _) => self.excluded += 1,
            (Some(v), Scenario::Expected) => self.exp.push(v),
            (Some(v), Scenario::Alternative) => self.alt.push(v),
        }
    }

    pub fn exclude(&mut self) {
        self.excluded += 1;
    }

    pub fn finish(&self) -> Aggregate {
        let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
        let (ne, na) = (self.exp.len(), self.alt.len());
        let n = ne + na;
        let frac = |k: usize| (n > 0).then(|| k as f64 / n as f64);
        let all = (n > 0).then(|| self.exp.iter().chain(&self.alt).sum::<f64>() / n as f64);
        Aggregate {
            all,
            exp: mean(&self.exp),
            alt: mean(&self.alt),
            occ_exp: frac(ne),
            occ_alt: frac(na),
            n,
            n_exp: ne,
            n_alt: na,
            excluded: self.excluded,
        }
    }
}
