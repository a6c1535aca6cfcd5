use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{baseline_nearest, baseline_random, classify_scenario, pearson, set_maxima, Aggregate, Scenario, Tally};
use crate::datasets::{PerturbationPair, Tag, TestInstance};
use crate::error::{Error, Result};
use crate::models::{Head, LanguageModel};
use crate::saliency::{saliency_maps, Composition, Method, SaliencyConfig, SaliencyMap};
use crate::seed::derive_seed;

/// A source of word scores under evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Interpreter {
    Saliency(Method, Composition),
    Random,
    Nearest,
}

impl Interpreter {
    pub fn method_name(self) -> String {
        match self {
            Interpreter::Saliency(m, _) => m.to_string(),
            Interpreter::Random => "Random".into(),
            Interpreter::Nearest => "Nearest".into(),
        }
    }

    pub fn composition_name(self) -> String {
        match self {
            Interpreter::Saliency(_, c) => c.to_string(),
            _ => "-".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    /// Shared SmoothGrad / IG settings; method and composition are ignored.
    pub saliency: SaliencyConfig,
    pub methods: Vec<Method>,
    pub compositions: Vec<Composition>,
    /// Add the Random and Nearest rows to plausibility runs.
    pub baselines: bool,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            saliency: SaliencyConfig::default(),
            methods: Method::ALL.to_vec(),
            compositions: Composition::ALL.to_vec(),
            baselines: true,
            seed: 0,
        }
    }
}

type Summary = BTreeMap<String, BTreeMap<String, Aggregate>>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlausibilityRecord {
    pub instance: usize,
    pub predicted: Tag,
    pub scenario: Scenario,
    pub method: String,
    pub composition: String,
    pub pass: Option<bool>,
    pub max_cue: Option<f64>,
    pub max_attractor: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlausibilityRun {
    pub records: Vec<PlausibilityRecord>,
    /// method -> composition -> pass fractions.
    pub summary: Summary,
    /// Share of evaluated instances in the Expected scenario.
    pub probe_accuracy: Option<f64>,
    pub failed: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyRecord {
    /// Pair index for input consistency, instance index for model consistency.
    pub id: usize,
    pub scenario: Scenario,
    pub method: String,
    pub composition: String,
    pub r: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyRun {
    pub records: Vec<ConsistencyRecord>,
    /// method -> composition -> mean correlations.
    pub summary: Summary,
    pub failed: usize,
}

/// One model's reading of one instance: its argmax prediction and a map per
/// (method, composition).
#[derive(Clone, Debug, PartialEq)]
pub struct Interpretation {
    pub predicted: Tag,
    pub maps: Vec<SaliencyMap>,
}

fn sg_config(config: &EvalConfig, dataset: &str, index: usize) -> SaliencyConfig {
    SaliencyConfig { sg_seed: derive_seed(config.seed, &["sg", dataset, &index.to_string()]), ..config.saliency.clone() }
}

/// Maps for the model's own argmax prediction. The SmoothGrad stream
/// depends only on (seed, dataset, instance), so two models reading the
/// same instance draw the same noise.
pub fn interpret(
    model: &LanguageModel,
    inst: &TestInstance,
    dataset: &str,
    index: usize,
    config: &EvalConfig,
) -> Result<Interpretation> {
    let ids = model.vocab.encode(&inst.tokens);
    let (predicted, _) = model.predict_tag(&ids)?;
    if predicted.kind() != inst.kind {
        return Err(Error::invalid(format!("{} probe cannot score {} instances", predicted.kind(), inst.kind)));
    }
    let cfg = sg_config(config, dataset, index);
    let maps = saliency_maps(
        model,
        &ids,
        Head::Probe,
        predicted.class_index(),
        &cfg,
        &config.methods,
        &config.compositions,
    )?;
    Ok(Interpretation { predicted, maps })
}

/// Interprets every instance in parallel; results keep instance order.
pub fn interpret_all(
    model: &LanguageModel,
    instances: &[TestInstance],
    dataset: &str,
    config: &EvalConfig,
) -> Result<Vec<Result<Interpretation>>> {
    config.saliency.validate()?;
    Ok(instances.par_iter().enumerate().map(|(i, inst)| interpret(model, inst, dataset, i, config)).collect())
}

fn summarize<'a>(items: impl Iterator<Item = (&'a str, &'a str, Scenario, Option<f64>)>) -> Summary {
    let mut tallies: BTreeMap<String, BTreeMap<String, Tally>> = BTreeMap::new();
    for (m, c, s, v) in items {
        tallies.entry(m.to_string()).or_default().entry(c.to_string()).or_default().push(s, v);
    }
    tallies.into_iter().map(|(m, cs)| (m, cs.into_iter().map(|(c, t)| (c, t.finish())).collect())).collect()
}

fn note_failure<T>(what: &str, index: usize, r: &Result<T>) {
    if let Err(e) = r {
        log::warn!("{what} {index} failed: {e}");
    }
}

/// Plausibility records for every instance and interpreter, split by the
/// scenario of the model's own prediction.
pub fn run_plausibility(
    model: &LanguageModel,
    instances: &[TestInstance],
    dataset: &str,
    config: &EvalConfig,
) -> Result<PlausibilityRun> {
    let readings = interpret_all(model, instances, dataset, config)?;
    plausibility_from(instances, &readings, dataset, config)
}

/// [`run_plausibility`] over precomputed readings.
pub fn plausibility_from(
    instances: &[TestInstance],
    readings: &[Result<Interpretation>],
    dataset: &str,
    config: &EvalConfig,
) -> Result<PlausibilityRun> {
    if readings.len() != instances.len() {
        return Err(Error::invalid("one reading per instance expected"));
    }
    let mut records = Vec::new();
    let mut failed = 0;
    let (mut expected, mut evaluated) = (0usize, 0usize);
    for (i, (inst, r)) in instances.iter().zip(readings).enumerate() {
        note_failure("instance", i, r);
        let Ok(reading) = r else {
            failed += 1;
            continue;
        };
        let scenario = classify_scenario(reading.predicted, inst.gold_tag);
        evaluated += 1;
        expected += usize::from(scenario == Scenario::Expected);
        let mut baselines = Vec::new();
        if config.baselines {
            baselines.push(baseline_random(inst, derive_seed(config.seed, &["random", dataset, &i.to_string()])));
            baselines.push(baseline_nearest(inst));
        }
        for map in reading.maps.iter().chain(&baselines) {
            let maxima = set_maxima(&map.scores, &inst.cues, &inst.attractors);
            let pass = maxima.map(|(c, a)| match scenario {
                Scenario::Expected => c > a,
                Scenario::Alternative => a > c,
            });
            records.push(PlausibilityRecord {
                instance: i,
                predicted: reading.predicted,
                scenario,
                method: map.method.clone(),
                composition: map.composition.clone(),
                pass,
                max_cue: maxima.map(|m| m.0),
                max_attractor: maxima.map(|m| m.1),
            });
        }
    }
    let summary = summarize(
        records.iter().map(|r| (r.method.as_str(), r.composition.as_str(), r.scenario, r.pass.map(f64::from))),
    );
    let probe_accuracy = (evaluated > 0).then(|| expected as f64 / evaluated as f64);
    Ok(PlausibilityRun { records, summary, probe_accuracy, failed })
}

/// Correlation between the maps of each pair's members, each interpreted
/// for its own prediction, keyed by the first member's scenario.
pub fn input_consistency(
    model: &LanguageModel,
    instances: &[TestInstance],
    pairs: &[PerturbationPair],
    dataset: &str,
    config: &EvalConfig,
) -> Result<ConsistencyRun> {
    config.saliency.validate()?;
    let needed: BTreeSet<usize> = pairs.iter().flat_map(|p| [p.first, p.second]).collect();
    let needed: Vec<usize> = needed.into_iter().filter(|&i| i < instances.len()).collect();
    let computed: Vec<Result<Interpretation>> =
        needed.par_iter().map(|&i| interpret(model, &instances[i], dataset, i, config)).collect();
    let mut readings: Vec<Result<Interpretation>> =
        (0..instances.len()).map(|_| Err(Error::invalid("not interpreted"))).collect();
    for (i, r) in needed.into_iter().zip(computed) {
        readings[i] = r;
    }
    input_consistency_from(instances, &readings, pairs)
}

/// [`input_consistency`] over precomputed readings, one per instance.
pub fn input_consistency_from(
    instances: &[TestInstance],
    readings: &[Result<Interpretation>],
    pairs: &[PerturbationPair],
) -> Result<ConsistencyRun> {
    if readings.len() != instances.len() {
        return Err(Error::invalid("one reading per instance expected"));
    }
    let mut records = Vec::new();
    let mut failed = 0;
    for (k, pair) in pairs.iter().enumerate() {
        if let Err(e) = pair.check(instances) {
            log::warn!("pair {k} rejected: {e}");
            failed += 1;
            continue;
        }
        let (Ok(a), Ok(b)) = (&readings[pair.first], &readings[pair.second]) else {
            log::warn!("pair {k} skipped: a member could not be interpreted");
            failed += 1;
            continue;
        };
        let scenario = classify_scenario(a.predicted, instances[pair.first].gold_tag);
        for (ma, mb) in a.maps.iter().zip(&b.maps) {
            records.push(ConsistencyRecord {
                id: k,
                scenario,
                method: ma.method.clone(),
                composition: ma.composition.clone(),
                r: pearson(&ma.scores, &mb.scores),
            });
        }
    }
    let summary = summarize(records.iter().map(|r| (r.method.as_str(), r.composition.as_str(), r.scenario, r.r)));
    Ok(ConsistencyRun { records, summary, failed })
}

/// Correlation between teacher and student maps on each instance, each
/// model interpreted for its own prediction, keyed by the teacher's
/// scenario.
pub fn model_consistency(
    teacher: &LanguageModel,
    student: &LanguageModel,
    instances: &[TestInstance],
    dataset: &str,
    config: &EvalConfig,
) -> Result<ConsistencyRun> {
    if teacher.vocab != student.vocab {
        return Err(Error::invalid("teacher and student vocabularies differ"));
    }
    let t = interpret_all(teacher, instances, dataset, config)?;
    let s = interpret_all(student, instances, dataset, config)?;
    model_consistency_from(instances, &t, &s)
}

/// [`model_consistency`] over precomputed readings.
pub fn model_consistency_from(
    instances: &[TestInstance],
    teacher: &[Result<Interpretation>],
    student: &[Result<Interpretation>],
) -> Result<ConsistencyRun> {
    if teacher.len() != instances.len() || student.len() != instances.len() {
        return Err(Error::invalid("one reading per instance expected"));
    }
    let mut records = Vec::new();
    let mut failed = 0;
    for (i, inst) in instances.iter().enumerate() {
        let (Ok(t), Ok(s)) = (&teacher[i], &student[i]) else {
            log::warn!("instance {i} skipped: a model could not interpret it");
            failed += 1;
            continue;
        };
        let scenario = classify_scenario(t.predicted, inst.gold_tag);
        for (a, b) in t.maps.iter().zip(&s.maps) {
            records.push(ConsistencyRecord {
                id: i,
                scenario,
                method: a.method.clone(),
                composition: a.composition.clone(),
                r: pearson(&a.scores, &b.scores),
            });
        }
    }
    let summary = summarize(records.iter().map(|r| (r.method.as_str(), r.composition.as_str(), r.scenario, r.r)));
    Ok(ConsistencyRun { records, summary, failed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{generate_number_agreement, make_perturbation_pairs, AgreementKind, Lexicon};
    use crate::models::{Architecture, ProbeHead, RecurrentConfig, Vocabulary};

    fn setup(seed: u64) -> (LanguageModel, Vec<TestInstance>) {
        let lex = Lexicon::default();
        let set = generate_number_agreement(seed, 24, &lex).unwrap();
        let vocab = Vocabulary::new(lex.all_words());
        let arch = Architecture::Recurrent(RecurrentConfig { embed_dim: 8, hidden: 8, layers: 1 });
        let m = LanguageModel::new("m", vocab, arch, seed).unwrap();
        let out = m.output_dim();
        (m.with_probe(ProbeHead::random(AgreementKind::Number, out, seed)), set.instances)
    }

    fn cheap() -> EvalConfig {
        EvalConfig {
            saliency: SaliencyConfig { sg_samples: 3, ig_steps: 5, ..Default::default() },
            ..Default::default()
        }
    }

    #[test]
    fn plausibility_run_shapes() {
        let (m, inst) = setup(1);
        let run = run_plausibility(&m, &inst, "syn", &cheap()).unwrap();
        assert_eq!(run.failed, 0);
        assert_eq!(run.records.len(), inst.len() * 8);
        assert_eq!(run.summary["Nearest"]["-"].exp.unwrap_or(0.0), 0.0);
        if let Some(alt) = run.summary["Nearest"]["-"].alt {
            assert_eq!(alt, 1.0);
        }
        let a = &run.summary["IG"]["GI"];
        assert_eq!(a.n, inst.len());
        assert_eq!(a.occ_exp, run.probe_accuracy);
    }

    #[test]
    fn copy_is_perfectly_consistent() {
        let (m, inst) = setup(2);
        let mut copy = m.clone();
        copy.id = "copy".into();
        let run = model_consistency(&m, &copy, &inst, "syn", &cheap()).unwrap();
        assert!(run.records.iter().all(|r| r.r.map_or(true, |r| (r - 1.0).abs() < 1e-12)));
    }

    #[test]
    fn identical_pairs_are_consistent() {
        let (m, inst) = setup(3);
        let pairs: Vec<PerturbationPair> =
            (0..5).map(|i| PerturbationPair { first: i, second: i, template_id: "t".into() }).collect();
        let run = input_consistency(&m, &inst, &pairs, "syn", &cheap()).unwrap();
        for by_comp in run.summary.values() {
            for a in by_comp.values() {
                assert!(a.all.map_or(true, |r| (r - 1.0).abs() < 1e-12));
            }
        }
        let real = make_perturbation_pairs(
            &crate::datasets::synthetic::number_templates(&Lexicon::default().number),
            &inst,
        );
        assert!(input_consistency(&m, &inst, &real, "syn", &cheap()).is_ok());
    }

    #[test]
    fn mismatched_pair_rejected() {
        let (m, mut inst) = setup(4);
        inst[1].tokens.push("extra".into());
        let pairs = vec![PerturbationPair { first: 0, second: 1, template_id: "t".into() }];
        let run = input_consistency(&m, &inst, &pairs, "syn", &cheap()).unwrap();
        assert_eq!(run.failed, 1);
        assert!(run.records.is_empty());
    }
}
