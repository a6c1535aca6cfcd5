//! Stage orchestration: generate-data → train → probe → distill → evaluate
//! → render, with on-disk artifacts and up-to-date stamps.

pub mod config;
pub mod render;
pub mod report;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use config::{ArchKind, RunConfig, RESULTS_DIR_ENV};
pub use render::{check_well_formed, html_page, render_html, RenderedInterpretation};
pub use report::{emit_table, parse_table, ProbeReport, Report};

use crate::datasets::io::{read_instances, read_pairs, read_tagged_corpus, write_jsonl};
use crate::datasets::{
    filter_ptb_style, generate_gender_agreement, generate_number_agreement, lm_corpus, make_perturbation_pairs,
    probe_label, probe_training_set, AgreementKind, LabeledPrefix, Lexicon, PerturbationPair, TestInstance,
};
use crate::error::{Error, Result};
use crate::evaluation::{
    input_consistency_from, interpret_all, model_consistency_from, plausibility_from, Interpretation, Scenario,
};
use crate::models::{checkpoint, LanguageModel, Vocabulary};
use crate::saliency::SaliencyMap;
use crate::seed::derive_seed;
use crate::training::{distill_student, encode_corpus, finetune_probe, probe_accuracy, teacher_agreement, train_lm};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    GenerateData,
    Train,
    Probe,
    Distill,
    Evaluate,
    Render,
    All,
}

impl Stage {
    pub const ORDER: [Stage; 6] =
        [Stage::GenerateData, Stage::Train, Stage::Probe, Stage::Distill, Stage::Evaluate, Stage::Render];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::GenerateData => "generate-data",
            Stage::Train => "train",
            Stage::Probe => "probe",
            Stage::Distill => "distill",
            Stage::Evaluate => "evaluate",
            Stage::Render => "render",
            Stage::All => "all",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ORDER
            .into_iter()
            .chain([Stage::All])
            .find(|st| st.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown stage {s:?}")))
    }
}

/// What a stage did.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Ran,
    UpToDate,
    Disabled,
}

/// Where every artifact lives.
#[derive(Clone, Debug)]
pub struct Layout {
    pub data: PathBuf,
    pub checkpoints: PathBuf,
    pub results: PathBuf,
}

impl Layout {
    pub fn new(config: &RunConfig) -> Self {
        Self {
            data: config.paths.data.clone(),
            checkpoints: config.paths.checkpoints.clone(),
            results: config.paths.results.clone(),
        }
    }

    pub fn instances(&self, dataset: &str) -> PathBuf {
        self.data.join(format!("{dataset}.jsonl"))
    }

    pub fn pairs(&self, dataset: &str) -> PathBuf {
        self.data.join(format!("{dataset}.pairs.jsonl"))
    }

    pub fn lm_corpus(&self) -> PathBuf {
        self.data.join("lm_corpus.jsonl")
    }

    pub fn probe_set(&self, kind: AgreementKind) -> PathBuf {
        self.data.join(format!("probe.{kind}.jsonl"))
    }

    pub fn lm_checkpoint(&self, model: &str) -> PathBuf {
        self.checkpoints.join(format!("{model}.lm.ckpt"))
    }

    pub fn probe_checkpoint(&self, model: &str, kind: AgreementKind) -> PathBuf {
        self.checkpoints.join(format!("{model}.{kind}.ckpt"))
    }

    pub fn probe_info(&self, model: &str, kind: AgreementKind) -> PathBuf {
        self.checkpoints.join(format!("{model}.{kind}.probe.json"))
    }

    pub fn train_info(&self, model: &str) -> PathBuf {
        self.checkpoints.join(format!("{model}.lm.json"))
    }

    pub fn loss_trace(&self, model: &str, what: &str) -> PathBuf {
        self.checkpoints.join(format!("{model}.{what}.loss.csv"))
    }

    pub fn report(&self) -> PathBuf {
        self.results.join("report.json")
    }

    pub fn records(&self, dataset: &str, model: &str) -> PathBuf {
        self.results.join("records").join(format!("{dataset}.{model}.plausibility.jsonl"))
    }

    pub fn maps(&self, dataset: &str, model: &str) -> PathBuf {
        self.results.join("maps").join(format!("{dataset}.{model}.jsonl"))
    }

    pub fn html(&self, dataset: &str, model: &str) -> PathBuf {
        self.results.join("html").join(format!("{dataset}.{model}.html"))
    }

    fn stamp(&self, stage: Stage) -> PathBuf {
        let dir = match stage {
            Stage::GenerateData => &self.data,
            Stage::Train | Stage::Probe | Stage::Distill => &self.checkpoints,
            _ => &self.results,
        };
        dir.join(format!(".{stage}.stamp"))
    }
}

/// LM training outcome kept next to the checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainInfo {
    pub initial_loss: f64,
    pub final_loss: f64,
    pub teacher_agreement: Option<f64>,
}

/// A rendered example as stored by the evaluate stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapRecord {
    pub instance: usize,
    pub scenario: Scenario,
    pub pass: Option<bool>,
    pub map: SaliencyMap,
}

pub fn student_id(config: &RunConfig) -> String {
    format!("{}-student", config.distill.teacher.name())
}

/// Model ids evaluated by this config, in evaluation order.
pub fn model_ids(config: &RunConfig) -> Vec<String> {
    let mut ids: Vec<String> = config.models.architectures.iter().map(|a| a.name().to_string()).collect();
    if config.distill.enabled {
        ids.push(student_id(config));
    }
    ids
}

fn sha(parts: &[&str]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p.as_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("config section serializes")
}

/// Config fingerprint of a stage and everything upstream of it. Paths do
/// not participate, so relocating a run keeps its stamps valid.
pub fn fingerprint(config: &RunConfig, stage: Stage) -> Result<String> {
    let corpus_digest = match &config.data.tagged_corpus {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            sha(&[&text])
        }
        None => String::new(),
    };
    let datasets = json(&config.evaluate.datasets);
    let data_section = config::DataSection { tagged_corpus: None, ..config.data.clone() };
    let data = sha(&["data", &config.run.seed.to_string(), &json(&data_section), &corpus_digest, &datasets]);
    let train = sha(&[&data, &json(&config.models), &json(&config.train)]);
    let probe = sha(&[&train, &json(&config.probe)]);
    let distill = sha(&[&probe, &json(&config.distill)]);
    let evaluate = sha(&[&distill, &json(&config.saliency), &json(&config.evaluate)]);
    let render = sha(&[&evaluate, "render"]);
    Ok(match stage {
        Stage::GenerateData => data,
        Stage::Train => train,
        Stage::Probe => probe,
        Stage::Distill => distill,
        Stage::Evaluate => evaluate,
        Stage::Render | Stage::All => render,
    })
}

fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    write_file(path, &s)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&read_to_string(path)?)?)
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    read_to_string(path)?
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Dataset(format!("{} line {}: {e}", path.display(), i + 1)))
        })
        .collect()
}

/// The orchestrator for one config.
pub struct Pipeline {
    pub config: RunConfig,
    pub layout: Layout,
    pub force: bool,
    lexicon: Lexicon,
}

impl Pipeline {
    pub fn new(config: RunConfig, force: bool) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config);
        Ok(Self { config, layout, force, lexicon: Lexicon::default() })
    }

    fn seed(&self, labels: &[&str]) -> u64 {
        derive_seed(self.config.run.seed, labels)
    }

    /// Fails with a precise hint when an upstream artifact is absent or was
    /// produced under a different config.
    fn require(&self, path: &Path, producer: Stage) -> Result<()> {
        let hint = format!("run `salbench {producer}` first");
        if !path.exists() {
            return Err(Error::MissingArtifact { path: path.to_path_buf(), hint });
        }
        let stamp = self.layout.stamp(producer);
        let current = fingerprint(&self.config, producer)?;
        match std::fs::read_to_string(&stamp) {
            Ok(s) if s.trim() == current => Ok(()),
            Ok(_) => Err(Error::MissingArtifact {
                path: path.to_path_buf(),
                hint: format!("produced under a different config; rerun `salbench {producer}`"),
            }),
            Err(_) => Err(Error::MissingArtifact { path: stamp, hint: format!("{producer} did not finish; {hint}") }),
        }
    }

    fn up_to_date(&self, stage: Stage, outputs: &[PathBuf]) -> Result<bool> {
        if self.force {
            return Ok(false);
        }
        let current = fingerprint(&self.config, stage)?;
        let stamped = std::fs::read_to_string(self.layout.stamp(stage)).is_ok_and(|s| s.trim() == current);
        Ok(stamped && outputs.iter().all(|p| p.exists()))
    }

    fn finish(&self, stage: Stage) -> Result<()> {
        write_file(&self.layout.stamp(stage), &fingerprint(&self.config, stage)?)
    }

    /// Runs one stage, or every stage in order for [`Stage::All`].
    pub fn run(&self, stage: Stage) -> Result<Vec<(Stage, Outcome)>> {
        let stages: Vec<Stage> = if stage == Stage::All { Stage::ORDER.to_vec() } else { vec![stage] };
        let mut done = Vec::new();
        for st in stages {
            let outcome = self.run_one(st)?;
            log::info!("{st}: {outcome:?}");
            done.push((st, outcome));
        }
        Ok(done)
    }

    fn run_one(&self, stage: Stage) -> Result<Outcome> {
        match stage {
            Stage::GenerateData => self.generate(),
            Stage::Train => self.train(),
            Stage::Probe => self.probe(),
            Stage::Distill => self.distill(),
            Stage::Evaluate => self.evaluate(),
            Stage::Render => self.render(),
            Stage::All => unreachable!("expanded by run"),
        }
    }

    fn generate(&self) -> Result<Outcome> {
        let c = &self.config;
        let l = &self.layout;
        let datasets = c.datasets()?;
        let mut outputs = vec![l.lm_corpus()];
        outputs.extend(datasets.iter().map(|(d, _)| l.instances(d)));
        outputs.extend(c.probe_kinds()?.into_iter().map(|k| l.probe_set(k)));
        if self.up_to_date(Stage::GenerateData, &outputs)? {
            return Ok(Outcome::UpToDate);
        }
        let lex = &self.lexicon;
        let mut eval_sets: BTreeMap<AgreementKind, Vec<TestInstance>> = BTreeMap::new();
        for (name, kind) in &datasets {
            let (instances, pairs) = match name.as_str() {
                "number" => {
                    let set = generate_number_agreement(self.seed(&["data", "number"]), c.data.number_instances, lex)?;
                    let pairs = make_perturbation_pairs(&set.templates, &set.instances);
                    (set.instances, pairs)
                }
                "gender" => {
                    let set = generate_gender_agreement(self.seed(&["data", "gender"]), c.data.gender_instances, lex)?;
                    let pairs = make_perturbation_pairs(&set.templates, &set.instances);
                    (set.instances, pairs)
                }
                _ => {
                    let path = c.data.tagged_corpus.as_ref().expect("validated");
                    let outcome = filter_ptb_style(&read_tagged_corpus(path)?);
                    log::info!(
                        "natural: kept {}, no attractor {}, adjacent subject {}, distant attractors {}, missing subject {}",
                        outcome.instances.len(),
                        outcome.rejected_no_attractor,
                        outcome.rejected_adjacent_subject,
                        outcome.rejected_distant_attractors,
                        outcome.skipped_missing_subject
                    );
                    (outcome.instances, Vec::new())
                }
            };
            write_jsonl(&l.instances(name), &instances)?;
            write_jsonl(&l.pairs(name), &pairs)?;
            eval_sets.entry(*kind).or_default().extend(instances);
        }
        let corpus = lm_corpus(self.seed(&["data", "lm"]), c.data.lm_sentences, lex)?;
        write_jsonl(&l.lm_corpus(), &corpus)?;
        for kind in c.probe_kinds()? {
            let held_out: std::collections::HashSet<&Vec<String>> =
                eval_sets.get(&kind).into_iter().flatten().map(|i| &i.tokens).collect();
            let raw = probe_training_set(kind, self.seed(&["data", "probe", kind.name()]), c.data.probe_examples, lex)?;
            let examples: Vec<LabeledPrefix> = raw.into_iter().filter(|e| !held_out.contains(&e.tokens)).collect();
            log::info!("{kind} probe: {} examples after removing evaluation prefixes", examples.len());
            if examples.is_empty() {
                return Err(Error::Dataset(format!("every {kind} probe example overlaps the evaluation set")));
            }
            write_jsonl(&l.probe_set(kind), &examples)?;
        }
        self.finish(Stage::GenerateData)?;
        Ok(Outcome::Ran)
    }

    fn vocabulary(&self) -> Vocabulary {
        Vocabulary::new(self.lexicon.all_words())
    }

    fn corpus_ids(&self, vocab: &Vocabulary) -> Result<Vec<Vec<usize>>> {
        let path = self.layout.lm_corpus();
        self.require(&path, Stage::GenerateData)?;
        let sentences: Vec<Vec<String>> = read_jsonl(&path)?;
        Ok(encode_corpus(vocab, &sentences))
    }

    fn train(&self) -> Result<Outcome> {
        let c = &self.config;
        let l = &self.layout;
        let names: Vec<&str> = c.models.architectures.iter().map(|a| a.name()).collect();
        let outputs: Vec<PathBuf> = names.iter().map(|n| l.lm_checkpoint(n)).collect();
        if self.up_to_date(Stage::Train, &outputs)? {
            return Ok(Outcome::UpToDate);
        }
        let vocab = self.vocabulary();
        let corpus = self.corpus_ids(&vocab)?;
        for &arch in &c.models.architectures {
            let name = arch.name();
            let model = LanguageModel::new(name, vocab.clone(), c.architecture(arch), self.seed(&["init", name]))?;
            let cfg = c.train.train_config(self.seed(&["train", name]));
            log::info!("training {name} LM on {} sentences", corpus.len());
            let (model, trace) = train_lm(model, &corpus, &cfg)?;
            trace.write_csv(&l.loss_trace(name, "lm"))?;
            checkpoint::save(&model, &l.lm_checkpoint(name))?;
            let info = TrainInfo { initial_loss: trace.initial_loss, final_loss: trace.final_loss(), teacher_agreement: None };
            write_json(&l.train_info(name), &info)?;
        }
        self.finish(Stage::Train)?;
        Ok(Outcome::Ran)
    }

    fn held_out(&self, kind: AgreementKind) -> Result<Vec<LabeledPrefix>> {
        let mut out = Vec::new();
        for (name, k) in self.config.datasets()? {
            if k != kind {
                continue;
            }
            let path = self.layout.instances(&name);
            self.require(&path, Stage::GenerateData)?;
            out.extend(read_instances(&path)?.into_iter().map(|i| {
                let tag = probe_label(&i);
                LabeledPrefix { tokens: i.tokens, tag }
            }));
        }
        Ok(out)
    }

    /// Fine-tunes and stores one probe per agreement kind.
    fn probe_model(&self, base: &LanguageModel) -> Result<()> {
        let l = &self.layout;
        for kind in self.config.probe_kinds()? {
            let path = l.probe_set(kind);
            self.require(&path, Stage::GenerateData)?;
            let examples: Vec<LabeledPrefix> = read_jsonl(&path)?;
            let cfg = self.config.probe.0.train_config(self.seed(&["probe", &base.id, kind.name()]));
            let (model, outcome) = finetune_probe(base, kind, &examples, &cfg)?;
            let held = self.held_out(kind)?;
            let held_out_accuracy = if held.is_empty() { None } else { Some(probe_accuracy(&model, &held)?) };
            log::info!(
                "{} {kind} probe: train {:.3}, held-out {:?}",
                base.id,
                outcome.train_accuracy,
                held_out_accuracy
            );
            outcome.trace.write_csv(&l.loss_trace(&base.id, &format!("{kind}-probe")))?;
            checkpoint::save(&model, &l.probe_checkpoint(&base.id, kind))?;
            let info = ProbeReport {
                train_accuracy: outcome.train_accuracy,
                val_accuracy: outcome.val_accuracy,
                held_out_accuracy,
                train_examples: examples.len(),
            };
            write_json(&l.probe_info(&base.id, kind), &info)?;
        }
        Ok(())
    }

    fn probe_outputs(&self, models: &[String]) -> Result<Vec<PathBuf>> {
        let kinds = self.config.probe_kinds()?;
        Ok(models.iter().flat_map(|m| kinds.iter().map(move |&k| self.layout.probe_checkpoint(m, k))).collect())
    }

    fn probe(&self) -> Result<Outcome> {
        let names: Vec<String> = self.config.models.architectures.iter().map(|a| a.name().to_string()).collect();
        if self.up_to_date(Stage::Probe, &self.probe_outputs(&names)?)? {
            return Ok(Outcome::UpToDate);
        }
        for name in &names {
            let path = self.layout.lm_checkpoint(name);
            self.require(&path, Stage::Train)?;
            self.probe_model(&checkpoint::load(&path)?)?;
        }
        self.finish(Stage::Probe)?;
        Ok(Outcome::Ran)
    }

    fn distill(&self) -> Result<Outcome> {
        let c = &self.config;
        if !c.distill.enabled {
            return Ok(Outcome::Disabled);
        }
        let l = &self.layout;
        let student = student_id(c);
        let mut outputs = vec![l.lm_checkpoint(&student)];
        outputs.extend(self.probe_outputs(std::slice::from_ref(&student))?);
        if self.up_to_date(Stage::Distill, &outputs)? {
            return Ok(Outcome::UpToDate);
        }
        let teacher_name = c.distill.teacher.name();
        if !c.models.architectures.contains(&c.distill.teacher) {
            return Err(Error::Config { line: 0, message: format!("distill.teacher {teacher_name} is not trained") });
        }
        let path = l.lm_checkpoint(teacher_name);
        self.require(&path, Stage::Train)?;
        self.require(&l.probe_checkpoint(teacher_name, c.probe_kinds()?[0]), Stage::Probe)?;
        let teacher = checkpoint::load(&path)?;
        let corpus = self.corpus_ids(&teacher.vocab)?;
        log::info!("distilling {student} from {teacher_name}");
        let (model, trace) =
            distill_student(&teacher, &corpus, &c.distill_config(), &c.distill_train_config(self.seed(&["distill"])))?;
        let agreement = teacher_agreement(&teacher, &model, &corpus)?;
        trace.write_csv(&l.loss_trace(&student, "lm"))?;
        checkpoint::save(&model, &l.lm_checkpoint(&student))?;
        let info =
            TrainInfo { initial_loss: trace.initial_loss, final_loss: trace.final_loss(), teacher_agreement: Some(agreement) };
        write_json(&l.train_info(&student), &info)?;
        self.probe_model(&model)?;
        self.finish(Stage::Distill)?;
        Ok(Outcome::Ran)
    }

    fn probed(&self, model: &str, kind: AgreementKind) -> Result<LanguageModel> {
        let path = self.layout.probe_checkpoint(model, kind);
        let producer = if self.config.distill.enabled && model == student_id(&self.config) {
            Stage::Distill
        } else {
            Stage::Probe
        };
        self.require(&path, producer)?;
        checkpoint::load(&path)
    }

    fn evaluate(&self) -> Result<Outcome> {
        let c = &self.config;
        let l = &self.layout;
        if self.up_to_date(Stage::Evaluate, &[l.report()])? {
            return Ok(Outcome::UpToDate);
        }
        let eval = c.eval_config()?;
        let models = model_ids(c);
        let datasets = c.datasets()?;
        let mut report = Report {
            seed: c.run.seed,
            datasets: datasets.iter().map(|d| d.0.clone()).collect(),
            ..Report::default()
        };
        for m in &models {
            let producer = if c.distill.enabled && *m == student_id(c) { Stage::Distill } else { Stage::Train };
            let path = l.train_info(m);
            self.require(&path, producer)?;
            let info: TrainInfo = read_json(&path)?;
            report.final_loss.insert(m.clone(), info.final_loss);
            if info.teacher_agreement.is_some() {
                report.distill_agreement = info.teacher_agreement;
            }
            for kind in c.probe_kinds()? {
                let path = l.probe_info(m, kind);
                self.require(&path, if producer == Stage::Train { Stage::Probe } else { producer })?;
                report.probes.entry(m.clone()).or_default().insert(kind.name().into(), read_json(&path)?);
            }
        }
        for (dataset, kind) in &datasets {
            let path = l.instances(dataset);
            self.require(&path, Stage::GenerateData)?;
            let instances = read_instances(&path)?;
            let pairs_path = l.pairs(dataset);
            let pairs: Vec<PerturbationPair> =
                if pairs_path.exists() { read_pairs(&pairs_path, &instances)? } else { Vec::new() };
            let mut readings: BTreeMap<String, Vec<Result<Interpretation>>> = BTreeMap::new();
            for m in &models {
                let model = self.probed(m, *kind)?;
                log::info!("interpreting {} {dataset} instances with {m}", instances.len());
                readings.insert(m.clone(), interpret_all(&model, &instances, dataset, &eval)?);
            }
            for m in &models {
                let r = &readings[m];
                let failed = r.iter().filter(|x| x.is_err()).count();
                report.failures.entry(dataset.clone()).or_default().insert(m.clone(), failed);
                let run = plausibility_from(&instances, r, dataset, &eval)?;
                if c.evaluate.plausibility {
                    report.plausibility.entry(dataset.clone()).or_default().insert(m.clone(), run.summary.clone());
                    crate::datasets::io::write_jsonl(&l.records(dataset, m), &run.records)?;
                }
                let examples: Vec<MapRecord> = run
                    .records
                    .iter()
                    .filter(|rec| rec.instance < c.evaluate.render_examples)
                    .filter_map(|rec| {
                        let reading = r[rec.instance].as_ref().ok()?;
                        let map = reading
                            .maps
                            .iter()
                            .find(|mp| mp.method == rec.method && mp.composition == rec.composition)?;
                        Some(MapRecord { instance: rec.instance, scenario: rec.scenario, pass: rec.pass, map: map.clone() })
                    })
                    .collect();
                write_jsonl(&l.maps(dataset, m), &examples)?;
                if c.evaluate.input_consistency && !pairs.is_empty() {
                    let run = input_consistency_from(&instances, r, &pairs)?;
                    report.input_consistency.entry(dataset.clone()).or_default().insert(m.clone(), run.summary);
                }
            }
            if c.evaluate.model_consistency && c.distill.enabled {
                let teacher = c.distill.teacher.name();
                let run = model_consistency_from(&instances, &readings[teacher], &readings[&student_id(c)])?;
                report.model_consistency.entry(dataset.clone()).or_default().insert(teacher.to_string(), run.summary);
            }
        }
        report.write(&l.results)?;
        self.finish(Stage::Evaluate)?;
        Ok(Outcome::Ran)
    }

    fn render(&self) -> Result<Outcome> {
        let c = &self.config;
        let l = &self.layout;
        let models = model_ids(c);
        let datasets = c.datasets()?;
        let outputs: Vec<PathBuf> =
            datasets.iter().flat_map(|(d, _)| models.iter().map(move |m| l.html(d, m))).collect();
        if self.up_to_date(Stage::Render, &outputs)? {
            return Ok(Outcome::UpToDate);
        }
        let mut index = Vec::new();
        for (dataset, _) in &datasets {
            let instances = read_instances(&l.instances(dataset))?;
            for m in &models {
                let path = l.maps(dataset, m);
                self.require(&path, Stage::Evaluate)?;
                let records: Vec<MapRecord> = read_jsonl(&path)?;
                let mut fragments = Vec::with_capacity(records.len());
                let mut last = None;
                for rec in &records {
                    let inst = instances
                        .get(rec.instance)
                        .ok_or_else(|| Error::Dataset(format!("{}: instance {} out of range", path.display(), rec.instance)))?;
                    if last != Some(rec.instance) {
                        fragments.push(format!("<h2>#{}</h2>", rec.instance));
                        last = Some(rec.instance);
                    }
                    fragments.push(render_html(inst, &rec.map, rec.scenario, rec.pass)?);
                }
                let title = format!("{m} on {dataset}");
                write_file(&l.html(dataset, m), &html_page(&title, &fragments))?;
                index.push(format!(
                    "<p><a href=\"{}.{}.html\">{}</a></p>",
                    render::escape(dataset),
                    render::escape(m),
                    render::escape(&title)
                ));
            }
        }
        write_file(&l.results.join("html").join("index.html"), &html_page("Saliency renderings", &index))?;
        self.finish(Stage::Render)?;
        Ok(Outcome::Ran)
    }
}

/// Runs `stage` on a dedicated worker pool sized by `run.threads`.
pub fn run_pipeline(config: RunConfig, stage: Stage, force: bool) -> Result<Vec<(Stage, Outcome)>> {
    let threads = config.run.threads;
    let pipeline = Pipeline::new(config, force)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
    pool.install(|| pipeline.run(stage))
}
