//! Run configuration: a TOML file of flat `[section]` tables.
//!
//! Every key has a default, so an empty file is a valid desk-scale run.
//! Unknown keys are rejected with the offending line.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::datasets::AgreementKind;
use crate::error::{Error, Result};
use crate::evaluation::EvalConfig;
use crate::models::{Architecture, AttentionConfig, Positions, RecurrentConfig, ScoreKind};
use crate::saliency::{Composition, Method, Riemann, SaliencyConfig};
use crate::training::{DistillConfig, Schedule, TrainConfig};

/// Environment variable that overrides `paths.results`.
pub const RESULTS_DIR_ENV: &str = "SALBENCH_RESULTS_DIR";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub data: PathBuf,
    pub checkpoints: PathBuf,
    pub results: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self { data: "data".into(), checkpoints: "checkpoints".into(), results: "results".into() }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub seed: u64,
    /// Worker threads; 0 lets the runtime decide.
    pub threads: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub number_instances: usize,
    pub gender_instances: usize,
    pub lm_sentences: usize,
    /// Labelled prefixes per probe, disjoint from the evaluation sets.
    pub probe_examples: usize,
    /// Optional JSONL tagged corpus, evaluated as the `natural` dataset.
    pub tagged_corpus: Option<PathBuf>,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            number_instances: 500,
            gender_instances: 500,
            lm_sentences: 3000,
            probe_examples: 1000,
            tagged_corpus: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArchKind {
    Recurrent,
    Attention,
}

impl ArchKind {
    pub fn name(self) -> &'static str {
        match self {
            ArchKind::Recurrent => "recurrent",
            ArchKind::Attention => "attention",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecurrentSection {
    pub embed_dim: usize,
    pub hidden: usize,
    pub layers: usize,
}

impl Default for RecurrentSection {
    fn default() -> Self {
        let c = RecurrentConfig::default();
        Self { embed_dim: c.embed_dim, hidden: c.hidden, layers: c.layers }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttentionSection {
    pub embed_dim: usize,
    pub heads: usize,
    pub layers: usize,
    pub ffn: usize,
    /// `0` for sinusoidal encodings, otherwise the learned table length.
    pub learned_positions: usize,
}

impl Default for AttentionSection {
    fn default() -> Self {
        let c = AttentionConfig::default();
        Self { embed_dim: c.embed_dim, heads: c.heads, layers: c.layers, ffn: c.ffn, learned_positions: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelsSection {
    pub architectures: Vec<ArchKind>,
    pub recurrent: RecurrentSection,
    pub attention: AttentionSection,
}

impl Default for ModelsSection {
    fn default() -> Self {
        Self {
            architectures: vec![ArchKind::Recurrent, ArchKind::Attention],
            recurrent: RecurrentSection::default(),
            attention: AttentionSection::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Plateau factor; `1.0` keeps the rate constant.
    pub plateau_factor: f64,
    pub plateau_patience: usize,
    /// `0` disables clipping.
    pub clip_norm: f64,
    pub validation_fraction: f64,
}

impl OptimSection {
    fn lm() -> Self {
        Self {
            epochs: 6,
            batch_size: 16,
            lr: 3e-3,
            plateau_factor: 0.5,
            plateau_patience: 2,
            clip_norm: 1.0,
            validation_fraction: 0.1,
        }
    }

    fn probe() -> Self {
        Self { epochs: 30, batch_size: 32, lr: 1e-3, ..Self::lm() }
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            lr: self.lr,
            schedule: if self.plateau_factor >= 1.0 {
                Schedule::Constant
            } else {
                Schedule::Plateau { factor: self.plateau_factor, patience: self.plateau_patience }
            },
            clip_norm: (self.clip_norm > 0.0).then_some(self.clip_norm),
            seed,
            validation_fraction: self.validation_fraction,
            ..TrainConfig::default()
        }
    }
}

impl Default for OptimSection {
    fn default() -> Self {
        Self::lm()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProbeSection(pub OptimSection);

impl Default for ProbeSection {
    fn default() -> Self {
        Self(OptimSection::probe())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistillSection {
    pub enabled: bool,
    pub teacher: ArchKind,
    pub temperature: f64,
    pub soft_weight: f64,
    /// `0` means one layer fewer than the teacher.
    pub student_layers: usize,
    pub epochs: usize,
    pub lr: f64,
}

impl Default for DistillSection {
    fn default() -> Self {
        let d = DistillConfig::default();
        Self {
            enabled: true,
            teacher: ArchKind::Recurrent,
            temperature: d.temperature,
            soft_weight: d.soft_weight,
            student_layers: 0,
            epochs: 6,
            lr: 3e-3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SaliencySection {
    pub methods: Vec<String>,
    pub compositions: Vec<String>,
    pub sg_samples: usize,
    pub sg_variance_coefficient: f64,
    pub ig_steps: usize,
    pub ig_rule: Riemann,
    pub score: ScoreKind,
}

impl Default for SaliencySection {
    fn default() -> Self {
        let s = SaliencyConfig::default();
        Self {
            methods: vec!["V".into(), "SG".into(), "IG".into()],
            compositions: vec!["GI".into(), "VN".into()],
            sg_samples: s.sg_samples,
            sg_variance_coefficient: s.sg_variance_coefficient,
            ig_steps: s.ig_steps,
            ig_rule: s.ig_rule,
            score: s.score,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateSection {
    pub datasets: Vec<String>,
    pub plausibility: bool,
    pub input_consistency: bool,
    pub model_consistency: bool,
    pub baselines: bool,
    /// Instances per (model, dataset) rendered to HTML.
    pub render_examples: usize,
}

impl Default for EvaluateSection {
    fn default() -> Self {
        Self {
            datasets: vec!["number".into(), "gender".into()],
            plausibility: true,
            input_consistency: true,
            model_consistency: true,
            baselines: true,
            render_examples: 8,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub paths: Paths,
    pub run: RunSection,
    pub data: DataSection,
    pub models: ModelsSection,
    pub train: OptimSection,
    pub probe: ProbeSection,
    pub distill: DistillSection,
    pub saliency: SaliencySection,
    pub evaluate: EvaluateSection,
}

fn line_of(text: &str, offset: usize) -> usize {
    text.as_bytes()[..offset.min(text.len())].iter().filter(|&&b| b == b'\n').count() + 1
}

impl RunConfig {
    /// Parses and validates config text. Relative paths stay relative; see
    /// [`RunConfig::resolve_paths`].
    pub fn parse(text: &str) -> Result<Self> {
        let config: RunConfig = toml::from_str(text).map_err(|e| {
            let line = e.span().map_or(0, |s| line_of(text, s.start));
            Error::Config { line, message: e.message().to_string() }
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = Self::parse(&text)?;
        config.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(config)
    }

    /// Anchors relative paths at `base` and applies the results override.
    pub fn resolve_paths(&mut self, base: &Path) {
        let anchor = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        anchor(&mut self.paths.data);
        anchor(&mut self.paths.checkpoints);
        anchor(&mut self.paths.results);
        if let Some(p) = self.data.tagged_corpus.as_mut() {
            anchor(p);
        }
        if let Some(dir) = std::env::var_os(RESULTS_DIR_ENV).filter(|v| !v.is_empty()) {
            self.paths.results = PathBuf::from(dir);
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let err = |message: String| Err(Error::Config { line: 0, message });
        if self.models.architectures.is_empty() {
            return err("models.architectures must name at least one architecture".into());
        }
        if self.methods()?.is_empty() || self.compositions()?.is_empty() {
            return err("saliency.methods and saliency.compositions must be non-empty".into());
        }
        if self.datasets()?.is_empty() {
            return err("evaluate.datasets must name at least one dataset".into());
        }
        for arch in &self.models.architectures {
            self.architecture(*arch).validate().map_err(|e| Error::Config { line: 0, message: e.to_string() })?;
        }
        if self.data.lm_sentences == 0 || self.data.probe_examples == 0 {
            return err("data.lm_sentences and data.probe_examples must be positive".into());
        }
        for (name, t) in [("train", &self.train), ("probe", &self.probe.0)] {
            t.train_config(0).validate().map_err(|e| Error::Config { line: 0, message: format!("{name}: {e}") })?;
        }
        self.distill_config().validate().map_err(|e| Error::Config { line: 0, message: e.to_string() })?;
        self.saliency_config().validate().map_err(|e| Error::Config { line: 0, message: e.to_string() })?;
        Ok(())
    }

    pub fn methods(&self) -> Result<Vec<Method>> {
        self.saliency.methods.iter().map(|m| m.parse()).collect()
    }

    pub fn compositions(&self) -> Result<Vec<Composition>> {
        self.saliency.compositions.iter().map(|c| c.parse()).collect()
    }

    /// Selected datasets with their agreement kind. `natural` requires
    /// `data.tagged_corpus`.
    pub fn datasets(&self) -> Result<Vec<(String, AgreementKind)>> {
        let mut out = Vec::new();
        for d in &self.evaluate.datasets {
            let kind = match d.as_str() {
                "number" | "natural" => AgreementKind::Number,
                "gender" => AgreementKind::Gender,
                other => return Err(Error::Config { line: 0, message: format!("unknown dataset {other:?}") }),
            };
            if d == "natural" && self.data.tagged_corpus.is_none() {
                return Err(Error::Config { line: 0, message: "dataset natural needs data.tagged_corpus".into() });
            }
            if !out.iter().any(|(n, _)| n == d) {
                out.push((d.clone(), kind));
            }
        }
        Ok(out)
    }

    /// Agreement kinds that need a probe.
    pub fn probe_kinds(&self) -> Result<Vec<AgreementKind>> {
        let mut kinds: Vec<AgreementKind> = self.datasets()?.into_iter().map(|d| d.1).collect();
        kinds.sort();
        kinds.dedup();
        Ok(kinds)
    }

    pub fn architecture(&self, kind: ArchKind) -> Architecture {
        match kind {
            ArchKind::Recurrent => {
                let r = &self.models.recurrent;
                Architecture::Recurrent(RecurrentConfig { embed_dim: r.embed_dim, hidden: r.hidden, layers: r.layers })
            }
            ArchKind::Attention => {
                let a = &self.models.attention;
                Architecture::Attention(AttentionConfig {
                    embed_dim: a.embed_dim,
                    heads: a.heads,
                    layers: a.layers,
                    ffn: a.ffn,
                    positions: if a.learned_positions == 0 {
                        Positions::Sinusoidal
                    } else {
                        Positions::Learned { max_len: a.learned_positions }
                    },
                })
            }
        }
    }

    pub fn distill_config(&self) -> DistillConfig {
        let d = &self.distill;
        DistillConfig {
            temperature: d.temperature,
            soft_weight: d.soft_weight,
            student_layers: (d.student_layers > 0).then_some(d.student_layers),
            init_from_teacher: true,
        }
    }

    pub fn distill_train_config(&self, seed: u64) -> TrainConfig {
        let mut t = self.train.train_config(seed);
        t.epochs = self.distill.epochs;
        t.lr = self.distill.lr;
        t
    }

    pub fn saliency_config(&self) -> SaliencyConfig {
        let s = &self.saliency;
        SaliencyConfig {
            sg_samples: s.sg_samples,
            sg_variance_coefficient: s.sg_variance_coefficient,
            ig_steps: s.ig_steps,
            ig_rule: s.ig_rule,
            score: s.score,
            ..SaliencyConfig::default()
        }
    }

    pub fn eval_config(&self) -> Result<EvalConfig> {
        Ok(EvalConfig {
            saliency: self.saliency_config(),
            methods: self.methods()?,
            compositions: self.compositions()?,
            baselines: self.evaluate.baselines,
            seed: self.run.seed,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_default() {
        let c = RunConfig::parse("").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.saliency_config().sg_samples, 30);
        assert_eq!(c.saliency_config().ig_steps, 100);
        assert_eq!(c.probe.0.lr, 1e-3);
    }

    #[test]
    fn sections_and_comments() {
        let text = "# toy run\n[run]\nseed = 11 # inline\n\n[models]\narchitectures = [\"attention\"]\n\n[models.attention]\nlayers = 1\n\n[saliency]\nmethods = [\"IG\"]\n";
        let c = RunConfig::parse(text).unwrap();
        assert_eq!(c.run.seed, 11);
        assert_eq!(c.models.architectures, vec![ArchKind::Attention]);
        assert_eq!(c.models.attention.layers, 1);
        assert_eq!(c.methods().unwrap(), vec![Method::IntegratedGradients]);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let err = RunConfig::parse("[run]\nseed = 1\nbogus = 2\n").unwrap_err();
        match err {
            Error::Config { line, message } => {
                assert_eq!(line, 3, "{message}");
                assert!(message.contains("bogus"), "{message}");
            }
            other => panic!("{other}"),
        }
        let err = RunConfig::parse("[data]\nnumber_instances = \"many\"\n").unwrap_err();
        assert!(matches!(err, Error::Config { line: 2, .. }), "{err}");
    }

    #[test]
    fn semantic_errors() {
        assert!(RunConfig::parse("[saliency]\nmethods = []\n").is_err());
        assert!(RunConfig::parse("[saliency]\nmethods = [\"XX\"]\n").is_err());
        assert!(RunConfig::parse("[evaluate]\ndatasets = [\"natural\"]\n").is_err());
        assert!(RunConfig::parse("[models.attention]\nheads = 3\n").is_err());
        assert!(RunConfig::parse("[distill]\ntemperature = 0.0\n").is_err());
    }

    #[test]
    fn round_trips_through_toml() {
        let c = RunConfig::default();
        assert_eq!(RunConfig::parse(&c.to_toml()).unwrap(), c);
    }
}
