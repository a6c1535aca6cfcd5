use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgreementKind {
    Number,
    Gender,
}

impl AgreementKind {
    /// Tags in class-index order.
    pub fn tags(self) -> [Tag; 2] {
        match self {
            AgreementKind::Number => [Tag::Singular, Tag::Plural],
            AgreementKind::Gender => [Tag::Feminine, Tag::Masculine],
        }
    }

    pub fn tag(self, class: usize) -> Option<Tag> {
        self.tags().get(class).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            AgreementKind::Number => "number",
            AgreementKind::Gender => "gender",
        }
    }
}

impl fmt::Display for AgreementKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Binary agreement tag predicted by a probe.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Tag {
    Singular,
    Plural,
    Feminine,
    Masculine,
}

impl Tag {
    pub fn kind(self) -> AgreementKind {
        match self {
            Tag::Singular | Tag::Plural => AgreementKind::Number,
            Tag::Feminine | Tag::Masculine => AgreementKind::Gender,
        }
    }

    pub fn class_index(self) -> usize {
        match self {
            Tag::Singular | Tag::Feminine => 0,
            Tag::Plural | Tag::Masculine => 1,
        }
    }

    pub fn opposite(self) -> Tag {
        match self {
            Tag::Singular => Tag::Plural,
            Tag::Plural => Tag::Singular,
            Tag::Feminine => Tag::Masculine,
            Tag::Masculine => Tag::Feminine,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Tag::Singular => "SINGULAR",
            Tag::Plural => "PLURAL",
            Tag::Feminine => "FEMININE",
            Tag::Masculine => "MASCULINE",
        }
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A prefix to be interpreted, annotated with cue and attractor positions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestInstance {
    pub tokens: Vec<String>,
    pub cues: Vec<usize>,
    pub attractors: Vec<usize>,
    pub gold_tag: Tag,
    pub kind: AgreementKind,
    #[serde(default)]
    pub template_id: Option<String>,
}

impl TestInstance {
    /// Checks index bounds, disjointness, a non-empty attractor set, and
    /// that the gold tag belongs to `kind`.
    pub fn validate(&self) -> Result<()> {
        let n = self.tokens.len();
        if n == 0 {
            return Err(Error::Dataset("empty prefix".into()));
        }
        if let Some(&i) = self.cues.iter().chain(&self.attractors).find(|&&i| i >= n) {
            return Err(Error::Dataset(format!("index {i} out of range for prefix of length {n}")));
        }
        let cues: BTreeSet<_> = self.cues.iter().collect();
        if self.attractors.iter().any(|a| cues.contains(a)) {
            return Err(Error::Dataset("cue and attractor sets overlap".into()));
        }
        if self.attractors.is_empty() {
            return Err(Error::Dataset("attractor set is empty".into()));
        }
        if self.gold_tag.kind() != self.kind {
            return Err(Error::Dataset(format!("tag {} does not match kind {}", self.gold_tag, self.kind)));
        }
        Ok(())
    }
}

/// Two instances from the same template, assumed to share an interpretation.
/// `first` and `second` index into the instance file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbationPair {
    pub first: usize,
    pub second: usize,
    pub template_id: String,
}

impl PerturbationPair {
    pub fn check(&self, instances: &[TestInstance]) -> Result<()> {
        let (a, b) = match (instances.get(self.first), instances.get(self.second)) {
            (Some(a), Some(b)) => (a, b),
            _ => return Err(Error::Dataset("pair references a missing instance".into())),
        };
        if a.tokens.len() != b.tokens.len() {
            return Err(Error::Dataset(format!(
                "pair ({}, {}) has lengths {} and {}",
                self.first,
                self.second,
                a.tokens.len(),
                b.tokens.len()
            )));
        }
        if a.cues != b.cues || a.attractors != b.attractors || a.gold_tag != b.gold_tag {
            return Err(Error::Dataset(format!("pair ({}, {}) differs in annotation", self.first, self.second)));
        }
        Ok(())
    }
}

/// One sentence of a POS-tagged corpus with agreement annotations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaggedCorpusRecord {
    pub id: String,
    pub tokens: Vec<String>,
    pub pos: Vec<String>,
    /// Morphological number for noun tokens, `None` elsewhere.
    pub noun_number: Vec<Option<Tag>>,
    /// For verb tokens, the index of their grammatical subject.
    pub subject_index: Vec<Option<usize>>,
}

impl TaggedCorpusRecord {
    pub fn validate(&self) -> Result<()> {
        let n = self.tokens.len();
        if self.pos.len() != n || self.noun_number.len() != n || self.subject_index.len() != n {
            return Err(Error::Dataset(format!("record {}: annotation arrays differ in length", self.id)));
        }
        if self.noun_number.iter().flatten().any(|t| t.kind() != AgreementKind::Number) {
            return Err(Error::Dataset(format!("record {}: noun_number must be SINGULAR or PLURAL", self.id)));
        }
        if self.subject_index.iter().flatten().any(|&s| s >= n) {
            return Err(Error::Dataset(format!("record {}: subject index out of range", self.id)));
        }
        Ok(())
    }
}

/// A prefix labelled with the tag a probe should learn to predict.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledPrefix {
    pub tokens: Vec<String>,
    pub tag: Tag,
}
