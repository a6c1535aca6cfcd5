//! Agreement test sets: synthetic generation, tagged-corpus filtering, and
//! JSONL I/O.

pub mod io;
pub mod lexicon;
pub mod natural;
pub mod synthetic;
mod types;

pub use lexicon::{GenderLexicon, Lexicon, NumberLexicon};
pub use natural::{extract_cue_attractor, filter_ptb_style, FilterOutcome};
pub use synthetic::{
    generate_gender_agreement, generate_number_agreement, lm_corpus, make_perturbation_pairs, probe_label,
    probe_training_set, GeneratedSet, Template,
};
pub use types::{AgreementKind, LabeledPrefix, PerturbationPair, Tag, TaggedCorpusRecord, TestInstance};
