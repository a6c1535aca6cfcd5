use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Words for number-agreement constructions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NumberLexicon {
    pub singular_nouns: Vec<String>,
    pub plural_nouns: Vec<String>,
    /// Transitive verbs used inside relative clauses, as `(singular, plural)`.
    pub clause_verbs: Vec<(String, String)>,
    pub prepositions: Vec<String>,
    /// Main-clause continuations `(singular, plural)` for training sentences.
    pub main_verbs: Vec<(String, String)>,
    pub predicates: Vec<String>,
}

/// Words for pronoun-gender constructions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenderLexicon {
    pub feminine_nouns: Vec<String>,
    pub masculine_nouns: Vec<String>,
    /// Verb plus the words between the object and the connective.
    pub frames: Vec<(String, Vec<String>)>,
    pub connective: String,
    pub feminine_pronoun: String,
    pub masculine_pronoun: String,
    pub predicates: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lexicon {
    pub number: NumberLexicon,
    pub gender: GenderLexicon,
}

fn words(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

fn pairs(list: &[(&str, &str)]) -> Vec<(String, String)> {
    list.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect()
}

impl Default for NumberLexicon {
    fn default() -> Self {
        Self {
            singular_nouns: words(&[
                "author", "pilot", "surgeon", "farmer", "manager", "customer", "officer", "teacher", "senator",
                "consultant", "parent", "dancer",
            ]),
            plural_nouns: words(&[
                "authors", "pilots", "surgeons", "farmers", "managers", "customers", "officers", "teachers",
                "senators", "consultants", "parents", "dancers",
            ]),
            clause_verbs: pairs(&[("loves", "love"), ("likes", "like"), ("hates", "hate"), ("admires", "admire")]),
            prepositions: words(&["near", "behind", "beside", "with"]),
            main_verbs: pairs(&[("is", "are"), ("was", "were"), ("smiles", "smile"), ("laughs", "laugh")]),
            predicates: words(&["happy", "tired", "young", "here"]),
        }
    }
}

impl Default for GenderLexicon {
    fn default() -> Self {
        Self {
            feminine_nouns: words(&[
                "bride", "woman", "nun", "girl", "mother", "daughter", "queen", "actress", "wife", "sister", "aunt",
                "niece",
            ]),
            masculine_nouns: words(&[
                "groom", "man", "monk", "boy", "father", "son", "king", "actor", "husband", "brother", "uncle",
                "nephew",
            ]),
            frames: vec![
                ("examined".into(), words(&["for", "injuries"])),
                ("bought".into(), words(&["a", "gift"])),
                ("called".into(), words(&["on", "sunday"])),
                ("thanked".into(), words(&["for", "dinner"])),
                ("visited".into(), words(&["at", "home"])),
                ("warned".into(), words(&["about", "danger"])),
            ],
            connective: "because".into(),
            feminine_pronoun: "she".into(),
            masculine_pronoun: "he".into(),
            predicates: words(&["tired", "hurt", "late", "busy"]),
        }
    }
}

impl Default for Lexicon {
    fn default() -> Self {
        Self { number: NumberLexicon::default(), gender: GenderLexicon::default() }
    }
}

impl NumberLexicon {
    pub fn validate(&self) -> Result<()> {
        if self.singular_nouns.len() < 2 || self.plural_nouns.len() < 2 {
            return Err(Error::Dataset("number lexicon needs at least 2 singular and 2 plural nouns".into()));
        }
        if self.clause_verbs.is_empty() && self.prepositions.is_empty() {
            return Err(Error::Dataset("number lexicon needs a clause verb or a preposition".into()));
        }
        if self.main_verbs.is_empty() {
            return Err(Error::Dataset("number lexicon needs matching main verb forms".into()));
        }
        Ok(())
    }
}

impl GenderLexicon {
    pub fn validate(&self) -> Result<()> {
        if self.feminine_nouns.is_empty() || self.masculine_nouns.is_empty() {
            return Err(Error::Dataset("gender lexicon needs person nouns of both genders".into()));
        }
        if self.frames.is_empty() {
            return Err(Error::Dataset("gender lexicon needs at least one frame".into()));
        }
        Ok(())
    }
}

impl Lexicon {
    /// Every word the generators can emit, in a stable order.
    pub fn all_words(&self) -> Vec<String> {
        let n = &self.number;
        let g = &self.gender;
        let mut out = words(&["the", "that", "."]);
        out.extend(n.singular_nouns.iter().cloned());
        out.extend(n.plural_nouns.iter().cloned());
        for (a, b) in n.clause_verbs.iter().chain(&n.main_verbs) {
            out.push(a.clone());
            out.push(b.clone());
        }
        out.extend(n.prepositions.iter().cloned());
        out.extend(n.predicates.iter().cloned());
        out.extend(g.feminine_nouns.iter().cloned());
        out.extend(g.masculine_nouns.iter().cloned());
        for (verb, tail) in &g.frames {
            out.push(verb.clone());
            out.extend(tail.iter().cloned());
        }
        out.push(g.connective.clone());
        out.push(g.feminine_pronoun.clone());
        out.push(g.masculine_pronoun.clone());
        out.extend(g.predicates.iter().cloned());
        out
    }
}
