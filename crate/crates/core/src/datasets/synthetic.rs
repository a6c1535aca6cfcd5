//! Template-based agreement datasets with one cue and one attractor each.

use std::collections::{BTreeMap, HashSet};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::lexicon::{GenderLexicon, Lexicon, NumberLexicon};
use super::types::{AgreementKind, LabeledPrefix, PerturbationPair, Tag, TestInstance};
use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    Cue,
    Attractor,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Slot {
    Word(String),
    /// A noun carrying `feature`, filled from the lexicon.
    Noun { feature: Tag, role: Role },
}

/// A fixed slot sequence; nouns are the substitutable positions, so every
/// instantiation of a template has the same length and annotation.
#[derive(Clone, Debug, PartialEq)]
pub struct Template {
    pub id: String,
    pub kind: AgreementKind,
    pub slots: Vec<Slot>,
    pub gold_tag: Tag,
}

impl Template {
    fn positions(&self, role: Role) -> Vec<usize> {
        self.slots
            .iter()
            .enumerate()
            .filter(|(_, s)| matches!(s, Slot::Noun { role: r, .. } if *r == role))
            .map(|(i, _)| i)
            .collect()
    }

    /// Fills noun slots in order from `nouns`.
    pub fn instantiate(&self, nouns: &[&str]) -> TestInstance {
        let mut it = nouns.iter();
        let tokens = self
            .slots
            .iter()
            .map(|s| match s {
                Slot::Word(w) => w.clone(),
                Slot::Noun { .. } => it.next().expect("one noun per slot").to_string(),
            })
            .collect();
        TestInstance {
            tokens,
            cues: self.positions(Role::Cue),
            attractors: self.positions(Role::Attractor),
            gold_tag: self.gold_tag,
            kind: self.kind,
            template_id: Some(self.id.clone()),
        }
    }

    fn noun_features(&self) -> Vec<Tag> {
        self.slots
            .iter()
            .filter_map(|s| match s {
                Slot::Noun { feature, .. } => Some(*feature),
                Slot::Word(_) => None,
            })
            .collect()
    }
}

#[derive(Clone, Debug, Default)]
pub struct GeneratedSet {
    pub templates: Vec<Template>,
    pub instances: Vec<TestInstance>,
}

fn word(w: &str) -> Slot {
    Slot::Word(w.to_string())
}

fn form(pair: &(String, String), tag: Tag) -> &str {
    if tag == Tag::Singular {
        &pair.0
    } else {
        &pair.1
    }
}

/// Subject relative, object relative, and prepositional templates for each
/// clause verb / preposition and each subject number.
pub fn number_templates(lex: &NumberLexicon) -> Vec<Template> {
    let mut out = Vec::new();
    for subject in [Tag::Singular, Tag::Plural] {
        let other = subject.opposite();
        let s = |n| format!("{}{}", n, if subject == Tag::Singular { "-sg" } else { "-pl" });
        let cue = Slot::Noun { feature: subject, role: Role::Cue };
        let attractor = Slot::Noun { feature: other, role: Role::Attractor };
        for verb in &lex.clause_verbs {
            out.push(Template {
                id: s(format!("src-{}", verb.0)),
                kind: AgreementKind::Number,
                slots: vec![word("the"), cue.clone(), word("that"), word(form(verb, subject)), word("the"), attractor.clone()],
                gold_tag: subject,
            });
            out.push(Template {
                id: s(format!("orc-{}", verb.0)),
                kind: AgreementKind::Number,
                slots: vec![word("the"), cue.clone(), word("that"), word("the"), attractor.clone(), word(form(verb, other))],
                gold_tag: subject,
            });
        }
        for prep in &lex.prepositions {
            out.push(Template {
                id: s(format!("pp-{prep}")),
                kind: AgreementKind::Number,
                slots: vec![word("the"), cue.clone(), word(prep), word("the"), attractor.clone()],
                gold_tag: subject,
            });
        }
    }
    out
}

/// One template per frame and per antecedent order. The feminine noun is
/// the cue because the feminine pronoun is treated as the expected case.
pub fn gender_templates(lex: &GenderLexicon) -> Vec<Template> {
    let mut out = Vec::new();
    for (verb, tail) in &lex.frames {
        for feminine_first in [true, false] {
            let fem = Slot::Noun { feature: Tag::Feminine, role: Role::Cue };
            let masc = Slot::Noun { feature: Tag::Masculine, role: Role::Attractor };
            let (first, second) = if feminine_first { (fem, masc) } else { (masc, fem) };
            let mut slots = vec![word("the"), first, word(verb), word("the"), second];
            slots.extend(tail.iter().map(|w| word(w)));
            slots.push(word(&lex.connective));
            out.push(Template {
                id: format!("{verb}-{}", if feminine_first { "fm" } else { "mf" }),
                kind: AgreementKind::Gender,
                slots,
                gold_tag: Tag::Feminine,
            });
        }
    }
    out
}

fn nouns_for<'a>(lex: &'a Lexicon, tag: Tag) -> &'a [String] {
    match tag {
        Tag::Singular => &lex.number.singular_nouns,
        Tag::Plural => &lex.number.plural_nouns,
        Tag::Feminine => &lex.gender.feminine_nouns,
        Tag::Masculine => &lex.gender.masculine_nouns,
    }
}

/// Round-robin over templates, drawing nouns at random and avoiding
/// duplicate prefixes while the lexicon allows.
fn fill(templates: &[Template], lex: &Lexicon, rng: &mut ChaCha8Rng, count: usize) -> Vec<TestInstance> {
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let t = &templates[i % templates.len()];
        let features = t.noun_features();
        let mut inst = None;
        for _ in 0..20 {
            let nouns: Vec<&str> =
                features.iter().map(|&f| nouns_for(lex, f).choose(rng).expect("non-empty").as_str()).collect();
            let candidate = t.instantiate(&nouns);
            let fresh = !seen.contains(&candidate.tokens);
            inst = Some(candidate);
            if fresh {
                break;
            }
        }
        let inst = inst.expect("at least one draw");
        seen.insert(inst.tokens.clone());
        out.push(inst);
    }
    out
}

pub fn generate_number_agreement(seed: u64, count: usize, lex: &Lexicon) -> Result<GeneratedSet> {
    lex.number.validate()?;
    let templates = number_templates(&lex.number);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let instances = fill(&templates, lex, &mut rng, count);
    Ok(GeneratedSet { templates, instances })
}

/// Draws two person nouns per frame; draws of the same gender are dropped,
/// the rest are placed in the template matching their order.
pub fn generate_gender_agreement(seed: u64, count: usize, lex: &Lexicon) -> Result<GeneratedSet> {
    lex.gender.validate()?;
    let templates = gender_templates(&lex.gender);
    let g = &lex.gender;
    let people: Vec<(&str, Tag)> = g
        .feminine_nouns
        .iter()
        .map(|n| (n.as_str(), Tag::Feminine))
        .chain(g.masculine_nouns.iter().map(|n| (n.as_str(), Tag::Masculine)))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = HashSet::new();
    let mut instances = Vec::with_capacity(count);
    let mut attempts = 0usize;
    while instances.len() < count {
        attempts += 1;
        let frame = rng.random_range(0..g.frames.len());
        let a = *people.choose(&mut rng).expect("people");
        let b = *people.choose(&mut rng).expect("people");
        if a.1 == b.1 {
            continue;
        }
        let feminine_first = a.1 == Tag::Feminine;
        let template = &templates[2 * frame + usize::from(!feminine_first)];
        let (fem, masc) = if feminine_first { (a.0, b.0) } else { (b.0, a.0) };
        let nouns = if feminine_first { [fem, masc] } else { [masc, fem] };
        let inst = template.instantiate(&nouns);
        // Allow repeats only once the space looks exhausted.
        if seen.insert(inst.tokens.clone()) || attempts > 50 * count {
            instances.push(inst);
        }
    }
    Ok(GeneratedSet { templates, instances })
}

/// Pairs the first instance of each template with every later one.
pub fn make_perturbation_pairs(templates: &[Template], instances: &[TestInstance]) -> Vec<PerturbationPair> {
    let mut by_template: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, inst) in instances.iter().enumerate() {
        if let Some(t) = &inst.template_id {
            by_template.entry(t.as_str()).or_default().push(i);
        }
    }
    let mut pairs = Vec::new();
    for t in templates {
        let Some(members) = by_template.get(t.id.as_str()) else { continue };
        let Some((&first, rest)) = members.split_first() else { continue };
        for &second in rest {
            pairs.push(PerturbationPair { first, second, template_id: t.id.clone() });
        }
    }
    pairs
}

/// Complete sentences for language-model training: the agreement prefixes
/// followed by a continuation that agrees with the subject.
pub fn lm_corpus(seed: u64, count: usize, lex: &Lexicon) -> Result<Vec<Vec<String>>> {
    lex.number.validate()?;
    lex.gender.validate()?;
    let number = number_templates(&lex.number);
    let gender = gender_templates(&lex.gender);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let sentence = match i % 5 {
            0 | 1 | 2 => {
                let t = number.choose(&mut rng).expect("templates");
                number_sentence(t, lex, &mut rng)
            }
            3 => {
                let t = gender.choose(&mut rng).expect("templates");
                gender_sentence(t, lex, &mut rng)
            }
            _ => simple_sentence(lex, &mut rng),
        };
        out.push(sentence);
    }
    Ok(out)
}

fn number_sentence(t: &Template, lex: &Lexicon, rng: &mut ChaCha8Rng) -> Vec<String> {
    let nouns: Vec<&str> =
        t.noun_features().iter().map(|&f| nouns_for(lex, f).choose(rng).expect("nouns").as_str()).collect();
    let mut tokens = t.instantiate(&nouns).tokens;
    number_continuation(&mut tokens, t.gold_tag, &lex.number, rng);
    tokens
}

fn number_continuation(tokens: &mut Vec<String>, subject: Tag, lex: &NumberLexicon, rng: &mut ChaCha8Rng) {
    let verb = lex.main_verbs.choose(rng).expect("main verbs");
    let v = form(verb, subject).to_string();
    let copula = matches!(verb.0.as_str(), "is" | "was");
    tokens.push(v);
    if copula {
        tokens.push(lex.predicates.choose(rng).cloned().unwrap_or_else(|| "here".into()));
    }
    tokens.push(".".into());
}

fn gender_sentence(t: &Template, lex: &Lexicon, rng: &mut ChaCha8Rng) -> Vec<String> {
    let g = &lex.gender;
    let features = t.noun_features();
    let nouns: Vec<&str> = features.iter().map(|&f| nouns_for(lex, f).choose(rng).expect("nouns").as_str()).collect();
    let mut tokens = t.instantiate(&nouns).tokens;
    // The pronoun refers back to the sentence subject.
    let pronoun = if features[0] == Tag::Feminine { &g.feminine_pronoun } else { &g.masculine_pronoun };
    tokens.push(pronoun.clone());
    tokens.push("was".into());
    tokens.push(g.predicates.choose(rng).cloned().unwrap_or_else(|| "late".into()));
    tokens.push(".".into());
    tokens
}

fn simple_sentence(lex: &Lexicon, rng: &mut ChaCha8Rng) -> Vec<String> {
    let subject = if rng.random_bool(0.5) { Tag::Singular } else { Tag::Plural };
    let mut tokens = vec!["the".to_string(), nouns_for(lex, subject).choose(rng).expect("nouns").clone()];
    number_continuation(&mut tokens, subject, &lex.number, rng);
    tokens
}

/// Prefixes labelled for probe training. Number prefixes carry the subject
/// number; gender prefixes carry the subject's gender, which is what the
/// training corpus pronoun agrees with.
pub fn probe_training_set(kind: AgreementKind, seed: u64, count: usize, lex: &Lexicon) -> Result<Vec<LabeledPrefix>> {
    let set = match kind {
        AgreementKind::Number => generate_number_agreement(seed, count, lex)?,
        AgreementKind::Gender => generate_gender_agreement(seed, count, lex)?,
    };
    Ok(set.instances.into_iter().map(|i| {
        let tag = probe_label(&i);
        LabeledPrefix { tokens: i.tokens, tag }
    }).collect())
}

/// Label a probe should predict for a synthetic instance: the gold tag for
/// number agreement, the first (subject) noun's gender for gender agreement.
pub fn probe_label(inst: &TestInstance) -> Tag {
    match inst.kind {
        AgreementKind::Number => inst.gold_tag,
        AgreementKind::Gender => {
            let first_cue = inst.cues.iter().min().copied().unwrap_or(usize::MAX);
            let first_attr = inst.attractors.iter().min().copied().unwrap_or(usize::MAX);
            if first_cue < first_attr {
                inst.gold_tag
            } else {
                inst.gold_tag.opposite()
            }
        }
    }
}
