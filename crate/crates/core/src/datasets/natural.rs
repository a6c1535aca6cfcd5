//! Test instances from POS-tagged corpora (PTB-style annotations).

use super::types::{AgreementKind, Tag, TaggedCorpusRecord, TestInstance};

/// Attractors this many tokens or more before the subject are too far away.
pub const ATTRACTOR_WINDOW: usize = 10;

/// Number of a present-tense verb or copula, if the token is one.
pub fn verb_number(token: &str, pos: &str) -> Option<Tag> {
    match token.to_ascii_lowercase().as_str() {
        "is" | "was" => return Some(Tag::Singular),
        "are" | "were" => return Some(Tag::Plural),
        _ => {}
    }
    match pos {
        "VBZ" => Some(Tag::Singular),
        "VBP" => Some(Tag::Plural),
        _ => None,
    }
}

/// Nouns before `verb_position` matching (cues) or contradicting
/// (attractors) the verb's number. Empty sets when the verb has no number.
pub fn extract_cue_attractor(record: &TaggedCorpusRecord, verb_position: usize) -> (Vec<usize>, Vec<usize>) {
    let Some(number) = record
        .tokens
        .get(verb_position)
        .and_then(|t| verb_number(t, record.pos.get(verb_position).map_or("", String::as_str)))
    else {
        return (Vec::new(), Vec::new());
    };
    let mut cues = Vec::new();
    let mut attractors = Vec::new();
    for (i, n) in record.noun_number.iter().enumerate().take(verb_position) {
        match n {
            Some(t) if *t == number => cues.push(i),
            Some(_) => attractors.push(i),
            None => {}
        }
    }
    (cues, attractors)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct FilterOutcome {
    pub instances: Vec<TestInstance>,
    /// Verbs whose subject index was missing.
    pub skipped_missing_subject: usize,
    pub rejected_no_attractor: usize,
    pub rejected_adjacent_subject: usize,
    pub rejected_distant_attractors: usize,
}

/// True when the prefix has an attractor, the verb does not directly follow
/// its subject, and at least one attractor lies within
/// [`ATTRACTOR_WINDOW`] tokens of the subject.
pub fn passes_criteria(subject: usize, verb: usize, attractors: &[usize]) -> Result<(), Rejection> {
    if attractors.is_empty() {
        return Err(Rejection::NoAttractor);
    }
    if verb == subject + 1 {
        return Err(Rejection::AdjacentSubject);
    }
    let near = attractors.iter().any(|&a| a > subject || subject - a < ATTRACTOR_WINDOW);
    if !near {
        return Err(Rejection::DistantAttractors);
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Rejection {
    NoAttractor,
    AdjacentSubject,
    DistantAttractors,
}

pub fn filter_ptb_style(records: &[TaggedCorpusRecord]) -> FilterOutcome {
    let mut out = FilterOutcome::default();
    for rec in records {
        if rec.validate().is_err() {
            log::warn!("skipping malformed record {}", rec.id);
            continue;
        }
        for v in 0..rec.tokens.len() {
            let Some(number) = verb_number(&rec.tokens[v], &rec.pos[v]) else { continue };
            let Some(subject) = rec.subject_index[v] else {
                out.skipped_missing_subject += 1;
                continue;
            };
            let (cues, attractors) = extract_cue_attractor(rec, v);
            match passes_criteria(subject, v, &attractors) {
                Ok(()) => out.instances.push(TestInstance {
                    tokens: rec.tokens[..v].to_vec(),
                    cues,
                    attractors,
                    gold_tag: number,
                    kind: AgreementKind::Number,
                    template_id: None,
                }),
                Err(Rejection::NoAttractor) => out.rejected_no_attractor += 1,
                Err(Rejection::AdjacentSubject) => out.rejected_adjacent_subject += 1,
                Err(Rejection::DistantAttractors) => out.rejected_distant_attractors += 1,
            }
        }
    }
    if out.skipped_missing_subject > 0 {
        log::warn!("{} verbs skipped for missing subject indices", out.skipped_missing_subject);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Builds a record from `word/POS[/sg|pl][>subject]` tokens.
    pub(crate) fn record(spec: &str) -> TaggedCorpusRecord {
        let mut rec = TaggedCorpusRecord {
            id: "r".into(),
            tokens: Vec::new(),
            pos: Vec::new(),
            noun_number: Vec::new(),
            subject_index: Vec::new(),
        };
        for item in spec.split_whitespace() {
            let (item, subject) = match item.split_once('>') {
                Some((a, s)) => (a, Some(s.parse().unwrap())),
                None => (item, None),
            };
            let mut parts = item.split('/');
            rec.tokens.push(parts.next().unwrap().into());
            rec.pos.push(parts.next().unwrap().into());
            rec.noun_number.push(match parts.next() {
                Some("sg") => Some(Tag::Singular),
                Some("pl") => Some(Tag::Plural),
                _ => None,
            });
            rec.subject_index.push(subject);
        }
        rec
    }

    #[test]
    fn cues_and_attractors_by_number() {
        let r = record("the/DT dog/NN/sg near/IN cats/NNS/pl and/CC bird/NN/sg barks/VBZ>1");
        assert_eq!(extract_cue_attractor(&r, 6), (vec![1, 5], vec![3]));
        let r = record("the/DT dog/NN/sg barks/VBZ>1");
        assert_eq!(extract_cue_attractor(&r, 2), (vec![1], vec![]));
    }

    #[test]
    fn adjacent_subject_rejected() {
        let r = record("cats/NNS/pl near/IN the/DT dog/NN/sg barks/VBZ>3");
        let out = filter_ptb_style(&[r]);
        assert!(out.instances.is_empty());
        assert_eq!(out.rejected_adjacent_subject, 1);
    }

    #[test]
    fn zero_attractors_rejected() {
        let r = record("the/DT dog/NN/sg that/WDT ran/VBD barks/VBZ>1");
        let out = filter_ptb_style(&[r]);
        assert_eq!(out.rejected_no_attractor, 1);
    }

    #[test]
    fn distant_attractors_rejected_near_one_accepted() {
        // Attractor at 0, subject at 10: exactly ten tokens earlier.
        let far = record(
            "cats/NNS/pl a/DT a/DT a/DT a/DT a/DT a/DT a/DT a/DT a/DT dog/NN/sg quietly/RB barks/VBZ>10",
        );
        let out = filter_ptb_style(&[far]);
        assert!(out.instances.is_empty());
        assert_eq!(out.rejected_distant_attractors, 1);

        let near = record(
            "a/DT cats/NNS/pl a/DT a/DT a/DT a/DT a/DT a/DT a/DT a/DT dog/NN/sg quietly/RB barks/VBZ>10",
        );
        let out = filter_ptb_style(&[near]);
        assert_eq!(out.instances.len(), 1);
        let inst = &out.instances[0];
        assert_eq!(inst.tokens.len(), 12);
        assert_eq!(inst.cues, vec![10]);
        assert_eq!(inst.attractors, vec![1]);
        assert_eq!(inst.gold_tag, Tag::Singular);
    }

    #[test]
    fn missing_subject_counted() {
        let r = record("the/DT dogs/NNS/pl near/IN the/DT cat/NN/sg are/VBP");
        let out = filter_ptb_style(&[r]);
        assert_eq!(out.skipped_missing_subject, 1);
    }

    #[test]
    fn copulas_carry_number() {
        assert_eq!(verb_number("were", "VBD"), Some(Tag::Plural));
        assert_eq!(verb_number("Is", "VBZ"), Some(Tag::Singular));
        assert_eq!(verb_number("ran", "VBD"), None);
    }
}
