//! The 50-record tagged fixture against its independently computed
//! annotation (see fixtures/make_tagged_fixture.py).

use std::collections::BTreeMap;

use salbench::datasets::io::parse_tagged_corpus;
use salbench::datasets::natural::{extract_cue_attractor, passes_criteria, Rejection};
use salbench::datasets::{filter_ptb_style, Tag};
use serde::Deserialize;

#[derive(Deserialize)]
struct Annotation {
    id: String,
    verb: usize,
    gold: Tag,
    cues: Vec<usize>,
    attractors: Vec<usize>,
    decision: String,
}

fn load() -> (Vec<salbench::datasets::TaggedCorpusRecord>, Vec<Annotation>) {
    let corpus = parse_tagged_corpus(include_str!("fixtures/tagged_corpus.jsonl")).unwrap();
    let ann = include_str!("fixtures/tagged_annotations.jsonl")
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    (corpus, ann)
}

#[test]
fn fixture_has_fifty_records() {
    assert_eq!(load().0.len(), 50);
}

#[test]
fn cue_and_attractor_sets_match_annotation() {
    let (corpus, ann) = load();
    let by_id: BTreeMap<&str, _> = corpus.iter().map(|r| (r.id.as_str(), r)).collect();
    for a in &ann {
        let (cues, attractors) = extract_cue_attractor(by_id[a.id.as_str()], a.verb);
        assert_eq!((&cues, &attractors), (&a.cues, &a.attractors), "{} verb {}", a.id, a.verb);
    }
}

#[test]
fn filter_decisions_match_annotation() {
    let (corpus, ann) = load();
    let by_id: BTreeMap<&str, _> = corpus.iter().map(|r| (r.id.as_str(), r)).collect();
    for a in &ann {
        let rec = by_id[a.id.as_str()];
        let got = match rec.subject_index[a.verb] {
            None => "missing_subject",
            Some(s) => match passes_criteria(s, a.verb, &a.attractors) {
                Ok(()) => "kept",
                Err(Rejection::NoAttractor) => "no_attractor",
                Err(Rejection::AdjacentSubject) => "adjacent_subject",
                Err(Rejection::DistantAttractors) => "distant_attractors",
            },
        };
        assert_eq!(got, a.decision, "{} verb {}", a.id, a.verb);
    }

    let out = filter_ptb_style(&corpus);
    let kept: Vec<&Annotation> = ann.iter().filter(|a| a.decision == "kept").collect();
    assert_eq!(out.instances.len(), kept.len());
    for (inst, a) in out.instances.iter().zip(&kept) {
        assert_eq!(inst.tokens, by_id[a.id.as_str()].tokens[..a.verb]);
        assert_eq!((&inst.cues, &inst.attractors, inst.gold_tag), (&a.cues, &a.attractors, a.gold));
        inst.validate().unwrap();
    }
    let count = |d: &str| ann.iter().filter(|a| a.decision == d).count();
    assert_eq!(out.skipped_missing_subject, count("missing_subject"));
    assert_eq!(out.rejected_no_attractor, count("no_attractor"));
    assert_eq!(out.rejected_adjacent_subject, count("adjacent_subject"));
    assert_eq!(out.rejected_distant_attractors, count("distant_attractors"));
    for d in ["kept", "missing_subject", "no_attractor", "adjacent_subject", "distant_attractors"] {
        assert!(count(d) > 0, "fixture lacks a {d} case");
    }
}
