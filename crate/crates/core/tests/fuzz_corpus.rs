//! Runs every checked-in fuzz seed through the same entry points as the fuzz
//! targets, so the seeds stay valid as formats evolve.

use std::path::PathBuf;

use salbench::datasets::filter_ptb_style;
use salbench::datasets::io::{parse_instances, parse_pairs, parse_tagged_corpus};
use salbench::models::checkpoint;
use salbench::pipeline::{parse_table, Report, RunConfig};
use salbench::saliency::SaliencyMap;

fn seeds(target: &str) -> Vec<(PathBuf, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<(PathBuf, Vec<u8>)> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let p = e.unwrap().path();
            let bytes = std::fs::read(&p).unwrap();
            (p, bytes)
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

fn text(bytes: &[u8]) -> &str {
    std::str::from_utf8(bytes).unwrap()
}

#[test]
fn config_seeds_parse_and_round_trip() {
    for (p, b) in seeds("config") {
        let c = RunConfig::parse(text(&b)).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
        assert_eq!(RunConfig::parse(&c.to_toml()).unwrap(), c);
    }
}

#[test]
fn checkpoint_seeds_decode_and_round_trip() {
    for (p, b) in seeds("checkpoint") {
        let m = checkpoint::decode(&b).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
        assert_eq!(checkpoint::encode(&m).unwrap(), b);
    }
}

#[test]
fn dataset_seeds_parse() {
    for (p, b) in seeds("instances") {
        assert!(!parse_instances(text(&b)).unwrap_or_else(|e| panic!("{}: {e}", p.display())).is_empty());
    }
    for (p, b) in seeds("pairs") {
        parse_pairs(text(&b)).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
    }
    for (p, b) in seeds("tagged_corpus") {
        let records = parse_tagged_corpus(text(&b)).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
        assert!(!filter_ptb_style(&records).instances.is_empty());
    }
}

#[test]
fn output_seeds_parse() {
    for (p, b) in seeds("saliency_map") {
        SaliencyMap::from_json(text(&b)).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
    }
    for (p, b) in seeds("report") {
        let t = text(&b);
        let ok = if p.extension().is_some_and(|e| e == "csv") {
            parse_table(t).map(|_| ())
        } else {
            Report::from_json(t).map(|_| ())
        };
        ok.unwrap_or_else(|e| panic!("{}: {e}", p.display()));
    }
}

#[test]
fn truncated_seeds_are_rejected_without_panicking() {
    for target in ["checkpoint", "instances", "tagged_corpus", "saliency_map"] {
        for (_, b) in seeds(target) {
            for cut in [1, b.len() / 3, b.len() / 2, b.len().saturating_sub(7)] {
                let part = &b[..cut.min(b.len())];
                match target {
                    "checkpoint" => {
                        let _ = checkpoint::decode(part);
                    }
                    _ => {
                        if let Ok(t) = std::str::from_utf8(part) {
                            let _ = parse_instances(t);
                            let _ = parse_tagged_corpus(t);
                            let _ = SaliencyMap::from_json(t);
                        }
                    }
                }
            }
        }
    }
}
