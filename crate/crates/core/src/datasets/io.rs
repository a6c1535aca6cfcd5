//! JSON Lines files for instances, tagged corpora and perturbation pairs.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::types::{PerturbationPair, TaggedCorpusRecord, TestInstance};
use crate::error::{Error, Result};

fn parse_lines<T: DeserializeOwned>(text: &str, what: &str) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(line).map_err(|e| Error::Dataset(format!("{what} line {}: {e}", i + 1)))?;
        out.push(item);
    }
    Ok(out)
}

/// Parses and validates an instance file's contents.
pub fn parse_instances(text: &str) -> Result<Vec<TestInstance>> {
    let items: Vec<TestInstance> = parse_lines(text, "instance")?;
    for (i, inst) in items.iter().enumerate() {
        inst.validate().map_err(|e| Error::Dataset(format!("instance {}: {e}", i + 1)))?;
    }
    Ok(items)
}

pub fn parse_tagged_corpus(text: &str) -> Result<Vec<TaggedCorpusRecord>> {
    let items: Vec<TaggedCorpusRecord> = parse_lines(text, "record")?;
    for r in &items {
        r.validate()?;
    }
    Ok(items)
}

/// Parses pairs; call [`PerturbationPair::check`] against the instances
/// they refer to.
pub fn parse_pairs(text: &str) -> Result<Vec<PerturbationPair>> {
    parse_lines(text, "pair")
}

pub fn to_jsonl<T: Serialize>(items: &[T]) -> Result<String> {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item)?);
        out.push('\n');
    }
    Ok(out)
}

fn read(path: &Path) -> Result<String> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut text = String::new();
    for line in BufReader::new(file).lines() {
        text.push_str(&line.map_err(|e| Error::io(path, e))?);
        text.push('\n');
    }
    Ok(text)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(to_jsonl(items)?.as_bytes()).map_err(|e| Error::io(path, e))
}

pub fn read_instances(path: &Path) -> Result<Vec<TestInstance>> {
    parse_instances(&read(path)?)
}

pub fn read_tagged_corpus(path: &Path) -> Result<Vec<TaggedCorpusRecord>> {
    parse_tagged_corpus(&read(path)?)
}

pub fn read_pairs(path: &Path, instances: &[TestInstance]) -> Result<Vec<PerturbationPair>> {
    let pairs = parse_pairs(&read(path)?)?;
    for p in &pairs {
        p.check(instances)?;
    }
    Ok(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{generate_number_agreement, make_perturbation_pairs, Lexicon};

    #[test]
    fn instances_round_trip() {
        let set = generate_number_agreement(3, 30, &Lexicon::default()).unwrap();
        let text = to_jsonl(&set.instances).unwrap();
        assert_eq!(parse_instances(&text).unwrap(), set.instances);
        let pairs = make_perturbation_pairs(&set.templates, &set.instances);
        assert_eq!(parse_pairs(&to_jsonl(&pairs).unwrap()).unwrap(), pairs);
    }

    #[test]
    fn external_format_parses() {
        let line = r#"{"tokens":["the","dog","near","the","cats"],"cues":[1],"attractors":[4],"gold_tag":"SINGULAR","kind":"number","template_id":null}"#;
        let v = parse_instances(line).unwrap();
        assert_eq!(v[0].cues, vec![1]);
        let rec = r#"{"id":"s1","tokens":["dogs","bark"],"pos":["NNS","VBP"],"noun_number":["PLURAL",null],"subject_index":[null,0]}"#;
        assert_eq!(parse_tagged_corpus(rec).unwrap()[0].subject_index, vec![None, Some(0)]);
    }

    #[test]
    fn errors_name_the_line() {
        let err = parse_instances("\n{}").unwrap_err().to_string();
        assert!(err.contains("line 2"), "{err}");
        let bad = r#"{"tokens":["a"],"cues":[0],"attractors":[],"gold_tag":"SINGULAR","kind":"number"}"#;
        assert!(parse_instances(bad).is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let set = generate_number_agreement(1, 10, &Lexicon::default()).unwrap();
        let p = dir.path().join("x/inst.jsonl");
        write_jsonl(&p, &set.instances).unwrap();
        assert_eq!(read_instances(&p).unwrap(), set.instances);
    }
}
