//! The JSON report and its CSV tables.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::Aggregate;

/// method -> composition -> aggregate.
pub type Summary = BTreeMap<String, BTreeMap<String, Aggregate>>;
/// dataset -> model -> summary.
pub type Section = BTreeMap<String, BTreeMap<String, Summary>>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub train_accuracy: f64,
    pub val_accuracy: Option<f64>,
    /// Accuracy on the evaluation instances, which the probe never saw.
    pub held_out_accuracy: Option<f64>,
    pub train_examples: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub seed: u64,
    /// Dataset column order for the tables.
    pub datasets: Vec<String>,
    /// model -> agreement kind -> probe statistics.
    pub probes: BTreeMap<String, BTreeMap<String, ProbeReport>>,
    /// Final training losses keyed by model.
    pub final_loss: BTreeMap<String, f64>,
    /// Student top-1 agreement with its teacher on the LM corpus.
    pub distill_agreement: Option<f64>,
    pub plausibility: Section,
    pub input_consistency: Section,
    pub model_consistency: Section,
    /// dataset -> model -> instances that could not be evaluated.
    pub failures: BTreeMap<String, BTreeMap<String, usize>>,
}

impl Report {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Writes `report.json` and the three tables into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let put = |name: &str, text: String| {
            let path = dir.join(name);
            std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
        };
        put("report.json", self.to_json()?)?;
        for (name, section) in self.tables() {
            put(name, emit_table(section, &self.datasets)?)?;
        }
        Ok(())
    }

    pub fn tables(&self) -> [(&'static str, &Section); 3] {
        [
            ("table2.csv", &self.plausibility),
            ("table3a.csv", &self.input_consistency),
            ("table3b.csv", &self.model_consistency),
        ]
    }
}

const METHOD_ORDER: [&str; 5] = ["V", "SG", "IG", "Random", "Nearest"];

fn method_rank(m: &str) -> (usize, &str) {
    (METHOD_ORDER.iter().position(|x| *x == m).unwrap_or(METHOD_ORDER.len()), m)
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn paren(v: Option<f64>) -> String {
    v.map(|x| format!("({x})")).unwrap_or_default()
}

/// Rows keyed `model/method/composition`; for each model a row labelled with
/// the model name carries the occurrence fractions in parentheses.
pub fn emit_table(section: &Section, datasets: &[String]) -> Result<String> {
    let mut models: Vec<&String> = section.values().flat_map(|m| m.keys()).collect();
    models.sort();
    models.dedup();
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["label".to_string()];
    for d in datasets {
        header.extend(["all", "exp", "alt"].map(|c| format!("{d}.{c}")));
    }
    w.write_record(&header)?;
    for model in models {
        let mut rows: Vec<(&str, &str)> = Vec::new();
        let mut occ = vec![String::new()];
        for d in datasets {
            let summary = section.get(d).and_then(|m| m.get(model));
            let first = summary.and_then(|s| {
                s.iter().find(|(m, _)| !matches!(m.as_str(), "Random" | "Nearest")).or_else(|| s.iter().next())
            });
            let agg = first.and_then(|(_, c)| c.values().next());
            occ.extend([String::new(), paren(agg.and_then(|a| a.occ_exp)), paren(agg.and_then(|a| a.occ_alt))]);
            for (m, comps) in summary.into_iter().flatten() {
                for c in comps.keys() {
                    rows.push((m, c));
                }
            }
        }
        rows.sort_by(|a, b| method_rank(a.0).cmp(&method_rank(b.0)).then(a.1.cmp(b.1)));
        rows.dedup();
        occ[0] = model.clone();
        w.write_record(&occ)?;
        for (m, c) in rows {
            let mut rec = vec![format!("{model}/{m}/{c}")];
            for d in datasets {
                let a = section.get(d).and_then(|s| s.get(model)).and_then(|s| s.get(m)).and_then(|s| s.get(c));
                rec.extend([cell(a.and_then(|a| a.all)), cell(a.and_then(|a| a.exp)), cell(a.and_then(|a| a.alt))]);
            }
            w.write_record(&rec)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::invalid(format!("csv buffer: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Values recovered from a table: (model, method, composition, dataset) ->
/// [all, exp, alt].
pub type ParsedTable = BTreeMap<(String, String, String, String), [Option<f64>; 3]>;

/// Reads a table written by [`emit_table`], skipping occurrence rows.
pub fn parse_table(text: &str) -> Result<ParsedTable> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers()?.clone();
    let datasets: Vec<String> = header
        .iter()
        .skip(1)
        .step_by(3)
        .map(|h| h.strip_suffix(".all").unwrap_or(h).to_string())
        .collect();
    let num = |s: &str| -> Result<Option<f64>> {
        if s.is_empty() {
            return Ok(None);
        }
        s.parse().map(Some).map_err(|_| Error::invalid(format!("bad table cell {s:?}")))
    };
    let mut out = ParsedTable::new();
    for rec in r.records() {
        let rec = rec?;
        let label = &rec[0];
        let parts: Vec<&str> = label.splitn(3, '/').collect();
        let [model, method, comp] = parts[..] else { continue };
        for (k, d) in datasets.iter().enumerate() {
            let v = [num(&rec[1 + 3 * k])?, num(&rec[2 + 3 * k])?, num(&rec[3 + 3 * k])?];
            if v.iter().any(Option::is_some) {
                out.insert((model.into(), method.into(), comp.into(), d.clone()), v);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn agg(all: f64, exp: Option<f64>, alt: Option<f64>, occ: f64) -> Aggregate {
        Aggregate {
            all: Some(all),
            exp,
            alt,
            occ_exp: Some(occ),
            occ_alt: Some(1.0 - occ),
            n: 10,
            n_exp: 7,
            n_alt: 3,
            excluded: 0,
        }
    }

    fn sample() -> (Section, Vec<String>) {
        let mut s = Section::new();
        for (d, x) in [("number", 0.1), ("gender", 0.7)] {
            for m in ["recurrent", "attention"] {
                let mut summary = Summary::new();
                for meth in ["IG", "V", "Nearest"] {
                    let comps = if meth == "Nearest" { vec!["-"] } else { vec!["GI", "VN"] };
                    for c in comps {
                        summary
                            .entry(meth.into())
                            .or_default()
                            .insert(c.into(), agg(x + 1.0 / 3.0, Some(x), None, 0.9 - x));
                    }
                }
                s.entry(d.into()).or_default().insert(m.into(), summary);
            }
        }
        (s, vec!["number".into(), "gender".into()])
    }

    #[test]
    fn empty_is_header_only() {
        let text = emit_table(&Section::new(), &["number".into()]).unwrap();
        assert_eq!(text, "label,number.all,number.exp,number.alt\n");
        assert!(parse_table(&text).unwrap().is_empty());
    }

    #[test]
    fn layout_and_parse_back() {
        let (s, ds) = sample();
        let text = emit_table(&s, &ds).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines.iter().all(|l| l.split(',').count() == 1 + 3 * ds.len()));
        assert!(lines[1].starts_with("attention,,(") && lines[1].contains(")"));
        assert!(lines[2].starts_with("attention/V/GI"), "{}", lines[2]);
        let parsed = parse_table(&text).unwrap();
        assert_eq!(parsed.len(), 2 * 5 * 2);
        for (d, models) in &s {
            for (m, summary) in models {
                for (meth, comps) in summary {
                    for (c, a) in comps {
                        let got = parsed[&(m.clone(), meth.clone(), c.clone(), d.clone())];
                        assert_eq!(got, [a.all, a.exp, a.alt]);
                    }
                }
            }
        }
    }

    #[test]
    fn report_json_round_trip() {
        let (s, ds) = sample();
        let r = Report { seed: 3, datasets: ds, plausibility: s, ..Default::default() };
        assert_eq!(Report::from_json(&r.to_json().unwrap()).unwrap(), r);
    }

    proptest! {
        #[test]
        fn floats_survive_the_table(x in prop::num::f64::NORMAL, y in 0.0f64..1.0) {
            let mut s = Section::new();
            let mut summary = Summary::new();
            summary.entry("SG".into()).or_default().insert("VN".into(), agg(x, Some(y), Some(-y), y));
            s.entry("d".into()).or_default().insert("m".into(), summary);
            let parsed = parse_table(&emit_table(&s, &["d".into()]).unwrap()).unwrap();
            prop_assert_eq!(parsed[&("m".into(), "SG".into(), "VN".into(), "d".into())], [Some(x), Some(y), Some(-y)]);
        }
    }
}
