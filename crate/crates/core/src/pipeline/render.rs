//! Per-token saliency renderings as static HTML.

use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::datasets::{Tag, TestInstance};
use crate::error::{Error, Result};
use crate::evaluation::Scenario;
use crate::saliency::SaliencyMap;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Marker {
    Cue,
    Attractor,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RenderedToken {
    pub text: String,
    /// Signed, in [-100, 100].
    pub intensity: f64,
    pub marker: Option<Marker>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RenderedInterpretation {
    pub tokens: Vec<RenderedToken>,
    pub predicted: Tag,
    pub scenario: Scenario,
    pub pass: Option<bool>,
    pub label: String,
}

/// Scales scores by the largest magnitude so it lands on ±100.
pub fn intensities(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    if max == 0.0 || !max.is_finite() {
        return vec![0.0; scores.len()];
    }
    scores.iter().map(|s| 100.0 * s / max).collect()
}

pub fn interpret(
    instance: &TestInstance,
    map: &SaliencyMap,
    scenario: Scenario,
    pass: Option<bool>,
) -> Result<RenderedInterpretation> {
    if map.scores.len() != instance.tokens.len() {
        return Err(Error::ShapeMismatch {
            op: "render_html",
            shapes: vec![vec![instance.tokens.len()], vec![map.scores.len()]],
        });
    }
    let predicted = match scenario {
        Scenario::Expected => instance.gold_tag,
        Scenario::Alternative => instance.gold_tag.opposite(),
    };
    let tokens = instance
        .tokens
        .iter()
        .zip(intensities(&map.scores))
        .enumerate()
        .map(|(i, (t, intensity))| RenderedToken {
            text: t.clone(),
            intensity,
            marker: if instance.cues.contains(&i) {
                Some(Marker::Cue)
            } else if instance.attractors.contains(&i) {
                Some(Marker::Attractor)
            } else {
                None
            },
        })
        .collect();
    let label = if map.composition == "-" {
        map.method.clone()
    } else {
        format!("{}+{}", map.method, map.composition)
    };
    Ok(RenderedInterpretation { tokens, predicted, scenario, pass, label })
}

pub fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for ch in text.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            c => out.push(c),
        }
    }
    out
}

impl RenderedInterpretation {
    pub fn to_html(&self) -> String {
        let mut out = String::from("<div class=\"interp\">");
        let _ = write!(out, "<span class=\"label\">{}</span> ", escape(&self.label));
        for t in &self.tokens {
            let (r, g, b) = if t.intensity >= 0.0 { (0, 170, 0) } else { (235, 200, 0) };
            let text = escape(&t.text);
            let text = match t.marker {
                Some(Marker::Cue) => format!("[{text}]"),
                Some(Marker::Attractor) => format!("({text})"),
                None => text,
            };
            let _ = write!(
                out,
                "<span class=\"tok\" title=\"{:.1}\" style=\"background-color: rgba({r}, {g}, {b}, {:.3})\">{text}</span> ",
                t.intensity,
                t.intensity.abs() / 100.0
            );
        }
        let verdict = match self.pass {
            Some(true) => "pass",
            Some(false) => "fail",
            None => "n/a",
        };
        let scenario = match self.scenario {
            Scenario::Expected => "exp",
            Scenario::Alternative => "alt",
        };
        let _ = write!(
            out,
            "<span class=\"pred\">&rarr; {}</span> <span class=\"verdict\">{scenario} {verdict}</span></div>",
            self.predicted
        );
        out
    }
}

/// HTML fragment for one map.
pub fn render_html(instance: &TestInstance, map: &SaliencyMap, scenario: Scenario, pass: Option<bool>) -> Result<String> {
    Ok(interpret(instance, map, scenario, pass)?.to_html())
}

/// Wraps fragments into a standalone page.
pub fn html_page(title: &str, fragments: &[String]) -> String {
    let mut out = String::from("<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n");
    let _ = writeln!(out, "<title>{}</title>", escape(title));
    out.push_str(
        "<style>body { font-family: monospace; } .interp { margin: 4px 0; } \
         .tok { padding: 1px 2px; } .label { color: #666; } .pred { font-weight: bold; }</style>\n",
    );
    out.push_str("</head>\n<body>\n");
    let _ = writeln!(out, "<h1>{}</h1>", escape(title));
    for f in fragments {
        out.push_str(f);
        out.push('\n');
    }
    out.push_str("</body>\n</html>\n");
    out
}

/// Checks that tags nest and attributes are quoted. Void elements and the
/// doctype are skipped.
pub fn check_well_formed(html: &str) -> std::result::Result<(), String> {
    const VOID: [&str; 4] = ["meta", "br", "hr", "img"];
    let mut stack: Vec<String> = Vec::new();
    let mut rest = html;
    while let Some(open) = rest.find('<') {
        let after = &rest[open + 1..];
        let close = after.find('>').ok_or("unterminated tag")?;
        let inner = &after[..close];
        rest = &after[close + 1..];
        if inner.starts_with('!') {
            continue;
        }
        if inner.contains('<') {
            return Err(format!("stray '<' in {inner:?}"));
        }
        if inner.matches('"').count() % 2 != 0 {
            return Err(format!("unbalanced quotes in {inner:?}"));
        }
        if let Some(name) = inner.strip_prefix('/') {
            match stack.pop() {
                Some(top) if top == name.trim() => {}
                other => return Err(format!("</{name}> closes {other:?}")),
            }
        } else {
            let name = inner.split_whitespace().next().unwrap_or("").to_ascii_lowercase();
            if name.is_empty() {
                return Err("empty tag".into());
            }
            if !VOID.contains(&name.as_str()) && !inner.ends_with('/') {
                stack.push(name);
            }
        }
    }
    if rest.contains('>') {
        return Err("stray '>' in text".into());
    }
    match stack.last() {
        Some(t) => Err(format!("<{t}> never closed")),
        None => Ok(()),
    }
}
