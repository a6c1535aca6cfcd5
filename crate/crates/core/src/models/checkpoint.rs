//! Binary model checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic        8 bytes  "SALBCKPT"
//! version      u32      1
//! header_len   u64
//! header       JSON     {model_id, vocab, arch, tensors: [{name, shape}], probe_kind}
//! payload      f64 LE   every tensor in header order, probe weight then bias last
//! ```
//!
//! Values are stored as raw IEEE-754 bits, so a decode/encode round trip is
//! bit-exact.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Architecture, LanguageModel, ParamStore, ProbeHead, Vocabulary};
use crate::autodiff::Tensor;
use crate::datasets::AgreementKind;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"SALBCKPT";
pub const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    model_id: String,
    vocab: Vocabulary,
    arch: Architecture,
    tensors: Vec<TensorEntry>,
    probe_kind: Option<AgreementKind>,
}

pub fn encode(model: &LanguageModel) -> Result<Vec<u8>> {
    let mut tensors: Vec<TensorEntry> = model
        .params
        .iter()
        .map(|(name, t)| TensorEntry { name: name.to_string(), shape: t.shape().to_vec() })
        .collect();
    if let Some(p) = &model.probe {
        tensors.push(TensorEntry { name: "probe.weight".into(), shape: p.weight.shape().to_vec() });
        tensors.push(TensorEntry { name: "probe.bias".into(), shape: p.bias.shape().to_vec() });
    }
    let header = Header {
        model_id: model.id.clone(),
        vocab: model.vocab.clone(),
        arch: model.arch.clone(),
        tensors,
        probe_kind: model.probe_kind(),
    };
    let header = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(20 + header.len() + 8 * model.params.scalar_count());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    let probe = model.probe.iter().flat_map(|p| [&p.weight, &p.bias]);
    for t in model.params.tensors().iter().chain(probe) {
        for v in t.data() {
            out.extend_from_slice(&v.to_bits().to_le_bytes());
        }
    }
    Ok(out)
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

pub fn decode(bytes: &[u8]) -> Result<LanguageModel> {
    if bytes.len() < 20 || &bytes[..8] != MAGIC {
        return Err(bad("not a checkpoint (bad magic)"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let header_len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes"));
    let rest = &bytes[20..];
    let header_len = usize::try_from(header_len).ok().filter(|&n| n <= rest.len()).ok_or_else(|| bad("truncated header"))?;
    let header: Header =
        serde_json::from_slice(&rest[..header_len]).map_err(|e| bad(format!("header: {e}")))?;
    let payload = &rest[header_len..];

    header.arch.validate()?;
    let expected = header.arch.layout(header.vocab.len());
    let probe_entries = if header.probe_kind.is_some() { 2 } else { 0 };
    if header.tensors.len() != expected.len() + probe_entries {
        return Err(bad("tensor list does not match architecture"));
    }
    for ((name, shape), entry) in expected.iter().zip(&header.tensors) {
        if &entry.name != name || &entry.shape != shape {
            return Err(bad(format!("expected tensor {name} {shape:?}, found {} {:?}", entry.name, entry.shape)));
        }
    }
    if probe_entries == 2 {
        let out = header.arch.output_dim();
        let w = &header.tensors[expected.len()];
        let b = &header.tensors[expected.len() + 1];
        if w.name != "probe.weight" || w.shape != [out, 2] || b.name != "probe.bias" || b.shape != [2] {
            return Err(bad("malformed probe tensors"));
        }
    }

    let mut total: usize = 0;
    for e in &header.tensors {
        let n = e.shape.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d)).ok_or_else(|| bad("shape overflow"))?;
        total = total.checked_add(n).ok_or_else(|| bad("shape overflow"))?;
    }
    if total.checked_mul(8) != Some(payload.len()) {
        return Err(bad(format!("payload has {} bytes, expected {} values", payload.len(), total)));
    }

    let mut values = payload.chunks_exact(8).map(|c| f64::from_bits(u64::from_le_bytes(c.try_into().expect("8 bytes"))));
    let mut read = |shape: &[usize]| -> Tensor {
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), values.by_ref().take(n).collect()).expect("sized payload")
    };
    let mut params = ParamStore::new();
    for (name, shape) in &expected {
        params.push(name.clone(), read(shape));
    }
    let probe = header.probe_kind.map(|kind| {
        let weight = read(&header.tensors[expected.len()].shape);
        let bias = read(&[2]);
        ProbeHead { kind, weight, bias }
    });
    Ok(LanguageModel { id: header.model_id, vocab: header.vocab, arch: header.arch, params, probe })
}

pub fn save(model: &LanguageModel, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, encode(model)?).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<LanguageModel> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}
