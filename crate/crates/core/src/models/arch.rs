use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecurrentConfig {
    pub embed_dim: usize,
    pub hidden: usize,
    pub layers: usize,
}

impl Default for RecurrentConfig {
    fn default() -> Self {
        Self { embed_dim: 32, hidden: 64, layers: 2 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Positions {
    Sinusoidal,
    Learned { max_len: usize },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttentionConfig {
    pub embed_dim: usize,
    pub heads: usize,
    pub layers: usize,
    pub ffn: usize,
    pub positions: Positions,
}

impl Default for AttentionConfig {
    fn default() -> Self {
        Self { embed_dim: 32, heads: 2, layers: 2, ffn: 64, positions: Positions::Sinusoidal }
    }
}

/// Architecture descriptor stored alongside the parameters.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Architecture {
    Recurrent(RecurrentConfig),
    Attention(AttentionConfig),
}

/// Cap on any single dimension, so decoded descriptors cannot request
/// absurd allocations.
const MAX_DIM: usize = 1 << 16;

impl Architecture {
    pub fn name(&self) -> &'static str {
        match self {
            Architecture::Recurrent(_) => "recurrent",
            Architecture::Attention(_) => "attention",
        }
    }

    pub fn embed_dim(&self) -> usize {
        match self {
            Architecture::Recurrent(c) => c.embed_dim,
            Architecture::Attention(c) => c.embed_dim,
        }
    }

    /// Width of the final hidden state fed to the heads.
    pub fn output_dim(&self) -> usize {
        match self {
            Architecture::Recurrent(c) => c.hidden,
            Architecture::Attention(c) => c.embed_dim,
        }
    }

    pub fn layers(&self) -> usize {
        match self {
            Architecture::Recurrent(c) => c.layers,
            Architecture::Attention(c) => c.layers,
        }
    }

    pub fn with_layers(&self, layers: usize) -> Self {
        let mut a = self.clone();
        match &mut a {
            Architecture::Recurrent(c) => c.layers = layers,
            Architecture::Attention(c) => c.layers = layers,
        }
        a
    }

    pub fn validate(&self) -> Result<()> {
        let dims: Vec<usize> = match self {
            Architecture::Recurrent(c) => vec![c.embed_dim, c.hidden, c.layers],
            Architecture::Attention(c) => {
                if c.heads == 0 || c.embed_dim % c.heads != 0 {
                    return Err(Error::invalid(format!(
                        "embedding dimension {} not divisible by {} heads",
                        c.embed_dim, c.heads
                    )));
                }
                let mut d = vec![c.embed_dim, c.heads, c.layers, c.ffn];
                if let Positions::Learned { max_len } = c.positions {
                    d.push(max_len);
                }
                d
            }
        };
        if dims.iter().any(|&d| d == 0 || d > MAX_DIM) {
            return Err(Error::invalid(format!("architecture dimensions out of range: {self:?}")));
        }
        Ok(())
    }

    /// Parameter names and shapes in storage order.
    pub fn layout(&self, vocab_size: usize) -> Vec<(String, Vec<usize>)> {
        let d = self.embed_dim();
        let mut out = vec![("embedding".to_string(), vec![vocab_size, d])];
        match self {
            Architecture::Recurrent(c) => {
                let h = c.hidden;
                for l in 0..c.layers {
                    let input = if l == 0 { d } else { h };
                    out.push((format!("lstm.{l}.w_ih"), vec![input, 4 * h]));
                    out.push((format!("lstm.{l}.w_hh"), vec![h, 4 * h]));
                    out.push((format!("lstm.{l}.bias"), vec![4 * h]));
                }
            }
            Architecture::Attention(c) => {
                if let Positions::Learned { max_len } = c.positions {
                    out.push(("positions".to_string(), vec![max_len, d]));
                }
                for l in 0..c.layers {
                    out.push((format!("attn.{l}.ln1.gain"), vec![d]));
                    out.push((format!("attn.{l}.ln1.bias"), vec![d]));
                    for p in ["q", "k", "v", "o"] {
                        out.push((format!("attn.{l}.{p}.weight"), vec![d, d]));
                        out.push((format!("attn.{l}.{p}.bias"), vec![d]));
                    }
                    out.push((format!("attn.{l}.ln2.gain"), vec![d]));
                    out.push((format!("attn.{l}.ln2.bias"), vec![d]));
                    out.push((format!("attn.{l}.ff1.weight"), vec![d, c.ffn]));
                    out.push((format!("attn.{l}.ff1.bias"), vec![c.ffn]));
                    out.push((format!("attn.{l}.ff2.weight"), vec![c.ffn, d]));
                    out.push((format!("attn.{l}.ff2.bias"), vec![d]));
                }
                out.push(("final_ln.gain".to_string(), vec![d]));
                out.push(("final_ln.bias".to_string(), vec![d]));
            }
        }
        let o = self.output_dim();
        out.push(("lm_head.weight".to_string(), vec![o, vocab_size]));
        out.push(("lm_head.bias".to_string(), vec![vocab_size]));
        out
    }

    /// Fresh parameters: Xavier-uniform matrices, zero biases (LSTM forget
    /// gate bias 1), unit layer-norm gains, small uniform embeddings.
    pub fn init(&self, vocab_size: usize, seed: u64) -> ParamStore {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        for (name, shape) in self.layout(vocab_size) {
            let n: usize = shape.iter().product();
            let data: Vec<f64> = if name.ends_with(".gain") {
                vec![1.0; n]
            } else if name.ends_with(".bias") {
                let mut b = vec![0.0; n];
                if name.starts_with("lstm.") {
                    let h = n / 4;
                    b[h..2 * h].fill(1.0);
                }
                b
            } else if name == "embedding" || name == "positions" {
                (0..n).map(|_| rng.random_range(-0.1..0.1)).collect()
            } else {
                let a = (6.0 / (shape[0] + shape[1]) as f64).sqrt();
                (0..n).map(|_| rng.random_range(-a..a)).collect()
            };
            store.push(name, Tensor::new(shape, data).expect("layout shapes"));
        }
        store
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn attention_requires_divisible_heads() {
        let a = Architecture::Attention(AttentionConfig { heads: 3, ..Default::default() });
        assert!(a.validate().is_err());
        assert!(Architecture::Attention(AttentionConfig::default()).validate().is_ok());
    }

    #[test]
    fn init_is_deterministic_and_nonzero() {
        let a = Architecture::Recurrent(RecurrentConfig::default());
        let p = a.init(20, 3);
        assert_eq!(p.fingerprint(), a.init(20, 3).fingerprint());
        assert!(p.get("embedding").unwrap().frobenius_norm() > 0.0);
        let bias = p.get("lstm.0.bias").unwrap();
        assert_eq!(bias.data()[64], 1.0);
        assert_eq!(bias.data()[0], 0.0);
    }
}
