//! Pre-norm causal self-attention body.

use super::arch::{AttentionConfig, Positions};
use super::Bound;
use crate::autodiff::{NodeId, Tape, Tensor};
use crate::error::{Error, Result};

pub(crate) fn sinusoidal(n: usize, d: usize) -> Tensor {
    let mut data = vec![0.0; n * d];
    for pos in 0..n {
        for i in 0..d {
            let pair = (i / 2) as f64;
            let angle = pos as f64 / 10000f64.powf(2.0 * pair / d as f64);
            data[pos * d + i] = if i % 2 == 0 { angle.sin() } else { angle.cos() };
        }
    }
    Tensor::new(vec![n, d], data).expect("positional shape")
}

fn affine(tape: &mut Tape, x: NodeId, bound: &Bound, prefix: &str) -> Result<NodeId> {
    let w = bound.param(&format!("{prefix}.weight"));
    let b = bound.param(&format!("{prefix}.bias"));
    let y = tape.matmul(x, w)?;
    tape.add(y, b)
}

fn norm(tape: &mut Tape, x: NodeId, bound: &Bound, prefix: &str) -> Result<NodeId> {
    let y = tape.layer_norm(x)?;
    let y = tape.mul(y, bound.param(&format!("{prefix}.gain")))?;
    tape.add(y, bound.param(&format!("{prefix}.bias")))
}

pub(crate) fn body(cfg: &AttentionConfig, tape: &mut Tape, bound: &Bound, input: NodeId) -> Result<NodeId> {
    let (n, d) = (tape.value(input).rows(), cfg.embed_dim);
    let pos = match cfg.positions {
        Positions::Sinusoidal => tape.constant(sinusoidal(n, d)),
        Positions::Learned { max_len } => {
            if n > max_len {
                return Err(Error::invalid(format!("prefix length {n} exceeds learned positions ({max_len})")));
            }
            tape.slice_rows(bound.param("positions"), 0, n)?
        }
    };
    let mut x = tape.add(input, pos)?;
    let dk = d / cfg.heads;
    let inv_sqrt = 1.0 / (dk as f64).sqrt();

    for l in 0..cfg.layers {
        let a = norm(tape, x, bound, &format!("attn.{l}.ln1"))?;
        let q = affine(tape, a, bound, &format!("attn.{l}.q"))?;
        let k = affine(tape, a, bound, &format!("attn.{l}.k"))?;
        let v = affine(tape, a, bound, &format!("attn.{l}.v"))?;
        let mut heads = Vec::with_capacity(cfg.heads);
        for hd in 0..cfg.heads {
            let (s, e) = (hd * dk, (hd + 1) * dk);
            let qh = tape.slice_cols(q, s, e)?;
            let kh = tape.slice_cols(k, s, e)?;
            let vh = tape.slice_cols(v, s, e)?;
            let kt = tape.transpose(kh)?;
            let scores = tape.matmul(qh, kt)?;
            let scores = tape.scale(scores, inv_sqrt)?;
            let weights = tape.causal_softmax(scores)?;
            heads.push(tape.matmul(weights, vh)?);
        }
        let merged = if heads.len() == 1 { heads[0] } else { tape.concat_cols(&heads)? };
        let attended = affine(tape, merged, bound, &format!("attn.{l}.o"))?;
        x = tape.add(x, attended)?;

        let b = norm(tape, x, bound, &format!("attn.{l}.ln2"))?;
        let f = affine(tape, b, bound, &format!("attn.{l}.ff1"))?;
        let f = tape.gelu(f)?;
        let f = affine(tape, f, bound, &format!("attn.{l}.ff2"))?;
        x = tape.add(x, f)?;
    }
    norm(tape, x, bound, "final_ln")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sinusoid_first_row() {
        let p = sinusoidal(3, 4);
        assert_eq!(p.row(0), &[0.0, 1.0, 0.0, 1.0]);
        assert!((p.at(1, 0) - 1f64.sin()).abs() < 1e-15);
    }
}
