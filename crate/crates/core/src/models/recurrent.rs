//! Stacked LSTM body. Gate columns are packed `[input, forget, cell, output]`.

use super::arch::RecurrentConfig;
use super::Bound;
use crate::autodiff::{NodeId, Tape};
use crate::error::Result;

pub(crate) fn body(cfg: &RecurrentConfig, tape: &mut Tape, bound: &Bound, input: NodeId) -> Result<NodeId> {
    let h = cfg.hidden;
    let n = tape.value(input).rows();
    let mut x = input;
    for l in 0..cfg.layers {
        let w_ih = bound.param(&format!("lstm.{l}.w_ih"));
        let w_hh = bound.param(&format!("lstm.{l}.w_hh"));
        let bias = bound.param(&format!("lstm.{l}.bias"));
        let projected = tape.matmul(x, w_ih)?;
        let projected = tape.add(projected, bias)?;

        let mut hidden: Option<NodeId> = None;
        let mut cell: Option<NodeId> = None;
        let mut outputs = Vec::with_capacity(n);
        for t in 0..n {
            let mut gates = tape.slice_rows(projected, t, t + 1)?;
            if let Some(prev) = hidden {
                let rec = tape.matmul(prev, w_hh)?;
                gates = tape.add(gates, rec)?;
            }
            let i = tape.slice_cols(gates, 0, h)?;
            let i = tape.sigmoid(i)?;
            let f = tape.slice_cols(gates, h, 2 * h)?;
            let f = tape.sigmoid(f)?;
            let g = tape.slice_cols(gates, 2 * h, 3 * h)?;
            let g = tape.tanh(g)?;
            let o = tape.slice_cols(gates, 3 * h, 4 * h)?;
            let o = tape.sigmoid(o)?;

            let ig = tape.mul(i, g)?;
            let c = match cell {
                Some(prev) => {
                    let kept = tape.mul(f, prev)?;
                    tape.add(kept, ig)?
                }
                None => ig,
            };
            let squashed = tape.tanh(c)?;
            let hn = tape.mul(o, squashed)?;
            cell = Some(c);
            hidden = Some(hn);
            outputs.push(hn);
        }
        x = tape.concat_rows(&outputs)?;
    }
    Ok(x)
}

