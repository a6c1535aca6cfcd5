//! Central finite-difference gradient checking.
//!
//! The numeric side never touches the backward pass: it only evaluates the
//! scalar function at perturbed points.

use super::tape::{NodeId, Tape};
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const DEFAULT_EPSILON: f64 = 1e-5;

/// Central differences `(f(x + eps e_i) - f(x - eps e_i)) / 2 eps` for every
/// coordinate of `point`.
pub fn finite_difference<F>(f: F, point: &Tensor, epsilon: f64) -> Result<Tensor>
where
    F: Fn(&Tensor) -> Result<f64>,
{
    if epsilon <= 0.0 {
        return Err(Error::invalid("epsilon must be positive"));
    }
    let mut probe = point.clone();
    let mut out = Vec::with_capacity(point.len());
    for i in 0..point.len() {
        let x = point.data()[i];
        probe.data_mut()[i] = x + epsilon;
        let up = f(&probe)?;
        probe.data_mut()[i] = x - epsilon;
        let down = f(&probe)?;
        probe.data_mut()[i] = x;
        out.push((up - down) / (2.0 * epsilon));
    }
    Tensor::new(point.shape().to_vec(), out)
}

/// `max_i |a_i - n_i| / (|a_i| + |n_i| + 1e-12)`.
pub fn max_relative_error(analytic: &Tensor, numeric: &Tensor) -> f64 {
    analytic
        .data()
        .iter()
        .zip(numeric.data())
        .map(|(a, n)| {
            let diff = (a - n).abs();
            if diff == 0.0 {
                0.0
            } else {
                diff / (a.abs() + n.abs() + 1e-12)
            }
        })
        .fold(0.0, f64::max)
}

/// `‖a - n‖₂ / max(‖a‖₂, ‖n‖₂)`, zero when both vanish. Unlike the
/// elementwise form it is not dominated by components near zero, whose
/// finite-difference estimates are mostly roundoff.
pub fn norm_relative_error(analytic: &Tensor, numeric: &Tensor) -> f64 {
    let diff = analytic.data().iter().zip(numeric.data()).map(|(a, n)| (a - n) * (a - n)).sum::<f64>().sqrt();
    let scale = analytic.frobenius_norm().max(numeric.frobenius_norm());
    if diff == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

/// Compares the tape gradient of a scalar function against central
/// differences at `point`.
///
/// `build` records the function on a fresh tape given the input node and
/// returns the scalar output node. Non-finite errors propagate as the result.
pub fn gradient_check<F>(build: F, point: &Tensor, epsilon: f64) -> Result<f64>
where
    F: Fn(&mut Tape, NodeId) -> Result<NodeId>,
{
    let mut tape = Tape::new();
    let x = tape.variable(point.clone());
    let out = build(&mut tape, x)?;
    let analytic = tape
        .backward(out)?
        .take(x)
        .expect("targets always receive a gradient");

    let eval = |p: &Tensor| -> Result<f64> {
        let mut t = Tape::new();
        let x = t.constant(p.clone());
        let out = build(&mut t, x)?;
        t.value(out).item().ok_or_else(|| Error::NonScalarOutput(t.value(out).shape().to_vec()))
    };
    let numeric = finite_difference(eval, point, epsilon)?;
    if !analytic.is_finite() || !numeric.is_finite() {
        return Ok(f64::INFINITY);
    }
    Ok(max_relative_error(&analytic, &numeric))
}
