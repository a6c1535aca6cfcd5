use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::{EmbeddingScorer, Riemann};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Gradient of the score at the given embeddings.
pub fn vanilla<S: EmbeddingScorer + ?Sized>(scorer: &S, embeddings: &Tensor) -> Result<Tensor> {
    Ok(scorer.score_and_gradient(embeddings)?.1)
}

/// Standard deviation of the SmoothGrad noise for a given table norm.
pub fn smoothgrad_sigma(coefficient: f64, table_norm: f64) -> f64 {
    (coefficient * table_norm).sqrt()
}

/// Mean gradient over `samples` noisy copies of the embeddings.
///
/// Sample `k` draws its noise from `ChaCha8Rng(seed)` on stream `k`, so the
/// result does not depend on how samples are scheduled.
pub fn smoothgrad<S: EmbeddingScorer + ?Sized>(
    scorer: &S,
    embeddings: &Tensor,
    samples: usize,
    coefficient: f64,
    seed: u64,
) -> Result<Tensor> {
    if samples == 0 {
        return Err(Error::invalid("sg_samples must be at least 1"));
    }
    if !(coefficient >= 0.0) {
        return Err(Error::invalid("sg_variance_coefficient must be non-negative"));
    }
    let sigma = smoothgrad_sigma(coefficient, scorer.table_norm());
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::invalid(format!("noise scale: {e}")))?;
    let grads: Vec<Tensor> = (0..samples)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let mut noisy = embeddings.clone();
            for v in noisy.data_mut() {
                *v += normal.sample(&mut rng);
            }
            vanilla(scorer, &noisy)
        })
        .collect::<Result<_>>()?;
    Ok(mean(grads, embeddings.shape()))
}

fn mean(grads: Vec<Tensor>, shape: &[usize]) -> Tensor {
    let n = grads.len() as f64;
    let mut acc = Tensor::zeros(shape);
    for g in &grads {
        acc.add_assign(g);
    }
    acc.scale_assign(1.0 / n);
    acc
}

/// Interpolation points along the path from the zero baseline.
pub fn ig_alphas(steps: usize, rule: Riemann) -> Vec<f64> {
    let n = steps as f64;
    (1..=steps)
        .map(|k| match rule {
            Riemann::Right => k as f64 / n,
            Riemann::Midpoint => (k as f64 - 0.5) / n,
        })
        .collect()
}

/// Integrated gradients from the zero baseline, with the input factor
/// applied: `e ⊙ mean_k ∇f(α_k e)`.
pub fn integrated_gradients<S: EmbeddingScorer + ?Sized>(
    scorer: &S,
    embeddings: &Tensor,
    steps: usize,
    rule: Riemann,
) -> Result<Tensor> {
    if steps == 0 {
        return Err(Error::invalid("ig_steps must be at least 1"));
    }
    let grads: Vec<Tensor> = ig_alphas(steps, rule)
        .into_par_iter()
        .map(|a| vanilla(scorer, &embeddings.scaled(a)))
        .collect::<Result<_>>()?;
    let avg = mean(grads, embeddings.shape());
    let data = avg.data().iter().zip(embeddings.data()).map(|(g, e)| g * e).collect();
    Tensor::new(embeddings.shape().to_vec(), data)
}

fn check_rows(vectors: &Tensor, embeddings: &Tensor) -> Result<()> {
    if vectors.shape() != embeddings.shape() || vectors.rank() != 2 {
        return Err(Error::ShapeMismatch {
            op: "compose_gi",
            shapes: vec![vectors.shape().to_vec(), embeddings.shape().to_vec()],
        });
    }
    Ok(())
}

/// Gradient·input: `ψ_w = e_w · Ψ_w`.
pub fn compose_gi(embeddings: &Tensor, gradients: &Tensor) -> Result<Vec<f64>> {
    check_rows(gradients, embeddings)?;
    Ok((0..gradients.rows())
        .map(|w| embeddings.row(w).iter().zip(gradients.row(w)).map(|(e, g)| e * g).sum())
        .collect())
}

/// Gradient·input for attributions that already carry the input factor:
/// each word's score is the sum of its dimensions.
pub fn compose_gi_attribution(attributions: &Tensor) -> Result<Vec<f64>> {
    if attributions.rank() != 2 {
        return Err(Error::ShapeMismatch { op: "compose_gi", shapes: vec![attributions.shape().to_vec()] });
    }
    Ok((0..attributions.rows()).map(|w| attributions.row(w).iter().sum()).collect())
}

/// Vector norm: `ψ_w = (1/d) Σ_i |Ψ_{w,i}|`.
pub fn compose_vn(vectors: &Tensor) -> Result<Vec<f64>> {
    if vectors.rank() != 2 || vectors.cols() == 0 {
        return Err(Error::ShapeMismatch { op: "compose_vn", shapes: vec![vectors.shape().to_vec()] });
    }
    let d = vectors.cols() as f64;
    Ok((0..vectors.rows()).map(|w| vectors.row(w).iter().map(|v| v.abs()).sum::<f64>() / d).collect())
}
