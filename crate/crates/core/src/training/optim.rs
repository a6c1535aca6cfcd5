use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;

/// Adam with bias correction.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new(lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self { lr, beta1, beta2, eps, step: 0, m: Vec::new(), v: Vec::new() }
    }

    pub fn step(&mut self, params: &mut [Tensor], grads: &[Tensor]) {
        assert_eq!(params.len(), grads.len(), "one gradient per parameter");
        if self.m.is_empty() {
            self.m = params.iter().map(|p| Tensor::zeros(p.shape())).collect();
            self.v = self.m.clone();
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            let (p, g, m, v) = (p.data_mut(), g.data(), m.data_mut(), v.data_mut());
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let mh = m[i] / c1;
                let vh = v[i] / c2;
                p[i] -= self.lr * mh / (vh.sqrt() + self.eps);
            }
        }
    }
}

/// Rescales `grads` so their joint L2 norm is at most `max_norm`; returns
/// the norm before clipping.
pub fn clip_global_norm(grads: &mut [Tensor], max_norm: f64) -> f64 {
    let norm = grads.iter().map(|g| g.data().iter().map(|v| v * v).sum::<f64>()).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        for g in grads {
            g.scale_assign(s);
        }
    }
    norm
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Schedule {
    Constant,
    /// Multiply the rate by `factor` once the monitored loss has failed to
    /// improve for more than `patience` epochs.
    Plateau { factor: f64, patience: usize },
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule::Plateau { factor: 0.5, patience: 2 }
    }
}

/// Relative improvement required to reset the plateau counter.
const PLATEAU_THRESHOLD: f64 = 1e-4;

#[derive(Clone, Debug)]
pub struct Scheduler {
    schedule: Schedule,
    best: f64,
    bad_epochs: usize,
}

impl Scheduler {
    pub fn new(schedule: Schedule) -> Self {
        Self { schedule, best: f64::INFINITY, bad_epochs: 0 }
    }

    /// Records an epoch's monitored loss and returns the next learning rate.
    pub fn observe(&mut self, loss: f64, lr: f64) -> f64 {
        let Schedule::Plateau { factor, patience } = self.schedule else { return lr };
        if loss < self.best * (1.0 - PLATEAU_THRESHOLD) {
            self.best = loss;
            self.bad_epochs = 0;
            return lr;
        }
        self.bad_epochs += 1;
        if self.bad_epochs > patience {
            self.bad_epochs = 0;
            return lr * factor;
        }
        lr
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = vec![Tensor::vector(vec![0.3, -1.2, 5.0])];
        let before = p.clone();
        let mut adam = Adam::new(1e-3, 0.9, 0.999, 1e-8);
        for _ in 0..10 {
            adam.step(&mut p, &[Tensor::zeros(&[3])]);
        }
        for (a, b) in p[0].data().iter().zip(before[0].data()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn first_step_moves_by_lr() {
        // Bias-corrected first step is lr * sign(g).
        let mut p = vec![Tensor::vector(vec![1.0, 1.0])];
        let mut adam = Adam::new(0.1, 0.9, 0.999, 1e-12);
        adam.step(&mut p, &[Tensor::vector(vec![2.0, -0.5])]);
        assert!((p[0].data()[0] - 0.9).abs() < 1e-9);
        assert!((p[0].data()[1] - 1.1).abs() < 1e-9);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut p = vec![Tensor::vector(vec![3.0, -2.0])];
        let mut adam = Adam::new(0.05, 0.9, 0.999, 1e-8);
        for _ in 0..2000 {
            let g = p[0].clone();
            adam.step(&mut p, &[g]);
        }
        assert!(p[0].data().iter().all(|v| v.abs() < 1e-2));
    }

    #[test]
    fn clipping() {
        let mut g = vec![Tensor::vector(vec![3.0]), Tensor::vector(vec![4.0])];
        assert_eq!(clip_global_norm(&mut g, 1.0), 5.0);
        assert!((g[0].data()[0] - 0.6).abs() < 1e-15);
        let mut small = vec![Tensor::vector(vec![0.1])];
        clip_global_norm(&mut small, 1.0);
        assert_eq!(small[0].data()[0], 0.1);
    }

    #[test]
    fn plateau_halves_after_patience() {
        let mut s = Scheduler::new(Schedule::Plateau { factor: 0.5, patience: 2 });
        let mut lr = 1.0;
        for loss in [1.0, 0.9, 0.9, 0.9, 0.9] {
            lr = s.observe(loss, lr);
        }
        assert_eq!(lr, 0.5);
        let mut c = Scheduler::new(Schedule::Constant);
        assert_eq!(c.observe(5.0, 0.1), 0.1);
    }
}
