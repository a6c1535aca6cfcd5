//! Dense reverse-mode automatic differentiation over `f64` tensors.

mod check;
mod tape;
mod tensor;

pub use check::{finite_difference, gradient_check, max_relative_error, norm_relative_error, DEFAULT_EPSILON};
pub use tape::{Gradients, NodeId, OpKind, Tape};
pub use tensor::Tensor;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
    }

    fn naive_matmul(a: &Tensor, b: &Tensor) -> Vec<f64> {
        let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                let mut s = 0.0;
                for p in 0..k {
                    s += a.at(i, p) * b.at(p, j);
                }
                out[i * n + j] = s;
            }
        }
        out
    }

    #[test]
    fn sigmoid_at_zero_is_half() {
        let mut t = Tape::new();
        let x = t.variable(Tensor::scalar(0.0));
        let y = t.sigmoid(x).unwrap();
        assert_eq!(t.value(y).item(), Some(0.5));
        let g = t.backward(y).unwrap();
        assert_eq!(g.get(x).unwrap().item(), Some(0.25));
    }

    #[test]
    fn softmax_of_zeros_is_uniform() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::vector(vec![0.0; 3]));
        let y = t.softmax(x).unwrap();
        for v in t.value(y).data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn matmul_matches_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random(&mut rng, &[2, 3], -1.0, 1.0);
        let b = random(&mut rng, &[3, 4], -1.0, 1.0);
        let mut t = Tape::new();
        let (na, nb) = (t.constant(a.clone()), t.constant(b.clone()));
        let c = t.matmul(na, nb).unwrap();
        assert_eq!(t.value(c).shape(), &[2, 4]);
        for (x, y) in t.value(c).data().iter().zip(naive_matmul(&a, &b)) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn shape_mismatch_names_the_op() {
        let mut t = Tape::new();
        let a = t.constant(Tensor::zeros(&[2, 3]));
        let b = t.constant(Tensor::zeros(&[2, 3]));
        let err = t.matmul(a, b).unwrap_err();
        match err {
            Error::ShapeMismatch { op, shapes } => {
                assert_eq!(op, "matmul");
                assert_eq!(shapes, vec![vec![2, 3], vec![2, 3]]);
            }
            other => panic!("unexpected {other:?}"),
        }
        let c = t.constant(Tensor::zeros(&[4]));
        assert!(t.add(a, c).unwrap_err().to_string().contains("add"));
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut t = Tape::new();
        let x = t.variable(Tensor::zeros(&[2]));
        let y = t.exp(x).unwrap();
        assert!(matches!(t.backward(y), Err(Error::NonScalarOutput(_))));
    }

    #[test]
    fn sum_gradient_is_ones() {
        let mut t = Tape::new();
        let x = t.variable(Tensor::zeros(&[3, 2]));
        let s = t.sum(x).unwrap();
        let g = t.backward(s).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[1.0; 6]);
    }

    #[test]
    fn unreached_target_gets_zero_gradient() {
        let mut t = Tape::new();
        let x = t.variable(Tensor::full(&[2], 3.0));
        let y = t.variable(Tensor::full(&[1, 4], 1.0));
        let s = t.sum(x).unwrap();
        let g = t.backward(s).unwrap();
        assert_eq!(g.get(y).unwrap(), &Tensor::zeros(&[1, 4]));
    }

    #[test]
    fn backward_is_repeatable_bit_for_bit() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut t = Tape::new();
        let x = t.variable(random(&mut rng, &[3, 4], -1.0, 1.0));
        let w = t.constant(random(&mut rng, &[4, 5], -1.0, 1.0));
        let h = t.matmul(x, w).unwrap();
        let h = t.tanh(h).unwrap();
        let p = t.log_softmax(h).unwrap();
        let s = t.mean(p).unwrap();
        let a = t.backward(s).unwrap();
        let b = t.backward(s).unwrap();
        let (ga, gb) = (a.get(x).unwrap(), b.get(x).unwrap());
        assert!(ga.data().iter().zip(gb.data()).all(|(p, q)| p.to_bits() == q.to_bits()));
    }

    #[test]
    fn gradient_is_linear_over_independent_subgraphs() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let point = random(&mut rng, &[2, 3], -1.0, 1.0);
        let grad_of = |which: u8| {
            let mut t = Tape::new();
            let x = t.variable(point.clone());
            let f = t.sigmoid(x).unwrap();
            let f = t.sum(f).unwrap();
            let g = t.tanh(x).unwrap();
            let g = t.mean(g).unwrap();
            let out = match which {
                0 => f,
                1 => g,
                _ => t.add(f, g).unwrap(),
            };
            t.backward(out).unwrap().take(x).unwrap()
        };
        let (gf, gg, gs) = (grad_of(0), grad_of(1), grad_of(2));
        for i in 0..gs.len() {
            assert!((gs.data()[i] - gf.data()[i] - gg.data()[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn gradient_check_linear_and_constant() {
        let w = Tensor::vector(vec![0.3, -1.2, 2.0, 0.7]);
        let x = Tensor::vector(vec![1.0, 2.0, -0.5, 0.1]);
        let err = gradient_check(
            |t, x| {
                let wn = t.constant(w.clone());
                let p = t.mul(x, wn)?;
                t.sum(p)
            },
            &x,
            DEFAULT_EPSILON,
        )
        .unwrap();
        assert!(err < 1e-8, "{err}");

        let err = gradient_check(
            |t, x| {
                let z = t.scale(x, 0.0)?;
                t.sum(z)
            },
            &x,
            DEFAULT_EPSILON,
        )
        .unwrap();
        assert_eq!(err, 0.0);
    }

    #[test]
    fn gradient_check_rejects_bad_epsilon() {
        let x = Tensor::vector(vec![1.0]);
        assert!(gradient_check(|t, x| t.sum(x), &x, 0.0).is_err());
    }

    #[test]
    fn causal_softmax_masks_future() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut t = Tape::new();
        let x = t.variable(random(&mut rng, &[3, 3], -1.0, 1.0));
        let y = t.causal_softmax(x).unwrap();
        let v = t.value(y).clone();
        assert_eq!(v.at(0, 1), 0.0);
        assert_eq!(v.at(0, 0), 1.0);
        let s = t.select(y, 3 + 1).unwrap();
        let g = t.backward(s).unwrap();
        let gx = g.get(x).unwrap();
        assert_eq!(gx.at(1, 2), 0.0);
        assert_eq!(gx.at(0, 0), 0.0);
    }

    /// Every op kind against central differences on random points, with a
    /// random linear readout so the scalar output depends on every entry.
    #[test]
    fn every_op_matches_finite_differences() {
        type Build = Box<dyn Fn(&mut Tape, NodeId, &Tensor) -> crate::error::Result<NodeId>>;
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let cases: Vec<(&str, Vec<usize>, (f64, f64), Build)> = vec![
            ("matmul_left", vec![3, 4], (-1.0, 1.0), Box::new(|t, x, c| {
                let w = t.constant(c.rows_slice(0, 4).reshape(vec![4, 4]).unwrap());
                t.matmul(x, w)
            })),
            ("matmul_right", vec![4, 2], (-1.0, 1.0), Box::new(|t, x, c| {
                let a = t.constant(c.rows_slice(0, 3).reshape(vec![3, 4]).unwrap());
                t.matmul(a, x)
            })),
            ("transpose", vec![2, 3], (-1.0, 1.0), Box::new(|t, x, _| t.transpose(x))),
            ("add", vec![3, 4], (-1.0, 1.0), Box::new(|t, x, _| t.add(x, x))),
            ("add_broadcast", vec![4], (-1.0, 1.0), Box::new(|t, x, c| {
                let a = t.constant(c.rows_slice(0, 3).reshape(vec![3, 4]).unwrap());
                t.add(a, x)
            })),
            ("sub", vec![3, 4], (-1.0, 1.0), Box::new(|t, x, c| {
                let a = t.constant(c.rows_slice(0, 3).reshape(vec![3, 4]).unwrap());
                t.sub(a, x)
            })),
            ("mul", vec![3, 4], (-1.0, 1.0), Box::new(|t, x, c| {
                let a = t.constant(c.rows_slice(0, 3).reshape(vec![3, 4]).unwrap());
                let p = t.mul(x, a)?;
                t.mul(p, x)
            })),
            ("mul_broadcast", vec![1, 4], (-1.0, 1.0), Box::new(|t, x, c| {
                let a = t.constant(c.rows_slice(0, 3).reshape(vec![3, 4]).unwrap());
                t.mul(a, x)
            })),
            ("scale", vec![5], (-1.0, 1.0), Box::new(|t, x, _| t.scale(x, -2.5))),
            ("sigmoid", vec![6], (-3.0, 3.0), Box::new(|t, x, _| t.sigmoid(x))),
            ("tanh", vec![6], (-2.0, 2.0), Box::new(|t, x, _| t.tanh(x))),
            ("exp", vec![6], (-2.0, 2.0), Box::new(|t, x, _| t.exp(x))),
            ("log", vec![6], (0.5, 3.0), Box::new(|t, x, _| t.log(x))),
            ("gelu", vec![6], (-3.0, 3.0), Box::new(|t, x, _| t.gelu(x))),
            ("softmax", vec![3, 4], (-2.0, 2.0), Box::new(|t, x, _| t.softmax(x))),
            ("causal_softmax", vec![4, 4], (-2.0, 2.0), Box::new(|t, x, _| t.causal_softmax(x))),
            ("log_softmax", vec![3, 4], (-2.0, 2.0), Box::new(|t, x, _| t.log_softmax(x))),
            ("layer_norm", vec![3, 5], (-2.0, 2.0), Box::new(|t, x, _| t.layer_norm(x))),
            ("concat_rows", vec![2, 3], (-1.0, 1.0), Box::new(|t, x, _| {
                let y = t.tanh(x)?;
                t.concat_rows(&[x, y])
            })),
            ("concat_cols", vec![2, 3], (-1.0, 1.0), Box::new(|t, x, _| {
                let y = t.exp(x)?;
                t.concat_cols(&[y, x])
            })),
            ("slice_rows", vec![4, 3], (-1.0, 1.0), Box::new(|t, x, _| t.slice_rows(x, 1, 3))),
            ("slice_cols", vec![3, 5], (-1.0, 1.0), Box::new(|t, x, _| t.slice_cols(x, 2, 4))),
            ("gather", vec![5, 3], (-1.0, 1.0), Box::new(|t, x, _| t.gather(x, vec![4, 0, 4, 2]))),
            ("select", vec![3, 3], (-1.0, 1.0), Box::new(|t, x, _| {
                let s = t.select(x, 5)?;
                t.mul(s, s)
            })),
            ("pick_rows", vec![3, 4], (-1.0, 1.0), Box::new(|t, x, _| t.pick_rows(x, vec![3, 0, 1]))),
            ("sum", vec![2, 3], (-1.0, 1.0), Box::new(|t, x, _| {
                let e = t.exp(x)?;
                t.sum(e)
            })),
            ("mean", vec![2, 3], (-1.0, 1.0), Box::new(|t, x, _| {
                let e = t.sigmoid(x)?;
                t.mean(e)
            })),
        ];

        for (name, shape, (lo, hi), build) in &cases {
            for _ in 0..20 {
                let point = random(&mut rng, shape, *lo, *hi);
                let consts = random(&mut rng, &[8, 4], -1.0, 1.0);
                let err = gradient_check(
                    |t, x| {
                        let y = build(t, x, &consts)?;
                        // Random readout of whatever shape the op produced.
                        let n = t.value(y).len();
                        let mut r = ChaCha8Rng::seed_from_u64(n as u64 + 17);
                        let w: Vec<f64> = (0..n).map(|_| r.random_range(0.5..1.5)).collect();
                        let w = t.constant(Tensor::new(t.value(y).shape().to_vec(), w)?);
                        let p = t.mul(y, w)?;
                        t.sum(p)
                    },
                    &point,
                    DEFAULT_EPSILON,
                )
                .unwrap();
                assert!(err < 1e-6, "{name}: relative error {err}");
            }
        }
    }
}
