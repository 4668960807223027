#![allow(clippy::needless_range_loop)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use super::*;
use crate::mat::Mat;

fn rng(seed: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed)
}

fn random_mat<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Mat {
    Mat::from_vec(
        rows,
        cols,
        (0..rows * cols)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect(),
    )
}

#[test]
fn matmul_hand_multiplication() {
    let tape = Tape::new();
    let a = tape.constant(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
    let b = tape.constant(2, 1, vec![1.0, 1.0]).unwrap();
    let c = a.matmul(b).unwrap();
    assert_eq!(c.value(), vec![3.0, 7.0]);
}

#[test]
fn matmul_identity_is_noop() {
    let mut r = rng(1);
    let a = random_mat(3, 4, &mut r);
    let tape = Tape::new();
    let t = tape.leaf_from(&a, false).unwrap();
    let id = tape.leaf_from(&Mat::identity(4), false).unwrap();
    assert_eq!(t.matmul(id).unwrap().value(), a.data());
}

#[test]
fn matmul_shape_mismatch_names_both_shapes() {
    let tape = Tape::new();
    let a = tape.zeros(2, 3).unwrap();
    let b = tape.zeros(2, 2).unwrap();
    let err = a.matmul(b).unwrap_err();
    let msg = err.to_string();
    assert!(
        msg.contains("2x3") && msg.contains("2x2"),
        "message was {msg}"
    );
}

#[test]
fn matmul_gradients_match_finite_differences() {
    let mut r = rng(2);
    let a = random_mat(3, 4, &mut r);
    let b = random_mat(4, 2, &mut r);
    let y = random_mat(3, 2, &mut r);
    let report = grad_check::<TensorError, _>(
        &[("a".into(), a), ("b".into(), b)],
        |tape, leaves| {
            let target = tape.leaf_from(&y, false)?;
            leaves[0].matmul(leaves[1])?.mse_loss(target)
        },
        &GradCheckConfig::default(),
    )
    .unwrap();
    assert!(report.max_rel_err < 1e-6, "rel err {}", report.max_rel_err);
}

#[test]
fn matmul_associativity() {
    let mut r = rng(3);
    for _ in 0..20 {
        let a = random_mat(3, 4, &mut r);
        let b = random_mat(4, 5, &mut r);
        let c = random_mat(5, 2, &mut r);
        let left = a.matmul(&b).matmul(&c);
        let right = a.matmul(&b.matmul(&c));
        for (x, y) in left.data().iter().zip(right.data()) {
            assert!((x - y).abs() < 1e-9);
        }
    }
}

#[test]
fn activation_definitions() {
    let tape = Tape::new();
    let x = tape.constant(1, 3, vec![-2.0, 0.0, 0.5]).unwrap();
    let leaky = x.activation(Activation::LeakyRelu(0.1)).unwrap().value();
    assert!((leaky[0] + 0.2).abs() < 1e-15);
    let sig = x.activation(Activation::Sigmoid).unwrap().value();
    assert_eq!(sig[1], 0.5);
    let tanh = x.activation(Activation::Tanh).unwrap().value();
    assert_eq!(tanh[1], 0.0);
    let ident = x.activation(Activation::Identity).unwrap().value();
    assert_eq!(ident, x.value());
}

#[test]
fn leaky_relu_requires_positive_slope() {
    let tape = Tape::new();
    let x = tape.zeros(1, 1).unwrap();
    assert!(matches!(
        x.activation(Activation::LeakyRelu(0.0)),
        Err(TensorError::BadLeakySlope { .. })
    ));
}

#[test]
fn tanh_gradient_matches_finite_differences() {
    let x = Mat::from_vec(1, 1, vec![0.3]);
    let report = grad_check::<TensorError, _>(
        &[("x".into(), x)],
        |tape, leaves| {
            let zero = tape.constant(1, 1, vec![0.0])?;
            leaves[0].activation(Activation::Tanh)?.mse_loss(zero)
        },
        &GradCheckConfig::default(),
    )
    .unwrap();
    assert!(report.max_rel_err < 1e-6, "rel err {}", report.max_rel_err);
}

#[test]
fn mse_zero_for_equal_inputs() {
    let tape = Tape::new();
    let p = tape.constant(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
    let t = tape.constant(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
    assert_eq!(p.mse_loss(t).unwrap().scalar_value().unwrap(), 0.0);
}

#[test]
fn mse_hand_value() {
    let tape = Tape::new();
    let p = tape.constant(1, 2, vec![1.0, 2.0]).unwrap();
    let t = tape.constant(1, 2, vec![0.0, 0.0]).unwrap();
    assert_eq!(p.mse_loss(t).unwrap().scalar_value().unwrap(), 2.5);
}

#[test]
fn mse_matches_two_loop_accumulation_oracle() {
    let mut r = rng(4);
    let p = random_mat(4, 8, &mut r);
    let t = random_mat(4, 8, &mut r);
    // Independent oracle: explicit two-loop accumulation.
    let mut acc = 0.0;
    for i in 0..4 {
        for j in 0..8 {
            let d = p.get(i, j) - t.get(i, j);
            acc += d * d;
        }
    }
    let expected = acc / 32.0;
    let tape = Tape::new();
    let pt = tape.leaf_from(&p, false).unwrap();
    let tt = tape.leaf_from(&t, false).unwrap();
    let got = pt.mse_loss(tt).unwrap().scalar_value().unwrap();
    assert!((got - expected).abs() < 1e-12);
}

#[test]
fn mse_rejects_grad_target() {
    let tape = Tape::new();
    let p = tape.leaf(1, 2, vec![1.0, 2.0], true).unwrap();
    let t = tape.leaf(1, 2, vec![0.0, 0.0], true).unwrap();
    assert!(matches!(
        p.mse_loss(t),
        Err(TensorError::TargetRequiresGrad)
    ));
}

#[test]
fn reduce_mean_rows() {
    let tape = Tape::new();
    let x = tape.constant(2, 2, vec![1.0, 3.0, 5.0, 7.0]).unwrap();
    assert_eq!(
        x.reduce(ReduceKind::Mean, 0).unwrap().value(),
        vec![3.0, 5.0]
    );
}

#[test]
fn reduce_sum_of_zeros() {
    let tape = Tape::new();
    let x = tape.zeros(3, 3).unwrap();
    let s = x
        .reduce(ReduceKind::Sum, 0)
        .unwrap()
        .reduce(ReduceKind::Sum, 1)
        .unwrap();
    assert_eq!(s.scalar_value().unwrap(), 0.0);
}

#[test]
fn reduce_axis_out_of_range() {
    let tape = Tape::new();
    let x = tape.zeros(2, 2).unwrap();
    assert!(matches!(
        x.reduce(ReduceKind::Mean, 2),
        Err(TensorError::AxisOutOfRange { .. })
    ));
}

#[test]
fn reduce_mean_gradient_spreads_one_over_n() {
    let x = Mat::from_vec(3, 2, vec![0.1, 0.4, -0.2, 0.8, 0.5, -0.6]);
    let report = grad_check::<TensorError, _>(
        &[("x".into(), x)],
        |tape, leaves| {
            let target = tape.constant(1, 2, vec![0.0, 0.0])?;
            leaves[0].reduce(ReduceKind::Mean, 0)?.mse_loss(target)
        },
        &GradCheckConfig::default(),
    )
    .unwrap();
    assert!(report.max_rel_err < 1e-6, "rel err {}", report.max_rel_err);
}

#[test]
fn softmax_constant_row_is_uniform() {
    let tape = Tape::new();
    let x = tape.constant(1, 4, vec![2.5; 4]).unwrap();
    for v in x.softmax(1).unwrap().value() {
        assert!((v - 0.25).abs() < 1e-15);
    }
}

#[test]
fn softmax_closed_form() {
    let tape = Tape::new();
    let x = tape.constant(1, 2, vec![0.0, 3.0f64.ln()]).unwrap();
    let y = x.softmax(1).unwrap().value();
    assert!((y[0] - 0.25).abs() < 1e-12);
    assert!((y[1] - 0.75).abs() < 1e-12);
}

#[test]
fn softmax_rows_sum_to_one_and_stay_in_unit_interval() {
    let mut r = rng(5);
    for _ in 0..50 {
        let x = random_mat(3, 5, &mut r);
        let tape = Tape::new();
        let y = tape
            .leaf_from(&x, false)
            .unwrap()
            .softmax(1)
            .unwrap()
            .value_mat();
        for i in 0..3 {
            let sum: f64 = y.row(i).iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
            for &v in y.row(i) {
                assert!(v > 0.0 && v < 1.0);
            }
        }
    }
}

#[test]
fn layer_norm_standardized_row_is_unchanged() {
    // Row with mean 0 and biased variance 1 already.
    let s = (2.0f64 / 3.0).sqrt();
    let row = vec![-s * 1.5, 0.0, s * 1.5];
    let mean: f64 = row.iter().sum::<f64>() / 3.0;
    let var: f64 = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 3.0;
    assert!((var - 1.0).abs() < 1e-12 && mean.abs() < 1e-12);

    let tape = Tape::new();
    let x = tape.constant(1, 3, row.clone()).unwrap();
    let gain = tape.constant(1, 3, vec![1.0; 3]).unwrap();
    let bias = tape.constant(1, 3, vec![0.0; 3]).unwrap();
    let y = x.layer_norm(gain, bias).unwrap().value();
    for (a, b) in y.iter().zip(&row) {
        assert!((a - b).abs() < 1e-10);
    }
}

#[test]
fn layer_norm_standardizes_before_affine() {
    let mut r = rng(6);
    let x = random_mat(4, 6, &mut r);
    let tape = Tape::new();
    let xt = tape.leaf_from(&x, false).unwrap();
    let gain = tape.constant(1, 6, vec![1.0; 6]).unwrap();
    let bias = tape.constant(1, 6, vec![0.0; 6]).unwrap();
    let y = xt.layer_norm(gain, bias).unwrap().value_mat();
    for i in 0..4 {
        let mean: f64 = y.row(i).iter().sum::<f64>() / 6.0;
        let var: f64 = y
            .row(i)
            .iter()
            .map(|v| (v - mean) * (v - mean))
            .sum::<f64>()
            / 6.0;
        assert!(mean.abs() < 1e-10);
        assert!((var - 1.0).abs() < 1e-10);
    }
}

#[test]
fn backward_square_gradient() {
    let tape = Tape::new();
    let x = tape.leaf(1, 1, vec![3.0], true).unwrap();
    let loss = x.mul(x).unwrap();
    loss.backward().unwrap();
    assert_eq!(x.grad().unwrap(), vec![6.0]);
}

#[test]
fn backward_populates_both_inputs_of_linear_mse() {
    let mut r = rng(7);
    let x = random_mat(2, 3, &mut r);
    let m = random_mat(3, 4, &mut r);
    let y = random_mat(2, 4, &mut r);
    let report = grad_check::<TensorError, _>(
        &[("x".into(), x), ("m".into(), m)],
        |tape, leaves| {
            let target = tape.leaf_from(&y, false)?;
            leaves[0].matmul(leaves[1])?.mse_loss(target)
        },
        &GradCheckConfig::default(),
    )
    .unwrap();
    assert!(report.max_rel_err < 1e-5, "rel err {}", report.max_rel_err);
}

#[test]
fn leaf_without_requires_grad_has_no_gradient() {
    let tape = Tape::new();
    let x = tape.leaf(1, 1, vec![2.0], true).unwrap();
    let c = tape.leaf(1, 1, vec![5.0], false).unwrap();
    let loss = x.mul(c).unwrap();
    loss.backward().unwrap();
    assert!(c.grad().is_none());
    assert_eq!(x.grad().unwrap(), vec![5.0]);
}

#[test]
fn backward_twice_is_an_error() {
    let tape = Tape::new();
    let x = tape.leaf(1, 1, vec![2.0], true).unwrap();
    let loss = x.mul(x).unwrap();
    loss.backward().unwrap();
    assert!(matches!(loss.backward(), Err(TensorError::TapeConsumed)));
}

#[test]
fn backward_rejects_non_scalar_and_detached_losses() {
    let tape = Tape::new();
    let x = tape.leaf(1, 2, vec![1.0, 2.0], true).unwrap();
    assert!(matches!(
        x.backward(),
        Err(TensorError::NonScalarLoss { .. })
    ));

    let tape = Tape::new();
    let c = tape.constant(1, 1, vec![1.0]).unwrap();
    let d = c.mul(c).unwrap();
    assert!(matches!(d.backward(), Err(TensorError::DetachedLoss)));
}

#[test]
fn backward_is_bit_deterministic() {
    let mut r = rng(8);
    let x = random_mat(3, 3, &mut r);
    let m = random_mat(3, 3, &mut r);
    let y = random_mat(3, 3, &mut r);
    let run = || {
        let tape = Tape::new();
        let xt = tape.leaf_from(&x, true).unwrap();
        let mt = tape.leaf_from(&m, true).unwrap();
        let yt = tape.leaf_from(&y, false).unwrap();
        let h = xt.matmul(mt).unwrap().activation(Activation::Tanh).unwrap();
        h.mse_loss(yt).unwrap().backward().unwrap();
        (xt.grad().unwrap(), mt.grad().unwrap())
    };
    let (gx1, gm1) = run();
    let (gx2, gm2) = run();
    assert!(gx1
        .iter()
        .zip(&gx2)
        .all(|(a, b)| a.to_bits() == b.to_bits()));
    assert!(gm1
        .iter()
        .zip(&gm2)
        .all(|(a, b)| a.to_bits() == b.to_bits()));
}

#[test]
fn leaf_rejects_non_finite_values() {
    let tape = Tape::new();
    assert!(matches!(
        tape.leaf(1, 2, vec![1.0, f64::NAN], false),
        Err(TensorError::NonFinite { .. })
    ));
    assert!(matches!(
        tape.leaf(1, 2, vec![1.0], false),
        Err(TensorError::DataLength { .. })
    ));
}

#[test]
fn seq_last_reads_true_last_step() {
    let tape = Tape::new();
    let s0 = tape.constant(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
    let s1 = tape.constant(2, 2, vec![5.0, 6.0, 7.0, 8.0]).unwrap();
    let out = tape.seq_last(&[s0, s1], &[1, 2]).unwrap();
    assert_eq!(out.value(), vec![1.0, 2.0, 7.0, 8.0]);
}

#[test]
fn seq_mean_averages_true_length_only() {
    let tape = Tape::new();
    let s0 = tape.constant(2, 1, vec![2.0, 4.0]).unwrap();
    let s1 = tape.constant(2, 1, vec![6.0, 0.0]).unwrap();
    let out = tape.seq_mean(&[s0, s1], &[2, 1]).unwrap();
    assert_eq!(out.value(), vec![4.0, 4.0]);
}

#[test]
fn seq_ops_validate_lengths() {
    let tape = Tape::new();
    let s0 = tape.zeros(2, 2).unwrap();
    assert!(tape.seq_last(&[s0], &[1, 2]).is_err());
    assert!(tape.seq_last(&[s0], &[0, 1]).is_err());
    assert!(tape.seq_last(&[], &[]).is_err());
}

/// One finite-difference check per op kind, on random small shapes.
#[test]
fn every_differentiable_op_matches_finite_differences() {
    type Builder = for<'t> fn(&'t Tape, &[Tensor<'t>]) -> Result<Tensor<'t>, TensorError>;
    let mut r = rng(9);
    let cases: Vec<(&str, Vec<Mat>, Builder)> = vec![
        (
            "add",
            vec![random_mat(3, 4, &mut r), random_mat(3, 4, &mut r)],
            |tape, l| {
                let y = tape.zeros(3, 4)?;
                l[0].add(l[1])?.mse_loss(y)
            },
        ),
        (
            "add_bias",
            vec![random_mat(3, 4, &mut r), random_mat(1, 4, &mut r)],
            |tape, l| {
                let y = tape.zeros(3, 4)?;
                l[0].add_bias(l[1])?.mse_loss(y)
            },
        ),
        (
            "mul",
            vec![random_mat(3, 4, &mut r), random_mat(3, 4, &mut r)],
            |tape, l| {
                let y = tape.zeros(3, 4)?;
                l[0].mul(l[1])?.mse_loss(y)
            },
        ),
        ("affine", vec![random_mat(2, 3, &mut r)], |tape, l| {
            let y = tape.zeros(2, 3)?;
            l[0].affine(-1.0, 1.0)?.mse_loss(y)
        }),
        ("tanh", vec![random_mat(2, 3, &mut r)], |tape, l| {
            let y = tape.zeros(2, 3)?;
            l[0].activation(Activation::Tanh)?.mse_loss(y)
        }),
        ("sigmoid", vec![random_mat(2, 3, &mut r)], |tape, l| {
            let y = tape.zeros(2, 3)?;
            l[0].activation(Activation::Sigmoid)?.mse_loss(y)
        }),
        ("relu", vec![random_mat(2, 3, &mut r)], |tape, l| {
            let y = tape.zeros(2, 3)?;
            l[0].activation(Activation::Relu)?.mse_loss(y)
        }),
        ("leaky_relu", vec![random_mat(2, 3, &mut r)], |tape, l| {
            let y = tape.zeros(2, 3)?;
            l[0].activation(Activation::LeakyRelu(0.1))?.mse_loss(y)
        }),
        (
            "reduce_mean_axis1",
            vec![random_mat(3, 4, &mut r)],
            |tape, l| {
                let y = tape.zeros(3, 1)?;
                l[0].reduce(ReduceKind::Mean, 1)?.mse_loss(y)
            },
        ),
        (
            "reduce_sum_axis0",
            vec![random_mat(3, 4, &mut r)],
            |tape, l| {
                let y = tape.zeros(1, 4)?;
                l[0].reduce(ReduceKind::Sum, 0)?.mse_loss(y)
            },
        ),
        (
            "softmax_axis1",
            vec![random_mat(3, 4, &mut r)],
            |tape, l| {
                let y = tape.zeros(3, 4)?;
                l[0].softmax(1)?.mse_loss(y)
            },
        ),
        (
            "softmax_axis0",
            vec![random_mat(3, 4, &mut r)],
            |tape, l| {
                let y = tape.zeros(3, 4)?;
                l[0].softmax(0)?.mse_loss(y)
            },
        ),
        (
            "layer_norm",
            vec![
                random_mat(3, 4, &mut r),
                random_mat(1, 4, &mut r),
                random_mat(1, 4, &mut r),
            ],
            |tape, l| {
                let y = tape.zeros(3, 4)?;
                l[0].layer_norm(l[1], l[2])?.mse_loss(y)
            },
        ),
        ("transpose", vec![random_mat(2, 5, &mut r)], |tape, l| {
            let y = tape.zeros(5, 2)?;
            l[0].transpose()?.mse_loss(y)
        }),
        ("slice_cols", vec![random_mat(3, 5, &mut r)], |tape, l| {
            let y = tape.zeros(3, 2)?;
            l[0].slice_cols(1, 2)?.mse_loss(y)
        }),
        (
            "concat_rows",
            vec![random_mat(2, 3, &mut r), random_mat(1, 3, &mut r)],
            |tape, l| {
                let y = tape.zeros(3, 3)?;
                tape.concat_rows(&[l[0], l[1]])?.mse_loss(y)
            },
        ),
        (
            "concat_cols",
            vec![random_mat(2, 2, &mut r), random_mat(2, 3, &mut r)],
            |tape, l| {
                let y = tape.zeros(2, 5)?;
                tape.concat_cols(&[l[0], l[1]])?.mse_loss(y)
            },
        ),
        (
            "seq_last",
            vec![random_mat(2, 3, &mut r), random_mat(2, 3, &mut r)],
            |tape, l| {
                let y = tape.zeros(2, 3)?;
                tape.seq_last(&[l[0], l[1]], &[1, 2])?.mse_loss(y)
            },
        ),
        (
            "seq_mean",
            vec![random_mat(2, 3, &mut r), random_mat(2, 3, &mut r)],
            |tape, l| {
                let y = tape.zeros(2, 3)?;
                tape.seq_mean(&[l[0], l[1]], &[2, 1])?.mse_loss(y)
            },
        ),
    ];

    for (name, mats, build) in cases {
        let blocks: Vec<(String, Mat)> = mats
            .into_iter()
            .enumerate()
            .map(|(i, m)| (format!("{name}.{i}"), m))
            .collect();
        let report = grad_check::<TensorError, _>(&blocks, build, &GradCheckConfig::default())
            .unwrap_or_else(|e| panic!("{name}: {e}"));
        assert!(
            report.max_rel_err < 1e-4,
            "{name}: rel err {} at {}[{}]",
            report.max_rel_err,
            report.worst_block,
            report.worst_coord
        );
    }
}

/// A full LSTM step expressed directly in tape ops, all 8 weight blocks.
#[test]
fn lstm_step_gradients_within_tolerance() {
    let mut r = rng(10);
    let (input, hidden) = (3, 4);
    let names = ["wi", "ui", "wf", "uf", "wg", "ug", "wo", "uo"];
    let blocks: Vec<(String, Mat)> = names
        .iter()
        .enumerate()
        .map(|(k, n)| {
            let rows = if k % 2 == 0 { input } else { hidden };
            (n.to_string(), random_mat(rows, hidden, &mut r))
        })
        .collect();
    let x = random_mat(2, input, &mut r);
    let h0 = random_mat(2, hidden, &mut r);
    let c0 = random_mat(2, hidden, &mut r);
    let y = random_mat(2, hidden, &mut r);

    let report = grad_check::<TensorError, _>(
        &blocks,
        move |tape, l| {
            let xt = tape.leaf_from(&x, false)?;
            let h = tape.leaf_from(&h0, false)?;
            let c = tape.leaf_from(&c0, false)?;
            let i = xt
                .matmul(l[0])?
                .add(h.matmul(l[1])?)?
                .activation(Activation::Sigmoid)?;
            let f = xt
                .matmul(l[2])?
                .add(h.matmul(l[3])?)?
                .activation(Activation::Sigmoid)?;
            let g = xt
                .matmul(l[4])?
                .add(h.matmul(l[5])?)?
                .activation(Activation::Tanh)?;
            let o = xt
                .matmul(l[6])?
                .add(h.matmul(l[7])?)?
                .activation(Activation::Sigmoid)?;
            let c1 = f.mul(c)?.add(i.mul(g)?)?;
            let h1 = o.mul(c1.activation(Activation::Tanh)?)?;
            let target = tape.leaf_from(&y, false)?;
            h1.mse_loss(target)
        },
        &GradCheckConfig::default(),
    )
    .unwrap();
    assert!(report.max_rel_err < 1e-4, "rel err {}", report.max_rel_err);
}
