use super::gradcheck::finite_difference_check;
use super::optim::{OptimKind, Optimizer, ParamRef};
use super::svd::{numerical_rank, singular_values};
use super::{Tape, Tensor};
use crate::error::Error;
use crate::rng::{standard_normal, substream};

fn t64(shape: &[usize], data: &[f64]) -> Tensor<f64> {
    Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
}

fn random_t64(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut rng = substream(seed, "test-tensor");
    let n: usize = shape.iter().product();
    let data: Vec<f64> = (0..n).map(|_| standard_normal(&mut rng)).collect();
    t64(shape, &data)
}

#[test]
fn matmul_identity_and_hand_values() {
    let mut tape = Tape::new();
    let eye = t64(&[2, 2], &[1.0, 0.0, 0.0, 1.0]);
    let m = t64(&[2, 2], &[1.0, 2.0, 3.0, 4.0]);
    assert_eq!(tape.matmul(&eye, &m).unwrap().data(), m.data());

    // 1*3 + 2*4 = 11
    let a = t64(&[1, 2], &[1.0, 2.0]);
    let b = t64(&[2, 1], &[3.0, 4.0]);
    assert_eq!(tape.matmul(&a, &b).unwrap().data(), &[11.0]);

    let zero = Tensor::<f64>::zeros(vec![2, 2]);
    let out = tape.matmul(&zero, &m).unwrap();
    assert!(out.data().iter().all(|&v| v == 0.0));
}

#[test]
fn matmul_shape_mismatch_names_both_shapes() {
    let mut tape = Tape::new();
    let a = t64(&[2, 3], &[0.0; 6]);
    let b = t64(&[2, 2], &[0.0; 4]);
    match tape.matmul(&a, &b) {
        Err(Error::ShapeMismatch { left, right, .. }) => {
            assert_eq!(left, vec![2, 3]);
            assert_eq!(right, vec![2, 2]);
        }
        other => panic!("expected shape mismatch, got {other:?}"),
    }
}

#[test]
fn layernorm_matches_hand_cases() {
    let mut tape = Tape::new();
    let gain = t64(&[3], &[1.0; 3]);
    let bias = t64(&[3], &[0.0; 3]);
    let x = t64(&[1, 3], &[1.0, 1.0, 1.0]);
    let y = tape.layernorm(&x, &gain, &bias, 1e-5).unwrap();
    assert!(y.data().iter().all(|&v| v.abs() < 1e-9));

    // mean 0, population variance 1 already: unchanged as eps -> 0
    let gain2 = t64(&[2], &[1.0; 2]);
    let bias2 = t64(&[2], &[0.0; 2]);
    let x2 = t64(&[1, 2], &[1.0, -1.0]);
    let y2 = tape.layernorm(&x2, &gain2, &bias2, 1e-12).unwrap();
    assert!((y2.data()[0] - 1.0).abs() < 1e-9);
    assert!((y2.data()[1] + 1.0).abs() < 1e-9);

    // [2,4] normalizes to [-1,1]; bias 5 shifts to [4,6]
    let bias5 = t64(&[2], &[5.0, 5.0]);
    let x3 = t64(&[1, 2], &[2.0, 4.0]);
    let y3 = tape.layernorm(&x3, &gain2, &bias5, 1e-12).unwrap();
    assert!((y3.data()[0] - 4.0).abs() < 1e-9);
    assert!((y3.data()[1] - 6.0).abs() < 1e-9);
}

#[test]
fn cross_entropy_matches_hand_cases() {
    let mut tape = Tape::new();
    // uniform over 4 classes
    let logits = t64(&[1, 4], &[0.3; 4]);
    let loss = tape.softmax_cross_entropy(&logits, &[2]).unwrap();
    assert!((loss.item() - 4.0f64.ln()).abs() < 1e-12);

    // large margin on the target drives loss to zero
    let confident = t64(&[1, 3], &[40.0, 0.0, 0.0]);
    let loss = tape.softmax_cross_entropy(&confident, &[0]).unwrap();
    assert!(loss.item() < 1e-12);

    // p(target) = 1 / (1 + 3) -> loss = ln 4
    let two = t64(&[1, 2], &[0.0, 3.0f64.ln()]);
    let loss = tape.softmax_cross_entropy(&two, &[0]).unwrap();
    assert!((loss.item() - 4.0f64.ln()).abs() < 1e-12);

    assert!(matches!(
        tape.softmax_cross_entropy(&two, &[5]),
        Err(Error::Index(_))
    ));
}

#[test]
fn frobenius_norm_hand_cases() {
    let mut tape = Tape::new();
    let eye3 = t64(&[3, 3], &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
    assert!((tape.frobenius_norm(&eye3).item() - 3.0f64.sqrt()).abs() < 1e-12);
    assert_eq!(tape.frobenius_norm(&Tensor::<f64>::zeros(vec![2, 2])).item(), 0.0);
    let m = t64(&[2, 2], &[3.0, 4.0, 0.0, 0.0]);
    assert!((tape.frobenius_norm(&m).item() - 5.0).abs() < 1e-12);
}

#[test]
fn singular_values_hand_cases() {
    let d = t64(&[2, 2], &[3.0, 0.0, 0.0, 1.0]);
    let sv = singular_values(&d).unwrap();
    assert!((sv[0] - 3.0).abs() < 1e-10 && (sv[1] - 1.0).abs() < 1e-10);

    // rotation by 0.7 rad is orthogonal: both singular values are 1
    let (c, s) = (0.7f64.cos(), 0.7f64.sin());
    let rot = t64(&[2, 2], &[c, -s, s, c]);
    for v in singular_values(&rot).unwrap() {
        assert!((v - 1.0).abs() < 1e-10);
    }

    // M^T M eigenvalues are 4 and 0
    let n = t64(&[2, 2], &[0.0, 2.0, 0.0, 0.0]);
    let sv = singular_values(&n).unwrap();
    assert!((sv[0] - 2.0).abs() < 1e-10 && sv[1].abs() < 1e-10);

    let big = Tensor::<f64>::zeros(vec![65, 2]);
    assert!(matches!(singular_values(&big), Err(Error::Size(_))));
}

#[test]
fn frobenius_nuclear_sandwich_on_random_matrices() {
    for seed in 0..25u64 {
        let mut rng = substream(seed, "sandwich");
        let rows = 1 + (seed as usize % 6);
        let cols = 1 + ((seed as usize * 7) % 6);
        let data: Vec<f64> = (0..rows * cols).map(|_| standard_normal(&mut rng)).collect();
        let m = t64(&[rows, cols], &data);
        let sv = singular_values(&m).unwrap();
        let nuclear: f64 = sv.iter().sum();
        let frob = {
            let mut tape = Tape::new();
            tape.frobenius_norm(&m).item()
        };
        let rank = numerical_rank(&sv, 1e-10);
        assert!(frob <= nuclear + 1e-9, "frob {frob} nuclear {nuclear}");
        assert!(nuclear <= (rank as f64).sqrt() * frob + 1e-9);
        let sq_sum: f64 = sv.iter().map(|s| s * s).sum();
        assert!((frob * frob - sq_sum).abs() <= 1e-9 * (frob * frob).max(1.0));
    }
}

#[test]
fn backward_square_gives_two_w() {
    let mut tape = Tape::new();
    let mut w = Tensor::scalar(3.0f64).with_requires_grad(true);
    tape.watch(&mut w);
    let y = tape.mul(&w, &w).unwrap();
    tape.backward(&y).unwrap();
    tape.write_grad(&mut w);
    assert_eq!(w.grad().unwrap(), &[6.0]);
}

#[test]
fn backward_layernorm_of_constant_row_has_zero_gradient() {
    // sum(layernorm(x)) over a constant row: output pinned at bias, so the
    // finite-difference oracle agrees the gradient vanishes.
    let gain = t64(&[4], &[1.0; 4]);
    let bias = t64(&[4], &[0.0; 4]);
    let x = t64(&[1, 4], &[2.5; 4]);
    let mut tape = Tape::new();
    let mut xt = x.clone().with_requires_grad(true);
    tape.watch(&mut xt);
    let y = tape.layernorm(&xt, &gain, &bias, 1e-5).unwrap();
    let loss = tape.sum(&y);
    tape.backward(&loss).unwrap();
    let g = tape.grad(&xt).unwrap();
    assert!(g.iter().all(|&v| v.abs() < 1e-9), "grad {g:?}");

    // Central-difference oracle, absolute comparison: the loss is identically
    // sum(bias) so the numeric gradient is cancellation noise around zero.
    let h = 1e-4;
    let eval = |data: &[f64]| {
        let mut t = Tape::new();
        let probe = t64(&[1, 4], data);
        let y = t.layernorm(&probe, &gain, &bias, 1e-5).unwrap();
        t.sum(&y).item()
    };
    let mut probe = x.data().to_vec();
    for i in 0..probe.len() {
        let orig = probe[i];
        probe[i] = orig + h;
        let plus = eval(&probe);
        probe[i] = orig - h;
        let minus = eval(&probe);
        probe[i] = orig;
        let numeric = (plus - minus) / (2.0 * h);
        assert!(numeric.abs() < 1e-6, "numeric grad {numeric}");
    }
}

#[test]
fn backward_skips_disconnected_tensors() {
    let mut tape = Tape::new();
    let mut used = Tensor::scalar(2.0f64).with_requires_grad(true);
    let mut unused = Tensor::scalar(5.0f64).with_requires_grad(true);
    tape.watch(&mut used);
    tape.watch(&mut unused);
    let y = tape.mul(&used, &used).unwrap();
    tape.backward(&y).unwrap();
    tape.write_grad(&mut unused);
    assert!(unused.grad().is_none());
    assert!(tape.grad(&unused).is_none());
}

#[test]
fn backward_requires_scalar_loss() {
    let mut tape = Tape::new();
    let mut v = t64(&[2], &[1.0, 2.0]).with_requires_grad(true);
    tape.watch(&mut v);
    let y = tape.scale(&v, 2.0);
    assert!(matches!(tape.backward(&y), Err(Error::State(_))));
}

#[test]
fn gradient_accumulation_is_additive() {
    // backward(L1) then backward(L2) must equal backward(L1 + L2).
    let x = random_t64(&[3, 3], 11);
    let run_two = {
        let mut tape = Tape::new();
        let mut xt = x.clone().with_requires_grad(true);
        tape.watch(&mut xt);
        let l1 = tape.sum(&xt);
        let sq = tape.mul(&xt, &xt).unwrap();
        let l2 = tape.sum(&sq);
        tape.backward(&l1).unwrap();
        tape.backward(&l2).unwrap();
        tape.grad(&xt).unwrap().to_vec()
    };
    let run_joint = {
        let mut tape = Tape::new();
        let mut xt = x.clone().with_requires_grad(true);
        tape.watch(&mut xt);
        let l1 = tape.sum(&xt);
        let sq = tape.mul(&xt, &xt).unwrap();
        let l2 = tape.sum(&sq);
        let total = tape.add(&l1, &l2).unwrap();
        tape.backward(&total).unwrap();
        tape.grad(&xt).unwrap().to_vec()
    };
    for (a, b) in run_two.iter().zip(run_joint.iter()) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn cleared_tape_invalidates_node_ids() {
    let mut tape = Tape::new();
    let mut w = Tensor::scalar(3.0f64).with_requires_grad(true);
    tape.watch(&mut w);
    let y = tape.mul(&w, &w).unwrap();
    tape.clear();
    assert!(tape.backward(&y).is_err());
    assert!(tape.grad(&w).is_none());
}

#[test]
fn sgd_step_matches_hand_value() {
    let mut w = Tensor::scalar(1.0f64).with_requires_grad(true);
    w.grad = Some(vec![2.0]);
    let mut opt = Optimizer::new(OptimKind::Sgd, 0.1);
    opt.step([ParamRef { slot: 0, tensor: &mut w, trainable: true }]).unwrap();
    assert!((w.item() - 0.8).abs() < 1e-12);
    assert!(w.grad().is_none(), "gradients cleared after step");
}

#[test]
fn frozen_parameter_is_untouched() {
    let mut w = Tensor::scalar(1.0f64).with_requires_grad(true);
    w.grad = Some(vec![2.0]);
    let mut opt = Optimizer::new(OptimKind::Sgd, 0.1);
    opt.step([ParamRef { slot: 0, tensor: &mut w, trainable: false }]).unwrap();
    assert_eq!(w.item(), 1.0);
    assert!(w.grad().is_none());
}

#[test]
fn adamw_first_step_matches_recurrence_oracle() {
    let (w0, g, lr) = (0.7f64, 0.3f64, 0.01f64);
    let mut w = Tensor::scalar(w0).with_requires_grad(true);
    w.grad = Some(vec![g]);
    let mut opt = Optimizer::new(OptimKind::AdamW, lr);
    opt.step([ParamRef { slot: 0, tensor: &mut w, trainable: true }]).unwrap();

    // independent single-step evaluation of the update rule
    let (b1, b2, eps, wd) = (0.9, 0.999, 1e-8, 0.01);
    let m = (1.0 - b1) * g;
    let v = (1.0 - b2) * g * g;
    let mhat = m / (1.0 - b1);
    let vhat = v / (1.0 - b2);
    let expected = w0 - lr * (mhat / (vhat.sqrt() + eps) + wd * w0);
    assert!((w.item() - expected).abs() < 1e-12);
    assert!(w.item() < w0, "positive gradient and decay both push down");
}

#[test]
fn missing_gradient_on_trainable_param_is_a_state_error() {
    let mut w = Tensor::scalar(1.0f64).with_requires_grad(true);
    let mut opt = Optimizer::new(OptimKind::Sgd, 0.1);
    let r = opt.step([ParamRef { slot: 0, tensor: &mut w, trainable: true }]);
    assert!(matches!(r, Err(Error::State(_))));
}

#[test]
fn finite_difference_on_sum_is_exact() {
    let x = random_t64(&[2, 5], 3);
    let err = finite_difference_check(|t, v| t.sum(v), &x, 1e-6);
    assert!(err < 1e-9, "sum gradient is all ones, err {err}");
}

#[test]
fn finite_difference_on_squared_frobenius_matches_2x() {
    let x = random_t64(&[4, 3], 5);
    let mut tape = Tape::new();
    let mut xt = x.clone().with_requires_grad(true);
    tape.watch(&mut xt);
    let n = tape.frobenius_norm(&xt);
    let sq = tape.mul(&n, &n).unwrap();
    tape.backward(&sq).unwrap();
    let g = tape.grad(&xt).unwrap();
    for (gi, xi) in g.iter().zip(x.data().iter()) {
        assert!((gi - 2.0 * xi).abs() < 1e-9, "analytic grad of ||x||^2 is 2x");
    }
    let err = finite_difference_check(
        |t, v| {
            let n = t.frobenius_norm(v);
            t.mul(&n, &n).unwrap()
        },
        &x,
        1e-6,
    );
    assert!(err < 1e-7, "fd err {err}");
}

#[test]
fn finite_difference_on_cross_entropy_random_logits() {
    let x = random_t64(&[4, 7], 9);
    let targets = vec![3usize, 0, 6, 2];
    let err = finite_difference_check(
        |t, v| t.softmax_cross_entropy(v, &targets).unwrap(),
        &x,
        1e-6,
    );
    assert!(err < 1e-5, "fd err {err}");
}

#[test]
fn finite_difference_on_attention_and_friends() {
    // spot checks; the acceptance suite sweeps 100 seeds
    for seed in 0..5u64 {
        let q = random_t64(&[5, 6], 100 + seed);
        let k = random_t64(&[5, 6], 200 + seed);
        let v = random_t64(&[5, 6], 300 + seed);
        let err = finite_difference_check(
            |t, probe| {
                let att = t.causal_attention(probe, &k, &v, 2).unwrap();
                t.sum(&att)
            },
            &q,
            1e-6,
        );
        assert!(err < 1e-5, "attention dq err {err}");

        let x = random_t64(&[3, 4], 400 + seed);
        let err = finite_difference_check(
            |t, probe| {
                let g = t.gelu(probe);
                t.sum(&g)
            },
            &x,
            1e-6,
        );
        assert!(err < 1e-5, "gelu err {err}");
    }
}
