//! Central-difference gradient verification for the autograd engine.

use crate::scalar::Scalar;
use crate::tensor::{Tape, Tensor};

/// Absolute floor in the relative-error denominator.
pub const FD_ABS_EPS: f64 = 1e-8;

/// Compares the analytic gradient of `f` at `x` against central differences.
///
/// Returns the max over entries of `|analytic - numeric| / (|analytic| + eps)`.
/// `f` must be a pure function of its input tensor.
pub fn finite_difference_check<S, F>(f: F, x: &Tensor<S>, h: f64) -> f64
where
    S: Scalar,
    F: Fn(&mut Tape<S>, &Tensor<S>) -> Tensor<S>,
{
    let mut tape = Tape::new();
    let mut xt = x.clone().with_requires_grad(true);
    tape.watch(&mut xt);
    let loss = f(&mut tape, &xt);
    tape.backward(&loss).expect("finite_difference_check: scalar loss");
    let analytic: Vec<f64> = tape
        .grad(&xt)
        .map(|g| g.iter().map(|&v| v.to_f64()).collect())
        .unwrap_or_else(|| vec![0.0; x.numel()]);

    let eval = |data: &[S]| -> f64 {
        let mut t = Tape::new();
        let probe = Tensor::new(x.shape().to_vec(), data.to_vec()).expect("probe shape");
        f(&mut t, &probe).item().to_f64()
    };

    let mut worst = 0.0f64;
    let base = x.data().to_vec();
    let mut probe = base.clone();
    for i in 0..base.len() {
        let orig = base[i].to_f64();
        probe[i] = S::from_f64(orig + h);
        let plus = eval(&probe);
        probe[i] = S::from_f64(orig - h);
        let minus = eval(&probe);
        probe[i] = base[i];
        let numeric = (plus - minus) / (2.0 * h);
        let rel = (analytic[i] - numeric).abs() / (analytic[i].abs() + FD_ABS_EPS);
        worst = worst.max(rel);
    }
    worst
}
