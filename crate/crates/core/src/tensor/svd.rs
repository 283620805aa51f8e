//! Singular values of small matrices via one-sided Jacobi iteration.
//!
//! Validation-grade: deterministic, accurate for the <= 64x64 matrices the
//! norm-surrogate checks need, not tuned for anything larger.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const MAX_SVD_DIM: usize = 64;

/// Singular values in descending order, length min(rows, cols).
///
/// Computed in f64 regardless of the tensor's element width.
pub fn singular_values<S: Scalar>(m: &Tensor<S>) -> Result<Vec<f64>> {
    if m.shape().len() != 2 {
        return Err(Error::Dimension(format!(
            "singular_values wants a matrix, got shape {:?}",
            m.shape()
        )));
    }
    let (r, c) = (m.shape()[0], m.shape()[1]);
    if r > MAX_SVD_DIM || c > MAX_SVD_DIM {
        return Err(Error::Size(format!(
            "singular_values caps at {MAX_SVD_DIM}x{MAX_SVD_DIM}, got {r}x{c}"
        )));
    }
    if r == 0 || c == 0 {
        return Ok(Vec::new());
    }
    let data: Vec<f64> = m.data().iter().map(|&v| v.to_f64()).collect();
    // Work on a tall matrix; singular values are transpose-invariant.
    let (rows, cols, a) = if r >= c {
        (r, c, data)
    } else {
        let mut t = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                t[j * r + i] = data[i * c + j];
            }
        }
        (c, r, t)
    };
    Ok(jacobi_column_norms(a, rows, cols))
}

/// One-sided Jacobi: rotate column pairs until all are orthogonal, then the
/// column norms are the singular values.
fn jacobi_column_norms(mut a: Vec<f64>, rows: usize, cols: usize) -> Vec<f64> {
    const TOL: f64 = 1e-14;
    const MAX_SWEEPS: usize = 60;

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..cols {
            for q in (p + 1)..cols {
                let mut alpha = 0.0;
                let mut beta = 0.0;
                let mut gamma = 0.0;
                for i in 0..rows {
                    let ap = a[i * cols + p];
                    let aq = a[i * cols + q];
                    alpha += ap * ap;
                    beta += aq * aq;
                    gamma += ap * aq;
                }
                if gamma.abs() <= TOL * (alpha * beta).sqrt() || gamma == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..rows {
                    let ap = a[i * cols + p];
                    let aq = a[i * cols + q];
                    a[i * cols + p] = c * ap - s * aq;
                    a[i * cols + q] = s * ap + c * aq;
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let mut sigma: Vec<f64> = (0..cols)
        .map(|j| (0..rows).map(|i| a[i * cols + j] * a[i * cols + j]).sum::<f64>().sqrt())
        .collect();
    sigma.sort_by(|x, y| y.partial_cmp(x).expect("finite singular values"));
    sigma
}

/// Nuclear norm: the sum of singular values.
pub fn nuclear_norm<S: Scalar>(m: &Tensor<S>) -> Result<f64> {
    Ok(singular_values(m)?.iter().sum())
}

/// Numerical rank: singular values above `rel_tol * sigma_max`.
pub fn numerical_rank(sigma: &[f64], rel_tol: f64) -> usize {
    let Some(&max) = sigma.first() else { return 0 };
    if max == 0.0 {
        return 0;
    }
    sigma.iter().filter(|&&s| s > rel_tol * max).count()
}
