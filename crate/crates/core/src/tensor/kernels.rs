//! Raw dense kernels shared by the tape ops and the cache-backed decode path.
//!
//! Loops are written accumulate-into-contiguous-row style so LLVM can
//! vectorize them; reductions that would block vectorization (dot products)
//! are reformulated through explicit transposes.

use crate::scalar::Scalar;

/// out += a @ b, a: [m,k], b: [k,n], out: [m,n]; all row-major.
pub fn matmul_acc<S: Scalar>(a: &[S], b: &[S], m: usize, k: usize, n: usize, out: &mut [S]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (kk, &aik) in arow.iter().enumerate() {
            let brow = &b[kk * n..(kk + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow.iter()) {
                *o += aik * bv;
            }
        }
    }
}

pub fn matmul<S: Scalar>(a: &[S], b: &[S], m: usize, k: usize, n: usize) -> Vec<S> {
    let mut out = vec![S::ZERO; m * n];
    matmul_acc(a, b, m, k, n, &mut out);
    out
}

/// Row-major transpose of an [rows, cols] matrix.
pub fn transpose<S: Scalar>(a: &[S], rows: usize, cols: usize) -> Vec<S> {
    debug_assert_eq!(a.len(), rows * cols);
    let mut out = vec![S::ZERO; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = a[r * cols + c];
        }
    }
    out
}

/// y = x @ w for a single row vector x: [k], w: [k,n].
pub fn vec_mat<S: Scalar>(x: &[S], w: &[S], k: usize, n: usize, out: &mut [S]) {
    debug_assert_eq!(x.len(), k);
    debug_assert_eq!(w.len(), k * n);
    debug_assert_eq!(out.len(), n);
    out.iter_mut().for_each(|o| *o = S::ZERO);
    for (kk, &xv) in x.iter().enumerate() {
        let wrow = &w[kk * n..(kk + 1) * n];
        for (o, &wv) in out.iter_mut().zip(wrow.iter()) {
            *o += xv * wv;
        }
    }
}

pub fn add_assign<S: Scalar>(dst: &mut [S], src: &[S]) {
    debug_assert_eq!(dst.len(), src.len());
    for (d, &s) in dst.iter_mut().zip(src.iter()) {
        *d += s;
    }
}

pub fn scale_assign<S: Scalar>(dst: &mut [S], c: S) {
    for d in dst.iter_mut() {
        *d *= c;
    }
}

/// Per-row normalization: returns (y, xhat, inv_std) with
/// y = gain * xhat + bias and xhat = (x - mean) / sqrt(var + eps).
/// Variance is the population variance over the row.
pub fn layernorm_fwd<S: Scalar>(
    x: &[S],
    gain: &[S],
    bias: &[S],
    eps: S,
    rows: usize,
    dim: usize,
) -> (Vec<S>, Vec<S>, Vec<S>) {
    let mut y = vec![S::ZERO; rows * dim];
    let mut xhat = vec![S::ZERO; rows * dim];
    let mut inv_std = vec![S::ZERO; rows];
    let inv_d = S::ONE / S::from_usize(dim);
    for r in 0..rows {
        let xr = &x[r * dim..(r + 1) * dim];
        let mut mean = S::ZERO;
        for &v in xr {
            mean += v;
        }
        mean *= inv_d;
        let mut var = S::ZERO;
        for &v in xr {
            let d = v - mean;
            var += d * d;
        }
        var *= inv_d;
        let istd = S::ONE / (var + eps).sqrt();
        inv_std[r] = istd;
        let xh = &mut xhat[r * dim..(r + 1) * dim];
        let yr = &mut y[r * dim..(r + 1) * dim];
        for j in 0..dim {
            let h = (xr[j] - mean) * istd;
            xh[j] = h;
            yr[j] = gain[j] * h + bias[j];
        }
    }
    (y, xhat, inv_std)
}

/// Gradient of layernorm w.r.t. its input, per row:
/// dx = istd * (dxhat - mean(dxhat) - xhat * mean(dxhat * xhat)).
pub fn layernorm_bwd_input<S: Scalar>(
    dy: &[S],
    gain: &[S],
    xhat: &[S],
    inv_std: &[S],
    rows: usize,
    dim: usize,
    dx: &mut [S],
) {
    let inv_d = S::ONE / S::from_usize(dim);
    for r in 0..rows {
        let dyr = &dy[r * dim..(r + 1) * dim];
        let xh = &xhat[r * dim..(r + 1) * dim];
        let istd = inv_std[r];
        let mut m1 = S::ZERO;
        let mut m2 = S::ZERO;
        for j in 0..dim {
            let dxh = dyr[j] * gain[j];
            m1 += dxh;
            m2 += dxh * xh[j];
        }
        m1 *= inv_d;
        m2 *= inv_d;
        let dxr = &mut dx[r * dim..(r + 1) * dim];
        for j in 0..dim {
            let dxh = dyr[j] * gain[j];
            dxr[j] += istd * (dxh - m1 - xh[j] * m2);
        }
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

pub fn gelu_fwd<S: Scalar>(x: S) -> S {
    let c = S::from_f64(GELU_C);
    let a = S::from_f64(GELU_A);
    let half = S::from_f64(0.5);
    let u = c * (x + a * x * x * x);
    half * x * (S::ONE + u.tanh())
}

pub fn gelu_grad<S: Scalar>(x: S) -> S {
    let c = S::from_f64(GELU_C);
    let a = S::from_f64(GELU_A);
    let half = S::from_f64(0.5);
    let three = S::from_f64(3.0);
    let u = c * (x + a * x * x * x);
    let t = u.tanh();
    let sech2 = S::ONE - t * t;
    half * (S::ONE + t) + half * x * sech2 * c * (S::ONE + three * a * x * x)
}

/// In-place softmax over each row of an [rows, cols] matrix.
pub fn softmax_rows<S: Scalar>(m: &mut [S], rows: usize, cols: usize) {
    for r in 0..rows {
        let row = &mut m[r * cols..(r + 1) * cols];
        let mut mx = row[0];
        for &v in row.iter() {
            mx = mx.maximum(v);
        }
        let mut sum = S::ZERO;
        for v in row.iter_mut() {
            *v = (*v - mx).exp();
            sum += *v;
        }
        let inv = S::ONE / sum;
        for v in row.iter_mut() {
            *v *= inv;
        }
    }
}

/// Causal multi-head attention forward.
/// q/k/v: [t, d] with heads as contiguous column groups of width d / n_heads.
/// Returns (out, attn) where attn is [n_heads, t, t] row-softmaxed weights
/// (entries above the diagonal are zero).
pub fn causal_attention_fwd<S: Scalar>(
    q: &[S],
    k: &[S],
    v: &[S],
    t: usize,
    d: usize,
    n_heads: usize,
) -> (Vec<S>, Vec<S>) {
    let dh = d / n_heads;
    let scale = S::ONE / S::from_usize(dh).sqrt();
    let mut out = vec![S::ZERO; t * d];
    let mut attn = vec![S::ZERO; n_heads * t * t];
    for h in 0..n_heads {
        let cb = h * dh;
        let aw_h = &mut attn[h * t * t..(h + 1) * t * t];
        for ti in 0..t {
            let qrow = &q[ti * d + cb..ti * d + cb + dh];
            let arow = &mut aw_h[ti * t..ti * t + ti + 1];
            for (u, av) in arow.iter_mut().enumerate() {
                let krow = &k[u * d + cb..u * d + cb + dh];
                let mut s = S::ZERO;
                for (qv, kv) in qrow.iter().zip(krow.iter()) {
                    s += *qv * *kv;
                }
                *av = s * scale;
            }
            // softmax over the causal prefix 0..=ti
            let mut mx = arow[0];
            for &v in arow.iter() {
                mx = mx.maximum(v);
            }
            let mut sum = S::ZERO;
            for v in arow.iter_mut() {
                *v = (*v - mx).exp();
                sum += *v;
            }
            let inv = S::ONE / sum;
            for v in arow.iter_mut() {
                *v *= inv;
            }
        }
        for ti in 0..t {
            let orow_start = ti * d + cb;
            for u in 0..=ti {
                let w = aw_h[ti * t + u];
                let vrow = &v[u * d + cb..u * d + cb + dh];
                let orow = &mut out[orow_start..orow_start + dh];
                for (o, &vv) in orow.iter_mut().zip(vrow.iter()) {
                    *o += w * vv;
                }
            }
        }
    }
    (out, attn)
}

/// Backward of [`causal_attention_fwd`]; accumulates into dq/dk/dv.
#[allow(clippy::too_many_arguments)]
pub fn causal_attention_bwd<S: Scalar>(
    d_out: &[S],
    q: &[S],
    k: &[S],
    v: &[S],
    attn: &[S],
    t: usize,
    d: usize,
    n_heads: usize,
    dq: &mut [S],
    dk: &mut [S],
    dv: &mut [S],
) {
    let dh = d / n_heads;
    let scale = S::ONE / S::from_usize(dh).sqrt();
    let mut d_aw = vec![S::ZERO; t];
    let mut d_scores = vec![S::ZERO; t];
    for h in 0..n_heads {
        let cb = h * dh;
        let aw_h = &attn[h * t * t..(h + 1) * t * t];
        for ti in 0..t {
            let dorow = &d_out[ti * d + cb..ti * d + cb + dh];
            let aw_row = &aw_h[ti * t..ti * t + ti + 1];
            // d_v and raw attention-weight gradient
            for (u, &w) in aw_row.iter().enumerate() {
                let vrow = &v[u * d + cb..u * d + cb + dh];
                let dvrow = &mut dv[u * d + cb..u * d + cb + dh];
                let mut g = S::ZERO;
                for j in 0..dh {
                    dvrow[j] += w * dorow[j];
                    g += dorow[j] * vrow[j];
                }
                d_aw[u] = g;
            }
            // softmax backward over the causal prefix
            let mut dot = S::ZERO;
            for (u, &w) in aw_row.iter().enumerate() {
                dot += w * d_aw[u];
            }
            for (u, &w) in aw_row.iter().enumerate() {
                d_scores[u] = w * (d_aw[u] - dot) * scale;
            }
            // route into q and k
            let dqrow_start = ti * d + cb;
            for u in 0..=ti {
                let ds = d_scores[u];
                let krow = &k[u * d + cb..u * d + cb + dh];
                let qrow = &q[ti * d + cb..ti * d + cb + dh];
                let dkrow = &mut dk[u * d + cb..u * d + cb + dh];
                for j in 0..dh {
                    dkrow[j] += ds * qrow[j];
                }
                let dqrow = &mut dq[dqrow_start..dqrow_start + dh];
                for j in 0..dh {
                    dqrow[j] += ds * krow[j];
                }
            }
        }
    }
}
