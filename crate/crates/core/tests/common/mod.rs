//! Shared test support: an independent straight-line decoder forward used as
//! the oracle for drop-equivalence checks. Deliberately written per-position
//! with scalar loops, sharing no code with the library's tensor kernels.

#![allow(dead_code)]

use layertrim_core::model::{TrimModel, UnitId, UnitKind};
use layertrim_core::Scalar;

const EPS: f64 = 1e-5;

fn get<S: Scalar>(model: &TrimModel<S>, name: &str) -> Vec<f64> {
    model
        .param_by_name(name)
        .unwrap_or_else(|| panic!("missing parameter {name}"))
        .data()
        .iter()
        .map(|&v| v.to_f64())
        .collect()
}

fn layernorm_vec(x: &[f64], gain: &[f64], bias: &[f64]) -> Vec<f64> {
    let d = x.len() as f64;
    let mean = x.iter().sum::<f64>() / d;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d;
    let istd = 1.0 / (var + EPS).sqrt();
    x.iter()
        .enumerate()
        .map(|(j, &v)| gain[j] * (v - mean) * istd + bias[j])
        .collect()
}

/// x (len k) times a [k, n] matrix plus bias.
fn affine(x: &[f64], w: &[f64], b: &[f64], n: usize) -> Vec<f64> {
    let k = x.len();
    (0..n)
        .map(|j| b[j] + (0..k).map(|i| x[i] * w[i * n + j]).sum::<f64>())
        .collect()
}

fn gelu(x: f64) -> f64 {
    let c = (2.0 / std::f64::consts::PI).sqrt();
    0.5 * x * (1.0 + (c * (x + 0.044715 * x * x * x)).tanh())
}

/// Straight-line decoder forward over exactly the listed units, in unit
/// order; everything not listed simply does not exist. Returns logits
/// [len, vocab] in f64.
pub fn reference_forward<S: Scalar>(
    model: &TrimModel<S>,
    tokens: &[u32],
    live: &[UnitId],
) -> Vec<Vec<f64>> {
    let cfg = *model.config();
    let d = cfg.d_model;
    let heads = cfg.n_heads;
    let dh = d / heads;
    let tok_emb = get(model, "tok_emb");
    let pos_emb = get(model, "pos_emb");

    let mut states: Vec<Vec<f64>> = tokens
        .iter()
        .enumerate()
        .map(|(p, &t)| {
            (0..d)
                .map(|j| tok_emb[t as usize * d + j] + pos_emb[p * d + j])
                .collect()
        })
        .collect();

    let mut units = live.to_vec();
    units.sort();
    for unit in units {
        match unit.kind {
            UnitKind::Mha => {
                let b = unit.block;
                let p = |s: &str| format!("block{b}.mha.{s}");
                let gain = get(model, &p("ln_gain"));
                let bias = get(model, &p("ln_bias"));
                let wq = get(model, &p("wq"));
                let bq = get(model, &p("bq"));
                let wk = get(model, &p("wk"));
                let bk = get(model, &p("bk"));
                let wv = get(model, &p("wv"));
                let bv = get(model, &p("bv"));
                let wo = get(model, &p("wo"));
                let bo = get(model, &p("bo"));
                let normed: Vec<Vec<f64>> =
                    states.iter().map(|x| layernorm_vec(x, &gain, &bias)).collect();
                let qs: Vec<Vec<f64>> = normed.iter().map(|x| affine(x, &wq, &bq, d)).collect();
                let ks: Vec<Vec<f64>> = normed.iter().map(|x| affine(x, &wk, &bk, d)).collect();
                let vs: Vec<Vec<f64>> = normed.iter().map(|x| affine(x, &wv, &bv, d)).collect();
                for t in 0..states.len() {
                    let mut merged = vec![0.0; d];
                    for h in 0..heads {
                        let cb = h * dh;
                        // causal scores for this position and head
                        let mut scores: Vec<f64> = (0..=t)
                            .map(|u| {
                                (0..dh)
                                    .map(|j| qs[t][cb + j] * ks[u][cb + j])
                                    .sum::<f64>()
                                    / (dh as f64).sqrt()
                            })
                            .collect();
                        let mx = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                        let mut z = 0.0;
                        for s in scores.iter_mut() {
                            *s = (*s - mx).exp();
                            z += *s;
                        }
                        for (u, s) in scores.iter().enumerate() {
                            let w = s / z;
                            for j in 0..dh {
                                merged[cb + j] += w * vs[u][cb + j];
                            }
                        }
                    }
                    let proj = affine(&merged, &wo, &bo, d);
                    for j in 0..d {
                        states[t][j] += proj[j];
                    }
                }
            }
            UnitKind::Mlp => {
                let b = unit.block;
                let p = |s: &str| format!("block{b}.mlp.{s}");
                let gain = get(model, &p("ln_gain"));
                let bias = get(model, &p("ln_bias"));
                let w1 = get(model, &p("w1"));
                let b1 = get(model, &p("b1"));
                let w2 = get(model, &p("w2"));
                let b2 = get(model, &p("b2"));
                for x in states.iter_mut() {
                    let normed = layernorm_vec(x, &gain, &bias);
                    let mut h = affine(&normed, &w1, &b1, cfg.d_ffn);
                    for v in h.iter_mut() {
                        *v = gelu(*v);
                    }
                    let y = affine(&h, &w2, &b2, d);
                    for j in 0..d {
                        x[j] += y[j];
                    }
                }
            }
        }
    }

    let fg = get(model, "final_norm.gain");
    let fb = get(model, "final_norm.bias");
    let head = get(model, "head.w");
    states
        .iter()
        .map(|x| {
            let xf = layernorm_vec(x, &fg, &fb);
            (0..cfg.vocab_size)
                .map(|v| (0..d).map(|j| xf[j] * head[j * cfg.vocab_size + v]).sum::<f64>())
                .collect()
        })
        .collect()
}

/// Max absolute difference between a model's forward logits and the
/// reference forward over the model's own live units.
pub fn max_abs_diff_vs_reference(model: &TrimModel<f64>, tokens: &[u32]) -> f64 {
    let live = model.mask().live_units();
    let reference = reference_forward(model, tokens, &live);
    let logits = model.forward(tokens).unwrap();
    let vocab = model.config().vocab_size;
    let mut worst = 0.0f64;
    for (r, row) in reference.iter().enumerate() {
        for (v, &x) in row.iter().enumerate() {
            let got = logits.data()[r * vocab + v];
            worst = worst.max((got - x).abs());
        }
    }
    worst
}
