//! Greedy decoding with per-unit key/value caching. Dead units are skipped
//! outright, so decode cost tracks the live depth.

use super::{TrimModel, UnitId, LAYERNORM_EPS, SLOT_FINAL_BIAS, SLOT_FINAL_GAIN, SLOT_HEAD,
            SLOT_POS_EMB, SLOT_TOK_EMB};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::kernels;

/// Deployment-side counters from one generation call.
#[derive(Clone, Copy, Debug, Default)]
pub struct GenerateStats {
    pub prompt_tokens: usize,
    pub new_tokens: usize,
}

struct UnitCache<S> {
    k: Vec<S>,
    v: Vec<S>,
}

struct DecodeState<S: Scalar> {
    caches: Vec<Option<UnitCache<S>>>,
    pos: usize,
}

impl<S: Scalar> TrimModel<S> {
    /// Greedy continuation of `prompt` by `n_new` tokens; deterministic
    /// (argmax ties resolve to the lowest token id). Returns the full
    /// extended sequence.
    pub fn generate(&self, prompt: &[u32], n_new: usize) -> Result<Vec<u32>> {
        let (seq, _) = self.generate_with_stats(prompt, n_new)?;
        Ok(seq)
    }

    pub fn generate_with_stats(
        &self,
        prompt: &[u32],
        n_new: usize,
    ) -> Result<(Vec<u32>, GenerateStats)> {
        if prompt.is_empty() {
            return Err(Error::Input("empty prompt".to_string()));
        }
        if prompt.len() + n_new > self.config.max_seq_len {
            return Err(Error::Input(format!(
                "prompt {} + new {} exceeds max_seq_len {}",
                prompt.len(),
                n_new,
                self.config.max_seq_len
            )));
        }
        self.validate_tokens(prompt, self.config.max_seq_len)?;

        let mut state = DecodeState {
            caches: (0..self.config.n_blocks).map(|_| None).collect(),
            pos: 0,
        };
        let mut out = prompt.to_vec();
        let mut logits = vec![S::ZERO; self.config.vocab_size];
        for &t in prompt {
            self.decode_step(t, &mut state, &mut logits);
        }
        for _ in 0..n_new {
            let next = argmax(&logits) as u32;
            out.push(next);
            self.decode_step(next, &mut state, &mut logits);
        }
        let stats = GenerateStats { prompt_tokens: prompt.len(), new_tokens: n_new };
        Ok((out, stats))
    }

    fn decode_step(&self, token: u32, state: &mut DecodeState<S>, logits: &mut [S]) {
        let d = self.config.d_model;
        let heads = self.config.n_heads;
        let dh = d / heads;
        let scale = S::ONE / S::from_usize(dh).sqrt();
        let eps = S::from_f64(LAYERNORM_EPS);

        let tok_row = &self.param(SLOT_TOK_EMB).data()[token as usize * d..][..d];
        let pos_row = &self.param(SLOT_POS_EMB).data()[state.pos * d..][..d];
        let mut x: Vec<S> = tok_row.iter().zip(pos_row.iter()).map(|(&a, &b)| a + b).collect();

        let mut ln = vec![S::ZERO; d];
        let mut q = vec![S::ZERO; d];
        let mut att_out = vec![S::ZERO; d];
        let mut proj = vec![S::ZERO; d];

        for blk in 0..self.config.n_blocks {
            let mha = UnitId::mha(blk);
            if self.mask.is_alive(mha) {
                let s = self.unit_slot_range(mha).start;
                layernorm_row(&x, self.param(s).data(), self.param(s + 1).data(), eps, &mut ln);
                let cache = state.caches[blk].get_or_insert_with(|| UnitCache {
                    k: Vec::with_capacity(self.config.max_seq_len * d),
                    v: Vec::with_capacity(self.config.max_seq_len * d),
                });
                kernels::vec_mat(&ln, self.param(s + 2).data(), d, d, &mut q);
                kernels::add_assign(&mut q, self.param(s + 3).data());
                let base = cache.k.len();
                cache.k.resize(base + d, S::ZERO);
                cache.v.resize(base + d, S::ZERO);
                kernels::vec_mat(&ln, self.param(s + 4).data(), d, d, &mut cache.k[base..]);
                kernels::add_assign(&mut cache.k[base..], self.param(s + 5).data());
                kernels::vec_mat(&ln, self.param(s + 6).data(), d, d, &mut cache.v[base..]);
                kernels::add_assign(&mut cache.v[base..], self.param(s + 7).data());

                let t_len = cache.k.len() / d;
                att_out.iter_mut().for_each(|v| *v = S::ZERO);
                let mut weights = vec![S::ZERO; t_len];
                for h in 0..heads {
                    let cb = h * dh;
                    let qh = &q[cb..cb + dh];
                    for (u, w) in weights.iter_mut().enumerate() {
                        let kh = &cache.k[u * d + cb..u * d + cb + dh];
                        let mut sum = S::ZERO;
                        for (qv, kv) in qh.iter().zip(kh.iter()) {
                            sum += *qv * *kv;
                        }
                        *w = sum * scale;
                    }
                    let mut mx = weights[0];
                    for &w in weights.iter() {
                        mx = mx.maximum(w);
                    }
                    let mut z = S::ZERO;
                    for w in weights.iter_mut() {
                        *w = (*w - mx).exp();
                        z += *w;
                    }
                    let inv = S::ONE / z;
                    for (u, &w) in weights.iter().enumerate() {
                        let vv = &cache.v[u * d + cb..u * d + cb + dh];
                        let oh = &mut att_out[cb..cb + dh];
                        let wu = w * inv;
                        for (o, &val) in oh.iter_mut().zip(vv.iter()) {
                            *o += wu * val;
                        }
                    }
                }
                kernels::vec_mat(&att_out, self.param(s + 8).data(), d, d, &mut proj);
                kernels::add_assign(&mut proj, self.param(s + 9).data());
                kernels::add_assign(&mut x, &proj);
            }

            let mlp = UnitId::mlp(blk);
            if self.mask.is_alive(mlp) {
                let s = self.unit_slot_range(mlp).start;
                layernorm_row(&x, self.param(s).data(), self.param(s + 1).data(), eps, &mut ln);
                let f = self.config.d_ffn;
                let mut h = vec![S::ZERO; f];
                kernels::vec_mat(&ln, self.param(s + 2).data(), d, f, &mut h);
                kernels::add_assign(&mut h, self.param(s + 3).data());
                for v in h.iter_mut() {
                    *v = kernels::gelu_fwd(*v);
                }
                kernels::vec_mat(&h, self.param(s + 4).data(), f, d, &mut proj);
                kernels::add_assign(&mut proj, self.param(s + 5).data());
                kernels::add_assign(&mut x, &proj);
            }
        }

        layernorm_row(
            &x,
            self.param(SLOT_FINAL_GAIN).data(),
            self.param(SLOT_FINAL_BIAS).data(),
            eps,
            &mut ln,
        );
        kernels::vec_mat(&ln, self.param(SLOT_HEAD).data(), d, self.config.vocab_size, logits);
        state.pos += 1;
    }
}

fn layernorm_row<S: Scalar>(x: &[S], gain: &[S], bias: &[S], eps: S, out: &mut [S]) {
    let d = x.len();
    let inv_d = S::ONE / S::from_usize(d);
    let mut mean = S::ZERO;
    for &v in x {
        mean += v;
    }
    mean *= inv_d;
    let mut var = S::ZERO;
    for &v in x {
        let dv = v - mean;
        var += dv * dv;
    }
    var *= inv_d;
    let istd = S::ONE / (var + eps).sqrt();
    for j in 0..d {
        out[j] = gain[j] * (x[j] - mean) * istd + bias[j];
    }
}

fn argmax<S: Scalar>(xs: &[S]) -> usize {
    let mut best = 0;
    let mut best_v = xs[0];
    for (i, &v) in xs.iter().enumerate().skip(1) {
        if v > best_v {
            best_v = v;
            best = i;
        }
    }
    best
}
