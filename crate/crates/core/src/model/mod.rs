//! Decoder-only transformer whose MHA and MLP sub-layers are independently
//! droppable units.
//!
//! A "unit" is one sub-layer together with its pre-layernorm; dropping it
//! removes norm + transform from the graph and leaves the residual identity,
//! so depth, parameter count, and per-token compute all shrink for real.

mod generate;

pub use generate::GenerateStats;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{fnv1a64, standard_normal, substream};
use crate::scalar::Scalar;
use crate::tensor::optim::{Optimizer, ParamRef};
use crate::tensor::{Tape, Tensor};

pub const LAYERNORM_EPS: f64 = 1e-5;

/// Global gradient-norm ceiling applied by `train_batch`.
pub const GRAD_CLIP_NORM: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub d_ffn: usize,
    pub n_blocks: usize,
    pub max_seq_len: usize,
    pub seed: u64,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("vocab_size", self.vocab_size),
            ("d_model", self.d_model),
            ("n_heads", self.n_heads),
            ("d_ffn", self.d_ffn),
            ("n_blocks", self.n_blocks),
            ("max_seq_len", self.max_seq_len),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.d_model % self.n_heads != 0 {
            return Err(Error::Config(format!(
                "d_model {} not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        Ok(())
    }

    /// Droppable unit count: one MHA and one MLP per block.
    pub fn unit_count(&self) -> usize {
        2 * self.n_blocks
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnitKind {
    Mha,
    Mlp,
}

impl fmt::Display for UnitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            UnitKind::Mha => write!(f, "mha"),
            UnitKind::Mlp => write!(f, "mlp"),
        }
    }
}

/// One droppable sub-layer. Total order: block index, MHA before MLP,
/// matching computation order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct UnitId {
    pub block: usize,
    pub kind: UnitKind,
}

impl UnitId {
    pub fn mha(block: usize) -> Self {
        UnitId { block, kind: UnitKind::Mha }
    }

    pub fn mlp(block: usize) -> Self {
        UnitId { block, kind: UnitKind::Mlp }
    }

    pub fn index(&self) -> usize {
        self.block * 2 + if self.kind == UnitKind::Mha { 0 } else { 1 }
    }

    pub fn from_index(i: usize) -> Self {
        UnitId { block: i / 2, kind: if i % 2 == 0 { UnitKind::Mha } else { UnitKind::Mlp } }
    }
}

impl fmt::Display for UnitId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "block{}.{}", self.block, self.kind)
    }
}

/// Per-unit alive flags. Dropping is monotone within a trim run; a dead
/// unit's forward pass is the identity on its residual stream.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnitMask {
    alive: Vec<bool>,
}

impl UnitMask {
    pub fn all_alive(n_blocks: usize) -> Self {
        UnitMask { alive: vec![true; 2 * n_blocks] }
    }

    pub fn unit_count(&self) -> usize {
        self.alive.len()
    }

    pub fn live_count(&self) -> usize {
        self.alive.iter().filter(|&&a| a).count()
    }

    pub fn is_alive(&self, id: UnitId) -> bool {
        self.alive.get(id.index()).copied().unwrap_or(false)
    }

    pub fn kill(&mut self, id: UnitId) -> Result<()> {
        let idx = id.index();
        if idx >= self.alive.len() {
            return Err(Error::Index(format!("unit {id} out of range")));
        }
        if !self.alive[idx] {
            return Err(Error::State(format!("unit {id} is already dead")));
        }
        self.alive[idx] = false;
        Ok(())
    }

    /// Copy of the mask with one more unit dead.
    pub fn without(&self, id: UnitId) -> Result<UnitMask> {
        let mut m = self.clone();
        m.kill(id)?;
        Ok(m)
    }

    pub fn live_units(&self) -> Vec<UnitId> {
        (0..self.alive.len()).filter(|&i| self.alive[i]).map(UnitId::from_index).collect()
    }

    pub fn dead_units(&self) -> Vec<UnitId> {
        (0..self.alive.len()).filter(|&i| !self.alive[i]).map(UnitId::from_index).collect()
    }

    pub(crate) fn bytes(&self) -> Vec<u8> {
        self.alive.iter().map(|&a| a as u8).collect()
    }
}

#[derive(Clone)]
struct Param<S: Scalar> {
    name: String,
    tensor: Tensor<S>,
}

const AUX_SLOTS: usize = 5;
const MHA_SLOTS: usize = 10;
const MLP_SLOTS: usize = 6;
const BLOCK_SLOTS: usize = MHA_SLOTS + MLP_SLOTS;

const SLOT_TOK_EMB: usize = 0;
const SLOT_POS_EMB: usize = 1;
const SLOT_FINAL_GAIN: usize = 2;
const SLOT_FINAL_BIAS: usize = 3;
const SLOT_HEAD: usize = 4;

/// Parameter count of one unit of the given kind under this configuration.
pub fn unit_param_count(cfg: &ModelConfig, kind: UnitKind) -> usize {
    let d = cfg.d_model;
    match kind {
        // pre-layernorm gain+bias, four d*d projections with biases
        UnitKind::Mha => 2 * d + 4 * (d * d + d),
        // pre-layernorm gain+bias, two matrices with biases
        UnitKind::Mlp => 2 * d + (d * cfg.d_ffn + cfg.d_ffn) + (cfg.d_ffn * d + d),
    }
}

/// A sequence scored on its answer suffix under teacher forcing.
#[derive(Clone, Copy, Debug)]
pub struct ScoredSequence<'a> {
    pub tokens: &'a [u32],
    /// Index of the first answer token within `tokens`; everything from here
    /// on contributes to the loss/accuracy.
    pub answer_start: usize,
}

#[derive(Clone)]
pub struct TrimModel<S: Scalar> {
    config: ModelConfig,
    params: Vec<Option<Param<S>>>,
    mask: UnitMask,
    trainable: Vec<bool>,
    initial_param_count: usize,
}

impl<S: Scalar> fmt::Debug for TrimModel<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TrimModel")
            .field("config", &self.config)
            .field("live_units", &self.mask.live_count())
            .field("param_count", &self.param_count())
            .finish()
    }
}

impl<S: Scalar> TrimModel<S> {
    /// Deterministic build from the config seed; all units alive and
    /// trainable.
    pub fn build(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let d = config.d_model;
        let f = config.d_ffn;
        let v = config.vocab_size;
        let b = config.n_blocks;
        let mut rng = substream(config.seed, "init");
        // residual-path projections get the depth-scaled init
        let base = 0.02;
        let resid = base / ((2 * b) as f64).sqrt();

        let mut params: Vec<Option<Param<S>>> = Vec::with_capacity(AUX_SLOTS + b * BLOCK_SLOTS);
        let mut normal = |name: &str, shape: Vec<usize>, std: f64| {
            let n: usize = shape.iter().product();
            let data: Vec<S> =
                (0..n).map(|_| S::from_f64(standard_normal(&mut rng) * std)).collect();
            Param {
                name: name.to_string(),
                tensor: Tensor::new(shape, data).expect("init shape").with_requires_grad(true),
            }
        };
        let constant = |name: &str, shape: Vec<usize>, value: S| {
            let n: usize = shape.iter().product();
            Param {
                name: name.to_string(),
                tensor: Tensor::new(shape, vec![value; n])
                    .expect("init shape")
                    .with_requires_grad(true),
            }
        };

        params.push(Some(normal("tok_emb", vec![v, d], base)));
        params.push(Some(normal("pos_emb", vec![config.max_seq_len, d], base)));
        params.push(Some(constant("final_norm.gain", vec![d], S::ONE)));
        params.push(Some(constant("final_norm.bias", vec![d], S::ZERO)));
        params.push(Some(normal("head.w", vec![d, v], base)));

        for blk in 0..b {
            let p = |suffix: &str| format!("block{blk}.mha.{suffix}");
            params.push(Some(constant(&p("ln_gain"), vec![d], S::ONE)));
            params.push(Some(constant(&p("ln_bias"), vec![d], S::ZERO)));
            params.push(Some(normal(&p("wq"), vec![d, d], base)));
            params.push(Some(constant(&p("bq"), vec![d], S::ZERO)));
            params.push(Some(normal(&p("wk"), vec![d, d], base)));
            params.push(Some(constant(&p("bk"), vec![d], S::ZERO)));
            params.push(Some(normal(&p("wv"), vec![d, d], base)));
            params.push(Some(constant(&p("bv"), vec![d], S::ZERO)));
            params.push(Some(normal(&p("wo"), vec![d, d], resid)));
            params.push(Some(constant(&p("bo"), vec![d], S::ZERO)));
            let p = |suffix: &str| format!("block{blk}.mlp.{suffix}");
            params.push(Some(constant(&p("ln_gain"), vec![d], S::ONE)));
            params.push(Some(constant(&p("ln_bias"), vec![d], S::ZERO)));
            params.push(Some(normal(&p("w1"), vec![d, f], base)));
            params.push(Some(constant(&p("b1"), vec![f], S::ZERO)));
            params.push(Some(normal(&p("w2"), vec![f, d], resid)));
            params.push(Some(constant(&p("b2"), vec![d], S::ZERO)));
        }

        let initial_param_count = params.iter().flatten().map(|p| p.tensor.numel()).sum();
        Ok(TrimModel {
            config,
            params,
            mask: UnitMask::all_alive(b),
            trainable: vec![true; 2 * b],
            initial_param_count,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn mask(&self) -> &UnitMask {
        &self.mask
    }

    pub fn unit_count(&self) -> usize {
        self.config.unit_count()
    }

    pub fn live_units(&self) -> Vec<UnitId> {
        self.mask.live_units()
    }

    /// Live parameter count: live units plus the always-present embedding,
    /// head, and final-norm parameters.
    pub fn param_count(&self) -> usize {
        self.params.iter().flatten().map(|p| p.tensor.numel()).sum()
    }

    pub fn initial_param_count(&self) -> usize {
        self.initial_param_count
    }

    pub fn memory_ratio(&self) -> f64 {
        self.param_count() as f64 / self.initial_param_count as f64
    }

    fn unit_slot_range(&self, id: UnitId) -> std::ops::Range<usize> {
        let start = AUX_SLOTS
            + id.block * BLOCK_SLOTS
            + if id.kind == UnitKind::Mha { 0 } else { MHA_SLOTS };
        let len = if id.kind == UnitKind::Mha { MHA_SLOTS } else { MLP_SLOTS };
        start..start + len
    }

    /// Kills the unit and releases its parameters. Returns the number of
    /// parameters released.
    pub fn drop_unit(&mut self, id: UnitId) -> Result<usize> {
        if id.block >= self.config.n_blocks {
            return Err(Error::Index(format!("unit {id} out of range")));
        }
        self.mask.kill(id)?;
        let mut released = 0;
        for slot in self.unit_slot_range(id) {
            if let Some(p) = self.params[slot].take() {
                released += p.tensor.numel();
            }
        }
        self.trainable[id.index()] = false;
        Ok(released)
    }

    /// Parameter slots of a unit, for optimizer-state housekeeping.
    pub fn unit_slots(&self, id: UnitId) -> std::ops::Range<usize> {
        self.unit_slot_range(id)
    }

    /// Marks exactly the listed units trainable; everything else freezes.
    /// Embedding, head and final norm always train.
    pub fn set_trainable(&mut self, units: &[UnitId]) -> Result<()> {
        for u in units {
            if u.block >= self.config.n_blocks {
                return Err(Error::Index(format!("unit {u} out of range")));
            }
        }
        self.trainable.iter_mut().for_each(|t| *t = false);
        for u in units {
            self.trainable[u.index()] = true;
        }
        Ok(())
    }

    pub fn trainable_units(&self) -> Vec<UnitId> {
        (0..self.trainable.len())
            .filter(|&i| self.trainable[i] && self.mask.is_alive(UnitId::from_index(i)))
            .map(UnitId::from_index)
            .collect()
    }

    pub fn is_trainable(&self, id: UnitId) -> bool {
        self.trainable.get(id.index()).copied().unwrap_or(false)
    }

    fn param(&self, slot: usize) -> &Tensor<S> {
        &self.params[slot].as_ref().expect("live param slot").tensor
    }

    /// Live parameters in slot order.
    pub fn params_iter(&self) -> impl Iterator<Item = (&str, &Tensor<S>)> {
        self.params.iter().flatten().map(|p| (p.name.as_str(), &p.tensor))
    }

    pub fn param_by_name(&self, name: &str) -> Option<&Tensor<S>> {
        self.params.iter().flatten().find(|p| p.name == name).map(|p| &p.tensor)
    }

    /// Overwrites a live parameter's values; shape must match.
    pub fn set_param_data(&mut self, name: &str, data: Vec<S>) -> Result<()> {
        let p = self
            .params
            .iter_mut()
            .flatten()
            .find(|p| p.name == name)
            .ok_or_else(|| Error::State(format!("no live parameter named {name}")))?;
        if data.len() != p.tensor.numel() {
            return Err(Error::Dimension(format!(
                "parameter {name} wants {} values, got {}",
                p.tensor.numel(),
                data.len()
            )));
        }
        p.tensor.data_mut().copy_from_slice(&data);
        Ok(())
    }

    /// Hash of mask plus every live parameter's exact bits; for determinism
    /// and no-mutation checks.
    pub fn state_fingerprint(&self) -> u64 {
        let mut bytes = self.mask.bytes();
        for p in self.params.iter().flatten() {
            for &v in p.tensor.data() {
                bytes.extend_from_slice(&v.to_f64().to_bits().to_le_bytes());
            }
        }
        fnv1a64(&bytes)
    }

    fn validate_tokens(&self, tokens: &[u32], limit: usize) -> Result<()> {
        if tokens.len() > limit {
            return Err(Error::Input(format!(
                "sequence length {} exceeds max {}",
                tokens.len(),
                limit
            )));
        }
        for &t in tokens {
            if t as usize >= self.config.vocab_size {
                return Err(Error::Input(format!(
                    "token {t} out of vocab 0..{}",
                    self.config.vocab_size
                )));
            }
        }
        Ok(())
    }

    fn check_mask_compatible(&self, mask: &UnitMask) -> Result<()> {
        if mask.unit_count() != self.unit_count() {
            return Err(Error::State(format!(
                "mask covers {} units, model has {}",
                mask.unit_count(),
                self.unit_count()
            )));
        }
        for id in mask.live_units() {
            if !self.mask.is_alive(id) {
                return Err(Error::State(format!(
                    "mask revives unit {id} whose parameters are released"
                )));
            }
        }
        Ok(())
    }

    /// Logits for every position: `[len, vocab]`, causal throughout; dead
    /// units contribute identity.
    pub fn forward(&self, tokens: &[u32]) -> Result<Tensor<S>> {
        let mask = self.mask.clone();
        self.forward_masked(tokens, &mask)
    }

    /// Forward under a temporary mask override; the override may only kill
    /// more units than the model's own mask, never revive.
    pub fn forward_masked(&self, tokens: &[u32], mask: &UnitMask) -> Result<Tensor<S>> {
        self.check_mask_compatible(mask)?;
        let mut tape = Tape::new();
        self.forward_on_tape(&mut tape, tokens, mask, None)
    }

    fn forward_on_tape(
        &self,
        tape: &mut Tape<S>,
        tokens: &[u32],
        mask: &UnitMask,
        mut norms: Option<&mut Vec<(UnitId, f64)>>,
    ) -> Result<Tensor<S>> {
        self.validate_tokens(tokens, self.config.max_seq_len)?;
        if tokens.is_empty() {
            return Err(Error::Input("empty token sequence".to_string()));
        }
        let eps = S::from_f64(LAYERNORM_EPS);
        let ids: Vec<usize> = tokens.iter().map(|&t| t as usize).collect();
        let positions: Vec<usize> = (0..tokens.len()).collect();

        let tok = tape.embedding(self.param(SLOT_TOK_EMB), &ids)?;
        let pos = tape.row_gather(self.param(SLOT_POS_EMB), &positions)?;
        let mut x = tape.add(&tok, &pos)?;

        for blk in 0..self.config.n_blocks {
            let mha = UnitId::mha(blk);
            if mask.is_alive(mha) {
                let s = self.unit_slot_range(mha).start;
                let ln = tape.layernorm(&x, self.param(s), self.param(s + 1), eps)?;
                let q = tape.matmul(&ln, self.param(s + 2))?;
                let q = tape.add_bias(&q, self.param(s + 3))?;
                let k = tape.matmul(&ln, self.param(s + 4))?;
                let k = tape.add_bias(&k, self.param(s + 5))?;
                let v = tape.matmul(&ln, self.param(s + 6))?;
                let v = tape.add_bias(&v, self.param(s + 7))?;
                let att = tape.causal_attention(&q, &k, &v, self.config.n_heads)?;
                let proj = tape.matmul(&att, self.param(s + 8))?;
                let proj = tape.add_bias(&proj, self.param(s + 9))?;
                x = tape.add(&x, &proj)?;
                if let Some(out) = norms.as_deref_mut() {
                    out.push((mha, frobenius_f64(x.data())));
                }
            }
            let mlp = UnitId::mlp(blk);
            if mask.is_alive(mlp) {
                let s = self.unit_slot_range(mlp).start;
                let ln = tape.layernorm(&x, self.param(s), self.param(s + 1), eps)?;
                let h = tape.matmul(&ln, self.param(s + 2))?;
                let h = tape.add_bias(&h, self.param(s + 3))?;
                let h = tape.gelu(&h);
                let y = tape.matmul(&h, self.param(s + 4))?;
                let y = tape.add_bias(&y, self.param(s + 5))?;
                x = tape.add(&x, &y)?;
                if let Some(out) = norms.as_deref_mut() {
                    out.push((mlp, frobenius_f64(x.data())));
                }
            }
        }

        let xf = tape.layernorm(&x, self.param(SLOT_FINAL_GAIN), self.param(SLOT_FINAL_BIAS), eps)?;
        tape.matmul(&xf, self.param(SLOT_HEAD))
    }

    /// Teacher-forced loss of one sequence on the tape (answer rows only).
    fn sequence_loss(&self, tape: &mut Tape<S>, seq: ScoredSequence<'_>) -> Result<Tensor<S>> {
        let n = seq.tokens.len();
        if seq.answer_start == 0 || seq.answer_start >= n {
            return Err(Error::Input(format!(
                "answer_start {} outside 1..{n}",
                seq.answer_start
            )));
        }
        let input = &seq.tokens[..n - 1];
        let logits = self.forward_on_tape(tape, input, &self.mask, None)?;
        let rows: Vec<usize> = (seq.answer_start - 1..n - 1).collect();
        let targets: Vec<usize> =
            seq.tokens[seq.answer_start..].iter().map(|&t| t as usize).collect();
        let picked = tape.row_gather(&logits, &rows)?;
        tape.softmax_cross_entropy(&picked, &targets)
    }

    /// One optimizer step over a batch: per-sequence backward passes with
    /// gradients averaged across the batch. Only trainable-unit parameters
    /// and the always-trainable auxiliaries are updated. Returns mean loss.
    pub fn train_batch(
        &mut self,
        batch: &[ScoredSequence<'_>],
        optimizer: &mut Optimizer<S>,
    ) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::Input("empty training batch".to_string()));
        }
        let watched_slots = self.watched_slots();
        let mut grad_acc: Vec<Option<Vec<S>>> = vec![None; self.params.len()];
        let mut total_loss = 0.0;

        for &seq in batch {
            let mut tape = Tape::new();
            for &slot in &watched_slots {
                let p = self.params[slot].as_mut().expect("watched slot is live");
                tape.watch(&mut p.tensor);
            }
            let result = self
                .sequence_loss(&mut tape, seq)
                .and_then(|loss| tape.backward(&loss).map(|_| loss));
            match result {
                Ok(loss) => {
                    total_loss += loss.item().to_f64();
                    for &slot in &watched_slots {
                        let p = self.params[slot].as_ref().expect("live");
                        if let Some(g) = tape.grad(&p.tensor) {
                            match &mut grad_acc[slot] {
                                Some(acc) => crate::tensor::kernels::add_assign(acc, g),
                                None => grad_acc[slot] = Some(g.to_vec()),
                            }
                        }
                    }
                    self.detach_all(&watched_slots);
                }
                Err(e) => {
                    self.detach_all(&watched_slots);
                    return Err(e);
                }
            }
        }

        let inv = 1.0 / batch.len() as f64;
        // mean over the batch, then global-norm clipping at 1.0 for stability
        let mut sq_sum = 0.0f64;
        for &slot in &watched_slots {
            if let Some(g) = grad_acc[slot].as_mut() {
                crate::tensor::kernels::scale_assign(g, S::from_f64(inv));
                sq_sum += g.iter().map(|&v| v.to_f64() * v.to_f64()).sum::<f64>();
            }
        }
        let norm = sq_sum.sqrt();
        let clip = if norm > GRAD_CLIP_NORM { GRAD_CLIP_NORM / norm } else { 1.0 };
        for &slot in &watched_slots {
            if let Some(mut g) = grad_acc[slot].take() {
                if clip < 1.0 {
                    crate::tensor::kernels::scale_assign(&mut g, S::from_f64(clip));
                }
                let p = self.params[slot].as_mut().expect("live");
                p.tensor.set_grad(g);
            }
        }
        let watched: Vec<bool> = {
            let mut w = vec![false; self.params.len()];
            for &s in &watched_slots {
                w[s] = true;
            }
            w
        };
        optimizer.step(self.params.iter_mut().enumerate().filter_map(|(slot, p)| {
            p.as_mut().filter(|_| watched[slot]).map(|p| ParamRef {
                slot,
                tensor: &mut p.tensor,
                trainable: true,
            })
        }))?;
        Ok(total_loss / batch.len() as f64)
    }

    fn watched_slots(&self) -> Vec<usize> {
        let mut slots: Vec<usize> = (0..AUX_SLOTS).collect();
        for id in self.mask.live_units() {
            if self.trainable[id.index()] {
                slots.extend(self.unit_slot_range(id));
            }
        }
        slots
    }

    fn detach_all(&mut self, slots: &[usize]) {
        for &slot in slots {
            if let Some(p) = self.params[slot].as_mut() {
                p.tensor.detach_from_tape();
                p.tensor.clear_grad();
            }
        }
    }

    /// Mean-over-batch Frobenius norm of each live unit's post-residual
    /// output activations.
    pub fn snapshot_activation_norms(&self, batch: &[&[u32]]) -> Result<Vec<(UnitId, f64)>> {
        if batch.is_empty() {
            return Err(Error::Input("empty batch for activation norms".to_string()));
        }
        let mut sums: Vec<(UnitId, f64)> =
            self.mask.live_units().into_iter().map(|u| (u, 0.0)).collect();
        for &tokens in batch {
            let mut tape = Tape::new();
            let mut norms = Vec::with_capacity(sums.len());
            self.forward_on_tape(&mut tape, tokens, &self.mask, Some(&mut norms))?;
            debug_assert_eq!(norms.len(), sums.len());
            for (acc, (unit, n)) in sums.iter_mut().zip(norms) {
                debug_assert_eq!(acc.0, unit);
                acc.1 += n;
            }
        }
        let inv = 1.0 / batch.len() as f64;
        for s in &mut sums {
            s.1 *= inv;
        }
        Ok(sums)
    }
}

fn frobenius_f64<S: Scalar>(data: &[S]) -> f64 {
    data.iter().map(|&v| v.to_f64() * v.to_f64()).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests;
