//! Minimal dense-tensor engine with reverse-mode automatic differentiation.
//!
//! Values are flat row-major buffers behind an [`Arc`] so tape nodes can keep
//! the inputs they need for backward without copying. Tracking is opt-in:
//! an op records a tape node only when at least one input is already on the
//! tape, so inference reuses the same code path at zero tape cost.

pub mod gradcheck;
pub mod kernels;
pub mod optim;
pub mod svd;

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Handle to a node on a [`Tape`]. Invalidated when the tape is cleared.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct NodeId {
    index: usize,
    generation: u64,
}

/// Dense numeric array. `grad`, when present, always matches `data` in length.
#[derive(Clone, Debug)]
pub struct Tensor<S: Scalar> {
    shape: Vec<usize>,
    data: Arc<Vec<S>>,
    grad: Option<Vec<S>>,
    requires_grad: bool,
    tape_id: Option<NodeId>,
}

impl<S: Scalar> Tensor<S> {
    pub fn new(shape: Vec<usize>, data: Vec<S>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::Dimension(format!(
                "shape {:?} wants {} elements, data has {}",
                shape,
                numel,
                data.len()
            )));
        }
        Ok(Tensor {
            shape,
            data: Arc::new(data),
            grad: None,
            requires_grad: false,
            tape_id: None,
        })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel = shape.iter().product();
        Tensor {
            shape,
            data: Arc::new(vec![S::ZERO; numel]),
            grad: None,
            requires_grad: false,
            tape_id: None,
        }
    }

    pub fn scalar(v: S) -> Self {
        Tensor::new(vec![1], vec![v]).expect("scalar shape")
    }

    pub fn with_requires_grad(mut self, on: bool) -> Self {
        self.requires_grad = on;
        if !on {
            self.grad = None;
        }
        self
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    /// Mutable access to the values; copy-on-write if the buffer is shared.
    pub fn data_mut(&mut self) -> &mut [S] {
        Arc::make_mut(&mut self.data).as_mut_slice()
    }

    pub(crate) fn data_arc(&self) -> Arc<Vec<S>> {
        Arc::clone(&self.data)
    }

    pub fn grad(&self) -> Option<&[S]> {
        self.grad.as_deref()
    }

    pub fn grad_mut(&mut self) -> Option<&mut Vec<S>> {
        self.grad.as_mut()
    }

    /// Installs a gradient; panics if the length disagrees with the data.
    pub fn set_grad(&mut self, g: Vec<S>) {
        assert_eq!(g.len(), self.data.len(), "grad must match tensor shape");
        assert!(self.requires_grad, "set_grad on a requires_grad=false tensor");
        self.grad = Some(g);
    }

    pub fn clear_grad(&mut self) {
        self.grad = None;
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn tape_id(&self) -> Option<NodeId> {
        self.tape_id
    }

    pub(crate) fn detach_from_tape(&mut self) {
        self.tape_id = None;
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> S {
        assert_eq!(self.data.len(), 1, "item() needs a scalar tensor");
        self.data[0]
    }

    fn tracked(mut self, id: Option<NodeId>) -> Self {
        if id.is_some() {
            self.requires_grad = true;
            self.tape_id = id;
        }
        self
    }
}

enum Op<S: Scalar> {
    Leaf,
    Matmul {
        a: Arc<Vec<S>>,
        b: Arc<Vec<S>>,
        m: usize,
        k: usize,
        n: usize,
    },
    Add,
    AddBias {
        rows: usize,
        cols: usize,
    },
    Mul {
        a: Arc<Vec<S>>,
        b: Arc<Vec<S>>,
    },
    Scale {
        c: S,
    },
    Sum {
        n: usize,
    },
    Gather {
        rows: Vec<usize>,
        in_rows: usize,
        cols: usize,
    },
    LayerNorm {
        gain: Arc<Vec<S>>,
        xhat: Vec<S>,
        inv_std: Vec<S>,
        rows: usize,
        dim: usize,
    },
    Gelu {
        x: Arc<Vec<S>>,
    },
    SoftmaxXent {
        probs: Vec<S>,
        targets: Vec<usize>,
        rows: usize,
        cols: usize,
    },
    CausalAttention {
        q: Arc<Vec<S>>,
        k: Arc<Vec<S>>,
        v: Arc<Vec<S>>,
        attn: Vec<S>,
        t: usize,
        d: usize,
        n_heads: usize,
    },
    Frobenius {
        x: Arc<Vec<S>>,
        norm: S,
    },
}

struct Node<S: Scalar> {
    op: Op<S>,
    inputs: [Option<NodeId>; 3],
    numel: usize,
    /// Gradient accumulated across backward passes.
    grad: Option<Vec<S>>,
}

/// Append-only record of operations; traversed in reverse for backward.
pub struct Tape<S: Scalar> {
    nodes: Vec<Node<S>>,
    generation: u64,
}

impl<S: Scalar> Default for Tape<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> Tape<S> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new(), generation: 0 }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Drops all nodes and invalidates every `NodeId` issued so far.
    pub fn clear(&mut self) {
        self.nodes.clear();
        self.generation += 1;
    }

    fn push(&mut self, op: Op<S>, inputs: [Option<NodeId>; 3], numel: usize) -> NodeId {
        let id = NodeId { index: self.nodes.len(), generation: self.generation };
        self.nodes.push(Node { op, inputs, numel, grad: None });
        id
    }

    fn id_of(&self, t: &Tensor<S>) -> Option<NodeId> {
        t.tape_id.filter(|id| id.generation == self.generation && id.index < self.nodes.len())
    }

    /// Registers a gradient-carrying tensor as a leaf on this tape.
    pub fn watch(&mut self, t: &mut Tensor<S>) -> NodeId {
        assert!(t.requires_grad, "watch() requires a requires_grad tensor");
        let id = self.push(Op::Leaf, [None; 3], t.numel());
        t.tape_id = Some(id);
        id
    }

    pub fn matmul(&mut self, a: &Tensor<S>, b: &Tensor<S>) -> Result<Tensor<S>> {
        let (ashape, bshape) = (a.shape(), b.shape());
        if ashape.len() != 2 || bshape.len() != 2 || ashape[1] != bshape[0] {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                left: ashape.to_vec(),
                right: bshape.to_vec(),
            });
        }
        let (m, k, n) = (ashape[0], ashape[1], bshape[1]);
        let out = kernels::matmul(a.data(), b.data(), m, k, n);
        let ia = self.id_of(a);
        let ib = self.id_of(b);
        let id = (ia.is_some() || ib.is_some()).then(|| {
            self.push(
                Op::Matmul { a: a.data_arc(), b: b.data_arc(), m, k, n },
                [ia, ib, None],
                m * n,
            )
        });
        Ok(Tensor::new(vec![m, n], out)?.tracked(id))
    }

    pub fn add(&mut self, a: &Tensor<S>, b: &Tensor<S>) -> Result<Tensor<S>> {
        if a.shape() != b.shape() {
            return Err(Error::ShapeMismatch {
                op: "add",
                left: a.shape().to_vec(),
                right: b.shape().to_vec(),
            });
        }
        let mut out = a.data().to_vec();
        kernels::add_assign(&mut out, b.data());
        let ia = self.id_of(a);
        let ib = self.id_of(b);
        let id = (ia.is_some() || ib.is_some())
            .then(|| self.push(Op::Add, [ia, ib, None], out.len()));
        Ok(Tensor::new(a.shape().to_vec(), out)?.tracked(id))
    }

    /// x: [rows, cols] plus a [cols] bias broadcast over rows.
    pub fn add_bias(&mut self, x: &Tensor<S>, bias: &Tensor<S>) -> Result<Tensor<S>> {
        let cols = *x.shape().last().unwrap_or(&0);
        if bias.shape() != [cols] {
            return Err(Error::ShapeMismatch {
                op: "add_bias",
                left: x.shape().to_vec(),
                right: bias.shape().to_vec(),
            });
        }
        let rows = x.numel() / cols.max(1);
        let mut out = x.data().to_vec();
        for r in 0..rows {
            kernels::add_assign(&mut out[r * cols..(r + 1) * cols], bias.data());
        }
        let ix = self.id_of(x);
        let ib = self.id_of(bias);
        let id = (ix.is_some() || ib.is_some())
            .then(|| self.push(Op::AddBias { rows, cols }, [ix, ib, None], out.len()));
        Ok(Tensor::new(x.shape().to_vec(), out)?.tracked(id))
    }

    pub fn mul(&mut self, a: &Tensor<S>, b: &Tensor<S>) -> Result<Tensor<S>> {
        if a.shape() != b.shape() {
            return Err(Error::ShapeMismatch {
                op: "mul",
                left: a.shape().to_vec(),
                right: b.shape().to_vec(),
            });
        }
        let out: Vec<S> = a.data().iter().zip(b.data().iter()).map(|(&x, &y)| x * y).collect();
        let ia = self.id_of(a);
        let ib = self.id_of(b);
        let id = (ia.is_some() || ib.is_some()).then(|| {
            self.push(Op::Mul { a: a.data_arc(), b: b.data_arc() }, [ia, ib, None], out.len())
        });
        Ok(Tensor::new(a.shape().to_vec(), out)?.tracked(id))
    }

    pub fn scale(&mut self, x: &Tensor<S>, c: S) -> Tensor<S> {
        let out: Vec<S> = x.data().iter().map(|&v| v * c).collect();
        let ix = self.id_of(x);
        let id = ix.map(|_| self.push(Op::Scale { c }, [ix, None, None], out.len()));
        Tensor::new(x.shape().to_vec(), out).expect("same shape").tracked(id)
    }

    /// Sum of all entries, as a scalar tensor.
    pub fn sum(&mut self, x: &Tensor<S>) -> Tensor<S> {
        let mut s = S::ZERO;
        for &v in x.data() {
            s += v;
        }
        let ix = self.id_of(x);
        let id = ix.map(|_| self.push(Op::Sum { n: x.numel() }, [ix, None, None], 1));
        Tensor::scalar(s).tracked(id)
    }

    /// Selects rows of x: out[r] = x[rows[r]].
    pub fn row_gather(&mut self, x: &Tensor<S>, rows: &[usize]) -> Result<Tensor<S>> {
        if x.shape().len() != 2 {
            return Err(Error::Dimension(format!(
                "row_gather wants a matrix, got shape {:?}",
                x.shape()
            )));
        }
        let (in_rows, cols) = (x.shape()[0], x.shape()[1]);
        self.gather_impl(x, rows, in_rows, cols, "row_gather")
    }

    /// Embedding lookup: table [vocab, dim] indexed by token ids.
    pub fn embedding(&mut self, table: &Tensor<S>, ids: &[usize]) -> Result<Tensor<S>> {
        if table.shape().len() != 2 {
            return Err(Error::Dimension(format!(
                "embedding wants a [vocab, dim] table, got {:?}",
                table.shape()
            )));
        }
        let (vocab, dim) = (table.shape()[0], table.shape()[1]);
        self.gather_impl(table, ids, vocab, dim, "embedding")
    }

    fn gather_impl(
        &mut self,
        x: &Tensor<S>,
        rows: &[usize],
        in_rows: usize,
        cols: usize,
        op: &'static str,
    ) -> Result<Tensor<S>> {
        for &r in rows {
            if r >= in_rows {
                return Err(Error::Index(format!("{op}: row {r} out of range 0..{in_rows}")));
            }
        }
        let mut out = vec![S::ZERO; rows.len() * cols];
        for (i, &r) in rows.iter().enumerate() {
            out[i * cols..(i + 1) * cols].copy_from_slice(&x.data()[r * cols..(r + 1) * cols]);
        }
        let ix = self.id_of(x);
        let id = ix.map(|_| {
            self.push(
                Op::Gather { rows: rows.to_vec(), in_rows, cols },
                [ix, None, None],
                rows.len() * cols,
            )
        });
        Ok(Tensor::new(vec![rows.len(), cols], out)?.tracked(id))
    }

    /// Row-wise normalization over the last dimension, scaled and shifted.
    pub fn layernorm(
        &mut self,
        x: &Tensor<S>,
        gain: &Tensor<S>,
        bias: &Tensor<S>,
        eps: S,
    ) -> Result<Tensor<S>> {
        let dim = *x.shape().last().ok_or_else(|| {
            Error::Dimension("layernorm on a zero-rank tensor".to_string())
        })?;
        if gain.shape() != [dim] || bias.shape() != [dim] {
            return Err(Error::ShapeMismatch {
                op: "layernorm",
                left: x.shape().to_vec(),
                right: gain.shape().to_vec(),
            });
        }
        if !(eps > S::ZERO) {
            return Err(Error::Input("layernorm eps must be positive".to_string()));
        }
        let rows = x.numel() / dim;
        let (y, xhat, inv_std) =
            kernels::layernorm_fwd(x.data(), gain.data(), bias.data(), eps, rows, dim);
        let ix = self.id_of(x);
        let ig = self.id_of(gain);
        let ib = self.id_of(bias);
        let id = (ix.is_some() || ig.is_some() || ib.is_some()).then(|| {
            self.push(
                Op::LayerNorm { gain: gain.data_arc(), xhat, inv_std, rows, dim },
                [ix, ig, ib],
                rows * dim,
            )
        });
        Ok(Tensor::new(x.shape().to_vec(), y)?.tracked(id))
    }

    pub fn gelu(&mut self, x: &Tensor<S>) -> Tensor<S> {
        let out: Vec<S> = x.data().iter().map(|&v| kernels::gelu_fwd(v)).collect();
        let ix = self.id_of(x);
        let id = ix.map(|_| self.push(Op::Gelu { x: x.data_arc() }, [ix, None, None], out.len()));
        Tensor::new(x.shape().to_vec(), out).expect("same shape").tracked(id)
    }

    /// Mean negative log-softmax of the target class over rows.
    pub fn softmax_cross_entropy(
        &mut self,
        logits: &Tensor<S>,
        targets: &[usize],
    ) -> Result<Tensor<S>> {
        if logits.shape().len() != 2 {
            return Err(Error::Dimension(format!(
                "softmax_cross_entropy wants [batch, classes], got {:?}",
                logits.shape()
            )));
        }
        let (rows, cols) = (logits.shape()[0], logits.shape()[1]);
        if targets.len() != rows {
            return Err(Error::ShapeMismatch {
                op: "softmax_cross_entropy",
                left: vec![rows, cols],
                right: vec![targets.len()],
            });
        }
        for &t in targets {
            if t >= cols {
                return Err(Error::Index(format!(
                    "softmax_cross_entropy: target {t} out of range 0..{cols}"
                )));
            }
        }
        let mut probs = logits.data().to_vec();
        kernels::softmax_rows(&mut probs, rows, cols);
        let mut loss = S::ZERO;
        for (r, &t) in targets.iter().enumerate() {
            loss -= probs[r * cols + t].ln();
        }
        loss /= S::from_usize(rows);
        let ix = self.id_of(logits);
        let id = ix.map(|_| {
            self.push(
                Op::SoftmaxXent { probs, targets: targets.to_vec(), rows, cols },
                [ix, None, None],
                1,
            )
        });
        Ok(Tensor::scalar(loss).tracked(id))
    }

    /// Fused causal multi-head self-attention over [t, d] projections.
    pub fn causal_attention(
        &mut self,
        q: &Tensor<S>,
        k: &Tensor<S>,
        v: &Tensor<S>,
        n_heads: usize,
    ) -> Result<Tensor<S>> {
        if q.shape() != k.shape() || q.shape() != v.shape() || q.shape().len() != 2 {
            return Err(Error::ShapeMismatch {
                op: "causal_attention",
                left: q.shape().to_vec(),
                right: k.shape().to_vec(),
            });
        }
        let (t, d) = (q.shape()[0], q.shape()[1]);
        if n_heads == 0 || d % n_heads != 0 {
            return Err(Error::Dimension(format!(
                "causal_attention: width {d} not divisible by {n_heads} heads"
            )));
        }
        let (out, attn) = kernels::causal_attention_fwd(q.data(), k.data(), v.data(), t, d, n_heads);
        let iq = self.id_of(q);
        let ik = self.id_of(k);
        let iv = self.id_of(v);
        let id = (iq.is_some() || ik.is_some() || iv.is_some()).then(|| {
            self.push(
                Op::CausalAttention {
                    q: q.data_arc(),
                    k: k.data_arc(),
                    v: v.data_arc(),
                    attn,
                    t,
                    d,
                    n_heads,
                },
                [iq, ik, iv],
                t * d,
            )
        });
        Ok(Tensor::new(vec![t, d], out)?.tracked(id))
    }

    /// Square root of the sum of squared entries, as a scalar tensor.
    pub fn frobenius_norm(&mut self, x: &Tensor<S>) -> Tensor<S> {
        let mut s = S::ZERO;
        for &v in x.data() {
            s += v * v;
        }
        let norm = s.sqrt();
        let ix = self.id_of(x);
        let id =
            ix.map(|_| self.push(Op::Frobenius { x: x.data_arc(), norm }, [ix, None, None], 1));
        Tensor::scalar(norm).tracked(id)
    }

    /// Reverse pass from a scalar loss. Gradients accumulate additively into
    /// the tape across calls, so backward on L1 then L2 equals backward on
    /// L1 + L2.
    pub fn backward(&mut self, loss: &Tensor<S>) -> Result<()> {
        if loss.numel() != 1 {
            return Err(Error::State(format!(
                "backward requires a scalar loss, got shape {:?}",
                loss.shape()
            )));
        }
        let root = self.id_of(loss).ok_or_else(|| {
            Error::State("backward: loss is not on the active tape".to_string())
        })?;

        // Transient cotangents for this pass only; merged into persistent
        // node grads afterwards so repeated passes stay additive.
        let mut cotangent: Vec<Option<Vec<S>>> = vec![None; root.index + 1];
        cotangent[root.index] = Some(vec![S::ONE]);

        for idx in (0..=root.index).rev() {
            let Some(dout) = cotangent[idx].take() else {
                continue;
            };
            let (grads, inputs) = {
                let node = &self.nodes[idx];
                (backward_op(&node.op, &dout), node.inputs)
            };
            for (slot, grad) in grads.into_iter().enumerate() {
                let (Some(id), Some(g)) = (inputs[slot], grad) else {
                    continue;
                };
                debug_assert!(id.index < idx, "tape inputs precede their node");
                let buf = cotangent[id.index]
                    .get_or_insert_with(|| vec![S::ZERO; self.nodes[id.index].numel]);
                kernels::add_assign(buf, &g);
            }
            let node = &mut self.nodes[idx];
            match &mut node.grad {
                Some(acc) => kernels::add_assign(acc, &dout),
                None => node.grad = Some(dout),
            }
        }
        Ok(())
    }

    /// Accumulated gradient for a tensor on this tape, if any reached it.
    pub fn grad(&self, t: &Tensor<S>) -> Option<&[S]> {
        let id = self.id_of(t)?;
        self.nodes[id.index].grad.as_deref()
    }

    /// Adds the tape-held gradient into the tensor's own grad slot.
    /// Tensors with `requires_grad == false` never accumulate.
    pub fn write_grad(&self, t: &mut Tensor<S>) {
        if !t.requires_grad {
            return;
        }
        let Some(id) = self.id_of(t) else { return };
        let Some(g) = self.nodes[id.index].grad.as_deref() else {
            return;
        };
        match &mut t.grad {
            Some(acc) => kernels::add_assign(acc, g),
            None => t.grad = Some(g.to_vec()),
        }
    }
}

/// Per-input gradients of one op given the output cotangent.
fn backward_op<S: Scalar>(op: &Op<S>, dout: &[S]) -> [Option<Vec<S>>; 3] {
    match op {
        Op::Leaf => [None, None, None],
        Op::Matmul { a, b, m, k, n } => {
            // d_a = dout @ b^T, d_b = a^T @ dout; transposed once so the
            // inner loops stay contiguous.
            let bt = kernels::transpose(b, *k, *n);
            let da = kernels::matmul(dout, &bt, *m, *n, *k);
            let at = kernels::transpose(a, *m, *k);
            let db = kernels::matmul(&at, dout, *k, *m, *n);
            [Some(da), Some(db), None]
        }
        Op::Add => [Some(dout.to_vec()), Some(dout.to_vec()), None],
        Op::AddBias { rows, cols } => {
            let mut db = vec![S::ZERO; *cols];
            for r in 0..*rows {
                kernels::add_assign(&mut db, &dout[r * cols..(r + 1) * cols]);
            }
            [Some(dout.to_vec()), Some(db), None]
        }
        Op::Mul { a, b } => {
            let da: Vec<S> = dout.iter().zip(b.iter()).map(|(&d, &y)| d * y).collect();
            let db: Vec<S> = dout.iter().zip(a.iter()).map(|(&d, &x)| d * x).collect();
            [Some(da), Some(db), None]
        }
        Op::Scale { c } => [Some(dout.iter().map(|&d| d * *c).collect()), None, None],
        Op::Sum { n } => [Some(vec![dout[0]; *n]), None, None],
        Op::Gather { rows, in_rows, cols } => {
            let mut dx = vec![S::ZERO; in_rows * cols];
            for (i, &r) in rows.iter().enumerate() {
                kernels::add_assign(
                    &mut dx[r * cols..(r + 1) * cols],
                    &dout[i * cols..(i + 1) * cols],
                );
            }
            [Some(dx), None, None]
        }
        Op::LayerNorm { gain, xhat, inv_std, rows, dim } => {
            let mut dx = vec![S::ZERO; rows * dim];
            kernels::layernorm_bwd_input(dout, gain, xhat, inv_std, *rows, *dim, &mut dx);
            let mut dgain = vec![S::ZERO; *dim];
            let mut dbias = vec![S::ZERO; *dim];
            for r in 0..*rows {
                let dyr = &dout[r * dim..(r + 1) * dim];
                let xh = &xhat[r * dim..(r + 1) * dim];
                for j in 0..*dim {
                    dgain[j] += dyr[j] * xh[j];
                    dbias[j] += dyr[j];
                }
            }
            [Some(dx), Some(dgain), Some(dbias)]
        }
        Op::Gelu { x } => {
            let dx: Vec<S> =
                dout.iter().zip(x.iter()).map(|(&d, &v)| d * kernels::gelu_grad(v)).collect();
            [Some(dx), None, None]
        }
        Op::SoftmaxXent { probs, targets, rows, cols } => {
            let scale = dout[0] / S::from_usize(*rows);
            let mut dl = probs.clone();
            for (r, &t) in targets.iter().enumerate() {
                dl[r * cols + t] -= S::ONE;
            }
            kernels::scale_assign(&mut dl, scale);
            [Some(dl), None, None]
        }
        Op::CausalAttention { q, k, v, attn, t, d, n_heads } => {
            let mut dq = vec![S::ZERO; t * d];
            let mut dk = vec![S::ZERO; t * d];
            let mut dv = vec![S::ZERO; t * d];
            kernels::causal_attention_bwd(
                dout, q, k, v, attn, *t, *d, *n_heads, &mut dq, &mut dk, &mut dv,
            );
            [Some(dq), Some(dk), Some(dv)]
        }
        Op::Frobenius { x, norm } => {
            if *norm == S::ZERO {
                // Not differentiable at the origin; subgradient zero.
                return [Some(vec![S::ZERO; x.len()]), None, None];
            }
            let c = dout[0] / *norm;
            [Some(x.iter().map(|&v| v * c).collect()), None, None]
        }
    }
}

#[cfg(test)]
mod tests;
