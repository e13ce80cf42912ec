use std::sync::atomic::{AtomicU32, Ordering};

use rand::Rng as _;

use super::kernels::{self, SeqDims};
use super::{EngineError, Result, Tensor};
use crate::rng::Rng;
use crate::scalar::Scalar;

static NEXT_TAPE_ID: AtomicU32 = AtomicU32::new(1);

/// Handle to a tensor recorded on a particular [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var {
    tape: u32,
    idx: usize,
}

impl Var {
    pub fn index(self) -> usize {
        self.idx
    }
}

/// Forward-pass mode for the stochastic and batch-dependent primitives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone)]
enum Op<T> {
    Leaf,
    MatMul { n: usize, k: usize, m: usize },
    Add,
    Sub,
    Mul,
    AddBias { cols: usize },
    AddColumn { cols: usize },
    ScaleBy,
    Scale(T),
    Relu,
    Tanh,
    Sigmoid,
    Softmax { cols: usize },
    Dropout { mask: Vec<T> },
    BatchNorm { rows: usize, cols: usize, eps: T, mean: Vec<T>, var: Vec<T>, batch_stats: bool },
    Conv1d { dims: SeqDims, k: usize, filters: usize },
    MaxPool1d { dims: SeqDims, pool: usize, argmax: Vec<usize> },
    Embedding { ids: Vec<usize>, dim: usize },
    EmbedConv1d { unique: Vec<usize>, slots: Vec<usize>, batch: usize, len: usize, dim: usize, k: usize, filters: usize },
    Reshape,
    ConcatCols { rows: usize, widths: Vec<usize> },
    SliceCols { cols: usize, start: usize, end: usize },
    StackRows,
    Sum,
    Mean,
    SumSquares,
    MseLoss,
}

#[derive(Debug, Clone)]
struct Node<T> {
    tensor: Tensor<T>,
    op: Op<T>,
    inputs: Vec<Var>,
    needs_grad: bool,
}

/// Batch-normalization statistics source.
#[derive(Debug, Clone, Copy)]
pub enum NormStats<'a, T> {
    /// Per-column statistics of the current batch (population variance).
    Batch,
    /// Fixed statistics, e.g. running averages at inference time.
    Fixed { mean: &'a [T], var: &'a [T] },
}

/// Records primitives applied during a forward pass.
#[derive(Debug, Clone)]
pub struct Tape<T> {
    id: u32,
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed), nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records an input tensor. Gradients are tracked iff the tensor was
    /// built with `with_grad(true)`.
    pub fn leaf(&mut self, tensor: Tensor<T>) -> Var {
        let needs_grad = tensor.requires_grad();
        self.push_node(tensor, Op::Leaf, Vec::new(), needs_grad)
    }

    pub fn param(&mut self, tensor: Tensor<T>) -> Var {
        self.leaf(tensor.with_grad(true))
    }

    pub fn constant(&mut self, tensor: Tensor<T>) -> Var {
        self.leaf(tensor.with_grad(false))
    }

    pub fn tensor(&self, v: Var) -> &Tensor<T> {
        self.check(v).expect("variable belongs to another tape");
        &self.nodes[v.idx].tensor
    }

    pub fn values(&self, v: Var) -> &[T] {
        self.tensor(v).values()
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.tensor(v).shape()
    }

    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.tensor(v).grad()
    }

    /// Statistics used by a batch-normalization node.
    pub fn norm_stats(&self, v: Var) -> Option<(&[T], &[T])> {
        match &self.nodes.get(v.idx)?.op {
            Op::BatchNorm { mean, var, .. } => Some((mean, var)),
            _ => None,
        }
    }

    fn check(&self, v: Var) -> Result<()> {
        if v.tape != self.id || v.idx >= self.nodes.len() {
            return Err(EngineError::Contract(format!("variable #{} is not on this tape", v.idx)));
        }
        Ok(())
    }

    fn push_node(&mut self, tensor: Tensor<T>, op: Op<T>, inputs: Vec<Var>, needs_grad: bool) -> Var {
        let idx = self.nodes.len();
        self.nodes.push(Node { tensor, op, inputs, needs_grad });
        Var { tape: self.id, idx }
    }

    fn push(&mut self, shape: Vec<usize>, values: Vec<T>, op: Op<T>, inputs: Vec<Var>) -> Result<Var> {
        let needs_grad = inputs.iter().any(|v| self.nodes[v.idx].needs_grad);
        let tensor = Tensor::new(shape, values)?;
        Ok(self.push_node(tensor, op, inputs, needs_grad))
    }

    fn dims2(&self, v: Var) -> Result<(usize, usize)> {
        self.check(v)?;
        match self.nodes[v.idx].tensor.shape() {
            &[r, c] => Ok((r, c)),
            s => Err(EngineError::Shape(format!("expected a matrix, got shape {s:?}"))),
        }
    }

    /// `[S×C]` is read as a batch of one.
    fn seq_dims(&self, v: Var) -> Result<(SeqDims, bool)> {
        self.check(v)?;
        match self.nodes[v.idx].tensor.shape() {
            &[len, channels] => Ok((SeqDims { batch: 1, len, channels }, false)),
            &[batch, len, channels] => Ok((SeqDims { batch, len, channels }, true)),
            s => Err(EngineError::Shape(format!("expected [S×C] or [B×S×C], got {s:?}"))),
        }
    }

    fn same_shape(&self, a: Var, b: Var) -> Result<()> {
        self.check(a)?;
        self.check(b)?;
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(EngineError::Shape(format!("shape mismatch {sa:?} vs {sb:?}")));
        }
        Ok(())
    }

    // ----- dense algebra -------------------------------------------------

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (n, k) = self.dims2(a)?;
        let (k2, m) = self.dims2(b)?;
        if k != k2 {
            return Err(EngineError::Shape(format!("matmul [{n}×{k}]·[{k2}×{m}]")));
        }
        let out = kernels::matmul(self.values(a), self.values(b), n, k, m);
        self.push(vec![n, m], out, Op::MatMul { n, k, m }, vec![a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b)?;
        let out = self.values(a).iter().zip(self.values(b)).map(|(&x, &y)| x + y).collect();
        self.push(self.shape(a).to_vec(), out, Op::Add, vec![a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b)?;
        let out = self.values(a).iter().zip(self.values(b)).map(|(&x, &y)| x - y).collect();
        self.push(self.shape(a).to_vec(), out, Op::Sub, vec![a, b])
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b)?;
        let out = self.values(a).iter().zip(self.values(b)).map(|(&x, &y)| x * y).collect();
        self.push(self.shape(a).to_vec(), out, Op::Mul, vec![a, b])
    }

    /// Adds `bias` (length = last dimension of `x`) to every row of `x`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        self.check(x)?;
        self.check(bias)?;
        let cols = *self.shape(x).last().expect("nonempty shape");
        if self.tensor(bias).len() != cols {
            return Err(EngineError::Shape(format!(
                "bias of length {} for rows of width {cols}",
                self.tensor(bias).len()
            )));
        }
        let b = self.values(bias);
        let out = self.values(x).chunks(cols).flat_map(|row| row.iter().zip(b).map(|(&v, &w)| v + w)).collect();
        self.push(self.shape(x).to_vec(), out, Op::AddBias { cols }, vec![x, bias])
    }

    /// Adds `col[i]` to every element of row `i` of the matrix `x`.
    pub fn add_column(&mut self, x: Var, col: Var) -> Result<Var> {
        let (rows, cols) = self.dims2(x)?;
        self.check(col)?;
        if self.tensor(col).len() != rows {
            return Err(EngineError::Shape(format!(
                "column of length {} for {rows} rows",
                self.tensor(col).len()
            )));
        }
        let c = self.values(col);
        let out = self
            .values(x)
            .chunks(cols)
            .zip(c)
            .flat_map(|(row, &s)| row.iter().map(move |&v| v + s))
            .collect();
        self.push(vec![rows, cols], out, Op::AddColumn { cols }, vec![x, col])
    }

    /// Multiplies `x` by the single-element tensor `s`.
    pub fn scale_by(&mut self, x: Var, s: Var) -> Result<Var> {
        self.check(x)?;
        self.check(s)?;
        let sv = self.tensor(s).item()?;
        let out = self.values(x).iter().map(|&v| v * sv).collect();
        self.push(self.shape(x).to_vec(), out, Op::ScaleBy, vec![x, s])
    }

    pub fn scale(&mut self, x: Var, c: T) -> Result<Var> {
        self.check(x)?;
        let out = self.values(x).iter().map(|&v| v * c).collect();
        self.push(self.shape(x).to_vec(), out, Op::Scale(c), vec![x])
    }

    // ----- activations ---------------------------------------------------

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.check(x)?;
        let out = self.values(x).iter().map(|&v| v.max(T::zero())).collect();
        self.push(self.shape(x).to_vec(), out, Op::Relu, vec![x])
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        self.check(x)?;
        let out = self.values(x).iter().map(|&v| v.tanh()).collect();
        self.push(self.shape(x).to_vec(), out, Op::Tanh, vec![x])
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.check(x)?;
        let out = self.values(x).iter().map(|&v| kernels::sigmoid(v)).collect();
        self.push(self.shape(x).to_vec(), out, Op::Sigmoid, vec![x])
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        self.check(x)?;
        let cols = *self.shape(x).last().expect("nonempty shape");
        let out = kernels::softmax_rows(self.values(x), cols);
        self.push(self.shape(x).to_vec(), out, Op::Softmax { cols }, vec![x])
    }

    /// Inverted dropout. In eval mode, or with `keep_prob == 1`, returns `x`
    /// itself.
    pub fn dropout(&mut self, x: Var, keep_prob: T, mode: Mode, rng: &mut Rng) -> Result<Var> {
        self.check(x)?;
        if !(keep_prob > T::zero() && keep_prob <= T::one()) {
            return Err(EngineError::Parameter(format!("keep probability {keep_prob} outside (0, 1]")));
        }
        if mode == Mode::Eval || keep_prob == T::one() {
            return Ok(x);
        }
        let keep = keep_prob.as_f64();
        let scale = T::one() / keep_prob;
        let mask: Vec<T> = (0..self.tensor(x).len())
            .map(|_| if rng.random::<f64>() < keep { scale } else { T::zero() })
            .collect();
        let out = self.values(x).iter().zip(&mask).map(|(&v, &m)| v * m).collect();
        self.push(self.shape(x).to_vec(), out, Op::Dropout { mask }, vec![x])
    }

    /// Batch normalization of a `[B×D]` matrix:
    /// `gamma·(x−μ)/√(σ²+eps) + beta`.
    pub fn batchnorm(&mut self, x: Var, gamma: Var, beta: Var, stats: NormStats<'_, T>, eps: T) -> Result<Var> {
        let (rows, cols) = self.dims2(x)?;
        self.check(gamma)?;
        self.check(beta)?;
        if self.tensor(gamma).len() != cols || self.tensor(beta).len() != cols {
            return Err(EngineError::Shape(format!("batchnorm affine parameters must have length {cols}")));
        }
        let (mean, var, batch_stats) = match stats {
            NormStats::Batch => {
                let (m, v) = kernels::column_stats(self.values(x), rows, cols);
                (m, v, true)
            }
            NormStats::Fixed { mean, var } => {
                if mean.len() != cols || var.len() != cols {
                    return Err(EngineError::Shape(format!("batchnorm statistics must have length {cols}")));
                }
                (mean.to_vec(), var.to_vec(), false)
            }
        };
        let out = kernels::batchnorm(self.values(x), cols, self.values(gamma), self.values(beta), &mean, &var, eps);
        self.push(
            vec![rows, cols],
            out,
            Op::BatchNorm { rows, cols, eps, mean, var, batch_stats },
            vec![x, gamma, beta],
        )
    }

    // ----- sequence primitives -------------------------------------------

    /// Valid 1-D convolution of `[S×C]` (or `[B×S×C]`) with kernels
    /// `[k×C×F]` and bias `[F]`, giving `[(S−k+1)×F]`.
    pub fn conv1d(&mut self, input: Var, kernel: Var, bias: Var) -> Result<Var> {
        let (dims, batched) = self.seq_dims(input)?;
        self.check(kernel)?;
        self.check(bias)?;
        let (k, c, filters) = match self.shape(kernel) {
            &[k, c, f] => (k, c, f),
            s => return Err(EngineError::Shape(format!("kernel must be [k×C×F], got {s:?}"))),
        };
        if c != dims.channels {
            return Err(EngineError::Shape(format!("kernel expects {c} channels, input has {}", dims.channels)));
        }
        if dims.len < k {
            return Err(EngineError::Shape(format!("sequence length {} shorter than kernel {k}", dims.len)));
        }
        if self.tensor(bias).len() != filters {
            return Err(EngineError::Shape(format!("bias must have length {filters}")));
        }
        let out = kernels::conv1d(self.values(input), dims, self.values(kernel), k, filters, self.values(bias));
        let out_len = dims.len - k + 1;
        let shape = if batched { vec![dims.batch, out_len, filters] } else { vec![out_len, filters] };
        self.push(shape, out, Op::Conv1d { dims, k, filters }, vec![input, kernel, bias])
    }

    /// Non-overlapping max pooling with window and stride `pool`; a trailing
    /// remainder shorter than `pool` is discarded.
    pub fn maxpool1d(&mut self, input: Var, pool: usize) -> Result<Var> {
        let (dims, batched) = self.seq_dims(input)?;
        if pool == 0 {
            return Err(EngineError::Parameter("pool length must be at least 1".into()));
        }
        if pool > dims.len {
            return Err(EngineError::Shape(format!("pool {pool} longer than sequence {}", dims.len)));
        }
        let (out, argmax) = kernels::maxpool1d(self.values(input), dims, pool);
        let out_len = dims.len / pool;
        let shape = if batched { vec![dims.batch, out_len, dims.channels] } else { vec![out_len, dims.channels] };
        self.push(shape, out, Op::MaxPool1d { dims, pool, argmax }, vec![input])
    }

    fn check_ids(&self, table: Var, ids: &[usize]) -> Result<(usize, usize)> {
        let (rows, dim) = self.dims2(table)?;
        if let Some(&bad) = ids.iter().find(|&&id| id >= rows) {
            return Err(EngineError::Shape(format!("id {bad} outside embedding table of {rows} rows")));
        }
        Ok((rows, dim))
    }

    /// Row lookup in `table` (`[V×D]`). `ids` is laid out as `shape`
    /// (`[S]` or `[B×S]`); the result appends the embedding axis.
    pub fn embedding(&mut self, table: Var, ids: &[usize], shape: &[usize]) -> Result<Var> {
        let (_, dim) = self.check_ids(table, ids)?;
        if shape.iter().product::<usize>() != ids.len() {
            return Err(EngineError::Shape(format!("{} ids do not fill shape {shape:?}", ids.len())));
        }
        let t = self.values(table);
        let mut out = Vec::with_capacity(ids.len() * dim);
        for &id in ids {
            out.extend_from_slice(&t[id * dim..(id + 1) * dim]);
        }
        let mut out_shape = shape.to_vec();
        out_shape.push(dim);
        self.push(out_shape, out, Op::Embedding { ids: ids.to_vec(), dim }, vec![table])
    }

    /// `conv1d(embedding(table, ids), kernel, bias)` computed through
    /// per-word projections. `ids` is `[batch×len]`; output `[batch×(len−k+1)×F]`.
    pub fn embed_conv1d(
        &mut self,
        table: Var,
        ids: &[usize],
        batch: usize,
        kernel: Var,
        bias: Var,
    ) -> Result<Var> {
        let (_, dim) = self.check_ids(table, ids)?;
        self.check(kernel)?;
        self.check(bias)?;
        if batch == 0 || ids.len() % batch != 0 {
            return Err(EngineError::Shape(format!("{} ids cannot form {batch} rows", ids.len())));
        }
        let len = ids.len() / batch;
        let (k, c, filters) = match self.shape(kernel) {
            &[k, c, f] => (k, c, f),
            s => return Err(EngineError::Shape(format!("kernel must be [k×C×F], got {s:?}"))),
        };
        if c != dim {
            return Err(EngineError::Shape(format!("kernel expects {c} channels, embeddings have {dim}")));
        }
        if len < k {
            return Err(EngineError::Shape(format!("sequence length {len} shorter than kernel {k}")));
        }
        if self.tensor(bias).len() != filters {
            return Err(EngineError::Shape(format!("bias must have length {filters}")));
        }
        let (unique, slots) = kernels::id_slots(ids);
        let out = kernels::embed_conv1d(
            self.values(table),
            dim,
            &unique,
            &slots,
            batch,
            len,
            self.values(kernel),
            k,
            filters,
            self.values(bias),
        );
        self.push(
            vec![batch, len - k + 1, filters],
            out,
            Op::EmbedConv1d { unique, slots, batch, len, dim, k, filters },
            vec![table, kernel, bias],
        )
    }

    // ----- structural ----------------------------------------------------

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        self.check(x)?;
        let n: usize = shape.iter().product();
        if n != self.tensor(x).len() {
            return Err(EngineError::Shape(format!("cannot reshape {:?} into {shape:?}", self.shape(x))));
        }
        let out = self.values(x).to_vec();
        self.push(shape, out, Op::Reshape, vec![x])
    }

    /// Horizontal concatenation of matrices with equal row counts.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(EngineError::Contract("concat_cols of nothing".into()));
        }
        let mut rows = None;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = self.dims2(p)?;
            if *rows.get_or_insert(r) != r {
                return Err(EngineError::Shape("concat_cols row counts differ".into()));
            }
            widths.push(c);
        }
        let rows = rows.expect("nonempty");
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (&p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.values(p)[r * w..(r + 1) * w]);
            }
        }
        self.push(vec![rows, total], out, Op::ConcatCols { rows, widths }, parts.to_vec())
    }

    /// Columns `start..end` of a matrix.
    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let (rows, cols) = self.dims2(x)?;
        if start >= end || end > cols {
            return Err(EngineError::Shape(format!("column range {start}..{end} of {cols}")));
        }
        let out = self.values(x).chunks(cols).flat_map(|row| row[start..end].iter().copied()).collect();
        self.push(vec![rows, end - start], out, Op::SliceCols { cols, start, end }, vec![x])
    }

    /// Stacks equally sized tensors as the rows of a matrix.
    pub fn stack_rows(&mut self, rows: &[Var]) -> Result<Var> {
        let first = *rows.first().ok_or_else(|| EngineError::Contract("stack_rows of nothing".into()))?;
        self.check(first)?;
        let width = self.tensor(first).len();
        let mut out = Vec::with_capacity(rows.len() * width);
        for &r in rows {
            self.check(r)?;
            if self.tensor(r).len() != width {
                return Err(EngineError::Shape("stack_rows lengths differ".into()));
            }
            out.extend_from_slice(self.values(r));
        }
        self.push(vec![rows.len(), width], out, Op::StackRows, rows.to_vec())
    }

    // ----- reductions ----------------------------------------------------

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        self.check(x)?;
        let s = self.values(x).iter().copied().sum();
        self.push(vec![1], vec![s], Op::Sum, vec![x])
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        self.check(x)?;
        let n = T::from_usize_lossy(self.tensor(x).len());
        let s: T = self.values(x).iter().copied().sum();
        self.push(vec![1], vec![s / n], Op::Mean, vec![x])
    }

    pub fn sum_squares(&mut self, x: Var) -> Result<Var> {
        self.check(x)?;
        let s = self.values(x).iter().map(|&v| v * v).sum();
        self.push(vec![1], vec![s], Op::SumSquares, vec![x])
    }

    /// Mean squared difference between equally sized tensors.
    pub fn mse_loss(&mut self, pred: Var, target: Var) -> Result<Var> {
        self.check(pred)?;
        self.check(target)?;
        if self.tensor(pred).len() != self.tensor(target).len() {
            return Err(EngineError::Shape("mse_loss operands differ in length".into()));
        }
        let n = T::from_usize_lossy(self.tensor(pred).len());
        let s: T = self.values(pred).iter().zip(self.values(target)).map(|(&p, &t)| (p - t) * (p - t)).sum();
        self.push(vec![1], vec![s / n], Op::MseLoss, vec![pred, target])
    }

    // ----- replay --------------------------------------------------------

    /// Re-executes every recorded primitive from its recorded inputs and
    /// returns the recomputed values, node by node. Stochastic choices
    /// (dropout masks) are replayed from the recorded context.
    pub fn replay(&self) -> Vec<Vec<T>> {
        let mut values: Vec<Vec<T>> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let ins: Vec<&[T]> = node.inputs.iter().map(|v| values[v.idx].as_slice()).collect();
            let shapes: Vec<&[usize]> = node.inputs.iter().map(|v| self.nodes[v.idx].tensor.shape()).collect();
            let out = match &node.op {
                Op::Leaf => node.tensor.values().to_vec(),
                op => eval(op, &ins, &shapes),
            };
            values.push(out);
        }
        values
    }

    /// True when [`Tape::replay`] reproduces every recorded value bit-for-bit.
    pub fn replay_matches(&self) -> bool {
        self.replay()
            .iter()
            .zip(&self.nodes)
            .all(|(v, n)| v.iter().map(|x| x.as_f64().to_bits()).eq(n.tensor.values().iter().map(|x| x.as_f64().to_bits())))
    }

    // ----- backward ------------------------------------------------------

    /// Reverse-mode sweep from the scalar `loss`. Afterwards every leaf
    /// created with gradient tracking holds `∂loss/∂leaf` (zeros when the
    /// loss does not depend on it).
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        self.check(loss)?;
        if self.nodes[loss.idx].tensor.len() != 1 {
            return Err(EngineError::Contract(format!(
                "loss must be a scalar, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Vec<T>>> = vec![None; self.nodes.len()];
        grads[loss.idx] = Some(vec![T::one()]);
        for i in (0..=loss.idx).rev() {
            if !self.nodes[i].needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if matches!(node.op, Op::Leaf) {
                grads[i] = Some(g);
                continue;
            }
            let contributions = self.input_grads(node, &g);
            for (input, contrib) in node.inputs.iter().zip(contributions) {
                if let Some(c) = contrib {
                    match &mut grads[input.idx] {
                        Some(acc) => acc.iter_mut().zip(&c).for_each(|(a, &b)| *a += b),
                        slot @ None => *slot = Some(c),
                    }
                }
            }
        }
        for (node, g) in self.nodes.iter_mut().zip(grads) {
            if matches!(node.op, Op::Leaf) && node.tensor.requires_grad() {
                let n = node.tensor.len();
                node.tensor.set_grad(Some(g.unwrap_or_else(|| vec![T::zero(); n])));
            }
        }
        Ok(())
    }

    fn input_grads(&self, node: &Node<T>, g: &[T]) -> Vec<Option<Vec<T>>> {
        let inputs = &node.inputs;
        let need = |j: usize| self.nodes[inputs[j].idx].needs_grad;
        let val = |j: usize| self.nodes[inputs[j].idx].tensor.values();
        let zeros = |j: usize| vec![T::zero(); self.nodes[inputs[j].idx].tensor.len()];
        let out = node.tensor.values();
        match &node.op {
            Op::Leaf => Vec::new(),
            Op::MatMul { n, k, m } => {
                let da = need(0).then(|| {
                    let mut d = zeros(0);
                    kernels::matmul_grad_a(g, val(1), &mut d, *n, *k, *m);
                    d
                });
                let db = need(1).then(|| {
                    let mut d = zeros(1);
                    kernels::matmul_grad_b(g, val(0), &mut d, *n, *k, *m);
                    d
                });
                vec![da, db]
            }
            Op::Add => vec![need(0).then(|| g.to_vec()), need(1).then(|| g.to_vec())],
            Op::Sub => vec![need(0).then(|| g.to_vec()), need(1).then(|| g.iter().map(|&v| -v).collect())],
            Op::Mul => vec![
                need(0).then(|| g.iter().zip(val(1)).map(|(&d, &b)| d * b).collect()),
                need(1).then(|| g.iter().zip(val(0)).map(|(&d, &a)| d * a).collect()),
            ],
            Op::AddBias { cols } => {
                let db = need(1).then(|| {
                    let mut d = vec![T::zero(); *cols];
                    for row in g.chunks(*cols) {
                        d.iter_mut().zip(row).for_each(|(a, &b)| *a += b);
                    }
                    d
                });
                vec![need(0).then(|| g.to_vec()), db]
            }
            Op::AddColumn { cols } => {
                let dc = need(1).then(|| g.chunks(*cols).map(|row| row.iter().copied().sum()).collect());
                vec![need(0).then(|| g.to_vec()), dc]
            }
            Op::ScaleBy => {
                let s = val(1)[0];
                vec![
                    need(0).then(|| g.iter().map(|&d| d * s).collect()),
                    need(1).then(|| vec![g.iter().zip(val(0)).map(|(&d, &x)| d * x).sum()]),
                ]
            }
            Op::Scale(c) => vec![Some(g.iter().map(|&d| d * *c).collect())],
            Op::Relu => {
                vec![Some(g.iter().zip(val(0)).map(|(&d, &x)| if x > T::zero() { d } else { T::zero() }).collect())]
            }
            Op::Tanh => vec![Some(g.iter().zip(out).map(|(&d, &y)| d * (T::one() - y * y)).collect())],
            Op::Sigmoid => vec![Some(g.iter().zip(out).map(|(&d, &y)| d * y * (T::one() - y)).collect())],
            Op::Softmax { cols } => {
                let mut d = zeros(0);
                kernels::softmax_rows_grad(out, g, &mut d, *cols);
                vec![Some(d)]
            }
            Op::Dropout { mask } => vec![Some(g.iter().zip(mask).map(|(&d, &m)| d * m).collect())],
            Op::BatchNorm { rows, cols, eps, mean, var, batch_stats } => {
                let mut dx = need(0).then(|| zeros(0));
                let mut dgamma = need(1).then(|| zeros(1));
                let mut dbeta = need(2).then(|| zeros(2));
                kernels::batchnorm_grad(
                    g,
                    val(0),
                    *rows,
                    *cols,
                    val(1),
                    mean,
                    var,
                    *eps,
                    *batch_stats,
                    dx.as_deref_mut(),
                    dgamma.as_deref_mut(),
                    dbeta.as_deref_mut(),
                );
                vec![dx, dgamma, dbeta]
            }
            Op::Conv1d { dims, k, filters } => {
                let mut di = need(0).then(|| zeros(0));
                let mut dk = need(1).then(|| zeros(1));
                let mut db = need(2).then(|| zeros(2));
                kernels::conv1d_grad(
                    g,
                    val(0),
                    *dims,
                    val(1),
                    *k,
                    *filters,
                    di.as_deref_mut(),
                    dk.as_deref_mut(),
                    db.as_deref_mut(),
                );
                vec![di, dk, db]
            }
            Op::MaxPool1d { argmax, .. } => {
                let mut d = zeros(0);
                for (&idx, &v) in argmax.iter().zip(g) {
                    d[idx] += v;
                }
                vec![Some(d)]
            }
            Op::Embedding { ids, dim } => {
                let mut d = zeros(0);
                for (row, &id) in g.chunks(*dim).zip(ids) {
                    d[id * dim..(id + 1) * dim].iter_mut().zip(row).for_each(|(a, &b)| *a += b);
                }
                vec![Some(d)]
            }
            Op::EmbedConv1d { unique, slots, batch, len, dim, k, filters } => {
                let mut dt = need(0).then(|| zeros(0));
                let mut dk = need(1).then(|| zeros(1));
                let mut db = need(2).then(|| zeros(2));
                kernels::embed_conv1d_grad(
                    g,
                    val(0),
                    *dim,
                    unique,
                    slots,
                    *batch,
                    *len,
                    val(1),
                    *k,
                    *filters,
                    dt.as_deref_mut(),
                    dk.as_deref_mut(),
                    db.as_deref_mut(),
                );
                vec![dt, dk, db]
            }
            Op::Reshape => vec![Some(g.to_vec())],
            Op::ConcatCols { rows, widths } => {
                let total: usize = widths.iter().sum();
                let mut offset = 0;
                let mut res = Vec::with_capacity(widths.len());
                for (j, &w) in widths.iter().enumerate() {
                    res.push(need(j).then(|| {
                        let mut d = Vec::with_capacity(rows * w);
                        for r in 0..*rows {
                            d.extend_from_slice(&g[r * total + offset..r * total + offset + w]);
                        }
                        d
                    }));
                    offset += w;
                }
                res
            }
            Op::SliceCols { cols, start, end } => {
                let w = end - start;
                let mut d = zeros(0);
                for (drow, grow) in d.chunks_mut(*cols).zip(g.chunks(w)) {
                    drow[*start..*end].copy_from_slice(grow);
                }
                vec![Some(d)]
            }
            Op::StackRows => {
                let w = g.len() / inputs.len();
                (0..inputs.len()).map(|j| need(j).then(|| g[j * w..(j + 1) * w].to_vec())).collect()
            }
            Op::Sum => vec![Some(vec![g[0]; val(0).len()])],
            Op::Mean => {
                let n = T::from_usize_lossy(val(0).len());
                vec![Some(vec![g[0] / n; val(0).len()])]
            }
            Op::SumSquares => vec![Some(val(0).iter().map(|&x| g[0] * (x + x)).collect())],
            Op::MseLoss => {
                let n = T::from_usize_lossy(val(0).len());
                let scale = (g[0] + g[0]) / n;
                let diff: Vec<T> = val(0).iter().zip(val(1)).map(|(&p, &t)| (p - t) * scale).collect();
                vec![need(0).then(|| diff.clone()), need(1).then(|| diff.iter().map(|&v| -v).collect())]
            }
        }
    }
}

/// Forward evaluation of a recorded primitive from raw input buffers.
fn eval<T: Scalar>(op: &Op<T>, ins: &[&[T]], shapes: &[&[usize]]) -> Vec<T> {
    let zip2 = |f: fn(T, T) -> T| ins[0].iter().zip(ins[1]).map(|(&a, &b)| f(a, b)).collect::<Vec<T>>();
    match op {
        Op::Leaf => unreachable!("leaves are not re-evaluated"),
        Op::MatMul { n, k, m } => kernels::matmul(ins[0], ins[1], *n, *k, *m),
        Op::Add => zip2(|a, b| a + b),
        Op::Sub => zip2(|a, b| a - b),
        Op::Mul => zip2(|a, b| a * b),
        Op::AddBias { cols } => {
            ins[0].chunks(*cols).flat_map(|row| row.iter().zip(ins[1]).map(|(&v, &w)| v + w)).collect()
        }
        Op::AddColumn { cols } => {
            ins[0].chunks(*cols).zip(ins[1]).flat_map(|(row, &s)| row.iter().map(move |&v| v + s)).collect()
        }
        Op::ScaleBy => ins[0].iter().map(|&v| v * ins[1][0]).collect(),
        Op::Scale(c) => ins[0].iter().map(|&v| v * *c).collect(),
        Op::Relu => ins[0].iter().map(|&v| v.max(T::zero())).collect(),
        Op::Tanh => ins[0].iter().map(|&v| v.tanh()).collect(),
        Op::Sigmoid => ins[0].iter().map(|&v| kernels::sigmoid(v)).collect(),
        Op::Softmax { cols } => kernels::softmax_rows(ins[0], *cols),
        Op::Dropout { mask } => ins[0].iter().zip(mask).map(|(&v, &m)| v * m).collect(),
        Op::BatchNorm { rows, cols, eps, mean, var, batch_stats } => {
            if *batch_stats {
                let (m, v) = kernels::column_stats(ins[0], *rows, *cols);
                kernels::batchnorm(ins[0], *cols, ins[1], ins[2], &m, &v, *eps)
            } else {
                kernels::batchnorm(ins[0], *cols, ins[1], ins[2], mean, var, *eps)
            }
        }
        Op::Conv1d { dims, k, filters } => kernels::conv1d(ins[0], *dims, ins[1], *k, *filters, ins[2]),
        Op::MaxPool1d { dims, pool, .. } => kernels::maxpool1d(ins[0], *dims, *pool).0,
        Op::Embedding { ids, dim } => ids.iter().flat_map(|&id| ins[0][id * dim..(id + 1) * dim].iter().copied()).collect(),
        Op::EmbedConv1d { unique, slots, batch, len, dim, k, filters } => {
            kernels::embed_conv1d(ins[0], *dim, unique, slots, *batch, *len, ins[1], *k, *filters, ins[2])
        }
        Op::Reshape => ins[0].to_vec(),
        Op::ConcatCols { rows, widths } => {
            let mut out = Vec::new();
            for r in 0..*rows {
                for (buf, &w) in ins.iter().zip(widths) {
                    out.extend_from_slice(&buf[r * w..(r + 1) * w]);
                }
            }
            out
        }
        Op::SliceCols { cols, start, end } => {
            ins[0].chunks(*cols).flat_map(|row| row[*start..*end].iter().copied()).collect()
        }
        Op::StackRows => ins.iter().flat_map(|b| b.iter().copied()).collect(),
        Op::Sum => vec![ins[0].iter().copied().sum()],
        Op::Mean => {
            let n: usize = shapes[0].iter().product();
            vec![ins[0].iter().copied().sum::<T>() / T::from_usize_lossy(n)]
        }
        Op::SumSquares => vec![ins[0].iter().map(|&v| v * v).sum()],
        Op::MseLoss => {
            let n = T::from_usize_lossy(ins[0].len());
            vec![ins[0].iter().zip(ins[1]).map(|(&p, &t)| (p - t) * (p - t)).sum::<T>() / n]
        }
    }
}
