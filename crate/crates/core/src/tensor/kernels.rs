//! Numeric kernels behind the tape primitives. All buffers are row-major.

use crate::scalar::Scalar;

/// `[n×k]·[k×m]`
pub(crate) fn matmul<T: Scalar>(a: &[T], b: &[T], n: usize, k: usize, m: usize) -> Vec<T> {
    let mut out = vec![T::zero(); n * m];
    for i in 0..n {
        let row = &mut out[i * m..(i + 1) * m];
        for p in 0..k {
            let av = a[i * k + p];
            if av == T::zero() {
                continue;
            }
            let brow = &b[p * m..(p + 1) * m];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

/// `dA = dC·Bᵀ` accumulated into `da`.
pub(crate) fn matmul_grad_a<T: Scalar>(dc: &[T], b: &[T], da: &mut [T], n: usize, k: usize, m: usize) {
    for i in 0..n {
        let dcrow = &dc[i * m..(i + 1) * m];
        for p in 0..k {
            let brow = &b[p * m..(p + 1) * m];
            let mut acc = T::zero();
            for (&g, &bv) in dcrow.iter().zip(brow) {
                acc += g * bv;
            }
            da[i * k + p] += acc;
        }
    }
}

/// `dB = Aᵀ·dC` accumulated into `db`.
pub(crate) fn matmul_grad_b<T: Scalar>(dc: &[T], a: &[T], db: &mut [T], n: usize, k: usize, m: usize) {
    for i in 0..n {
        let dcrow = &dc[i * m..(i + 1) * m];
        for p in 0..k {
            let av = a[i * k + p];
            if av == T::zero() {
                continue;
            }
            let dbrow = &mut db[p * m..(p + 1) * m];
            for (d, &g) in dbrow.iter_mut().zip(dcrow) {
                *d += av * g;
            }
        }
    }
}

#[inline]
pub(crate) fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Row-wise softmax over the last axis of width `cols`, max-shifted.
pub(crate) fn softmax_rows<T: Scalar>(x: &[T], cols: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(x.len());
    for row in x.chunks(cols) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let start = out.len();
        let mut sum = T::zero();
        for &v in row {
            let e = (v - max).exp();
            sum += e;
            out.push(e);
        }
        for o in &mut out[start..] {
            *o /= sum;
        }
    }
    out
}

pub(crate) fn softmax_rows_grad<T: Scalar>(y: &[T], dy: &[T], dx: &mut [T], cols: usize) {
    for ((yr, gr), dr) in y.chunks(cols).zip(dy.chunks(cols)).zip(dx.chunks_mut(cols)) {
        let dot: T = yr.iter().zip(gr).map(|(&a, &b)| a * b).sum();
        for ((d, &yv), &g) in dr.iter_mut().zip(yr).zip(gr) {
            *d += yv * (g - dot);
        }
    }
}

/// Geometry of a batched sequence tensor `[batch × len × channels]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct SeqDims {
    pub batch: usize,
    pub len: usize,
    pub channels: usize,
}

/// Valid 1-D convolution. `kernel` is `[k×C×F]`.
pub(crate) fn conv1d<T: Scalar>(
    input: &[T],
    dims: SeqDims,
    kernel: &[T],
    k: usize,
    filters: usize,
    bias: &[T],
) -> Vec<T> {
    let SeqDims { batch, len, channels } = dims;
    let out_len = len - k + 1;
    let mut out = vec![T::zero(); batch * out_len * filters];
    for b in 0..batch {
        for i in 0..out_len {
            let orow = &mut out[(b * out_len + i) * filters..(b * out_len + i + 1) * filters];
            orow.copy_from_slice(bias);
            for j in 0..k {
                let irow = &input[(b * len + i + j) * channels..(b * len + i + j + 1) * channels];
                for (c, &x) in irow.iter().enumerate() {
                    if x == T::zero() {
                        continue;
                    }
                    let krow = &kernel[(j * channels + c) * filters..(j * channels + c + 1) * filters];
                    for (o, &w) in orow.iter_mut().zip(krow) {
                        *o += x * w;
                    }
                }
            }
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn conv1d_grad<T: Scalar>(
    dout: &[T],
    input: &[T],
    dims: SeqDims,
    kernel: &[T],
    k: usize,
    filters: usize,
    dinput: Option<&mut [T]>,
    dkernel: Option<&mut [T]>,
    dbias: Option<&mut [T]>,
) {
    let SeqDims { batch, len, channels } = dims;
    let out_len = len - k + 1;
    if let Some(db) = dbias {
        for row in dout.chunks(filters) {
            for (d, &g) in db.iter_mut().zip(row) {
                *d += g;
            }
        }
    }
    if let Some(dk) = dkernel {
        for b in 0..batch {
            for i in 0..out_len {
                let grow = &dout[(b * out_len + i) * filters..(b * out_len + i + 1) * filters];
                for j in 0..k {
                    let irow = &input[(b * len + i + j) * channels..(b * len + i + j + 1) * channels];
                    for (c, &x) in irow.iter().enumerate() {
                        if x == T::zero() {
                            continue;
                        }
                        let dkrow = &mut dk[(j * channels + c) * filters..(j * channels + c + 1) * filters];
                        for (d, &g) in dkrow.iter_mut().zip(grow) {
                            *d += x * g;
                        }
                    }
                }
            }
        }
    }
    if let Some(di) = dinput {
        for b in 0..batch {
            for i in 0..out_len {
                let grow = &dout[(b * out_len + i) * filters..(b * out_len + i + 1) * filters];
                for j in 0..k {
                    let base = (b * len + i + j) * channels;
                    for c in 0..channels {
                        let krow = &kernel[(j * channels + c) * filters..(j * channels + c + 1) * filters];
                        let mut acc = T::zero();
                        for (&w, &g) in krow.iter().zip(grow) {
                            acc += w * g;
                        }
                        di[base + c] += acc;
                    }
                }
            }
        }
    }
}

/// Non-overlapping max pooling along the sequence axis; ties resolve to the
/// first position. Returns values and, per output element, the flat index of
/// the winning input element.
pub(crate) fn maxpool1d<T: Scalar>(input: &[T], dims: SeqDims, pool: usize) -> (Vec<T>, Vec<usize>) {
    let SeqDims { batch, len, channels } = dims;
    let out_len = len / pool;
    let mut out = Vec::with_capacity(batch * out_len * channels);
    let mut arg = Vec::with_capacity(batch * out_len * channels);
    for b in 0..batch {
        for i in 0..out_len {
            for c in 0..channels {
                let mut best_idx = (b * len + i * pool) * channels + c;
                let mut best = input[best_idx];
                for p in 1..pool {
                    let idx = (b * len + i * pool + p) * channels + c;
                    if input[idx] > best {
                        best = input[idx];
                        best_idx = idx;
                    }
                }
                out.push(best);
                arg.push(best_idx);
            }
        }
    }
    (out, arg)
}

/// Per-column batch statistics of a `[rows×cols]` matrix (population variance).
pub(crate) fn column_stats<T: Scalar>(x: &[T], rows: usize, cols: usize) -> (Vec<T>, Vec<T>) {
    let n = T::from_usize_lossy(rows);
    let mut mean = vec![T::zero(); cols];
    for row in x.chunks(cols) {
        for (m, &v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let mut var = vec![T::zero(); cols];
    for row in x.chunks(cols) {
        for ((s, &v), &m) in var.iter_mut().zip(row).zip(&mean) {
            let d = v - m;
            *s += d * d;
        }
    }
    for s in &mut var {
        *s /= n;
    }
    (mean, var)
}

pub(crate) fn batchnorm<T: Scalar>(
    x: &[T],
    cols: usize,
    gamma: &[T],
    beta: &[T],
    mean: &[T],
    var: &[T],
    eps: T,
) -> Vec<T> {
    let inv: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
    let mut out = Vec::with_capacity(x.len());
    for row in x.chunks(cols) {
        for c in 0..cols {
            out.push(gamma[c] * (row[c] - mean[c]) * inv[c] + beta[c]);
        }
    }
    out
}

/// Gradients of batch normalization. With `batch_stats` the mean and
/// variance are functions of `x`; otherwise they are constants.
#[allow(clippy::too_many_arguments)]
pub(crate) fn batchnorm_grad<T: Scalar>(
    dy: &[T],
    x: &[T],
    rows: usize,
    cols: usize,
    gamma: &[T],
    mean: &[T],
    var: &[T],
    eps: T,
    batch_stats: bool,
    dx: Option<&mut [T]>,
    dgamma: Option<&mut [T]>,
    dbeta: Option<&mut [T]>,
) {
    let inv: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
    let mut sum_dy = vec![T::zero(); cols];
    let mut sum_dy_xhat = vec![T::zero(); cols];
    for (xr, gr) in x.chunks(cols).zip(dy.chunks(cols)) {
        for c in 0..cols {
            let xhat = (xr[c] - mean[c]) * inv[c];
            sum_dy[c] += gr[c];
            sum_dy_xhat[c] += gr[c] * xhat;
        }
    }
    if let Some(db) = dbeta {
        for (d, &s) in db.iter_mut().zip(&sum_dy) {
            *d += s;
        }
    }
    if let Some(dg) = dgamma {
        for (d, &s) in dg.iter_mut().zip(&sum_dy_xhat) {
            *d += s;
        }
    }
    if let Some(dx) = dx {
        let n = T::from_usize_lossy(rows);
        for ((xr, gr), dr) in x.chunks(cols).zip(dy.chunks(cols)).zip(dx.chunks_mut(cols)) {
            for c in 0..cols {
                let scale = gamma[c] * inv[c];
                if batch_stats {
                    let xhat = (xr[c] - mean[c]) * inv[c];
                    dr[c] += scale * (gr[c] - sum_dy[c] / n - xhat * sum_dy_xhat[c] / n);
                } else {
                    dr[c] += scale * gr[c];
                }
            }
        }
    }
}

/// Sorted distinct ids and, for every position, the slot of its id.
pub(crate) fn id_slots(ids: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let mut unique: Vec<usize> = ids.to_vec();
    unique.sort_unstable();
    unique.dedup();
    let slots = ids
        .iter()
        .map(|id| unique.binary_search(id).expect("id collected above"))
        .collect();
    (unique, slots)
}

/// Embedding lookup fused with a valid convolution:
/// `out[b,i,f] = bias[f] + Σ_j Σ_c table[ids[b,i+j],c]·kernel[j,c,f]`.
///
/// The per-word projections `P[w,j,f] = Σ_c table[w,c]·kernel[j,c,f]` are
/// computed once per distinct word, which makes the cost independent of the
/// embedding width per position.
#[allow(clippy::too_many_arguments)]
pub(crate) fn embed_conv1d<T: Scalar>(
    table: &[T],
    dim: usize,
    unique: &[usize],
    slots: &[usize],
    batch: usize,
    len: usize,
    kernel: &[T],
    k: usize,
    filters: usize,
    bias: &[T],
) -> Vec<T> {
    let proj = word_projections(table, dim, unique, kernel, k, filters);
    let out_len = len - k + 1;
    let mut out = vec![T::zero(); batch * out_len * filters];
    for b in 0..batch {
        for i in 0..out_len {
            let orow = &mut out[(b * out_len + i) * filters..(b * out_len + i + 1) * filters];
            orow.copy_from_slice(bias);
            for j in 0..k {
                let s = slots[b * len + i + j];
                let prow = &proj[(s * k + j) * filters..(s * k + j + 1) * filters];
                for (o, &p) in orow.iter_mut().zip(prow) {
                    *o += p;
                }
            }
        }
    }
    out
}

fn word_projections<T: Scalar>(
    table: &[T],
    dim: usize,
    unique: &[usize],
    kernel: &[T],
    k: usize,
    filters: usize,
) -> Vec<T> {
    let mut proj = vec![T::zero(); unique.len() * k * filters];
    for (s, &id) in unique.iter().enumerate() {
        let erow = &table[id * dim..(id + 1) * dim];
        for j in 0..k {
            let prow = &mut proj[(s * k + j) * filters..(s * k + j + 1) * filters];
            for (c, &e) in erow.iter().enumerate() {
                if e == T::zero() {
                    continue;
                }
                let krow = &kernel[(j * dim + c) * filters..(j * dim + c + 1) * filters];
                for (p, &w) in prow.iter_mut().zip(krow) {
                    *p += e * w;
                }
            }
        }
    }
    proj
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn embed_conv1d_grad<T: Scalar>(
    dout: &[T],
    table: &[T],
    dim: usize,
    unique: &[usize],
    slots: &[usize],
    batch: usize,
    len: usize,
    kernel: &[T],
    k: usize,
    filters: usize,
    dtable: Option<&mut [T]>,
    dkernel: Option<&mut [T]>,
    dbias: Option<&mut [T]>,
) {
    let out_len = len - k + 1;
    if let Some(db) = dbias {
        for row in dout.chunks(filters) {
            for (d, &g) in db.iter_mut().zip(row) {
                *d += g;
            }
        }
    }
    if dtable.is_none() && dkernel.is_none() {
        return;
    }
    // Gradient w.r.t. the per-word projections.
    let mut dproj = vec![T::zero(); unique.len() * k * filters];
    for b in 0..batch {
        for i in 0..out_len {
            let grow = &dout[(b * out_len + i) * filters..(b * out_len + i + 1) * filters];
            for j in 0..k {
                let s = slots[b * len + i + j];
                let drow = &mut dproj[(s * k + j) * filters..(s * k + j + 1) * filters];
                for (d, &g) in drow.iter_mut().zip(grow) {
                    *d += g;
                }
            }
        }
    }
    if let Some(dk) = dkernel {
        for (s, &id) in unique.iter().enumerate() {
            let erow = &table[id * dim..(id + 1) * dim];
            for j in 0..k {
                let drow = &dproj[(s * k + j) * filters..(s * k + j + 1) * filters];
                for (c, &e) in erow.iter().enumerate() {
                    if e == T::zero() {
                        continue;
                    }
                    let dkrow = &mut dk[(j * dim + c) * filters..(j * dim + c + 1) * filters];
                    for (d, &g) in dkrow.iter_mut().zip(drow) {
                        *d += e * g;
                    }
                }
            }
        }
    }
    if let Some(dt) = dtable {
        for (s, &id) in unique.iter().enumerate() {
            let dtrow = &mut dt[id * dim..(id + 1) * dim];
            for j in 0..k {
                let drow = &dproj[(s * k + j) * filters..(s * k + j + 1) * filters];
                for (c, d) in dtrow.iter_mut().enumerate() {
                    let krow = &kernel[(j * dim + c) * filters..(j * dim + c + 1) * filters];
                    let mut acc = T::zero();
                    for (&w, &g) in krow.iter().zip(drow) {
                        acc += w * g;
                    }
                    *d += acc;
                }
            }
        }
    }
}
