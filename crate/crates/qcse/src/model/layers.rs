//! Batched forward and backward passes.
//!
//! Convolutions run as im2col + matrix multiply. Activations are laid
//! out time-major: a batch of B frames at layer length L with C channels
//! is a `[B*L, C]` matrix of B contiguous `[L, C]` blocks, so flattening
//! a block row-major (time outer, channel inner) is a plain reshape.

use ndarray::{Array2, Array3, Axis};

use super::{Geometry, ModelConfig, ModelError, ModelParams, Scalar};

/// Everything the backward pass needs from a forward pass.
pub(crate) struct BatchCache<F> {
    batch: usize,
    /// im2col of the input, `[B*conv1_len, k1]`.
    p1: Array2<F>,
    /// relu(conv1), `[B*conv1_len, c1]`.
    a1: Array2<F>,
    idx1: Array2<u8>,
    /// im2col of pool1, `[B*conv2_len, c1*k2]`.
    p2: Array2<F>,
    /// relu(conv2), `[B*conv2_len, c2]`.
    a2: Array2<F>,
    idx2: Array2<u8>,
    /// Flattened pool2, `[B, flatten]`.
    flat: Array2<F>,
    /// relu(dense1), `[B, hidden]`.
    a3: Array2<F>,
    /// Softmax outputs, `[B, classes]`.
    pub probs: Array2<F>,
}

/// `[filters, ch, k]` weights as a `[ch*k, filters]` matrix matching the
/// im2col column layout `col = j*ch + c` (channel inner, so patch copies
/// stay contiguous).
fn weight_matrix<F: Scalar>(w: &Array3<F>) -> Array2<F> {
    let (filters, ch, _k) = w.dim();
    let (rows, cols) = (w.len() / filters, filters);
    Array2::from_shape_fn((rows, cols), |(row, o)| w[[o, row % ch, row / ch]])
}

/// Patch matrix over B contiguous `[in_len, ch]` blocks:
/// `p[b*out_len + t, j*ch + c] = x[b*in_len + t + j - pad_left, c]`
/// (zero where the source index falls outside the block).
fn im2col<F: Scalar>(
    x: &Array2<F>,
    batch: usize,
    in_len: usize,
    kernel: usize,
    out_len: usize,
    pad_left: usize,
) -> Array2<F> {
    let ch = x.ncols();
    let xs = x.as_slice().expect("standard layout");
    let width = ch * kernel;
    let mut p = Array2::zeros((batch * out_len, width));
    let ps = p.as_slice_mut().expect("standard layout");
    for b in 0..batch {
        for t in 0..out_len {
            let row = (b * out_len + t) * width;
            for j in 0..kernel {
                let Some(src) = (t + j).checked_sub(pad_left) else {
                    continue;
                };
                if src >= in_len {
                    continue;
                }
                let x_off = (b * in_len + src) * ch;
                ps[row + j * ch..row + (j + 1) * ch]
                    .copy_from_slice(&xs[x_off..x_off + ch]);
            }
        }
    }
    p
}

/// Scatter-add the im2col gradient back onto the input blocks.
fn col2im<F: Scalar>(
    dp: &Array2<F>,
    batch: usize,
    in_len: usize,
    ch: usize,
    kernel: usize,
    out_len: usize,
    pad_left: usize,
) -> Array2<F> {
    let width = ch * kernel;
    let dps = dp.as_slice().expect("standard layout");
    let mut dx = Array2::zeros((batch * in_len, ch));
    let dxs = dx.as_slice_mut().expect("standard layout");
    for b in 0..batch {
        for t in 0..out_len {
            let row = (b * out_len + t) * width;
            for j in 0..kernel {
                let Some(src) = (t + j).checked_sub(pad_left) else {
                    continue;
                };
                if src >= in_len {
                    continue;
                }
                let x_off = (b * in_len + src) * ch;
                for c in 0..ch {
                    dxs[x_off + c] += dps[row + j * ch + c];
                }
            }
        }
    }
    dx
}

/// Max pool with stride = pool size over each block; odd tails are
/// discarded. Ties pick the earliest element, recorded in `idx` as the
/// offset within the window.
pub(crate) fn maxpool<F: Scalar>(
    x: &Array2<F>,
    batch: usize,
    in_len: usize,
    pool: usize,
) -> (Array2<F>, Array2<u8>) {
    let ch = x.ncols();
    let xs = x.as_slice().expect("standard layout");
    let out_len = in_len / pool;
    let mut out = Array2::zeros((batch * out_len, ch));
    let outs = out.as_slice_mut().expect("standard layout");
    let mut idx = Array2::zeros((batch * out_len, ch));
    let idxs = idx.as_slice_mut().expect("standard layout");
    for b in 0..batch {
        for t in 0..out_len {
            let o_off = (b * out_len + t) * ch;
            let base = (b * in_len + t * pool) * ch;
            outs[o_off..o_off + ch].copy_from_slice(&xs[base..base + ch]);
            for off in 1..pool {
                let w_off = base + off * ch;
                for c in 0..ch {
                    let v = xs[w_off + c];
                    if v > outs[o_off + c] {
                        outs[o_off + c] = v;
                        idxs[o_off + c] = off as u8;
                    }
                }
            }
        }
    }
    (out, idx)
}

/// Route pooled gradients back to the recorded argmax positions; all
/// other positions get zero.
pub(crate) fn maxpool_backward<F: Scalar>(
    d_out: &Array2<F>,
    idx: &Array2<u8>,
    batch: usize,
    in_len: usize,
    pool: usize,
) -> Array2<F> {
    let ch = d_out.ncols();
    let ds = d_out.as_slice().expect("standard layout");
    let idxs = idx.as_slice().expect("standard layout");
    let out_len = in_len / pool;
    let mut dx = Array2::zeros((batch * in_len, ch));
    let dxs = dx.as_slice_mut().expect("standard layout");
    for b in 0..batch {
        for t in 0..out_len {
            let o_off = (b * out_len + t) * ch;
            let base = (b * in_len + t * pool) * ch;
            for c in 0..ch {
                dxs[base + idxs[o_off + c] as usize * ch + c] = ds[o_off + c];
            }
        }
    }
    dx
}

fn relu_inplace<F: Scalar>(x: &mut Array2<F>) {
    x.mapv_inplace(|v| if v > F::zero() { v } else { F::zero() });
}

/// Zero the gradient wherever the activation was clipped.
fn relu_mask<F: Scalar>(grad: &mut Array2<F>, activated: &Array2<F>) {
    grad.zip_mut_with(activated, |g, &a| {
        if a <= F::zero() {
            *g = F::zero();
        }
    });
}

fn softmax_rows<F: Scalar>(logits: &mut Array2<F>) {
    for mut row in logits.rows_mut() {
        let max = row.iter().copied().fold(F::neg_infinity(), F::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
}

pub(crate) fn forward_full<F: Scalar>(
    cfg: &ModelConfig,
    params: &ModelParams<F>,
    x: &Array2<F>,
) -> Result<BatchCache<F>, ModelError> {
    if x.ncols() != cfg.input_bins {
        return Err(ModelError::ShapeMismatch {
            expected: cfg.input_bins,
            got: x.ncols(),
        });
    }
    let batch = x.nrows();
    if batch == 0 {
        return Err(ModelError::EmptyBatch);
    }
    let g = cfg.geometry();

    // Input as B blocks of [input_bins, 1].
    let x_blocks =
        Array2::from_shape_vec((batch * cfg.input_bins, 1), x.iter().copied().collect())
            .expect("row-major input");

    let p1 = im2col(
        &x_blocks,
        batch,
        cfg.input_bins,
        cfg.conv1.kernel,
        g.conv1_len,
        g.pad1_left,
    );
    let mut a1 = p1.dot(&weight_matrix(&params.conv1_w));
    a1 += &params.conv1_b;
    relu_inplace(&mut a1);
    let (pool1, idx1) = maxpool(&a1, batch, g.conv1_len, cfg.pool_size);

    let p2 = im2col(
        &pool1,
        batch,
        g.pool1_len,
        cfg.conv2.kernel,
        g.conv2_len,
        g.pad2_left,
    );
    let mut a2 = p2.dot(&weight_matrix(&params.conv2_w));
    a2 += &params.conv2_b;
    relu_inplace(&mut a2);
    let (pool2, idx2) = maxpool(&a2, batch, g.conv2_len, cfg.pool_size);

    // Each [pool2_len, c2] block is already contiguous row-major, so the
    // per-sample flatten (time outer, channel inner) is a reshape.
    let flat = pool2
        .into_shape_with_order((batch, g.flatten))
        .expect("flatten reshape");

    let mut a3 = flat.dot(&params.dense1_w);
    a3 += &params.dense1_b;
    relu_inplace(&mut a3);

    let mut probs = a3.dot(&params.out_w);
    probs += &params.out_b;
    softmax_rows(&mut probs);

    Ok(BatchCache {
        batch,
        p1,
        a1,
        idx1,
        p2,
        a2,
        idx2,
        flat,
        a3,
        probs,
    })
}

pub(crate) fn forward_probs<F: Scalar>(
    cfg: &ModelConfig,
    params: &ModelParams<F>,
    x: &Array2<F>,
) -> Result<Array2<F>, ModelError> {
    Ok(forward_full(cfg, params, x)?.probs)
}

/// Summed (not averaged) cross-entropy of the cached probabilities.
pub(crate) fn cross_entropy_sum<F: Scalar>(probs: &Array2<F>, labels: &[usize]) -> f64 {
    probs
        .rows()
        .into_iter()
        .zip(labels)
        .map(|(row, &y)| -row[y].to_f64().ln())
        .sum()
}

/// Gradients of the summed cross-entropy with respect to every
/// parameter tensor. Divide by the batch size to get mean-loss
/// gradients.
pub(crate) fn backward_sum<F: Scalar>(
    cfg: &ModelConfig,
    geom: &Geometry,
    params: &ModelParams<F>,
    cache: &BatchCache<F>,
    labels: &[usize],
) -> ModelParams<F> {
    let batch = cache.batch;
    let g = geom;

    // Softmax + cross-entropy: dLogits = probs - onehot.
    let mut d_logits = cache.probs.clone();
    for (mut row, &y) in d_logits.rows_mut().into_iter().zip(labels) {
        row[y] -= F::one();
    }

    let out_dw = cache.a3.t().dot(&d_logits);
    let out_db = d_logits.sum_axis(Axis(0));
    let mut d_a3 = d_logits.dot(&params.out_w.t());
    relu_mask(&mut d_a3, &cache.a3);

    let dense1_dw = cache.flat.t().dot(&d_a3);
    let dense1_db = d_a3.sum_axis(Axis(0));
    let d_flat = d_a3.dot(&params.dense1_w.t());
    let d_pool2 = d_flat
        .into_shape_with_order((batch * g.pool2_len, cfg.conv2.filters))
        .expect("unflatten reshape");

    let mut d_a2 = maxpool_backward(&d_pool2, &cache.idx2, batch, g.conv2_len, cfg.pool_size);
    relu_mask(&mut d_a2, &cache.a2);

    let w2m = weight_matrix(&params.conv2_w);
    let conv2_dwm = cache.p2.t().dot(&d_a2);
    let conv2_db = d_a2.sum_axis(Axis(0));
    let d_p2 = d_a2.dot(&w2m.t());
    let d_pool1 = col2im(
        &d_p2,
        batch,
        g.pool1_len,
        cfg.conv1.filters,
        cfg.conv2.kernel,
        g.conv2_len,
        g.pad2_left,
    );

    let mut d_a1 = maxpool_backward(&d_pool1, &cache.idx1, batch, g.conv1_len, cfg.pool_size);
    relu_mask(&mut d_a1, &cache.a1);

    let conv1_dwm = cache.p1.t().dot(&d_a1);
    let conv1_db = d_a1.sum_axis(Axis(0));

    let k1 = cfg.conv1.kernel;
    let k2 = cfg.conv2.kernel;
    let ch2 = cfg.conv1.filters;
    ModelParams {
        conv1_w: Array3::from_shape_fn((cfg.conv1.filters, 1, k1), |(o, _c, j)| conv1_dwm[[j, o]]),
        conv1_b: conv1_db,
        conv2_w: Array3::from_shape_fn((cfg.conv2.filters, cfg.conv1.filters, k2), |(o, c, j)| {
            conv2_dwm[[j * ch2 + c, o]]
        }),
        conv2_b: conv2_db,
        dense1_w: dense1_dw,
        dense1_b: dense1_db,
        out_w: out_dw,
        out_b: out_db,
    }
}
