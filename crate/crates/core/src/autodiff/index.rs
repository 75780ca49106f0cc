//! Index maps: the single linear re-indexing primitive behind transposes,
//! broadcasts, slices, reductions, embeddings and im2col.
//!
//! A map of length `n` over a source of length `src_len` drives both
//! directions: `gather` reads `out[i] = x[idx[i]]` (or zero for [`NONE`]),
//! `scatter` accumulates `out[idx[i]] += x[i]`. Each is the adjoint of the
//! other, so backward rules close over the pair to any derivative order.

use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

use crate::error::{Error, Result};

pub const NONE: u32 = u32::MAX;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexMap {
    idx: Vec<u32>,
    src_len: usize,
}

pub fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

pub fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

thread_local! {
    static CACHE: RefCell<HashMap<Vec<usize>, Arc<IndexMap>>> = RefCell::new(HashMap::new());
}

const CACHE_LIMIT: usize = 512;

fn cached(key: Vec<usize>, build: impl FnOnce() -> IndexMap) -> Arc<IndexMap> {
    if let Some(hit) = CACHE.with(|c| c.borrow().get(&key).cloned()) {
        return hit;
    }
    let map = Arc::new(build());
    CACHE.with(|c| {
        let mut c = c.borrow_mut();
        if c.len() >= CACHE_LIMIT {
            c.clear();
        }
        c.insert(key, map.clone());
    });
    map
}

impl IndexMap {
    pub fn new(idx: Vec<u32>, src_len: usize) -> Result<Self> {
        if src_len >= NONE as usize {
            return Err(Error::InvalidParameter(format!(
                "index map source too large ({src_len})"
            )));
        }
        if let Some(bad) = idx.iter().find(|&&i| i != NONE && i as usize >= src_len) {
            return Err(Error::InvalidParameter(format!(
                "index {bad} out of range for source of length {src_len}"
            )));
        }
        Ok(Self { idx, src_len })
    }

    pub fn len(&self) -> usize {
        self.idx.len()
    }

    pub fn is_empty(&self) -> bool {
        self.idx.is_empty()
    }

    pub fn src_len(&self) -> usize {
        self.src_len
    }

    pub fn indices(&self) -> &[u32] {
        &self.idx
    }

    /// Axis permutation: output axis `i` is input axis `axes[i]`.
    pub fn permute(shape: &[usize], axes: &[usize]) -> Arc<IndexMap> {
        let mut key = vec![1usize, shape.len()];
        key.extend_from_slice(shape);
        key.extend_from_slice(axes);
        cached(key, || {
            let in_strides = strides(shape);
            let out_shape: Vec<usize> = axes.iter().map(|&a| shape[a]).collect();
            let n = numel(shape);
            let mut idx = Vec::with_capacity(n);
            let mut counter = vec![0usize; out_shape.len()];
            for _ in 0..n {
                let src: usize = counter
                    .iter()
                    .zip(axes)
                    .map(|(&c, &a)| c * in_strides[a])
                    .sum();
                idx.push(src as u32);
                increment(&mut counter, &out_shape);
            }
            IndexMap { idx, src_len: n }
        })
    }

    /// Numpy-style broadcast of `from` (right-aligned) up to `to`.
    pub fn broadcast(from: &[usize], to: &[usize]) -> Arc<IndexMap> {
        let mut key = vec![2usize, from.len()];
        key.extend_from_slice(from);
        key.extend_from_slice(to);
        cached(key, || {
            let offset = to.len() - from.len();
            let from_strides = strides(from);
            let n = numel(to);
            let mut idx = Vec::with_capacity(n);
            let mut counter = vec![0usize; to.len()];
            for _ in 0..n {
                let mut src = 0;
                for (d, &f) in from.iter().enumerate() {
                    if f != 1 {
                        src += counter[d + offset] * from_strides[d];
                    }
                }
                idx.push(src as u32);
                increment(&mut counter, to);
            }
            IndexMap {
                idx,
                src_len: numel(from),
            }
        })
    }

    /// Reduction target map: for every input position, the flat position in
    /// the shape with `axes` collapsed to 1. Used with scatter.
    pub fn reduce(shape: &[usize], axes: &[usize]) -> Arc<IndexMap> {
        let mut key = vec![3usize, shape.len()];
        key.extend_from_slice(shape);
        key.extend_from_slice(axes);
        cached(key, || {
            let reduced: Vec<usize> = shape
                .iter()
                .enumerate()
                .map(|(d, &s)| if axes.contains(&d) { 1 } else { s })
                .collect();
            let red_strides = strides(&reduced);
            let n = numel(shape);
            let mut idx = Vec::with_capacity(n);
            let mut counter = vec![0usize; shape.len()];
            for _ in 0..n {
                let dst: usize = counter
                    .iter()
                    .enumerate()
                    .map(|(d, &c)| if axes.contains(&d) { 0 } else { c * red_strides[d] })
                    .sum();
                idx.push(dst as u32);
                increment(&mut counter, shape);
            }
            IndexMap {
                idx,
                src_len: numel(&reduced),
            }
        })
    }

    /// Contiguous range `[start, start + len)` along `axis`.
    pub fn slice(shape: &[usize], axis: usize, start: usize, len: usize) -> Arc<IndexMap> {
        let mut key = vec![4usize, shape.len(), axis, start, len];
        key.extend_from_slice(shape);
        cached(key, || {
            let st = strides(shape);
            let mut out_shape = shape.to_vec();
            out_shape[axis] = len;
            let n = numel(&out_shape);
            let mut idx = Vec::with_capacity(n);
            let mut counter = vec![0usize; shape.len()];
            for _ in 0..n {
                let src: usize = counter
                    .iter()
                    .enumerate()
                    .map(|(d, &c)| if d == axis { (c + start) * st[d] } else { c * st[d] })
                    .sum();
                idx.push(src as u32);
                increment(&mut counter, &out_shape);
            }
            IndexMap {
                idx,
                src_len: numel(shape),
            }
        })
    }

    /// Select `indices` along `axis` (entries may repeat; `NONE` yields zeros).
    pub fn select(shape: &[usize], axis: usize, indices: &[u32]) -> IndexMap {
        let st = strides(shape);
        let mut out_shape = shape.to_vec();
        out_shape[axis] = indices.len();
        let n = numel(&out_shape);
        let mut idx = Vec::with_capacity(n);
        let mut counter = vec![0usize; shape.len()];
        for _ in 0..n {
            let sel = indices[counter[axis]];
            if sel == NONE {
                idx.push(NONE);
            } else {
                let src: usize = counter
                    .iter()
                    .enumerate()
                    .map(|(d, &c)| if d == axis { sel as usize * st[d] } else { c * st[d] })
                    .sum();
                idx.push(src as u32);
            }
            increment(&mut counter, &out_shape);
        }
        IndexMap {
            idx,
            src_len: numel(shape),
        }
    }

    /// im2col for `[B, C, L]` inputs; output layout `[C·k, B·L_out]`.
    pub fn unfold1d(
        batch: usize,
        channels: usize,
        len: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        dilation: usize,
    ) -> Arc<IndexMap> {
        let key = vec![5, batch, channels, len, kernel, stride, padding, dilation];
        cached(key, || {
            let out_len = conv_out_len(len, kernel, stride, padding, dilation);
            let mut idx = Vec::with_capacity(channels * kernel * batch * out_len);
            for c in 0..channels {
                for j in 0..kernel {
                    for b in 0..batch {
                        for o in 0..out_len {
                            let pos = (o * stride + j * dilation) as isize - padding as isize;
                            if pos < 0 || pos as usize >= len {
                                idx.push(NONE);
                            } else {
                                idx.push(((b * channels + c) * len + pos as usize) as u32);
                            }
                        }
                    }
                }
            }
            IndexMap {
                idx,
                src_len: batch * channels * len,
            }
        })
    }

    /// im2col for `[B, C, H, W]` inputs; output layout `[C·kh·kw, B·H_out·W_out]`.
    #[allow(clippy::too_many_arguments)]
    pub fn unfold2d(
        batch: usize,
        channels: usize,
        height: usize,
        width: usize,
        kernel: (usize, usize),
        stride: (usize, usize),
        padding: (usize, usize),
    ) -> Arc<IndexMap> {
        let key = vec![
            6, batch, channels, height, width, kernel.0, kernel.1, stride.0, stride.1, padding.0,
            padding.1,
        ];
        cached(key, || {
            let ho = conv_out_len(height, kernel.0, stride.0, padding.0, 1);
            let wo = conv_out_len(width, kernel.1, stride.1, padding.1, 1);
            let mut idx = Vec::with_capacity(channels * kernel.0 * kernel.1 * batch * ho * wo);
            for c in 0..channels {
                for ki in 0..kernel.0 {
                    for kj in 0..kernel.1 {
                        for b in 0..batch {
                            for oi in 0..ho {
                                let y = (oi * stride.0 + ki) as isize - padding.0 as isize;
                                for oj in 0..wo {
                                    let x = (oj * stride.1 + kj) as isize - padding.1 as isize;
                                    if y < 0 || x < 0 || y as usize >= height || x as usize >= width
                                    {
                                        idx.push(NONE);
                                    } else {
                                        idx.push(
                                            (((b * channels + c) * height + y as usize) * width
                                                + x as usize)
                                                as u32,
                                        );
                                    }
                                }
                            }
                        }
                    }
                }
            }
            IndexMap {
                idx,
                src_len: batch * channels * height * width,
            }
        })
    }
}

pub fn conv_out_len(len: usize, kernel: usize, stride: usize, padding: usize, dilation: usize) -> usize {
    let span = dilation * (kernel - 1) + 1;
    if len + 2 * padding < span {
        0
    } else {
        (len + 2 * padding - span) / stride + 1
    }
}

fn increment(counter: &mut [usize], shape: &[usize]) {
    for d in (0..shape.len()).rev() {
        counter[d] += 1;
        if counter[d] < shape[d] {
            return;
        }
        counter[d] = 0;
    }
}
