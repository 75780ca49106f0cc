//! Forward helpers over a [`ParamStore`]. Sequence layout is `[B, L, C]`
//! for dense layers and attention, `[B, C, L]` for convolutions.

use super::ParamStore;
use crate::autodiff::Tensor;
use crate::error::Result;
use crate::scalar::Scalar;

pub(crate) fn linear<S: Scalar>(p: &ParamStore<S>, name: &str, x: &Tensor<S>) -> Result<Tensor<S>> {
    let y = x.matmul(p.get(&format!("{name}.w"))?)?;
    match p.get(&format!("{name}.b")) {
        Ok(b) => y.add(b),
        Err(_) => Ok(y),
    }
}

/// Same-length 1-D convolution.
pub(crate) fn conv1d<S: Scalar>(
    p: &ParamStore<S>,
    name: &str,
    x: &Tensor<S>,
    dilation: usize,
) -> Result<Tensor<S>> {
    let w = p.get(&format!("{name}.w"))?;
    let k = w.shape()[2];
    x.conv1d(w, Some(p.get(&format!("{name}.b"))?), 1, dilation * (k - 1) / 2, dilation)
}

pub(crate) fn conv2d<S: Scalar>(p: &ParamStore<S>, name: &str, x: &Tensor<S>, stride: usize) -> Result<Tensor<S>> {
    let w = p.get(&format!("{name}.w"))?;
    let k = w.shape()[2];
    x.conv2d(w, Some(p.get(&format!("{name}.b"))?), (stride, stride), (k / 2, k / 2))
}

/// Layer norm over the last axis with learned gain and bias.
pub(crate) fn layer_norm<S: Scalar>(p: &ParamStore<S>, name: &str, x: &Tensor<S>) -> Result<Tensor<S>> {
    x.layer_norm(S::lit(1e-5))?
        .mul(p.get(&format!("{name}.g"))?)?
        .add(p.get(&format!("{name}.b"))?)
}

/// `[B, L, C] ↔ [B, C, L]`.
pub(crate) fn swap<S: Scalar>(x: &Tensor<S>) -> Result<Tensor<S>> {
    x.permute(&[0, 2, 1])
}

/// Sinusoidal features of each position: `dim/2` sines then `dim/2`
/// cosines on geometrically spaced frequencies. Returns `positions × dim`.
pub fn sinusoidal(positions: &[f64], dim: usize) -> Vec<f64> {
    let half = dim / 2;
    let mut out = vec![0.0; positions.len() * dim];
    for (i, &p) in positions.iter().enumerate() {
        for j in 0..half {
            let freq = (-(10000f64.ln()) * j as f64 / half.max(2).saturating_sub(1) as f64).exp();
            out[i * dim + j] = (p * freq).sin();
            out[i * dim + half + j] = (p * freq).cos();
        }
    }
    out
}

pub(crate) fn sinusoidal_tensor<S: Scalar>(positions: &[f64], dim: usize) -> Result<Tensor<S>> {
    Tensor::new(
        sinusoidal(positions, dim).into_iter().map(S::lit).collect(),
        &[positions.len(), dim],
    )
}

/// Post-norm self-attention block with a convolutional feed-forward part.
/// `key_bias` is `[B, 1, 1, L]` (0 on real positions, large negative on
/// padding); `keep` is `[B, L, 1]` and zeroes padded rows.
pub(crate) fn transformer_block<S: Scalar>(
    p: &ParamStore<S>,
    name: &str,
    heads: usize,
    x: &Tensor<S>,
    key_bias: &Tensor<S>,
    keep: &Tensor<S>,
) -> Result<Tensor<S>> {
    let (b, l, c) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let dh = c / heads;
    let split = |t: Tensor<S>| -> Result<Tensor<S>> { t.reshape(&[b, l, heads, dh])?.permute(&[0, 2, 1, 3]) };
    let q = split(linear(p, &format!("{name}.q"), x)?)?;
    let k = split(linear(p, &format!("{name}.k"), x)?)?;
    let v = split(linear(p, &format!("{name}.v"), x)?)?;
    let scores = q
        .matmul_t(&k, false, true)?
        .scale(S::lit(1.0 / (dh as f64).sqrt()))?
        .add(key_bias)?;
    let att = scores.softmax()?.matmul_t(&v, false, false)?;
    let att = att.permute(&[0, 2, 1, 3])?.reshape(&[b, l, c])?;
    let att = linear(p, &format!("{name}.o"), &att)?;
    let x = layer_norm(p, &format!("{name}.ln1"), &x.add(&att)?)?.mul(keep)?;

    let h = conv1d(p, &format!("{name}.ff1"), &swap(&x)?, 1)?.relu()?;
    let h = swap(&conv1d(p, &format!("{name}.ff2"), &h, 1)?)?;
    layer_norm(p, &format!("{name}.ln2"), &x.add(&h)?)?.mul(keep)
}

pub(crate) fn init_transformer_block<S: Scalar>(
    init: &mut super::params::Init<'_, S>,
    name: &str,
    c: usize,
    ffn: usize,
    kernel: usize,
) -> Result<()> {
    for part in ["q", "k", "v", "o"] {
        init.linear(&format!("{name}.{part}"), c, c, true)?;
    }
    init.norm(&format!("{name}.ln1"), c)?;
    init.conv1d(&format!("{name}.ff1"), c, ffn, kernel)?;
    init.conv1d(&format!("{name}.ff2"), ffn, c, 1)?;
    init.norm(&format!("{name}.ln2"), c)
}

/// Attention bias and row mask for sequences of the given lengths padded to `l`.
pub(crate) fn sequence_masks<S: Scalar>(lengths: &[usize], l: usize) -> Result<(Tensor<S>, Tensor<S>)> {
    let b = lengths.len();
    let mut bias = vec![S::zero(); b * l];
    let mut keep = vec![S::zero(); b * l];
    for (i, &n) in lengths.iter().enumerate() {
        for j in 0..l {
            if j < n {
                keep[i * l + j] = S::one();
            } else {
                bias[i * l + j] = S::lit(-1e9);
            }
        }
    }
    Ok((Tensor::new(bias, &[b, 1, 1, l])?, Tensor::new(keep, &[b, l, 1])?))
}
