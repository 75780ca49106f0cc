//! Forward evaluation of the primitive set plus the composite operations
//! built on top of it. Every op checks shapes up front and rejects
//! non-finite results.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::index::{conv_out_len, numel, IndexMap, NONE};
use super::tensor::{CustomOp, Op, Tensor, Unary};

fn broadcast_shape(op: &'static str, a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for i in 0..rank {
        let da = if i + a.len() >= rank { a[i + a.len() - rank] } else { 1 };
        let db = if i + b.len() >= rank { b[i + b.len() - rank] } else { 1 };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => {
                return Err(Error::ShapeMismatch {
                    op,
                    lhs: a.to_vec(),
                    rhs: b.to_vec(),
                })
            }
        };
    }
    Ok(out)
}

impl<S: Scalar> Tensor<S> {
    fn binary(
        &self,
        other: &Tensor<S>,
        name: &'static str,
        f: impl Fn(S, S) -> S,
        make: impl FnOnce(Tensor<S>, Tensor<S>) -> Op<S>,
    ) -> Result<Tensor<S>> {
        let (a, b) = if self.shape() == other.shape() {
            (self.clone(), other.clone())
        } else {
            let shape = broadcast_shape(name, self.shape(), other.shape())?;
            (self.broadcast_to(&shape)?, other.broadcast_to(&shape)?)
        };
        let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::from_op(a.shape().to_vec(), data, make(a, b))
    }

    pub fn add(&self, other: &Tensor<S>) -> Result<Tensor<S>> {
        self.binary(other, "add", |x, y| x + y, Op::Add)
    }

    pub fn sub(&self, other: &Tensor<S>) -> Result<Tensor<S>> {
        self.binary(other, "sub", |x, y| x - y, Op::Sub)
    }

    pub fn mul(&self, other: &Tensor<S>) -> Result<Tensor<S>> {
        self.binary(other, "mul", |x, y| x * y, Op::Mul)
    }

    pub fn div(&self, other: &Tensor<S>) -> Result<Tensor<S>> {
        self.binary(other, "div", |x, y| x / y, Op::Div)
    }

    pub fn neg(&self) -> Result<Tensor<S>> {
        let data = self.data().iter().map(|&x| -x).collect();
        Tensor::from_op(self.shape().to_vec(), data, Op::Neg(self.clone()))
    }

    pub fn scale(&self, c: S) -> Result<Tensor<S>> {
        let data = self.data().iter().map(|&x| x * c).collect();
        Tensor::from_op(self.shape().to_vec(), data, Op::Scale(self.clone(), c))
    }

    /// Adds a constant to every element.
    pub fn shift(&self, c: S) -> Result<Tensor<S>> {
        let data = self.data().iter().map(|&x| x + c).collect();
        Tensor::from_op(self.shape().to_vec(), data, Op::Shift(self.clone()))
    }

    pub fn unary(&self, u: Unary) -> Result<Tensor<S>> {
        let data = self.data().iter().map(|&x| u.apply(x)).collect();
        Tensor::from_op(self.shape().to_vec(), data, Op::Unary(self.clone(), u))
    }

    pub fn tanh(&self) -> Result<Tensor<S>> {
        self.unary(Unary::Tanh)
    }
    pub fn sigmoid(&self) -> Result<Tensor<S>> {
        self.unary(Unary::Sigmoid)
    }
    pub fn silu(&self) -> Result<Tensor<S>> {
        self.unary(Unary::Silu)
    }
    pub fn relu(&self) -> Result<Tensor<S>> {
        self.unary(Unary::Relu)
    }
    pub fn exp(&self) -> Result<Tensor<S>> {
        self.unary(Unary::Exp)
    }
    pub fn ln(&self) -> Result<Tensor<S>> {
        self.unary(Unary::Log)
    }
    pub fn sqrt(&self) -> Result<Tensor<S>> {
        self.unary(Unary::Sqrt)
    }
    pub fn abs(&self) -> Result<Tensor<S>> {
        self.unary(Unary::Abs)
    }
    pub fn square(&self) -> Result<Tensor<S>> {
        self.unary(Unary::Square)
    }

    /// Batched matrix product over the last two axes, optionally transposing
    /// either operand. Leading (batch) axes must agree exactly.
    pub fn matmul_t(&self, other: &Tensor<S>, ta: bool, tb: bool) -> Result<Tensor<S>> {
        let (sa, sb) = (self.shape(), other.shape());
        let mismatch = || Error::ShapeMismatch {
            op: "matmul",
            lhs: sa.to_vec(),
            rhs: sb.to_vec(),
        };
        if sa.len() < 2 || sa.len() != sb.len() || sa[..sa.len() - 2] != sb[..sb.len() - 2] {
            return Err(mismatch());
        }
        let r = sa.len();
        let (m, k) = if ta { (sa[r - 1], sa[r - 2]) } else { (sa[r - 2], sa[r - 1]) };
        let (k2, n) = if tb { (sb[r - 1], sb[r - 2]) } else { (sb[r - 2], sb[r - 1]) };
        if k != k2 {
            return Err(mismatch());
        }
        let batch = numel(&sa[..r - 2]);
        let mut out = vec![S::zero(); batch * m * n];
        let (ra, ca) = if ta { (1, m as isize) } else { (k as isize, 1) };
        let (rb, cb) = if tb { (1, k as isize) } else { (n as isize, 1) };
        for bi in 0..batch {
            let a = &self.data()[bi * m * k..(bi + 1) * m * k];
            let b = &other.data()[bi * k * n..(bi + 1) * k * n];
            S::gemm(m, k, n, a, ra, ca, b, rb, cb, &mut out[bi * m * n..(bi + 1) * m * n]);
        }
        let mut shape = sa[..r - 2].to_vec();
        shape.extend([m, n]);
        Tensor::from_op(
            shape,
            out,
            Op::MatMul {
                a: self.clone(),
                b: other.clone(),
                ta,
                tb,
            },
        )
    }

    /// Matrix product. A rank-2 right operand is shared across all leading
    /// axes of the left operand (the dense-layer case).
    pub fn matmul(&self, other: &Tensor<S>) -> Result<Tensor<S>> {
        if self.rank() > 2 && other.rank() == 2 {
            let k = *self.shape().last().unwrap();
            let lead = &self.shape()[..self.rank() - 1];
            let flat = self.reshape(&[numel(lead), k])?;
            let out = flat.matmul_t(other, false, false)?;
            let mut shape = lead.to_vec();
            shape.push(other.shape()[1]);
            return out.reshape(&shape);
        }
        self.matmul_t(other, false, false)
    }

    /// `out[i] = self[map[i]]`, zero where the map holds `NONE`.
    pub fn gather(&self, map: Arc<IndexMap>, shape: &[usize]) -> Result<Tensor<S>> {
        if map.src_len() != self.numel() || map.len() != numel(shape) {
            return Err(Error::InvalidShape {
                op: "gather",
                msg: format!(
                    "map {}→{} incompatible with input {:?} and output {shape:?}",
                    map.src_len(),
                    map.len(),
                    self.shape()
                ),
            });
        }
        let src = self.data();
        let data = map
            .indices()
            .iter()
            .map(|&i| if i == NONE { S::zero() } else { src[i as usize] })
            .collect();
        Tensor::from_op(shape.to_vec(), data, Op::Gather(self.clone(), map))
    }

    /// `out[map[i]] += self[i]`; the adjoint of [`Tensor::gather`].
    pub fn scatter(&self, map: Arc<IndexMap>, shape: &[usize]) -> Result<Tensor<S>> {
        if map.len() != self.numel() || map.src_len() != numel(shape) {
            return Err(Error::InvalidShape {
                op: "scatter",
                msg: format!(
                    "map {}→{} incompatible with input {:?} and output {shape:?}",
                    map.len(),
                    map.src_len(),
                    self.shape()
                ),
            });
        }
        let mut data = vec![S::zero(); map.src_len()];
        for (&i, &v) in map.indices().iter().zip(self.data()) {
            if i != NONE {
                data[i as usize] += v;
            }
        }
        Tensor::from_op(shape.to_vec(), data, Op::Scatter(self.clone(), map))
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor<S>> {
        if numel(shape) != self.numel() {
            return Err(Error::ShapeMismatch {
                op: "reshape",
                lhs: self.shape().to_vec(),
                rhs: shape.to_vec(),
            });
        }
        Ok(Tensor::share(
            shape.to_vec(),
            self.node.data.clone(),
            Op::Reshape(self.clone()),
        ))
    }

    pub fn custom(inputs: &[&Tensor<S>], op: Arc<dyn CustomOp<S>>) -> Result<Tensor<S>> {
        let (data, shape) = op.forward(inputs)?;
        if data.len() != numel(&shape) {
            return Err(Error::InvalidShape {
                op: "custom",
                msg: format!("{} returned {} values for {shape:?}", op.name(), data.len()),
            });
        }
        let inputs = inputs.iter().map(|t| (*t).clone()).collect();
        Tensor::from_op(shape, data, Op::Custom(inputs, op))
    }

    // ---- composites -------------------------------------------------------

    pub fn broadcast_to(&self, shape: &[usize]) -> Result<Tensor<S>> {
        if self.shape() == shape {
            return Ok(self.clone());
        }
        let target = broadcast_shape("broadcast", self.shape(), shape)?;
        if target != shape {
            return Err(Error::ShapeMismatch {
                op: "broadcast",
                lhs: self.shape().to_vec(),
                rhs: shape.to_vec(),
            });
        }
        self.gather(IndexMap::broadcast(self.shape(), shape), shape)
    }

    pub fn permute(&self, axes: &[usize]) -> Result<Tensor<S>> {
        let mut seen = vec![false; self.rank()];
        if axes.len() != self.rank()
            || axes.iter().any(|&a| a >= self.rank() || std::mem::replace(&mut seen[a], true))
        {
            return Err(Error::InvalidShape {
                op: "permute",
                msg: format!("axes {axes:?} for shape {:?}", self.shape()),
            });
        }
        let shape: Vec<usize> = axes.iter().map(|&a| self.shape()[a]).collect();
        self.gather(IndexMap::permute(self.shape(), axes), &shape)
    }

    /// Swaps the last two axes.
    pub fn t(&self) -> Result<Tensor<S>> {
        let r = self.rank();
        if r < 2 {
            return Err(Error::InvalidShape {
                op: "transpose",
                msg: format!("rank {r}"),
            });
        }
        let mut axes: Vec<usize> = (0..r).collect();
        axes.swap(r - 1, r - 2);
        self.permute(&axes)
    }

    pub fn slice(&self, axis: usize, start: usize, len: usize) -> Result<Tensor<S>> {
        if axis >= self.rank() || start + len > self.shape()[axis] {
            return Err(Error::InvalidShape {
                op: "slice",
                msg: format!("[{start}, {}) on axis {axis} of {:?}", start + len, self.shape()),
            });
        }
        let mut shape = self.shape().to_vec();
        shape[axis] = len;
        self.gather(IndexMap::slice(self.shape(), axis, start, len), &shape)
    }

    /// Rows of `self` along `axis` picked by `indices` (`NONE` gives zeros).
    pub fn index_select(&self, axis: usize, indices: &[u32]) -> Result<Tensor<S>> {
        if axis >= self.rank() {
            return Err(Error::InvalidShape {
                op: "index_select",
                msg: format!("axis {axis} of {:?}", self.shape()),
            });
        }
        let limit = self.shape()[axis];
        if let Some(bad) = indices.iter().find(|&&i| i != NONE && i as usize >= limit) {
            return Err(Error::InvalidShape {
                op: "index_select",
                msg: format!("index {bad} out of range {limit}"),
            });
        }
        let mut shape = self.shape().to_vec();
        shape[axis] = indices.len();
        let map = IndexMap::select(self.shape(), axis, indices);
        self.gather(Arc::new(map), &shape)
    }

    /// Embedding lookup: `self` is a `[vocab, dim]` table, output `[ids.len(), dim]`.
    pub fn embed(&self, ids: &[usize]) -> Result<Tensor<S>> {
        if self.rank() != 2 {
            return Err(Error::InvalidShape {
                op: "embed",
                msg: format!("table must be rank 2, got {:?}", self.shape()),
            });
        }
        let ids: Vec<u32> = ids.iter().map(|&i| i as u32).collect();
        self.index_select(0, &ids)
    }

    pub fn concat(parts: &[&Tensor<S>], axis: usize) -> Result<Tensor<S>> {
        let first = parts.first().ok_or(Error::InvalidShape {
            op: "concat",
            msg: "no inputs".into(),
        })?;
        let mut shape = first.shape().to_vec();
        if axis >= shape.len() {
            return Err(Error::InvalidShape {
                op: "concat",
                msg: format!("axis {axis} of {shape:?}"),
            });
        }
        shape[axis] = 0;
        for p in parts {
            let mut a = p.shape().to_vec();
            let mut b = first.shape().to_vec();
            if a.len() != b.len() {
                return Err(Error::ShapeMismatch {
                    op: "concat",
                    lhs: b,
                    rhs: a,
                });
            }
            shape[axis] += a[axis];
            a[axis] = 0;
            b[axis] = 0;
            if a != b {
                return Err(Error::ShapeMismatch {
                    op: "concat",
                    lhs: first.shape().to_vec(),
                    rhs: p.shape().to_vec(),
                });
            }
        }
        let mut acc: Option<Tensor<S>> = None;
        let mut offset = 0;
        for p in parts {
            let len = p.shape()[axis];
            let map = IndexMap::slice(&shape, axis, offset, len);
            let placed = p.scatter(map, &shape)?;
            acc = Some(match acc {
                None => placed,
                Some(a) => a.add(&placed)?,
            });
            offset += len;
        }
        Ok(acc.unwrap())
    }

    pub fn sum(&self) -> Result<Tensor<S>> {
        let all: Vec<usize> = (0..self.rank()).collect();
        self.sum_axes(&all, false)
    }

    pub fn sum_axes(&self, axes: &[usize], keepdim: bool) -> Result<Tensor<S>> {
        if axes.iter().any(|&a| a >= self.rank()) {
            return Err(Error::InvalidShape {
                op: "sum",
                msg: format!("axes {axes:?} for shape {:?}", self.shape()),
            });
        }
        let kept: Vec<usize> = self
            .shape()
            .iter()
            .enumerate()
            .map(|(d, &s)| if axes.contains(&d) { 1 } else { s })
            .collect();
        let out = self.scatter(IndexMap::reduce(self.shape(), axes), &kept)?;
        if keepdim {
            Ok(out)
        } else {
            let squeezed: Vec<usize> = self
                .shape()
                .iter()
                .enumerate()
                .filter(|(d, _)| !axes.contains(d))
                .map(|(_, &s)| s)
                .collect();
            out.reshape(&squeezed)
        }
    }

    pub fn mean(&self) -> Result<Tensor<S>> {
        let n = S::lit(self.numel().max(1) as f64);
        self.sum()?.scale(S::one() / n)
    }

    pub fn mean_axes(&self, axes: &[usize], keepdim: bool) -> Result<Tensor<S>> {
        let count: usize = axes.iter().map(|&a| self.shape().get(a).copied().unwrap_or(1)).product();
        self.sum_axes(axes, keepdim)?.scale(S::one() / S::lit(count.max(1) as f64))
    }

    /// Softmax over the last axis.
    pub fn softmax(&self) -> Result<Tensor<S>> {
        let last = self.rank().checked_sub(1).ok_or(Error::InvalidShape {
            op: "softmax",
            msg: "scalar input".into(),
        })?;
        let width = self.shape()[last];
        // Row maxima are constants: softmax is shift-invariant, so gradients are unaffected.
        let maxes: Vec<S> = self
            .data()
            .chunks(width.max(1))
            .map(|row| row.iter().copied().fold(S::neg_infinity(), S::max))
            .collect();
        let mut mshape = self.shape().to_vec();
        mshape[last] = 1;
        let maxes = Tensor::new(maxes, &mshape)?;
        let e = self.sub(&maxes)?.exp()?;
        let z = e.sum_axes(&[last], true)?;
        e.div(&z)
    }

    /// Normalizes the last axis to zero mean and unit variance (no affine part).
    pub fn layer_norm(&self, eps: S) -> Result<Tensor<S>> {
        let last = self.rank().checked_sub(1).ok_or(Error::InvalidShape {
            op: "layer_norm",
            msg: "scalar input".into(),
        })?;
        let mu = self.mean_axes(&[last], true)?;
        let centered = self.sub(&mu)?;
        let var = centered.square()?.mean_axes(&[last], true)?;
        centered.div(&var.shift(eps)?.sqrt()?)
    }

    /// Euclidean norm over `axes` (reduced away).
    pub fn l2_norm(&self, axes: &[usize]) -> Result<Tensor<S>> {
        self.square()?.sum_axes(axes, false)?.sqrt()
    }

    /// 1-D convolution. `self`: `[B, C_in, L]`, `weight`: `[C_out, C_in, k]`,
    /// `bias`: `[C_out]`. Output `[B, C_out, L_out]`.
    pub fn conv1d(
        &self,
        weight: &Tensor<S>,
        bias: Option<&Tensor<S>>,
        stride: usize,
        padding: usize,
        dilation: usize,
    ) -> Result<Tensor<S>> {
        let (xs, ws) = (self.shape(), weight.shape());
        if xs.len() != 3 || ws.len() != 3 || xs[1] != ws[1] || stride == 0 || dilation == 0 {
            return Err(Error::ShapeMismatch {
                op: "conv1d",
                lhs: xs.to_vec(),
                rhs: ws.to_vec(),
            });
        }
        let (b, cin, len) = (xs[0], xs[1], xs[2]);
        let (cout, k) = (ws[0], ws[2]);
        let lout = conv_out_len(len, k, stride, padding, dilation);
        if lout == 0 {
            return Err(Error::InvalidShape {
                op: "conv1d",
                msg: format!("input length {len} too short for kernel {k} dilation {dilation}"),
            });
        }
        let cols = self.gather(
            IndexMap::unfold1d(b, cin, len, k, stride, padding, dilation),
            &[cin * k, b * lout],
        )?;
        let w = weight.reshape(&[cout, cin * k])?;
        let y = w.matmul_t(&cols, false, false)?.reshape(&[cout, b, lout])?;
        let mut y = y.permute(&[1, 0, 2])?;
        if let Some(bias) = bias {
            y = y.add(&bias.reshape(&[cout, 1])?)?;
        }
        Ok(y)
    }

    /// 2-D convolution. `self`: `[B, C_in, H, W]`, `weight`: `[C_out, C_in, kh, kw]`.
    pub fn conv2d(
        &self,
        weight: &Tensor<S>,
        bias: Option<&Tensor<S>>,
        stride: (usize, usize),
        padding: (usize, usize),
    ) -> Result<Tensor<S>> {
        let (xs, ws) = (self.shape(), weight.shape());
        if xs.len() != 4 || ws.len() != 4 || xs[1] != ws[1] || stride.0 == 0 || stride.1 == 0 {
            return Err(Error::ShapeMismatch {
                op: "conv2d",
                lhs: xs.to_vec(),
                rhs: ws.to_vec(),
            });
        }
        let (b, cin, h, w) = (xs[0], xs[1], xs[2], xs[3]);
        let (cout, kh, kw) = (ws[0], ws[2], ws[3]);
        let ho = conv_out_len(h, kh, stride.0, padding.0, 1);
        let wo = conv_out_len(w, kw, stride.1, padding.1, 1);
        if ho == 0 || wo == 0 {
            return Err(Error::InvalidShape {
                op: "conv2d",
                msg: format!("input {h}×{w} too small for kernel {kh}×{kw}"),
            });
        }
        let cols = self.gather(
            IndexMap::unfold2d(b, cin, h, w, (kh, kw), stride, padding),
            &[cin * kh * kw, b * ho * wo],
        )?;
        let wm = weight.reshape(&[cout, cin * kh * kw])?;
        let y = wm.matmul_t(&cols, false, false)?.reshape(&[cout, b, ho, wo])?;
        let mut y = y.permute(&[1, 0, 2, 3])?;
        if let Some(bias) = bias {
            y = y.add(&bias.reshape(&[cout, 1, 1])?)?;
        }
        Ok(y)
    }
}
