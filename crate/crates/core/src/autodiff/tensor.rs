use std::fmt;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::index::{numel, IndexMap};

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

/// Dense row-major tensor that records the operation producing it.
///
/// Cloning is cheap (reference-counted). Values are immutable; optimizers
/// replace leaves instead of mutating them.
pub struct Tensor<S: Scalar> {
    pub(crate) node: Arc<Node<S>>,
}

pub(crate) struct Node<S: Scalar> {
    pub(crate) id: u64,
    pub(crate) shape: Vec<usize>,
    pub(crate) data: Arc<Vec<S>>,
    pub(crate) requires_grad: bool,
    pub(crate) op: Option<Op<S>>,
    pub(crate) released: AtomicBool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Unary {
    Tanh,
    Sigmoid,
    Silu,
    Relu,
    Exp,
    Log,
    Sqrt,
    Abs,
    Square,
}

impl Unary {
    pub fn name(self) -> &'static str {
        match self {
            Unary::Tanh => "tanh",
            Unary::Sigmoid => "sigmoid",
            Unary::Silu => "silu",
            Unary::Relu => "relu",
            Unary::Exp => "exp",
            Unary::Log => "log",
            Unary::Sqrt => "sqrt",
            Unary::Abs => "abs",
            Unary::Square => "square",
        }
    }

    pub(crate) fn apply<S: Scalar>(self, x: S) -> S {
        match self {
            Unary::Tanh => x.tanh(),
            Unary::Sigmoid => sigmoid(x),
            Unary::Silu => x * sigmoid(x),
            Unary::Relu => x.max(S::zero()),
            Unary::Exp => x.exp(),
            Unary::Log => x.ln(),
            Unary::Sqrt => x.sqrt(),
            Unary::Abs => x.abs(),
            Unary::Square => x * x,
        }
    }
}

pub(crate) fn sigmoid<S: Scalar>(x: S) -> S {
    if x >= S::zero() {
        S::one() / (S::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (S::one() + e)
    }
}

/// An operation supplied from outside the built-in primitive set.
///
/// `backward` must return one gradient per input, expressed with tensor ops
/// so that it can itself be differentiated. Ops that cannot guarantee this
/// return `false` from `differentiable_backward`; asking for a second
/// derivative through them fails with [`Error::NoDoubleBackprop`].
pub trait CustomOp<S: Scalar>: Send + Sync {
    fn name(&self) -> &str;
    fn forward(&self, inputs: &[&Tensor<S>]) -> Result<(Vec<S>, Vec<usize>)>;
    fn backward(
        &self,
        inputs: &[Tensor<S>],
        output: &Tensor<S>,
        grad: &Tensor<S>,
    ) -> Result<Vec<Tensor<S>>>;
    fn differentiable_backward(&self) -> bool {
        true
    }
}

pub(crate) enum Op<S: Scalar> {
    Add(Tensor<S>, Tensor<S>),
    Sub(Tensor<S>, Tensor<S>),
    Mul(Tensor<S>, Tensor<S>),
    Div(Tensor<S>, Tensor<S>),
    Neg(Tensor<S>),
    Scale(Tensor<S>, S),
    Shift(Tensor<S>),
    Unary(Tensor<S>, Unary),
    MatMul {
        a: Tensor<S>,
        b: Tensor<S>,
        ta: bool,
        tb: bool,
    },
    Gather(Tensor<S>, Arc<IndexMap>),
    Scatter(Tensor<S>, Arc<IndexMap>),
    Reshape(Tensor<S>),
    Custom(Vec<Tensor<S>>, Arc<dyn CustomOp<S>>),
}

impl<S: Scalar> Op<S> {
    pub(crate) fn name(&self) -> &str {
        match self {
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Div(..) => "div",
            Op::Neg(_) => "neg",
            Op::Scale(..) => "scale",
            Op::Shift(_) => "shift",
            Op::Unary(_, u) => u.name(),
            Op::MatMul { .. } => "matmul",
            Op::Gather(..) => "gather",
            Op::Scatter(..) => "scatter",
            Op::Reshape(_) => "reshape",
            Op::Custom(_, c) => c.name(),
        }
    }

    pub(crate) fn inputs(&self) -> Vec<&Tensor<S>> {
        match self {
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::Div(a, b) => vec![a, b],
            Op::MatMul { a, b, .. } => vec![a, b],
            Op::Neg(a)
            | Op::Scale(a, _)
            | Op::Shift(a)
            | Op::Unary(a, _)
            | Op::Gather(a, _)
            | Op::Scatter(a, _)
            | Op::Reshape(a) => vec![a],
            Op::Custom(xs, _) => xs.iter().collect(),
        }
    }
}

impl<S: Scalar> Clone for Tensor<S> {
    fn clone(&self) -> Self {
        Self {
            node: self.node.clone(),
        }
    }
}

impl<S: Scalar> fmt::Debug for Tensor<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let op = self.node.op.as_ref().map(|o| o.name().to_string());
        let preview: Vec<S> = self.data().iter().take(8).copied().collect();
        f.debug_struct("Tensor")
            .field("shape", &self.node.shape)
            .field("requires_grad", &self.node.requires_grad)
            .field("op", &op)
            .field("data", &preview)
            .finish()
    }
}

pub(crate) fn check_finite<S: Scalar>(op: &str, data: &[S]) -> Result<()> {
    if data.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { op: op.to_string() })
    }
}

impl<S: Scalar> Tensor<S> {
    fn from_node(shape: Vec<usize>, data: Arc<Vec<S>>, requires_grad: bool, op: Option<Op<S>>) -> Self {
        Self {
            node: Arc::new(Node {
                id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
                shape,
                data,
                requires_grad,
                op,
                released: AtomicBool::new(false),
            }),
        }
    }

    /// Constant tensor. Fails on length/shape disagreement or non-finite data.
    pub fn new(data: Vec<S>, shape: &[usize]) -> Result<Self> {
        if data.len() != numel(shape) {
            return Err(Error::InvalidShape {
                op: "tensor",
                msg: format!("{} values for shape {shape:?}", data.len()),
            });
        }
        check_finite("tensor", &data)?;
        Ok(Self::from_node(shape.to_vec(), Arc::new(data), false, None))
    }

    /// Trainable leaf.
    pub fn param(data: Vec<S>, shape: &[usize]) -> Result<Self> {
        Ok(Self::new(data, shape)?.requires_grad())
    }

    pub fn scalar(v: S) -> Self {
        Self::from_node(vec![], Arc::new(vec![v]), false, None)
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, S::zero())
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::full(shape, S::one())
    }

    pub fn full(shape: &[usize], v: S) -> Self {
        Self::from_node(shape.to_vec(), Arc::new(vec![v; numel(shape)]), false, None)
    }

    /// Same values as a new leaf that records gradients.
    pub fn requires_grad(&self) -> Self {
        Self::from_node(self.node.shape.clone(), self.node.data.clone(), true, None)
    }

    /// Same values with no history.
    pub fn detach(&self) -> Self {
        Self::from_node(self.node.shape.clone(), self.node.data.clone(), false, None)
    }

    pub(crate) fn from_op(shape: Vec<usize>, data: Vec<S>, op: Op<S>) -> Result<Self> {
        check_finite(op.name(), &data)?;
        let requires_grad = op.inputs().iter().any(|t| t.node.requires_grad);
        let op = requires_grad.then_some(op);
        Ok(Self::from_node(shape, Arc::new(data), requires_grad, op))
    }

    pub(crate) fn share(shape: Vec<usize>, data: Arc<Vec<S>>, op: Op<S>) -> Self {
        let requires_grad = op.inputs().iter().any(|t| t.node.requires_grad);
        let op = requires_grad.then_some(op);
        Self::from_node(shape, data, requires_grad, op)
    }

    pub fn id(&self) -> u64 {
        self.node.id
    }

    pub fn shape(&self) -> &[usize] {
        &self.node.shape
    }

    pub fn rank(&self) -> usize {
        self.node.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.node.data.len()
    }

    pub fn data(&self) -> &[S] {
        &self.node.data
    }

    pub fn to_vec(&self) -> Vec<S> {
        self.node.data.to_vec()
    }

    pub fn tracks_grad(&self) -> bool {
        self.node.requires_grad
    }

    pub fn is_leaf(&self) -> bool {
        self.node.op.is_none()
    }

    /// Name of the producing primitive, if any.
    pub fn op_name(&self) -> Option<&str> {
        self.node.op.as_ref().map(|o| o.name())
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> Result<S> {
        if self.numel() != 1 {
            return Err(Error::InvalidShape {
                op: "item",
                msg: format!("expected one element, shape {:?}", self.shape()),
            });
        }
        Ok(self.node.data[0])
    }
}
