//! Reverse-mode traversal. Backward rules are written with the same tensor
//! ops as the forward pass, so with `create_graph` the gradients are graph
//! nodes themselves and can be differentiated again.

use std::collections::{HashMap, HashSet};
use std::sync::atomic::Ordering;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::tensor::{Op, Tensor, Unary};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GradOptions {
    /// Record the backward computation so its result can be differentiated.
    pub create_graph: bool,
    /// Keep the graph usable for another backward pass. Implied by `create_graph`.
    pub retain_graph: bool,
}

impl GradOptions {
    pub fn create_graph() -> Self {
        Self {
            create_graph: true,
            retain_graph: true,
        }
    }

    pub fn retain() -> Self {
        Self {
            create_graph: false,
            retain_graph: true,
        }
    }
}

/// Gradients of a loss with respect to every leaf that requires them.
pub struct Gradients<S: Scalar> {
    map: HashMap<u64, Tensor<S>>,
}

impl<S: Scalar> Gradients<S> {
    pub fn get(&self, t: &Tensor<S>) -> Option<&Tensor<S>> {
        self.map.get(&t.id())
    }

    /// Gradient for `t`, or zeros when `t` did not influence the loss.
    pub fn wrt(&self, t: &Tensor<S>) -> Tensor<S> {
        self.get(t).cloned().unwrap_or_else(|| Tensor::zeros(t.shape()))
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// Backpropagates a scalar loss to all leaves and releases the graph.
pub fn backward<S: Scalar>(loss: &Tensor<S>) -> Result<Gradients<S>> {
    backward_with(loss, GradOptions::default())
}

pub fn backward_with<S: Scalar>(loss: &Tensor<S>, opts: GradOptions) -> Result<Gradients<S>> {
    let (mut map, order) = run(loss, opts)?;
    let leaves: HashSet<u64> = order
        .iter()
        .filter(|t| t.is_leaf())
        .map(|t| t.id())
        .collect();
    map.retain(|id, _| leaves.contains(id));
    Ok(Gradients { map })
}

/// Gradients of a scalar `output` with respect to arbitrary `inputs`
/// (leaves or intermediate nodes). Inputs that do not influence the output
/// get zeros.
pub fn grad<S: Scalar>(
    output: &Tensor<S>,
    inputs: &[&Tensor<S>],
    opts: GradOptions,
) -> Result<Vec<Tensor<S>>> {
    let (map, _) = run(output, opts)?;
    Ok(inputs
        .iter()
        .map(|x| {
            map.get(&x.id())
                .cloned()
                .unwrap_or_else(|| Tensor::zeros(x.shape()))
        })
        .collect())
}

/// Gradient of `sum(∇ₓ f(x))` with respect to `x`: the Hessian of `f`
/// applied to a vector of ones (for scalar `x`, simply `f''(x)`).
pub fn grad_of_grad<S: Scalar>(
    f: impl Fn(&Tensor<S>) -> Result<Tensor<S>>,
    x: &Tensor<S>,
) -> Result<Tensor<S>> {
    let x = x.requires_grad();
    let y = f(&x)?;
    let g = grad(&y, &[&x], GradOptions::create_graph())?.remove(0);
    if !g.tracks_grad() {
        return Ok(Tensor::zeros(x.shape()));
    }
    let s = g.sum()?;
    Ok(grad(&s, &[&x], GradOptions::default())?.remove(0))
}

fn topo_order<S: Scalar>(root: &Tensor<S>) -> Result<Vec<Tensor<S>>> {
    let mut order = Vec::new();
    let mut visited = HashSet::new();
    let mut stack = vec![(root.clone(), false)];
    while let Some((t, expanded)) = stack.pop() {
        if expanded {
            order.push(t);
            continue;
        }
        if !visited.insert(t.id()) {
            continue;
        }
        if let Some(op) = &t.node.op {
            if t.node.released.load(Ordering::Acquire) {
                return Err(Error::GraphReleased(static_name(op)));
            }
        }
        stack.push((t.clone(), true));
        if let Some(op) = &t.node.op {
            for inp in op.inputs().into_iter().rev() {
                if inp.tracks_grad() && !visited.contains(&inp.id()) {
                    stack.push((inp.clone(), false));
                }
            }
        }
    }
    Ok(order)
}

fn static_name<S: Scalar>(op: &Op<S>) -> &'static str {
    match op {
        Op::Custom(..) => "custom",
        Op::Unary(_, u) => u.name(),
        Op::Add(..) => "add",
        Op::Sub(..) => "sub",
        Op::Mul(..) => "mul",
        Op::Div(..) => "div",
        Op::Neg(_) => "neg",
        Op::Scale(..) => "scale",
        Op::Shift(_) => "shift",
        Op::MatMul { .. } => "matmul",
        Op::Gather(..) => "gather",
        Op::Scatter(..) => "scatter",
        Op::Reshape(_) => "reshape",
    }
}

type GradMap<S> = HashMap<u64, Tensor<S>>;

fn run<S: Scalar>(output: &Tensor<S>, opts: GradOptions) -> Result<(GradMap<S>, Vec<Tensor<S>>)> {
    if output.numel() != 1 {
        return Err(Error::NonScalarLoss(output.shape().to_vec()));
    }
    let create = opts.create_graph;
    let mut grads: GradMap<S> = HashMap::new();
    if !output.tracks_grad() {
        return Ok((grads, Vec::new()));
    }
    let order = topo_order(output)?;
    grads.insert(output.id(), Tensor::ones(output.shape()));

    for node in order.iter().rev() {
        let Some(op) = &node.node.op else { continue };
        let Some(g) = grads.get(&node.id()).cloned() else {
            continue;
        };
        let g = if create { g } else { g.detach() };
        let input_grads = rule(node, op, &g, create)?;
        for (input, gi) in op.inputs().into_iter().zip(input_grads) {
            if !input.tracks_grad() {
                continue;
            }
            let acc = match grads.remove(&input.id()) {
                Some(prev) => prev.add(&gi)?,
                None => gi,
            };
            grads.insert(input.id(), acc);
        }
    }

    if !(opts.retain_graph || create) {
        for t in &order {
            if t.node.op.is_some() {
                t.node.released.store(true, Ordering::Release);
            }
        }
    }
    Ok((grads, order))
}

/// One gradient per input of `op`, in input order.
fn rule<S: Scalar>(y: &Tensor<S>, op: &Op<S>, g: &Tensor<S>, create: bool) -> Result<Vec<Tensor<S>>> {
    let live = |t: &Tensor<S>| if create { t.clone() } else { t.detach() };
    let y = live(y);
    Ok(match op {
        Op::Add(_, _) => vec![g.clone(), g.clone()],
        Op::Sub(_, _) => vec![g.clone(), g.neg()?],
        Op::Mul(a, b) => vec![g.mul(&live(b))?, g.mul(&live(a))?],
        Op::Div(a, b) => {
            let (a, b) = (live(a), live(b));
            vec![g.div(&b)?, g.mul(&a)?.div(&b.square()?)?.neg()?]
        }
        Op::Neg(_) => vec![g.neg()?],
        Op::Scale(_, c) => vec![g.scale(*c)?],
        Op::Shift(_) => vec![g.clone()],
        Op::Unary(x, u) => {
            let x = live(x);
            let d = match u {
                Unary::Tanh => y.square()?.neg()?.shift(S::one())?,
                Unary::Sigmoid => y.mul(&y.neg()?.shift(S::one())?)?,
                Unary::Silu => {
                    let s = x.sigmoid()?;
                    let ds = s.mul(&s.neg()?.shift(S::one())?)?;
                    s.add(&x.mul(&ds)?)?
                }
                Unary::Relu => step_mask(&x, |v| if v > S::zero() { S::one() } else { S::zero() })?,
                Unary::Exp => y.clone(),
                Unary::Log => return Ok(vec![g.div(&x)?]),
                Unary::Sqrt => return Ok(vec![g.div(&y)?.scale(S::lit(0.5))?]),
                Unary::Abs => step_mask(&x, |v| v.signum() * if v == S::zero() { S::zero() } else { S::one() })?,
                Unary::Square => x.scale(S::lit(2.0))?,
            };
            vec![g.mul(&d)?]
        }
        Op::MatMul { a, b, ta, tb } => {
            let (a, b) = (live(a), live(b));
            match (ta, tb) {
                (false, false) => vec![g.matmul_t(&b, false, true)?, a.matmul_t(g, true, false)?],
                (true, false) => vec![b.matmul_t(g, false, true)?, a.matmul_t(g, false, false)?],
                (false, true) => vec![g.matmul_t(&b, false, false)?, g.matmul_t(&a, true, false)?],
                (true, true) => vec![b.matmul_t(g, true, true)?, g.matmul_t(&a, true, true)?],
            }
        }
        Op::Gather(x, map) => vec![g.scatter(map.clone(), x.shape())?],
        Op::Scatter(x, map) => vec![g.gather(map.clone(), x.shape())?],
        Op::Reshape(x) => vec![g.reshape(x.shape())?],
        Op::Custom(inputs, custom) => {
            if create && !custom.differentiable_backward() {
                return Err(Error::NoDoubleBackprop(custom.name().to_string()));
            }
            let inputs: Vec<Tensor<S>> = inputs.iter().map(live).collect();
            let grads = custom.backward(&inputs, &y, g)?;
            if grads.len() != inputs.len() {
                return Err(Error::InvalidShape {
                    op: "custom",
                    msg: format!(
                        "{} returned {} gradients for {} inputs",
                        custom.name(),
                        grads.len(),
                        inputs.len()
                    ),
                });
            }
            for (gi, x) in grads.iter().zip(&inputs) {
                if gi.shape() != x.shape() {
                    return Err(Error::ShapeMismatch {
                        op: "custom backward",
                        lhs: x.shape().to_vec(),
                        rhs: gi.shape().to_vec(),
                    });
                }
            }
            if !create {
                grads.iter().map(Tensor::detach).collect()
            } else {
                grads
            }
        }
    })
}

fn step_mask<S: Scalar>(x: &Tensor<S>, f: impl Fn(S) -> S) -> Result<Tensor<S>> {
    Tensor::new(x.data().iter().map(|&v| f(v)).collect(), x.shape())
}
