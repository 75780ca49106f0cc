//! Central finite-difference checks for first- and second-order gradients.
//!
//! Errors are measured as `|analytic − numeric| / max(1, |analytic|, |numeric|)`,
//! i.e. relative for large gradients and absolute near zero.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;

use super::backward::{backward, grad, GradOptions};
use super::tensor::{CustomOp, Tensor};

type T = Tensor<f64>;
type Func = Arc<dyn Fn(&[T]) -> Result<T> + Send + Sync>;

pub const FIRST_ORDER_TOL: f64 = 1e-4;
pub const SECOND_ORDER_TOL: f64 = 1e-3;
pub const FD_STEP: f64 = 1e-5;

#[derive(Clone)]
pub struct GradCase {
    pub name: String,
    pub inputs: Vec<T>,
    pub f: Func,
}

impl GradCase {
    pub fn new(
        name: impl Into<String>,
        inputs: Vec<T>,
        f: impl Fn(&[T]) -> Result<T> + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            inputs,
            f: Arc::new(f),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub order: u8,
    pub max_err: f64,
    pub tolerance: f64,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.max_err.is_finite() && self.max_err < self.tolerance
    }
}

fn mixed_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / 1f64.max(a.abs()).max(n.abs())
}

/// Fixed pseudo-random weights that turn any output into a scalar
/// without letting errors cancel.
fn probe(shape: &[usize], seed: u64) -> T {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    T::new((0..n).map(|_| rng.gen_range(0.5..1.5)).collect(), shape).expect("probe")
}

fn scalarize(f: &Func, xs: &[T]) -> Result<T> {
    let y = f(xs)?;
    let w = probe(y.shape(), 0x5eed);
    y.mul(&w)?.sum()
}

fn perturbed(xs: &[T], which: usize, idx: usize, delta: f64) -> Result<Vec<T>> {
    xs.iter()
        .enumerate()
        .map(|(i, x)| {
            let mut d = x.to_vec();
            if i == which {
                d[idx] += delta;
            }
            let t = T::new(d, x.shape())?;
            Ok(if x.tracks_grad() { t.requires_grad() } else { t })
        })
        .collect()
}

fn leaves(xs: &[T]) -> Vec<T> {
    xs.iter().map(|x| x.requires_grad()).collect()
}

/// First-order check of every input of `case`.
pub fn check_first_order(case: &GradCase, step: f64) -> Result<CheckResult> {
    let xs = leaves(&case.inputs);
    let loss = scalarize(&case.f, &xs)?;
    let grads = backward(&loss)?;
    let mut worst: f64 = 0.0;
    for (k, x) in xs.iter().enumerate() {
        let analytic = grads.wrt(x);
        for i in 0..x.numel() {
            let lp = scalarize(&case.f, &perturbed(&case.inputs, k, i, step)?)?.item()?;
            let lm = scalarize(&case.f, &perturbed(&case.inputs, k, i, -step)?)?.item()?;
            let numeric = (lp - lm) / (2.0 * step);
            worst = worst.max(mixed_err(analytic.data()[i], numeric));
        }
    }
    Ok(CheckResult {
        name: case.name.clone(),
        order: 1,
        max_err: worst,
        tolerance: FIRST_ORDER_TOL,
    })
}

/// `⟨∇L(x), v⟩` for a fixed direction `v`, optionally kept differentiable.
fn directional_grad(case: &GradCase, xs: &[T], create: bool) -> Result<T> {
    let loss = scalarize(&case.f, xs)?;
    let refs: Vec<&T> = xs.iter().collect();
    let opts = if create {
        GradOptions::create_graph()
    } else {
        GradOptions::default()
    };
    let gs = grad(&loss, &refs, opts)?;
    let mut acc = T::scalar(0.0);
    for (k, g) in gs.iter().enumerate() {
        let v = probe(g.shape(), 0xd1 + k as u64);
        acc = acc.add(&g.mul(&v)?.sum()?)?;
    }
    Ok(acc)
}

/// Second-order check: differentiates the first gradient (double backprop)
/// and compares with finite differences of the first gradient.
pub fn check_second_order(case: &GradCase, step: f64) -> Result<CheckResult> {
    let xs = leaves(&case.inputs);
    let h = directional_grad(case, &xs, true)?;
    let refs: Vec<&T> = xs.iter().collect();
    let analytic = grad(&h, &refs, GradOptions::default())?;
    let mut worst: f64 = 0.0;
    for (k, x) in xs.iter().enumerate() {
        for i in 0..x.numel() {
            let hp = directional_grad(case, &leaves(&perturbed(&case.inputs, k, i, step)?), false)?.item()?;
            let hm = directional_grad(case, &leaves(&perturbed(&case.inputs, k, i, -step)?), false)?.item()?;
            let numeric = (hp - hm) / (2.0 * step);
            worst = worst.max(mixed_err(analytic[k].data()[i], numeric));
        }
    }
    Ok(CheckResult {
        name: case.name.clone(),
        order: 2,
        max_err: worst,
        tolerance: SECOND_ORDER_TOL,
    })
}

fn rand_t(rng: &mut ChaCha8Rng, shape: &[usize]) -> T {
    let n = shape.iter().product();
    T::new((0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(), shape).expect("rand")
}

/// Values bounded away from zero (for kinked or singular primitives).
fn rand_away(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64) -> T {
    let n = shape.iter().product();
    let v = (0..n)
        .map(|_| {
            let m = rng.gen_range(lo..1.0 + lo);
            if rng.gen_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect();
    T::new(v, shape).expect("rand")
}

fn rand_pos(rng: &mut ChaCha8Rng, shape: &[usize]) -> T {
    let n = shape.iter().product();
    T::new((0..n).map(|_| rng.gen_range(0.5..2.0)).collect(), shape).expect("rand")
}

/// One case per primitive on small randomized shapes.
pub fn primitive_cases(seed: u64) -> Vec<GradCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = &mut rng;
    let mut cases = vec![
        GradCase::new("add", vec![rand_t(r, &[2, 3]), rand_t(r, &[3])], |x| x[0].add(&x[1])),
        GradCase::new("sub", vec![rand_t(r, &[2, 3]), rand_t(r, &[2, 1])], |x| x[0].sub(&x[1])),
        GradCase::new("mul", vec![rand_t(r, &[2, 3]), rand_t(r, &[2, 3])], |x| x[0].mul(&x[1])),
        GradCase::new("div", vec![rand_t(r, &[2, 3]), rand_pos(r, &[2, 3])], |x| x[0].div(&x[1])),
        GradCase::new("neg", vec![rand_t(r, &[4])], |x| x[0].neg()),
        GradCase::new("scale", vec![rand_t(r, &[4])], |x| x[0].scale(-1.7)),
        GradCase::new("shift", vec![rand_t(r, &[4])], |x| x[0].shift(0.3)?.square()),
        GradCase::new("tanh", vec![rand_t(r, &[2, 3])], |x| x[0].tanh()),
        GradCase::new("sigmoid", vec![rand_t(r, &[2, 3])], |x| x[0].sigmoid()),
        GradCase::new("silu", vec![rand_t(r, &[2, 3])], |x| x[0].silu()),
        GradCase::new("relu", vec![rand_away(r, &[2, 3], 0.1)], |x| x[0].relu()?.square()),
        GradCase::new("exp", vec![rand_t(r, &[2, 3])], |x| x[0].exp()),
        GradCase::new("log", vec![rand_pos(r, &[2, 3])], |x| x[0].ln()),
        GradCase::new("sqrt", vec![rand_pos(r, &[2, 3])], |x| x[0].sqrt()),
        GradCase::new("abs", vec![rand_away(r, &[2, 3], 0.1)], |x| x[0].abs()?.square()),
        GradCase::new("square", vec![rand_t(r, &[2, 3])], |x| x[0].square()),
        GradCase::new("matmul", vec![rand_t(r, &[2, 3]), rand_t(r, &[3, 4])], |x| {
            x[0].matmul(&x[1])?.square()
        }),
        GradCase::new("matmul_t", vec![rand_t(r, &[2, 3, 2]), rand_t(r, &[2, 4, 3])], |x| {
            x[0].matmul_t(&x[1], true, true)?.square()
        }),
        GradCase::new("conv1d", vec![rand_t(r, &[2, 2, 6]), rand_t(r, &[3, 2, 3]), rand_t(r, &[3])], |x| {
            x[0].conv1d(&x[1], Some(&x[2]), 1, 2, 2)?.tanh()
        }),
        GradCase::new("conv2d", vec![rand_t(r, &[1, 2, 5, 4]), rand_t(r, &[2, 2, 3, 3]), rand_t(r, &[2])], |x| {
            x[0].conv2d(&x[1], Some(&x[2]), (2, 1), (1, 1))?.tanh()
        }),
        GradCase::new("softmax", vec![rand_t(r, &[2, 4])], |x| x[0].softmax()?.square()),
        GradCase::new("layer_norm", vec![rand_t(r, &[2, 5])], |x| x[0].layer_norm(1e-5)?.tanh()),
        GradCase::new("sum", vec![rand_t(r, &[2, 3, 2])], |x| x[0].sum_axes(&[0, 2], false)?.square()),
        GradCase::new("mean", vec![rand_t(r, &[3, 4])], |x| x[0].mean_axes(&[1], true)?.square()),
        GradCase::new("l2_norm", vec![rand_away(r, &[2, 4], 0.2)], |x| x[0].l2_norm(&[1])),
        GradCase::new("embed", vec![rand_t(r, &[4, 3])], |x| x[0].embed(&[2, 0, 2, 3])?.square()),
        GradCase::new("reshape", vec![rand_t(r, &[2, 3])], |x| x[0].reshape(&[3, 2])?.matmul(&x[0])),
        GradCase::new("broadcast", vec![rand_t(r, &[3, 1])], |x| x[0].broadcast_to(&[2, 3, 4])?.square()),
        GradCase::new("permute", vec![rand_t(r, &[2, 3, 4])], |x| x[0].permute(&[2, 0, 1])?.tanh()),
        GradCase::new("slice", vec![rand_t(r, &[3, 5])], |x| x[0].slice(1, 1, 3)?.square()),
        GradCase::new("concat", vec![rand_t(r, &[2, 2]), rand_t(r, &[2, 3])], |x| {
            T::concat(&[&x[0], &x[1]], 1)?.square()
        }),
    ];
    cases.push(GradCase::new(
        "gradient_penalty",
        {
            let x = rand_t(r, &[2, 3]);
            let w1 = rand_t(r, &[3, 4]);
            let w2 = rand_t(r, &[4, 1]);
            vec![x, w1, w2]
        },
        |p| toy_penalty(&p[0], &p[1], &p[2]),
    ));
    cases
}

/// `mean_b (‖∇ₓ D(x_b)‖₂ − 1)²` for the two-layer critic `D(x) = tanh(x W₁) W₂`.
pub fn toy_penalty(x: &T, w1: &T, w2: &T) -> Result<T> {
    let x = if x.tracks_grad() { x.clone() } else { x.requires_grad() };
    let d = x.matmul(w1)?.tanh()?.matmul(w2)?;
    let g = grad(&d.sum()?, &[&x], GradOptions::create_graph())?.remove(0);
    g.l2_norm(&[1])?.shift(-1.0)?.square()?.mean()
}

/// A square whose backward rule drops the factor 2. Used as a negative control.
pub struct FaultySquare;

impl CustomOp<f64> for FaultySquare {
    fn name(&self) -> &str {
        "faulty_square"
    }

    fn forward(&self, inputs: &[&T]) -> Result<(Vec<f64>, Vec<usize>)> {
        let x = inputs[0];
        Ok((x.data().iter().map(|v| v * v).collect(), x.shape().to_vec()))
    }

    fn backward(&self, inputs: &[T], _output: &T, grad: &T) -> Result<Vec<T>> {
        Ok(vec![grad.mul(&inputs[0])?])
    }
}

pub fn faulty_fixture_case() -> GradCase {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    GradCase::new("faulty_square", vec![rand_t(&mut rng, &[3])], |x| {
        T::custom(&[&x[0]], Arc::new(FaultySquare))
    })
}

/// Runs first- and second-order checks for every case whose name matches
/// `only` (all when `None`).
pub fn run_suite(cases: &[GradCase], only: Option<&str>) -> Result<Vec<CheckResult>> {
    let mut out = Vec::new();
    for case in cases.iter().filter(|c| only.map_or(true, |o| c.name == o)) {
        out.push(check_first_order(case, FD_STEP)?);
        out.push(check_second_order(case, FD_STEP)?);
    }
    Ok(out)
}
