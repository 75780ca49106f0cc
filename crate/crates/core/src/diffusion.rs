//! Variance-preserving schedule and the Gaussian transitions of the
//! noising/denoising chain.
//!
//! Time steps are 1-based (`1..=T`). Functions that take `ts: &[usize]`
//! accept either a single step applied to the whole tensor or one step per
//! item along the leading (batch) axis.

use std::fmt::Write as _;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionSchedule<S: Scalar> {
    steps: usize,
    beta_min: S,
    beta_max: S,
    beta: Vec<S>,
    alpha: Vec<S>,
    alpha_bar: Vec<S>,
    beta_tilde: Vec<S>,
}

impl<S: Scalar> DiffusionSchedule<S> {
    /// `β_t = 1 − exp(β_min/T − ½(β_max − β_min)(2t − 1)/T²)`.
    pub fn vp(steps: usize, beta_min: S, beta_max: S) -> Result<Self> {
        if steps == 0 {
            return Err(Error::InvalidParameter("schedule needs at least one step".into()));
        }
        if !(beta_min > S::zero() && beta_min < beta_max) {
            return Err(Error::InvalidParameter(format!(
                "need 0 < beta_min < beta_max, got {beta_min} and {beta_max}"
            )));
        }
        let tf = S::lit(steps as f64);
        let half = S::lit(0.5);
        let mut beta = Vec::with_capacity(steps);
        for t in 1..=steps {
            let k = S::lit((2 * t - 1) as f64);
            let b = S::one() - (beta_min / tf - half * (beta_max - beta_min) * k / (tf * tf)).exp();
            if !(b > S::zero() && b < S::one()) {
                return Err(Error::InvalidParameter(format!(
                    "beta_{t} = {b} outside (0, 1)"
                )));
            }
            beta.push(b);
        }
        let alpha: Vec<S> = beta.iter().map(|&b| S::one() - b).collect();
        let mut alpha_bar = Vec::with_capacity(steps);
        let mut acc = S::one();
        for &a in &alpha {
            acc *= a;
            alpha_bar.push(acc);
        }
        let beta_tilde = (0..steps)
            .map(|i| {
                let prev = if i == 0 { S::one() } else { alpha_bar[i - 1] };
                (S::one() - prev) / (S::one() - alpha_bar[i]) * beta[i]
            })
            .collect();
        Ok(Self {
            steps,
            beta_min,
            beta_max,
            beta,
            alpha,
            alpha_bar,
            beta_tilde,
        })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn beta_min(&self) -> S {
        self.beta_min
    }

    pub fn beta_max(&self) -> S {
        self.beta_max
    }

    pub fn betas(&self) -> &[S] {
        &self.beta
    }

    pub fn alphas(&self) -> &[S] {
        &self.alpha
    }

    pub fn alpha_bars(&self) -> &[S] {
        &self.alpha_bar
    }

    pub fn beta_tildes(&self) -> &[S] {
        &self.beta_tilde
    }

    fn check(&self, t: usize) -> Result<usize> {
        if t == 0 || t > self.steps {
            Err(Error::TimeStepOutOfRange { t, steps: self.steps })
        } else {
            Ok(t - 1)
        }
    }

    pub fn beta(&self, t: usize) -> Result<S> {
        Ok(self.beta[self.check(t)?])
    }

    pub fn alpha(&self, t: usize) -> Result<S> {
        Ok(self.alpha[self.check(t)?])
    }

    /// `ᾱ_t`, with `ᾱ_0 = 1`.
    pub fn alpha_bar(&self, t: usize) -> Result<S> {
        if t == 0 {
            return Ok(S::one());
        }
        Ok(self.alpha_bar[self.check(t)?])
    }

    /// Posterior variance `β̃_t`; exactly zero at `t = 1`.
    pub fn beta_tilde(&self, t: usize) -> Result<S> {
        Ok(self.beta_tilde[self.check(t)?])
    }

    /// Coefficients `(c₀, c_t)` of the posterior mean `c₀·x₀ + c_t·x_t`.
    /// At `t = 1` these are exactly `(1, 0)` since `ᾱ_0 = 1`.
    pub fn posterior_coefficients(&self, t: usize) -> Result<(S, S)> {
        let i = self.check(t)?;
        if t == 1 {
            return Ok((S::one(), S::zero()));
        }
        let ab = self.alpha_bar[i];
        let ab_prev = self.alpha_bar[i - 1];
        let denom = S::one() - ab;
        Ok((
            ab_prev.sqrt() * self.beta[i] / denom,
            self.alpha[i].sqrt() * (S::one() - ab_prev) / denom,
        ))
    }

    /// `t,beta,alpha,alpha_bar,beta_tilde` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,beta,alpha,alpha_bar,beta_tilde\n");
        for i in 0..self.steps {
            let _ = writeln!(
                out,
                "{},{:e},{:e},{:e},{:e}",
                i + 1,
                self.beta[i].as_f64(),
                self.alpha[i].as_f64(),
                self.alpha_bar[i].as_f64(),
                self.beta_tilde[i].as_f64()
            );
        }
        out
    }

    /// Per-item coefficient tensor broadcastable against `like`.
    fn coef(&self, like: &Tensor<S>, ts: &[usize], f: impl Fn(usize) -> Result<S>) -> Result<Tensor<S>> {
        if ts.len() == 1 {
            return Ok(Tensor::scalar(f(ts[0])?));
        }
        if like.rank() == 0 || like.shape()[0] != ts.len() {
            return Err(Error::InvalidShape {
                op: "diffusion",
                msg: format!("{} time steps for tensor of shape {:?}", ts.len(), like.shape()),
            });
        }
        let vals = ts.iter().map(|&t| f(t)).collect::<Result<Vec<S>>>()?;
        let mut shape = vec![1; like.rank()];
        shape[0] = ts.len();
        Tensor::new(vals, &shape)
    }

    /// `x_t = √ᾱ_t·x₀ + √(1 − ᾱ_t)·ε`.
    pub fn forward_noise(&self, x0: &Tensor<S>, ts: &[usize], eps: &Tensor<S>) -> Result<Tensor<S>> {
        same_shape("forward_noise", x0, eps)?;
        let a = self.coef(x0, ts, |t| Ok(self.alpha_bar(t)?.sqrt()))?;
        let b = self.coef(x0, ts, |t| Ok((S::one() - self.alpha_bar(t)?).sqrt()))?;
        x0.mul(&a)?.add(&eps.mul(&b)?)
    }

    /// One noising transition `x_t = √(1 − β_t)·x_{t−1} + √β_t·ε`.
    pub fn single_step_noise(&self, x_prev: &Tensor<S>, ts: &[usize], eps: &Tensor<S>) -> Result<Tensor<S>> {
        same_shape("single_step_noise", x_prev, eps)?;
        let a = self.coef(x_prev, ts, |t| Ok(self.alpha(t)?.sqrt()))?;
        let b = self.coef(x_prev, ts, |t| Ok(self.beta(t)?.sqrt()))?;
        x_prev.mul(&a)?.add(&eps.mul(&b)?)
    }

    /// Mean and variance of `q(x_{t−1} | x_t, x₀)`.
    pub fn posterior_params(&self, x0: &Tensor<S>, xt: &Tensor<S>, ts: &[usize]) -> Result<(Tensor<S>, Vec<S>)> {
        same_shape("posterior_params", x0, xt)?;
        let c0 = self.coef(x0, ts, |t| Ok(self.posterior_coefficients(t)?.0))?;
        let ct = self.coef(x0, ts, |t| Ok(self.posterior_coefficients(t)?.1))?;
        let mean = x0.mul(&c0)?.add(&xt.mul(&ct)?)?;
        let var = ts.iter().map(|&t| self.beta_tilde(t)).collect::<Result<Vec<S>>>()?;
        Ok((mean, var))
    }

    /// Samples `q(x_{t−1} | x_t, x̂₀)` as `μ̃ + √β̃_t·noise`. Differentiable in
    /// `x0_hat`; deterministic at `t = 1`.
    pub fn denoise_step(
        &self,
        xt: &Tensor<S>,
        ts: &[usize],
        x0_hat: &Tensor<S>,
        noise: &Tensor<S>,
    ) -> Result<Tensor<S>> {
        same_shape("denoise_step", xt, noise)?;
        let (mean, _) = self.posterior_params(x0_hat, xt, ts)?;
        let sd = self.coef(xt, ts, |t| Ok(self.beta_tilde(t)?.sqrt()))?;
        mean.add(&noise.mul(&sd)?)
    }

    /// Runs the reverse chain from `x_T ~ N(0, I)` down to `x̂₀`.
    ///
    /// `generator(x_t, t)` returns the clean estimate `x̂_{0,t}` and must
    /// preserve `shape`. Identical RNG state gives identical output.
    pub fn sample_loop<R: Rng + ?Sized>(
        &self,
        shape: &[usize],
        mut generator: impl FnMut(&Tensor<S>, usize) -> Result<Tensor<S>>,
        rng: &mut R,
    ) -> Result<Tensor<S>> {
        let mut x = standard_normal(shape, rng)?;
        for t in (1..=self.steps).rev() {
            let x0_hat = generator(&x, t)?.detach();
            if x0_hat.shape() != shape {
                return Err(Error::ShapeMismatch {
                    op: "sample_loop",
                    lhs: shape.to_vec(),
                    rhs: x0_hat.shape().to_vec(),
                });
            }
            let noise = if t > 1 {
                standard_normal(shape, rng)?
            } else {
                Tensor::zeros(shape)
            };
            x = self.denoise_step(&x, &[t], &x0_hat, &noise)?;
        }
        Ok(x)
    }
}

fn same_shape<S: Scalar>(op: &'static str, a: &Tensor<S>, b: &Tensor<S>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            op,
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    Ok(())
}

/// Standard-normal tensor drawn in 64-bit and converted.
pub fn standard_normal<S: Scalar, R: Rng + ?Sized>(shape: &[usize], rng: &mut R) -> Result<Tensor<S>> {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| S::lit(rng.sample::<f64, _>(StandardNormal)))
        .collect();
    Tensor::new(data, shape)
}
