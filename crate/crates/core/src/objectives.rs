//! Loss terms for the generator and the critic.

use crate::autodiff::{grad, GradOptions, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Added under the square root of the penalty's gradient norm so that an
/// exactly-zero gradient stays differentiable.
pub const GP_NORM_EPS: f64 = 1e-20;

/// Sign of the generator's adversarial term.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdvSign {
    /// `−E[D(fake)]`: minimizing raises the critic's score of fakes.
    Wgan,
    /// `+E[D(fake)]`, the expression exactly as printed.
    Printed,
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

/// Mean squared error between target and predicted durations.
pub fn duration_loss<S: Scalar>(d: &Tensor<S>, d_hat: &Tensor<S>) -> Result<Tensor<S>> {
    same_shape("duration_loss", d, d_hat)?;
    d_hat.sub(d)?.square()?.mean()
}

/// Duration MSE for a padded `[B, L_p]` prediction: per-item mean over the
/// real phones, then mean over items.
pub fn duration_loss_batch<S: Scalar>(targets: &[Vec<usize>], d_hat: &Tensor<S>) -> Result<Tensor<S>> {
    let (b, lp) = (d_hat.shape()[0], d_hat.shape()[1]);
    if targets.len() != b || targets.iter().any(|t| t.len() > lp || t.is_empty()) {
        return Err(Error::InvalidShape {
            op: "duration_loss",
            msg: format!("{} targets for prediction {:?}", targets.len(), d_hat.shape()),
        });
    }
    let mut tgt = vec![S::zero(); b * lp];
    let mut w = vec![S::zero(); b * lp];
    for (i, t) in targets.iter().enumerate() {
        let wi = S::lit(1.0 / (t.len() * b) as f64);
        for (j, &v) in t.iter().enumerate() {
            tgt[i * lp + j] = S::lit(v as f64);
            w[i * lp + j] = wi;
        }
    }
    let tgt = Tensor::new(tgt, &[b, lp])?;
    let w = Tensor::new(w, &[b, lp])?;
    d_hat.sub(&tgt)?.square()?.mul(&w)?.sum()
}

/// Mean absolute deviation over all entries.
pub fn recon_loss<S: Scalar>(x0: &Tensor<S>, x0_hat: &Tensor<S>) -> Result<Tensor<S>> {
    same_shape("recon_loss", x0, x0_hat)?;
    x0_hat.sub(x0)?.abs()?.mean()
}

/// L1 over `[B, M, L]` with a `[B, 1, L]` frame mask: per-item mean over
/// real frames, then mean over items. Padding never contributes.
pub fn recon_loss_masked<S: Scalar>(x0: &Tensor<S>, x0_hat: &Tensor<S>, frame_mask: &Tensor<S>) -> Result<Tensor<S>> {
    same_shape("recon_loss", x0, x0_hat)?;
    let s = x0.shape();
    if s.len() != 3 || frame_mask.shape() != [s[0], 1, s[2]] {
        return Err(Error::ShapeMismatch {
            op: "recon_loss",
            lhs: s.to_vec(),
            rhs: frame_mask.shape().to_vec(),
        });
    }
    let (b, m) = (s[0], s[1]);
    let counts: Vec<S> = frame_mask
        .data()
        .chunks(s[2])
        .map(|row| {
            let n: f64 = row.iter().map(|v| v.as_f64()).sum();
            S::lit(if n > 0.0 { 1.0 / (n * m as f64 * b as f64) } else { 0.0 })
        })
        .collect();
    let w = frame_mask.mul(&Tensor::new(counts, &[b, 1, 1])?)?;
    x0_hat.sub(x0)?.abs()?.mul(&w)?.sum()
}

/// Critic objective `−E[D(real)] + E[D(fake)]`.
pub fn wasserstein_loss<S: Scalar>(d_real: &Tensor<S>, d_fake: &Tensor<S>) -> Result<Tensor<S>> {
    d_fake.mean()?.sub(&d_real.mean()?)
}

/// `α·x_prev + (1 − α)·x_prev_hat` with one `α` per batch item.
pub fn interpolate_pair<S: Scalar>(x_prev: &Tensor<S>, x_prev_hat: &Tensor<S>, alpha: &[S]) -> Result<Tensor<S>> {
    same_shape("interpolate_pair", x_prev, x_prev_hat)?;
    let b = x_prev.shape().first().copied().unwrap_or(1);
    if alpha.len() != b {
        return Err(Error::InvalidShape {
            op: "interpolate_pair",
            msg: format!("{} mixing weights for batch of {b}", alpha.len()),
        });
    }
    let mut shape = vec![1; x_prev.rank()];
    shape[0] = b;
    let a = Tensor::new(alpha.to_vec(), &shape)?;
    let one_minus = Tensor::new(alpha.iter().map(|&v| S::one() - v).collect(), &shape)?;
    x_prev.mul(&a)?.add(&x_prev_hat.mul(&one_minus)?)
}

/// `mean_b (‖∇_x̃ D(x̃)_b‖₂ − 1)²` where `critic` maps `[B, …]` to `[B]`.
/// The result stays differentiable in the critic's parameters.
pub fn gradient_penalty<S: Scalar>(
    critic: impl FnOnce(&Tensor<S>) -> Result<Tensor<S>>,
    x_tilde: &Tensor<S>,
) -> Result<Tensor<S>> {
    let x = x_tilde.detach().requires_grad();
    let scores = critic(&x)?;
    let b = x.shape()[0];
    if scores.numel() != b {
        return Err(Error::InvalidShape {
            op: "gradient_penalty",
            msg: format!("critic returned {:?} for batch of {b}", scores.shape()),
        });
    }
    let g = grad(&scores.sum()?, &[&x], GradOptions::create_graph())?.remove(0);
    let axes: Vec<usize> = (1..x.rank()).collect();
    let sq = if axes.is_empty() {
        g.square()?
    } else {
        g.square()?.sum_axes(&axes, false)?
    };
    let norm = sq.shift(S::lit(GP_NORM_EPS))?.sqrt()?;
    norm.shift(-S::one())?.square()?.mean()
}

pub fn generator_adv_loss<S: Scalar>(d_fake: &Tensor<S>, sign: AdvSign) -> Result<Tensor<S>> {
    let m = d_fake.mean()?;
    match sign {
        AdvSign::Wgan => m.neg(),
        AdvSign::Printed => Ok(m),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub recon: f64,
    pub adv: f64,
    pub gp: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            recon: 1.0,
            adv: 1.0,
            gp: 10.0,
        }
    }
}

/// Scalar values of every loss term plus the weighted totals.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub l_dur: f64,
    pub l_recon: f64,
    pub l_adv: f64,
    pub l_wd: f64,
    pub l_gp: f64,
    pub l_g_total: f64,
    pub l_d_total: f64,
    pub lambda_recon: f64,
    pub lambda_adv: f64,
    pub lambda_gp: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossParts {
    pub l_dur: f64,
    pub l_recon: f64,
    pub l_adv: f64,
    pub l_wd: f64,
    pub l_gp: f64,
}

pub fn total_losses(parts: LossParts, w: LossWeights) -> LossBreakdown {
    LossBreakdown {
        l_dur: parts.l_dur,
        l_recon: parts.l_recon,
        l_adv: parts.l_adv,
        l_wd: parts.l_wd,
        l_gp: parts.l_gp,
        l_g_total: parts.l_dur + w.recon * parts.l_recon + w.adv * parts.l_adv,
        l_d_total: parts.l_wd + w.gp * parts.l_gp,
        lambda_recon: w.recon,
        lambda_adv: w.adv,
        lambda_gp: w.gp,
    }
}

/// Generator objective as a differentiable tensor. A zero weight drops the
/// term from the graph entirely.
pub fn generator_objective<S: Scalar>(
    l_dur: &Tensor<S>,
    l_recon: Option<&Tensor<S>>,
    l_adv: Option<&Tensor<S>>,
    w: LossWeights,
) -> Result<Tensor<S>> {
    let mut total = l_dur.clone();
    if let Some(r) = l_recon.filter(|_| w.recon != 0.0) {
        total = total.add(&r.scale(S::lit(w.recon))?)?;
    }
    if let Some(a) = l_adv.filter(|_| w.adv != 0.0) {
        total = total.add(&a.scale(S::lit(w.adv))?)?;
    }
    Ok(total)
}

/// Names the first non-finite term.
pub fn check_finite(b: &LossBreakdown) -> Result<()> {
    let terms = [
        ("l_dur", b.l_dur),
        ("l_recon", b.l_recon),
        ("l_adv", b.l_adv),
        ("l_wd", b.l_wd),
        ("l_gp", b.l_gp),
        ("l_g_total", b.l_g_total),
        ("l_d_total", b.l_d_total),
    ];
    match terms.iter().find(|(_, v)| !v.is_finite()) {
        Some((name, _)) => Err(Error::NonFiniteLoss(name)),
        None => Ok(()),
    }
}
