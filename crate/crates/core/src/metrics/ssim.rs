use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::signal::MelSpectrogram;

pub const MS_SSIM_WEIGHTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MsSsim {
    pub value: f64,
    /// Scales actually used; fewer than five when the image is small.
    pub scales: usize,
}

impl MsSsim {
    pub fn reduced(&self) -> bool {
        self.scales < MS_SSIM_WEIGHTS.len()
    }
}

#[derive(Debug, Clone)]
struct Image {
    h: usize,
    w: usize,
    px: Vec<f64>,
}

impl Image {
    fn downsample(&self) -> Image {
        let (h, w) = (self.h / 2, self.w / 2);
        let mut px = Vec::with_capacity(h * w);
        for r in 0..h {
            for c in 0..w {
                let at = |rr: usize, cc: usize| self.px[rr * self.w + cc];
                px.push(0.25 * (at(2 * r, 2 * c) + at(2 * r + 1, 2 * c) + at(2 * r, 2 * c + 1) + at(2 * r + 1, 2 * c + 1)));
            }
        }
        Image { h, w, px }
    }
}

fn gaussian_window() -> Vec<f64> {
    let half = (SSIM_WINDOW / 2) as f64;
    let g: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| (-(i as f64 - half).powi(2) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let s: f64 = g.iter().sum();
    g.into_iter().map(|v| v / s).collect()
}

/// Separable "valid" Gaussian filter of `f(a, b)` pixelwise.
fn filter(a: &Image, b: &Image, win: &[f64], f: impl Fn(f64, f64) -> f64) -> Image {
    let k = win.len();
    let (h, w) = (a.h - k + 1, a.w - k + 1);
    let src: Vec<f64> = a.px.iter().zip(&b.px).map(|(&x, &y)| f(x, y)).collect();
    let mut rows = vec![0.0; a.h * w];
    for r in 0..a.h {
        for c in 0..w {
            rows[r * w + c] = (0..k).map(|i| win[i] * src[r * a.w + c + i]).sum();
        }
    }
    let mut px = vec![0.0; h * w];
    for r in 0..h {
        for c in 0..w {
            px[r * w + c] = (0..k).map(|i| win[i] * rows[(r + i) * w + c]).sum();
        }
    }
    Image { h, w, px }
}

/// Mean SSIM and mean contrast-structure term at one scale.
fn ssim_cs(a: &Image, b: &Image, win: &[f64]) -> (f64, f64) {
    let mu_a = filter(a, b, win, |x, _| x);
    let mu_b = filter(a, b, win, |_, y| y);
    let aa = filter(a, b, win, |x, _| x * x);
    let bb = filter(a, b, win, |_, y| y * y);
    let ab = filter(a, b, win, |x, y| x * y);
    let n = mu_a.px.len() as f64;
    let (mut ssim, mut cs) = (0.0, 0.0);
    for i in 0..mu_a.px.len() {
        let (ma, mb) = (mu_a.px[i], mu_b.px[i]);
        let va = aa.px[i] - ma * ma;
        let vb = bb.px[i] - mb * mb;
        let cov = ab.px[i] - ma * mb;
        let c = (2.0 * cov + C2) / (va + vb + C2);
        cs += c;
        ssim += c * (2.0 * (ma * mb) + C1) / (ma * ma + mb * mb + C1);
    }
    (ssim / n, cs / n)
}

/// Multi-scale SSIM of two equally sized spectrograms treated as images,
/// jointly min-max normalized to `[0, 1]`. Scales that no longer fit the
/// 11×11 window are dropped and the remaining weights renormalized.
/// Negative per-scale terms are clamped to zero before exponentiation.
pub fn ms_ssim<S: Scalar>(a: &MelSpectrogram<S>, b: &MelSpectrogram<S>) -> Result<MsSsim> {
    if a.bins() != b.bins() || a.frames() != b.frames() {
        return Err(Error::ShapeMismatch {
            op: "ms_ssim",
            lhs: vec![a.bins(), a.frames()],
            rhs: vec![b.bins(), b.frames()],
        });
    }
    let (h, w) = (a.bins(), a.frames());
    let small = h.min(w);
    if small < SSIM_WINDOW {
        return Err(Error::InvalidParameter(format!(
            "ms_ssim needs at least {SSIM_WINDOW}×{SSIM_WINDOW}, got {h}×{w}"
        )));
    }
    let mut scales = 1;
    while scales < MS_SSIM_WEIGHTS.len() && small >> scales >= SSIM_WINDOW {
        scales += 1;
    }
    let raw = |m: &MelSpectrogram<S>| -> Vec<f64> { m.data().iter().map(|v| v.as_f64()).collect() };
    let (xa, xb) = (raw(a), raw(b));
    let lo = xa.iter().chain(&xb).copied().fold(f64::INFINITY, f64::min);
    let hi = xa.iter().chain(&xb).copied().fold(f64::NEG_INFINITY, f64::max);
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(Error::NonFinite { op: "ms_ssim input".into() });
    }
    let span = if hi > lo { hi - lo } else { 1.0 };
    let norm = |x: Vec<f64>| Image {
        h,
        w,
        px: x.into_iter().map(|v| (v - lo) / span).collect(),
    };
    let (mut ia, mut ib) = (norm(xa), norm(xb));
    let weights = &MS_SSIM_WEIGHTS[..scales];
    let total: f64 = weights.iter().sum();
    let win = gaussian_window();
    let mut value = 1.0;
    for (s, &wt) in weights.iter().enumerate() {
        let (ssim, cs) = ssim_cs(&ia, &ib, &win);
        let term = if s + 1 == scales { ssim } else { cs };
        value *= term.max(0.0).powf(wt / total);
        if s + 1 < scales {
            ia = ia.downsample();
            ib = ib.downsample();
        }
    }
    Ok(MsSsim { value, scales })
}
