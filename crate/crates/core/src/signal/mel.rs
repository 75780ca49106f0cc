use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::{MelConfig, MelSpectrogram, LOG_FLOOR};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// HTK mel scale.
pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filters, `n_mels` rows over `n_fft/2 + 1` FFT bins.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    pub n_mels: usize,
    pub n_freqs: usize,
    /// Row-major `n_mels × n_freqs`.
    pub weights: Vec<f64>,
    /// Filter centre frequencies in Hz.
    pub centers: Vec<f64>,
}

pub fn mel_filterbank(cfg: &MelConfig) -> Result<MelFilterbank> {
    cfg.validate()?;
    let n_freqs = cfg.n_fft / 2 + 1;
    let (lo, hi) = (hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax));
    let points: Vec<f64> = (0..cfg.n_mels + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (cfg.n_mels + 1) as f64))
        .collect();
    let bin_hz = cfg.sample_rate as f64 / cfg.n_fft as f64;
    let mut weights = vec![0.0; cfg.n_mels * n_freqs];
    for m in 0..cfg.n_mels {
        let (l, c, r) = (points[m], points[m + 1], points[m + 2]);
        for k in 0..n_freqs {
            let f = k as f64 * bin_hz;
            let w = if f > l && f <= c {
                (f - l) / (c - l)
            } else if f > c && f < r {
                (r - f) / (r - c)
            } else {
                0.0
            };
            weights[m * n_freqs + k] = w;
        }
    }
    Ok(MelFilterbank {
        n_mels: cfg.n_mels,
        n_freqs,
        weights,
        centers: points[1..=cfg.n_mels].to_vec(),
    })
}

pub(crate) fn hann<S: Scalar>(n: usize) -> Vec<S> {
    (0..n)
        .map(|i| S::lit(0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos()))
        .collect()
}

/// Center-padded (reflect where possible) frames of length `n_fft`.
pub(crate) fn padded<S: Scalar>(wav: &[S], n_fft: usize) -> Vec<S> {
    let pad = n_fft / 2;
    let n = wav.len();
    let mut out = Vec::with_capacity(n + 2 * pad);
    let reflect = n > pad;
    for i in (1..=pad).rev() {
        out.push(if reflect { wav[i] } else { S::zero() });
    }
    out.extend_from_slice(wav);
    for i in 0..pad {
        out.push(if reflect { wav[n - 2 - i] } else { S::zero() });
    }
    out
}

pub(crate) struct Stft<S: Scalar> {
    pub n_fft: usize,
    pub hop: usize,
    pub window: Vec<S>,
    fwd: Arc<dyn Fft<S>>,
    inv: Arc<dyn Fft<S>>,
}

impl<S: Scalar> Stft<S> {
    pub fn new(n_fft: usize, hop: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            n_fft,
            hop,
            window: hann(n_fft),
            fwd: planner.plan_fft_forward(n_fft),
            inv: planner.plan_fft_inverse(n_fft),
        }
    }

    /// One-sided spectra, `frames × (n_fft/2 + 1)`.
    pub fn forward(&self, wav: &[S]) -> Vec<Vec<Complex<S>>> {
        let frames = wav.len() / self.hop + 1;
        let x = padded(wav, self.n_fft);
        let half = self.n_fft / 2 + 1;
        let mut buf = vec![Complex::new(S::zero(), S::zero()); self.n_fft];
        (0..frames)
            .map(|l| {
                let start = l * self.hop;
                for (i, b) in buf.iter_mut().enumerate() {
                    let v = x.get(start + i).copied().unwrap_or(S::zero());
                    *b = Complex::new(v * self.window[i], S::zero());
                }
                self.fwd.process(&mut buf);
                buf[..half].to_vec()
            })
            .collect()
    }

    /// Windowed overlap-add inverse, trimmed to `len` samples.
    pub fn inverse(&self, spec: &[Vec<Complex<S>>], len: usize) -> Vec<S> {
        let pad = self.n_fft / 2;
        let total = (spec.len().saturating_sub(1)) * self.hop + self.n_fft;
        let mut out = vec![S::zero(); total];
        let mut norm = vec![S::zero(); total];
        let mut buf = vec![Complex::new(S::zero(), S::zero()); self.n_fft];
        let scale = S::one() / S::lit(self.n_fft as f64);
        for (l, frame) in spec.iter().enumerate() {
            for (k, b) in buf.iter_mut().enumerate() {
                *b = if k < frame.len() {
                    frame[k]
                } else {
                    frame[self.n_fft - k].conj()
                };
            }
            self.inv.process(&mut buf);
            let start = l * self.hop;
            for i in 0..self.n_fft {
                let w = self.window[i];
                out[start + i] += buf[i].re * scale * w;
                norm[start + i] += w * w;
            }
        }
        let tiny = S::lit(1e-8);
        (0..len)
            .map(|i| {
                let j = i + pad;
                if j < total && norm[j] > tiny {
                    out[j] / norm[j]
                } else {
                    S::zero()
                }
            })
            .collect()
    }
}

/// Power spectrogram `|X|²`, frames × bins.
pub fn stft_power<S: Scalar>(wav: &[S], cfg: &MelConfig) -> Result<Vec<Vec<S>>> {
    cfg.validate()?;
    if wav.is_empty() {
        return Err(Error::InvalidParameter("empty waveform".into()));
    }
    let stft = Stft::new(cfg.n_fft, cfg.hop);
    Ok(stft
        .forward(wav)
        .into_iter()
        .map(|f| f.into_iter().map(|c| c.norm_sqr()).collect())
        .collect())
}

/// Hann-windowed STFT power → HTK mel filterbank → `ln(max(·, 1e−5))`.
pub fn stft_mel<S: Scalar>(wav: &[S], cfg: &MelConfig) -> Result<MelSpectrogram<S>> {
    let power = stft_power(wav, cfg)?;
    let fb = mel_filterbank(cfg)?;
    let frames = power.len();
    let floor = S::lit(LOG_FLOOR);
    let mut data = vec![S::zero(); cfg.n_mels * frames];
    for (l, p) in power.iter().enumerate() {
        for m in 0..cfg.n_mels {
            let row = &fb.weights[m * fb.n_freqs..(m + 1) * fb.n_freqs];
            let e: S = row
                .iter()
                .zip(p)
                .filter(|(w, _)| **w != 0.0)
                .map(|(&w, &v)| S::lit(w) * v)
                .sum();
            data[m * frames + l] = e.max(floor).ln();
        }
    }
    MelSpectrogram::new(*cfg, frames, data)
}
