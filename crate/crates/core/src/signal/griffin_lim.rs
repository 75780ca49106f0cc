use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex;

use super::mel::{mel_filterbank, Stft};
use super::{MelSpectrogram, LOG_FLOOR};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

const PHASE_SEED: u64 = 0x6c1f;

/// Waveform preview from a log-mel spectrogram.
///
/// Mel power is mapped back to linear frequency with the filterbank
/// pseudo-inverse (energy at the log floor counts as silence), then phase is
/// recovered by `iters` rounds of Griffin-Lim starting from fixed random
/// phases. Output has `(L_f − 1)·hop` samples, so re-analysis yields `L_f`
/// frames.
pub fn griffin_lim<S: Scalar>(mel: &MelSpectrogram<S>, iters: usize) -> Result<Vec<S>> {
    let cfg = *mel.config();
    let fb = mel_filterbank(&cfg)?;
    let f = DMatrix::from_row_slice(fb.n_mels, fb.n_freqs, &fb.weights);
    let pinv = f
        .pseudo_inverse(1e-10)
        .map_err(|e| Error::InvalidParameter(format!("filterbank pseudo-inverse: {e}")))?;

    let frames = mel.frames();
    let mut mags: Vec<Vec<S>> = Vec::with_capacity(frames);
    for l in 0..frames {
        let power = DMatrix::from_iterator(
            fb.n_mels,
            1,
            mel.frame(l)
                .into_iter()
                .map(|v| (v.as_f64().exp() - LOG_FLOOR).max(0.0)),
        );
        let lin = &pinv * power;
        mags.push(lin.iter().map(|&p| S::lit(p.max(0.0).sqrt())).collect());
    }

    let len = frames.saturating_sub(1) * cfg.hop;
    if len == 0 {
        return Ok(Vec::new());
    }
    let stft = Stft::<S>::new(cfg.n_fft, cfg.hop);
    let mut rng = ChaCha8Rng::seed_from_u64(PHASE_SEED);
    let mut spec: Vec<Vec<Complex<S>>> = mags
        .iter()
        .map(|row| {
            row.iter()
                .map(|&m| {
                    let phi = S::lit(rng.gen_range(0.0..std::f64::consts::TAU));
                    Complex::from_polar(m, phi)
                })
                .collect()
        })
        .collect();
    let mut wav = stft.inverse(&spec, len);
    for _ in 0..iters {
        let est = stft.forward(&wav);
        for (l, row) in spec.iter_mut().enumerate() {
            for (k, c) in row.iter_mut().enumerate() {
                let e = est.get(l).map(|r| r[k]).unwrap_or_default();
                let n = e.norm();
                let phase = if n > S::lit(1e-12) {
                    e / n
                } else {
                    Complex::new(S::one(), S::zero())
                };
                *c = phase * mags[l][k];
            }
        }
        wav = stft.inverse(&spec, len);
    }
    Ok(wav)
}
