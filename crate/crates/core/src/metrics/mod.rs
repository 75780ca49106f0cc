//! Objective evaluation: DTW alignment, mel-cepstral distortion, MS-SSIM
//! and semitone F0 error.

mod dtw;
mod report;
mod ssim;

pub use dtw::{dtw_align, dtw_with, euclidean, Alignment};
pub use report::{evaluate_dirs, evaluate_pair, EvalRow, EvalReport, REPORT_HEADER};
pub use ssim::{ms_ssim, MsSsim, MS_SSIM_WEIGHTS, SSIM_SIGMA, SSIM_WINDOW};

use crate::error::Result;
use crate::scalar::Scalar;
use crate::signal::{mel_cepstrum, F0Track, MelSpectrogram, LOG_FLOOR};

/// Cepstral order used for distortion and alignment.
pub const MCD_ORDER: usize = 13;

/// Reference pitch for the semitone scale, in Hz.
pub const SEMITONE_REF_HZ: f64 = 55.0;

/// `(10 / ln 10)·√2`.
pub fn mcd_constant() -> f64 {
    10.0 / std::f64::consts::LN_10 * std::f64::consts::SQRT_2
}

/// Distortion in dB together with the alignment it was measured on.
#[derive(Debug, Clone, PartialEq)]
pub struct Mcd {
    pub db: f64,
    pub alignment: Alignment,
}

/// MCD between two cepstral sequences over their DTW path.
pub fn mcd_cepstra<S: Scalar>(a: &[Vec<S>], b: &[Vec<S>]) -> Result<f64> {
    let al = dtw_align(a, b)?;
    Ok(mcd_constant() * al.cost / al.path.len() as f64)
}

fn silent<S: Scalar>(mel: &MelSpectrogram<S>, frame: usize) -> bool {
    let floor = LOG_FLOOR.ln() + 1e-6;
    (0..mel.bins()).all(|m| mel.get(m, frame).as_f64() <= floor)
}

/// MCD of two log-mel spectrograms. Aligned pairs in which both frames
/// sit at the log floor are left out of the average.
pub fn mcd_with_alignment<S: Scalar>(reference: &MelSpectrogram<S>, synth: &MelSpectrogram<S>) -> Result<Mcd> {
    let ca = mel_cepstrum(reference, MCD_ORDER.min(reference.bins() - 1))?;
    let cb = mel_cepstrum(synth, MCD_ORDER.min(synth.bins() - 1))?;
    let alignment = dtw_align(&ca, &cb)?;
    let (mut sum, mut n) = (0.0, 0usize);
    for &(i, j) in &alignment.path {
        if silent(reference, i) && silent(synth, j) {
            continue;
        }
        sum += euclidean(&ca[i], &cb[j]);
        n += 1;
    }
    let db = if n == 0 { 0.0 } else { mcd_constant() * sum / n as f64 };
    Ok(Mcd { db, alignment })
}

pub fn mcd<S: Scalar>(reference: &MelSpectrogram<S>, synth: &MelSpectrogram<S>) -> Result<f64> {
    Ok(mcd_with_alignment(reference, synth)?.db)
}

pub fn semitones(hz: f64) -> f64 {
    12.0 * (hz / SEMITONE_REF_HZ).log2()
}

/// Pearson correlation; `None` when either side has no variance.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len().min(b.len());
    if n < 2 {
        return None;
    }
    let ma = a[..n].iter().sum::<f64>() / n as f64;
    let mb = b[..n].iter().sum::<f64>() / n as f64;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for k in 0..n {
        let (x, y) = (a[k] - ma, b[k] - mb);
        sab += x * y;
        saa += x * x;
        sbb += y * y;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return None;
    }
    Some((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct F0Scores {
    pub rmse_semitones: f64,
    pub corr: Option<f64>,
}

/// Semitone RMSE and correlation over aligned pairs where both frames are
/// voiced. Pairs beyond either track are ignored; fewer than two usable
/// pairs gives `None`.
pub fn f0_metrics(reference: &F0Track, synth: &F0Track, path: &[(usize, usize)]) -> Option<F0Scores> {
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for &(i, j) in path {
        let (Some(&x), Some(&y)) = (reference.hz.get(i), synth.hz.get(j)) else {
            continue;
        };
        if x > 0.0 && y > 0.0 {
            a.push(semitones(x));
            b.push(semitones(y));
        }
    }
    if a.len() < 2 {
        return None;
    }
    let mse = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64;
    Some(F0Scores {
        rmse_semitones: mse.sqrt(),
        corr: pearson(&a, &b),
    })
}
