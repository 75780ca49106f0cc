use super::MelSpectrogram;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Orthonormal DCT-II.
pub fn dct_ii<S: Scalar>(x: &[S]) -> Vec<S> {
    let n = x.len();
    let nf = n as f64;
    (0..n)
        .map(|k| {
            let s = if k == 0 { (1.0 / nf).sqrt() } else { (2.0 / nf).sqrt() };
            let acc: f64 = x
                .iter()
                .enumerate()
                .map(|(m, v)| v.as_f64() * (std::f64::consts::PI * k as f64 * (m as f64 + 0.5) / nf).cos())
                .sum();
            S::lit(s * acc)
        })
        .collect()
}

/// Inverse of [`dct_ii`] (orthonormal DCT-III).
pub fn idct_ii<S: Scalar>(c: &[S]) -> Vec<S> {
    let n = c.len();
    let nf = n as f64;
    (0..n)
        .map(|m| {
            let acc: f64 = c
                .iter()
                .enumerate()
                .map(|(k, v)| {
                    let s = if k == 0 { (1.0 / nf).sqrt() } else { (2.0 / nf).sqrt() };
                    s * v.as_f64() * (std::f64::consts::PI * k as f64 * (m as f64 + 0.5) / nf).cos()
                })
                .sum();
            S::lit(acc)
        })
        .collect()
}

/// Mel-cepstral coefficients `1..=K` of every frame (`c₀` dropped).
pub fn mel_cepstrum<S: Scalar>(mel: &MelSpectrogram<S>, k: usize) -> Result<Vec<Vec<S>>> {
    if k == 0 || k >= mel.bins() {
        return Err(Error::InvalidParameter(format!(
            "cepstral order {k} must be in 1..{}",
            mel.bins()
        )));
    }
    Ok((0..mel.frames())
        .map(|l| dct_ii(&mel.frame(l))[1..=k].to_vec())
        .collect())
}
