//! YIN-style pitch tracker: squared difference function, cumulative-mean
//! normalization, absolute threshold, parabolic refinement of the lag.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct F0Config {
    pub sample_rate: u32,
    pub hop: usize,
    pub frame_length: usize,
    pub fmin: f64,
    pub fmax: f64,
    pub threshold: f64,
    /// Frames quieter than this RMS are unvoiced outright.
    pub silence_rms: f64,
}

impl Default for F0Config {
    fn default() -> Self {
        Self {
            sample_rate: 22050,
            hop: 256,
            frame_length: 1024,
            fmin: 50.0,
            fmax: 1100.0,
            threshold: 0.15,
            silence_rms: 1e-4,
        }
    }
}

/// Per-frame F0 in Hz; `0` marks unvoiced frames.
#[derive(Debug, Clone, PartialEq)]
pub struct F0Track {
    pub hz: Vec<f64>,
    pub hop: usize,
}

impl F0Track {
    pub fn len(&self) -> usize {
        self.hz.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hz.is_empty()
    }

    pub fn voiced(&self) -> impl Iterator<Item = f64> + '_ {
        self.hz.iter().copied().filter(|&f| f > 0.0)
    }
}

pub fn extract_f0<S: Scalar>(wav: &[S], cfg: &F0Config) -> Result<F0Track> {
    if cfg.sample_rate < 8000 {
        return Err(Error::InvalidParameter(format!(
            "sample rate {} below 8 kHz",
            cfg.sample_rate
        )));
    }
    if cfg.hop == 0 {
        return Err(Error::InvalidParameter("hop must be positive".into()));
    }
    let sr = cfg.sample_rate as f64;
    let tau_min = (sr / cfg.fmax).floor().max(2.0) as usize;
    let tau_max = (sr / cfg.fmin).ceil() as usize;
    if cfg.frame_length <= tau_max + 2 {
        return Err(Error::InvalidParameter(format!(
            "frame length {} too short for fmin {}",
            cfg.frame_length, cfg.fmin
        )));
    }
    let width = cfg.frame_length - tau_max;
    let x: Vec<f64> = wav.iter().map(|v| v.as_f64()).collect();
    let frames = x.len() / cfg.hop + 1;
    let half = cfg.frame_length as isize / 2;
    let sample = |i: isize| -> f64 {
        if i < 0 || i as usize >= x.len() {
            0.0
        } else {
            x[i as usize]
        }
    };

    let mut frame = vec![0.0; cfg.frame_length];
    let mut diff = vec![0.0; tau_max + 1];
    let mut hz = Vec::with_capacity(frames);
    for l in 0..frames {
        let start = (l * cfg.hop) as isize - half;
        for (i, v) in frame.iter_mut().enumerate() {
            *v = sample(start + i as isize);
        }
        let rms = (frame.iter().map(|v| v * v).sum::<f64>() / frame.len() as f64).sqrt();
        if rms < cfg.silence_rms {
            hz.push(0.0);
            continue;
        }
        for (tau, d) in diff.iter_mut().enumerate().skip(1) {
            *d = (0..width)
                .map(|j| {
                    let e = frame[j] - frame[j + tau];
                    e * e
                })
                .sum();
        }
        // Cumulative-mean normalized difference.
        let mut cmnd = vec![1.0; tau_max + 1];
        let mut running = 0.0;
        for tau in 1..=tau_max {
            running += diff[tau];
            cmnd[tau] = if running > 0.0 {
                diff[tau] * tau as f64 / running
            } else {
                1.0
            };
        }
        let mut found = None;
        let mut tau = tau_min;
        while tau < tau_max {
            if cmnd[tau] < cfg.threshold {
                while tau + 1 < tau_max && cmnd[tau + 1] < cmnd[tau] {
                    tau += 1;
                }
                found = Some(tau);
                break;
            }
            tau += 1;
        }
        let f = match found {
            Some(t) => {
                let (a, b, c) = (cmnd[t - 1], cmnd[t], cmnd[t + 1]);
                let denom = a - 2.0 * b + c;
                let shift = if denom.abs() > 1e-12 {
                    (0.5 * (a - c) / denom).clamp(-1.0, 1.0)
                } else {
                    0.0
                };
                let f = sr / (t as f64 + shift);
                if f >= cfg.fmin && f <= cfg.fmax {
                    f
                } else {
                    0.0
                }
            }
            None => 0.0,
        };
        hz.push(f);
    }
    Ok(F0Track { hz, hop: cfg.hop })
}
