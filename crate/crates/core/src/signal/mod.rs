//! Audio-side DSP: mel analysis, cepstra, pitch tracking, phase
//! reconstruction, and the WAV / mel file formats.

mod cepstrum;
mod f0;
mod griffin_lim;
mod io;
mod mel;

pub use cepstrum::{dct_ii, idct_ii, mel_cepstrum};
pub use f0::{extract_f0, F0Config, F0Track};
pub use griffin_lim::griffin_lim;
pub use io::{decode_mel, encode_mel, read_mel, read_wav, write_mel, write_wav, MEL_MAGIC, MEL_VERSION};
pub use mel::{hz_to_mel, mel_filterbank, mel_to_hz, stft_mel, stft_power, MelFilterbank};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Natural-log floor applied to mel energies.
pub const LOG_FLOOR: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MelConfig {
    pub sample_rate: u32,
    /// FFT size and analysis window length.
    pub n_fft: usize,
    pub hop: usize,
    pub n_mels: usize,
    pub fmin: f64,
    pub fmax: f64,
}

impl Default for MelConfig {
    fn default() -> Self {
        Self {
            sample_rate: 22050,
            n_fft: 1024,
            hop: 256,
            n_mels: 80,
            fmin: 0.0,
            fmax: 11025.0,
        }
    }
}

impl MelConfig {
    /// Table defaults with a reduced bin count.
    pub fn with_mels(n_mels: usize) -> Self {
        Self {
            n_mels,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let nyquist = self.sample_rate as f64 / 2.0;
        if self.n_fft < 4 || self.hop == 0 || self.n_mels == 0 {
            return Err(Error::InvalidParameter(format!("degenerate mel config {self:?}")));
        }
        if !(self.fmin >= 0.0 && self.fmin < self.fmax && self.fmax <= nyquist) {
            return Err(Error::InvalidParameter(format!(
                "mel band [{}, {}] invalid for sample rate {}",
                self.fmin, self.fmax, self.sample_rate
            )));
        }
        Ok(())
    }

    /// Frames produced for `samples` under center padding.
    pub fn frames_for(&self, samples: usize) -> usize {
        samples / self.hop + 1
    }
}

/// Log-mel energies stored bin-major (`M × L_f`).
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram<S: Scalar> {
    config: MelConfig,
    frames: usize,
    data: Vec<S>,
}

impl<S: Scalar> MelSpectrogram<S> {
    pub fn new(config: MelConfig, frames: usize, data: Vec<S>) -> Result<Self> {
        if data.len() != config.n_mels * frames {
            return Err(Error::InvalidShape {
                op: "mel",
                msg: format!("{} values for {}×{frames}", data.len(), config.n_mels),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { op: "mel".into() });
        }
        Ok(Self { config, frames, data })
    }

    pub fn from_tensor(config: MelConfig, t: &Tensor<S>) -> Result<Self> {
        if t.rank() != 2 || t.shape()[0] != config.n_mels {
            return Err(Error::InvalidShape {
                op: "mel",
                msg: format!("tensor {:?} is not {}×L", t.shape(), config.n_mels),
            });
        }
        Self::new(config, t.shape()[1], t.to_vec())
    }

    pub fn to_tensor(&self) -> Tensor<S> {
        Tensor::new(self.data.clone(), &[self.bins(), self.frames]).expect("consistent mel")
    }

    pub fn config(&self) -> &MelConfig {
        &self.config
    }

    pub fn bins(&self) -> usize {
        self.config.n_mels
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn get(&self, bin: usize, frame: usize) -> S {
        self.data[bin * self.frames + frame]
    }

    /// All bins of one frame.
    pub fn frame(&self, frame: usize) -> Vec<S> {
        (0..self.bins()).map(|m| self.get(m, frame)).collect()
    }

    /// Frame-major copy (`L_f` rows of `M` bins).
    pub fn frames_vec(&self) -> Vec<Vec<S>> {
        (0..self.frames).map(|l| self.frame(l)).collect()
    }

    /// Frames `[start, start + len)`.
    pub fn crop(&self, start: usize, len: usize) -> Result<Self> {
        if start + len > self.frames {
            return Err(Error::InvalidShape {
                op: "mel crop",
                msg: format!("[{start}, {}) of {} frames", start + len, self.frames),
            });
        }
        let mut data = Vec::with_capacity(self.bins() * len);
        for m in 0..self.bins() {
            let row = &self.data[m * self.frames..(m + 1) * self.frames];
            data.extend_from_slice(&row[start..start + len]);
        }
        Self::new(self.config, len, data)
    }

    /// Prepends copies of one frame.
    pub fn prepend_frame(&self, frame: &[S], count: usize) -> Result<Self> {
        if frame.len() != self.bins() {
            return Err(Error::InvalidShape {
                op: "mel prepend",
                msg: format!("frame of {} bins for {}-bin mel", frame.len(), self.bins()),
            });
        }
        let frames = self.frames + count;
        let mut data = Vec::with_capacity(self.bins() * frames);
        for (m, &v) in frame.iter().enumerate() {
            data.extend(std::iter::repeat(v).take(count));
            data.extend_from_slice(&self.data[m * self.frames..(m + 1) * self.frames]);
        }
        Self::new(self.config, frames, data)
    }
}
