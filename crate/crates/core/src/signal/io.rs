//! WAV (16-bit PCM mono) and the binary mel file.
//!
//! Mel file layout, all integers and floats little-endian:
//!
//! | offset | size | field                          |
//! |--------|------|--------------------------------|
//! | 0      | 8    | magic `SVSMEL\0\0`             |
//! | 8      | 4    | version (u32, currently 1)     |
//! | 12     | 4    | bins M (u32)                   |
//! | 16     | 4    | frames L_f (u32)               |
//! | 20     | 4    | sample rate (u32)              |
//! | 24     | 4    | n_fft (u32)                    |
//! | 28     | 4    | hop (u32)                      |
//! | 32     | 4    | fmin in Hz (f32)               |
//! | 36     | 4    | fmax in Hz (f32)               |
//! | 40     | 4    | log floor (f32)                |
//! | 44     | 4·M·L_f | payload f32, bin-major      |

use std::fs;
use std::path::Path;

use super::{MelConfig, MelSpectrogram, LOG_FLOOR};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const MEL_MAGIC: &[u8; 8] = b"SVSMEL\0\0";
pub const MEL_VERSION: u32 = 1;
const HEADER: usize = 44;

pub fn read_wav<S: Scalar>(path: &Path) -> Result<(Vec<S>, u32)> {
    let mut reader = hound::WavReader::open(path)?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::Format(format!(
            "{}: expected mono, found {} channels",
            path.display(),
            spec.channels
        )));
    }
    let samples = match spec.sample_format {
        hound::SampleFormat::Int => {
            let scale = 1.0 / (1u64 << (spec.bits_per_sample - 1)) as f64;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| S::lit(v as f64 * scale)))
                .collect::<std::result::Result<Vec<_>, _>>()?
        }
        hound::SampleFormat::Float => reader
            .samples::<f32>()
            .map(|s| s.map(|v| S::lit(v as f64)))
            .collect::<std::result::Result<Vec<_>, _>>()?,
    };
    Ok((samples, spec.sample_rate))
}

/// Writes 16-bit PCM mono, clipping to [-1, 1].
pub fn write_wav<S: Scalar>(path: &Path, samples: &[S], sample_rate: u32) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(path, spec)?;
    for &s in samples {
        let v = (s.as_f64() * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        w.write_sample(v)?;
    }
    w.finalize()?;
    Ok(())
}

pub fn encode_mel<S: Scalar>(mel: &MelSpectrogram<S>) -> Vec<u8> {
    let c = mel.config();
    let mut out = Vec::with_capacity(HEADER + 4 * mel.data().len());
    out.extend_from_slice(MEL_MAGIC);
    for v in [
        MEL_VERSION,
        mel.bins() as u32,
        mel.frames() as u32,
        c.sample_rate,
        c.n_fft as u32,
        c.hop as u32,
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for v in [c.fmin as f32, c.fmax as f32, LOG_FLOOR as f32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for v in mel.data() {
        out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
    }
    out
}

pub fn decode_mel<S: Scalar>(bytes: &[u8]) -> Result<MelSpectrogram<S>> {
    if bytes.len() < HEADER || &bytes[..8] != MEL_MAGIC {
        return Err(Error::Format("not a mel file (bad magic)".into()));
    }
    let u = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let f = |o: usize| f32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    if u(8) != MEL_VERSION {
        return Err(Error::Format(format!("unsupported mel file version {}", u(8))));
    }
    let (bins, frames) = (u(12) as usize, u(16) as usize);
    let config = MelConfig {
        sample_rate: u(20),
        n_fft: u(24) as usize,
        hop: u(28) as usize,
        n_mels: bins,
        fmin: f(32) as f64,
        fmax: f(36) as f64,
    };
    let expected = HEADER + 4 * bins * frames;
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "mel payload is {} bytes, header implies {expected}",
            bytes.len()
        )));
    }
    let data = bytes[HEADER..]
        .chunks_exact(4)
        .map(|c| S::lit(f32::from_le_bytes(c.try_into().unwrap()) as f64))
        .collect();
    MelSpectrogram::new(config, frames, data)
}

pub fn write_mel<S: Scalar>(path: &Path, mel: &MelSpectrogram<S>) -> Result<()> {
    fs::write(path, encode_mel(mel)).map_err(|e| Error::io(path, e))
}

pub fn read_mel<S: Scalar>(path: &Path) -> Result<MelSpectrogram<S>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_mel(&bytes)
}
