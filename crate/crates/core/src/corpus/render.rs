//! Note-sequence sampling and waveform rendering for the toy corpus.

use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::ToyCorpusSpec;
use crate::error::{Error, Result};
use crate::networks::MusicalScore;

pub(crate) struct Layout {
    pub score: MusicalScore,
    pub durations: Vec<usize>,
}

pub fn midi_to_hz(p: f64) -> f64 {
    440.0 * 2f64.powf((p - 69.0) / 12.0)
}

pub(crate) fn frames_per_second(spec: &ToyCorpusSpec) -> f64 {
    spec.mel.sample_rate as f64 / spec.mel.hop as f64
}

/// Draws notes until the segment length is reached; the last note absorbs
/// the remainder (or merges into its predecessor when too short).
pub(crate) fn sample_layout(spec: &ToyCorpusSpec, singer: usize, rng: &mut ChaCha8Rng) -> Result<Layout> {
    let fps = frames_per_second(spec);
    let lo = (spec.min_seconds * fps).ceil() as usize;
    let hi = (spec.max_seconds * fps).floor() as usize;
    if lo > hi || hi < spec.note_frames.0 {
        return Err(Error::InvalidParameter(format!(
            "segment bounds {}..{} s cannot hold a {}-frame note",
            spec.min_seconds, spec.max_seconds, spec.note_frames.0
        )));
    }
    let total = rng.gen_range(lo..=hi);
    let (nmin, nmax) = spec.note_frames;

    let mut notes: Vec<usize> = Vec::new();
    let mut used = 0;
    while used < total {
        let left = total - used;
        let n = rng.gen_range(nmin..=nmax).min(left);
        if n < nmin && !notes.is_empty() {
            *notes.last_mut().unwrap() += n;
        } else {
            notes.push(n);
        }
        used += n;
    }

    let (plo, phi) = spec.pitch_range;
    let mut pitch = rng.gen_range(plo..=phi) as i64;
    let mut score = MusicalScore {
        phones: Vec::new(),
        note_lengths: Vec::new(),
        pitches: Vec::new(),
        singer,
    };
    let mut durations = Vec::new();
    for &n in &notes {
        pitch = (pitch + rng.gen_range(-3i64..=3)).clamp(plo as i64, phi as i64);
        let vowel = spec.consonants + rng.gen_range(0..spec.vowels);
        let with_consonant = spec.consonants > 0 && n >= 8 && rng.gen_bool(0.7);
        if with_consonant {
            let c = rng.gen_range(0..spec.consonants);
            let cd = rng.gen_range(2..=4);
            score.phones.extend([c, vowel]);
            score.note_lengths.extend([n, n]);
            score.pitches.extend([pitch as usize, pitch as usize]);
            durations.extend([cd, n - cd]);
        } else {
            score.phones.push(vowel);
            score.note_lengths.push(n);
            score.pitches.push(pitch as usize);
            durations.push(n);
        }
    }
    Ok(Layout { score, durations })
}

/// Singer-dependent timbre: spectral tilt exponent, vibrato depth
/// (semitones) and rate (Hz).
fn voice(singer: usize) -> (f64, f64, f64) {
    let tilt = 0.9 + 0.6 * (singer % 4) as f64;
    let depth = 0.2 + 0.1 * (singer % 3) as f64;
    let rate = 5.0 + 0.7 * (singer % 5) as f64;
    (tilt, depth, rate)
}

fn formant(spec: &ToyCorpusSpec, vowel: usize) -> f64 {
    if spec.vowels <= 1 {
        return 800.0;
    }
    400.0 + 2200.0 * vowel as f64 / (spec.vowels - 1) as f64
}

fn consonant_center(spec: &ToyCorpusSpec, c: usize) -> f64 {
    if spec.consonants <= 1 {
        return 3500.0;
    }
    1800.0 + 5000.0 * c as f64 / (spec.consonants - 1) as f64
}

/// Raised-cosine fade in and out over `ramp` samples.
fn fade(i: usize, n: usize, ramp: usize) -> f64 {
    let ramp = ramp.min(n / 2).max(1);
    let edge = i.min(n - 1 - i);
    if edge >= ramp {
        1.0
    } else {
        0.5 - 0.5 * (PI * edge as f64 / ramp as f64).cos()
    }
}

pub(crate) fn render(spec: &ToyCorpusSpec, layout: &Layout, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let hop = spec.mel.hop;
    let sr = spec.mel.sample_rate as f64;
    let frames: usize = layout.durations.iter().sum();
    let total = frames * hop - hop / 2;
    let mut wav = vec![0.0; total];
    let (tilt, depth, rate) = voice(layout.score.singer);
    let ramp = (0.008 * sr) as usize;

    let mut frame = 0;
    for (i, &d) in layout.durations.iter().enumerate() {
        let start = (frame * hop).saturating_sub(hop / 2);
        let end = ((frame + d) * hop - hop / 2).min(total);
        frame += d;
        let n = end - start;
        let phone = layout.score.phones[i];
        let out = &mut wav[start..end];
        if phone >= spec.consonants {
            let f = midi_to_hz(layout.score.pitches[i] as f64);
            let fc = formant(spec, phone - spec.consonants);
            let top = f * 2f64.powf(depth / 12.0);
            let k_max = ((0.45 * sr / top).floor() as usize).max(1);
            let amps: Vec<f64> = (1..=k_max)
                .map(|k| {
                    let fk = k as f64 * f;
                    (k as f64).powf(-tilt) * (1.0 + 2.5 * (-((fk - fc) / 300.0).powi(2)).exp())
                })
                .collect();
            let gain = 0.15 / amps.iter().map(|a| a * a / 2.0).sum::<f64>().sqrt();
            let phi0 = rng.gen_range(0.0..2.0 * PI);
            let mut phase = 0.0f64;
            for (j, o) in out.iter_mut().enumerate() {
                let time = j as f64 / sr;
                let inst = f * 2f64.powf(depth * (2.0 * PI * rate * time + phi0).sin() / 12.0);
                phase += 2.0 * PI * inst / sr;
                let s: f64 = amps
                    .iter()
                    .enumerate()
                    .map(|(k, a)| a * ((k + 1) as f64 * phase).sin())
                    .sum();
                *o = gain * fade(j, n, ramp) * s;
            }
        } else {
            // Band-pass filtered noise burst (RBJ biquad, constant peak gain).
            let w0 = 2.0 * PI * consonant_center(spec, phone) / sr;
            let alpha = w0.sin() / (2.0 * 2.0);
            let a0 = 1.0 + alpha;
            let (b0, b2) = (alpha / a0, -alpha / a0);
            let (a1, a2) = (-2.0 * w0.cos() / a0, (1.0 - alpha) / a0);
            let (mut x1, mut x2, mut y1, mut y2) = (0.0, 0.0, 0.0, 0.0);
            let tau = (n as f64 / 3.0).max(1.0);
            for (j, o) in out.iter_mut().enumerate() {
                let x: f64 = rng.sample(StandardNormal);
                let y = b0 * x + b2 * x2 - a1 * y1 - a2 * y2;
                x2 = x1;
                x1 = x;
                y2 = y1;
                y1 = y;
                let env = fade(j, n, ramp / 2) * (-(j as f64) / tau).exp();
                *o = 0.12 * env * y;
            }
        }
    }
    wav
}

/// Rounds to the 16-bit grid used by the WAV writer so that in-memory
/// features match those recomputed from disk.
pub(crate) fn quantize(wav: &mut [f64]) {
    for s in wav {
        *s = (*s * 32768.0).round().clamp(-32768.0, 32767.0) / 32768.0;
    }
}
