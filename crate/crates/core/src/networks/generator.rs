use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::layers::{
    conv1d, init_transformer_block, layer_norm, linear, sequence_masks, sinusoidal_tensor, swap,
    transformer_block,
};
use super::params::Init;
use super::{MusicalScore, ParamStore, ScoreVocab};
use crate::autodiff::{IndexMap, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecoderKind {
    /// Conditional WaveNet predicting `x̂₀` from `(x_t, t, ms)`.
    Diffusion,
    /// Transformer stack mapping `ms` straight to a mel-spectrogram.
    FeedForward,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    pub n_mels: usize,
    pub vocab: ScoreVocab,
    /// Note lengths (frames) are clamped into this many embedding rows.
    pub note_length_buckets: usize,
    pub hidden: usize,
    pub encoder_layers: usize,
    pub heads: usize,
    pub ffn_dim: usize,
    pub ffn_kernel: usize,
    pub duration_kernel: usize,
    pub duration_init: f64,
    pub decoder: DecoderKind,
    pub residual_blocks: usize,
    pub residual_channels: usize,
    pub dilation_cycle: usize,
    pub time_embed_dim: usize,
    pub fft_layers: usize,
    pub zero_init_output: bool,
}

impl GeneratorConfig {
    pub fn desk(vocab: ScoreVocab, n_mels: usize) -> Self {
        Self {
            n_mels,
            vocab,
            note_length_buckets: 64,
            hidden: 64,
            encoder_layers: 2,
            heads: 2,
            ffn_dim: 128,
            ffn_kernel: 3,
            duration_kernel: 3,
            duration_init: 8.0,
            decoder: DecoderKind::Diffusion,
            residual_blocks: 6,
            residual_channels: 96,
            dilation_cycle: 3,
            time_embed_dim: 64,
            fft_layers: 2,
            zero_init_output: false,
        }
    }

    /// Table-scale sizes.
    pub fn paper(vocab: ScoreVocab) -> Self {
        Self {
            n_mels: 80,
            vocab,
            note_length_buckets: 256,
            hidden: 256,
            encoder_layers: 4,
            heads: 2,
            ffn_dim: 1024,
            ffn_kernel: 9,
            duration_kernel: 3,
            duration_init: 8.0,
            decoder: DecoderKind::Diffusion,
            residual_blocks: 20,
            residual_channels: 256,
            dilation_cycle: 10,
            time_embed_dim: 512,
            fft_layers: 4,
            zero_init_output: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("generator: {m}")));
        if self.n_mels == 0 || self.hidden == 0 || self.residual_channels == 0 {
            return bad("zero-sized layer");
        }
        if self.heads == 0 || self.hidden % self.heads != 0 {
            return bad("hidden size must be divisible by the head count");
        }
        if self.ffn_kernel % 2 == 0 || self.duration_kernel % 2 == 0 {
            return bad("convolution kernels must be odd");
        }
        if self.time_embed_dim < 2 || self.time_embed_dim % 2 != 0 {
            return bad("time embedding size must be even");
        }
        if self.note_length_buckets == 0 || self.dilation_cycle == 0 {
            return bad("note_length_buckets and dilation_cycle must be positive");
        }
        Ok(())
    }
}

/// Frame-level score conditioning plus the predicted durations.
#[derive(Debug, Clone)]
pub struct EncodedScore<S: Scalar> {
    /// `[B, C, L_f]`, zero on padded frames.
    pub ms: Tensor<S>,
    /// `[B, L_p]` predicted frames per phone, zero on padded phones.
    pub durations_pred: Tensor<S>,
    pub phone_lengths: Vec<usize>,
    pub frame_lengths: Vec<usize>,
    /// Durations actually used for expansion.
    pub durations: Vec<Vec<usize>>,
}

impl<S: Scalar> EncodedScore<S> {
    /// Frames `[start_b, start_b + len)` of each item.
    pub fn crop(&self, starts: &[usize], len: usize) -> Result<Tensor<S>> {
        crop_frames(&self.ms, starts, len)
    }
}

/// Per-item crop along the last axis of a `[B, C, L]` tensor.
pub fn crop_frames<S: Scalar>(x: &Tensor<S>, starts: &[usize], len: usize) -> Result<Tensor<S>> {
    let s = x.shape();
    if s.len() != 3 || starts.len() != s[0] || starts.iter().any(|&a| a + len > s[2]) {
        return Err(Error::InvalidShape {
            op: "crop",
            msg: format!("crop {starts:?}+{len} of {s:?}"),
        });
    }
    let (b, c, l) = (s[0], s[1], s[2]);
    let mut idx = Vec::with_capacity(b * c * len);
    for (bi, &st) in starts.iter().enumerate() {
        for ci in 0..c {
            let base = (bi * c + ci) * l + st;
            idx.extend((0..len).map(|j| (base + j) as u32));
        }
    }
    x.gather(Arc::new(IndexMap::new(idx, x.numel())?), &[b, c, len])
}

/// Token index (into a flattened `[B·L_p]` axis) feeding each output frame,
/// `NONE` on padding. Returns the map and the padded frame count.
pub fn length_regulator_map(durations: &[Vec<usize>], lp: usize) -> Result<(Vec<u32>, usize)> {
    let totals: Vec<usize> = durations.iter().map(|d| d.iter().sum()).collect();
    if let Some(i) = totals.iter().position(|&t| t == 0) {
        return Err(Error::InvalidParameter(format!("item {i} has zero total duration")));
    }
    let lf = *totals.iter().max().unwrap_or(&0);
    let mut idx = Vec::with_capacity(durations.len() * lf);
    for (bi, d) in durations.iter().enumerate() {
        for (j, &n) in d.iter().enumerate() {
            idx.extend(std::iter::repeat((bi * lp + j) as u32).take(n));
        }
        idx.extend(std::iter::repeat(crate::autodiff::index::NONE).take(lf - totals[bi]));
    }
    Ok((idx, lf))
}

/// Repeats token rows `[B, L_p, C]` by their durations into `[B, L_f, C]`.
pub fn length_regulate<S: Scalar>(tokens: &Tensor<S>, durations: &[Vec<usize>]) -> Result<Tensor<S>> {
    let (b, lp, c) = (tokens.shape()[0], tokens.shape()[1], tokens.shape()[2]);
    if durations.len() != b || durations.iter().any(|d| d.len() > lp) {
        return Err(Error::InvalidShape {
            op: "length_regulate",
            msg: format!("{} duration vectors for tokens {:?}", durations.len(), tokens.shape()),
        });
    }
    let (idx, lf) = length_regulator_map(durations, lp)?;
    tokens
        .reshape(&[b * lp, c])?
        .index_select(0, &idx)?
        .reshape(&[b, lf, c])
}

/// Rounds predicted frame counts to positive integers.
pub fn round_durations(pred: &[f64]) -> Vec<usize> {
    pred.iter().map(|&d| d.round().max(1.0) as usize).collect()
}

#[derive(Debug, Clone)]
pub struct Generator<S: Scalar> {
    pub config: GeneratorConfig,
    pub params: ParamStore<S>,
}

impl<S: Scalar> Generator<S> {
    pub fn new(config: GeneratorConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut init = Init { store: &mut store, rng: &mut rng };
        let c = &config;
        let h = c.hidden;
        init.embedding("enc.phone", c.vocab.phones, h)?;
        init.embedding("enc.note_len", c.note_length_buckets, h)?;
        init.embedding("enc.pitch", c.vocab.pitches, h)?;
        init.embedding("enc.singer", c.vocab.singers, h)?;
        for i in 0..c.encoder_layers {
            init_transformer_block(&mut init, &format!("enc.block{i}"), h, c.ffn_dim, c.ffn_kernel)?;
        }
        for i in 0..3 {
            init.conv1d(&format!("dur.conv{i}"), h, h, c.duration_kernel)?;
            init.norm(&format!("dur.ln{i}"), h)?;
        }
        init.linear("dur.out", h, 1, false)?;
        init.constant("dur.out.b", &[1], c.duration_init)?;

        match c.decoder {
            DecoderKind::Diffusion => {
                let r = c.residual_channels;
                init.linear("dec.t1", c.time_embed_dim, 4 * r, true)?;
                init.linear("dec.t2", 4 * r, r, true)?;
                init.conv1d("dec.in", c.n_mels, r, 1)?;
                for i in 0..c.residual_blocks {
                    let n = format!("dec.block{i}");
                    init.linear(&format!("{n}.t"), r, r, true)?;
                    init.conv1d(&format!("{n}.dil"), r, 2 * r, 3)?;
                    init.conv1d(&format!("{n}.cond"), h, 2 * r, 1)?;
                    init.conv1d(&format!("{n}.out"), r, 2 * r, 1)?;
                }
                init.conv1d("dec.skip", r, r, 1)?;
                init.conv1d("dec.proj", r, c.n_mels, 1)?;
                if c.zero_init_output {
                    init.constant("dec.proj.w", &[c.n_mels, r, 1], 0.0)?;
                    init.constant("dec.proj.b", &[c.n_mels], 0.0)?;
                }
            }
            DecoderKind::FeedForward => {
                for i in 0..c.fft_layers {
                    init_transformer_block(&mut init, &format!("fft.block{i}"), h, c.ffn_dim, c.ffn_kernel)?;
                }
                init.linear("fft.proj", h, c.n_mels, true)?;
                if c.zero_init_output {
                    init.constant("fft.proj.w", &[h, c.n_mels], 0.0)?;
                    init.constant("fft.proj.b", &[c.n_mels], 0.0)?;
                }
            }
        }
        Ok(Self { config, params: store })
    }

    pub fn from_params(config: GeneratorConfig, params: ParamStore<S>) -> Result<Self> {
        let reference = Self::new(config.clone(), 0)?;
        check_layout(&reference.params, &params, "generator")?;
        Ok(Self { config, params })
    }

    /// Encoder, duration predictor and length regulator. Ground-truth
    /// `durations` drive the expansion when given, rounded predictions
    /// otherwise. The singer embedding is added to the frame-level output.
    pub fn encode_score(&self, scores: &[MusicalScore], durations: Option<&[Vec<usize>]>) -> Result<EncodedScore<S>> {
        let p = &self.params;
        let c = &self.config;
        if scores.is_empty() {
            return Err(Error::InvalidParameter("no scores to encode".into()));
        }
        for s in scores {
            s.validate(&c.vocab)?;
        }
        if let Some(d) = durations {
            if d.len() != scores.len() || d.iter().zip(scores).any(|(d, s)| d.len() != s.len()) {
                return Err(Error::InvalidParameter("durations do not match the scores".into()));
            }
        }
        let b = scores.len();
        let lens: Vec<usize> = scores.iter().map(|s| s.len()).collect();
        let lp = *lens.iter().max().unwrap();
        let pad = |f: &dyn Fn(&MusicalScore) -> Vec<usize>| -> Vec<usize> {
            scores
                .iter()
                .flat_map(|s| {
                    let mut v = f(s);
                    v.resize(lp, 0);
                    v
                })
                .collect()
        };
        let buckets = c.note_length_buckets - 1;
        let phones = pad(&|s| s.phones.clone());
        let note_len = pad(&|s| s.note_lengths.iter().map(|&n| n.min(buckets)).collect());
        let pitches = pad(&|s| s.pitches.clone());
        let h = c.hidden;

        let (bias, keep) = sequence_masks::<S>(&lens, lp)?;
        let pos = sinusoidal_tensor::<S>(&(0..lp).map(|i| i as f64).collect::<Vec<_>>(), h)?;
        let mut x = p
            .get("enc.phone")?
            .embed(&phones)?
            .add(&p.get("enc.note_len")?.embed(&note_len)?)?
            .reshape(&[b, lp, h])?
            .add(&pos)?
            .mul(&keep)?;
        for i in 0..c.encoder_layers {
            x = transformer_block(p, &format!("enc.block{i}"), c.heads, &x, &bias, &keep)?;
        }

        // Duration predictor on a detached copy of the encoder output.
        let mut d = swap(&x.detach())?;
        for i in 0..3 {
            d = conv1d(p, &format!("dur.conv{i}"), &d, 1)?.relu()?;
            d = swap(&layer_norm(p, &format!("dur.ln{i}"), &swap(&d)?)?)?;
        }
        let dpred = linear(p, "dur.out", &swap(&d)?)?.reshape(&[b, lp])?;
        let dpred = dpred.mul(&keep.reshape(&[b, lp])?)?;

        let used: Vec<Vec<usize>> = match durations {
            Some(d) => d.to_vec(),
            None => lens
                .iter()
                .enumerate()
                .map(|(i, &n)| round_durations(&dpred.data()[i * lp..i * lp + n].iter().map(|v| v.as_f64()).collect::<Vec<_>>()))
                .collect(),
        };

        let tokens = x.add(&p.get("enc.pitch")?.embed(&pitches)?.reshape(&[b, lp, h])?)?;
        let frames = length_regulate(&tokens, &used)?;
        let lf = frames.shape()[1];
        let frame_lengths: Vec<usize> = used.iter().map(|d| d.iter().sum()).collect();
        let (_, fkeep) = sequence_masks::<S>(&frame_lengths, lf)?;
        let singers: Vec<usize> = scores.iter().map(|s| s.singer).collect();
        let spk = p.get("enc.singer")?.embed(&singers)?.reshape(&[b, 1, h])?;
        let ms = swap(&frames.add(&spk.mul(&fkeep)?)?)?;
        Ok(EncodedScore {
            ms,
            durations_pred: dpred,
            phone_lengths: lens,
            frame_lengths,
            durations: used,
        })
    }

    /// Clean-mel estimate. `x_t` and `ts` are required for the diffusion
    /// decoder and ignored by the feed-forward one.
    pub fn decode(&self, x_t: Option<&Tensor<S>>, ts: &[usize], ms: &Tensor<S>) -> Result<Tensor<S>> {
        match self.config.decoder {
            DecoderKind::Diffusion => {
                let x = x_t.ok_or_else(|| Error::InvalidParameter("diffusion decoder needs x_t".into()))?;
                self.diffusion_decoder(x, ts, ms)
            }
            DecoderKind::FeedForward => self.fft_decoder(ms),
        }
    }

    /// Non-causal conditional WaveNet. `x_t`: `[B, M, L]`, `ms`: `[B, C, L]`,
    /// one step per item (or one shared step).
    pub fn diffusion_decoder(&self, x_t: &Tensor<S>, ts: &[usize], ms: &Tensor<S>) -> Result<Tensor<S>> {
        let p = &self.params;
        let c = &self.config;
        if c.decoder != DecoderKind::Diffusion {
            return Err(Error::Config("generator has no diffusion decoder".into()));
        }
        let (xs, ss) = (x_t.shape(), ms.shape());
        if xs.len() != 3 || ss.len() != 3 || xs[0] != ss[0] || xs[2] != ss[2] || xs[1] != c.n_mels || ss[1] != c.hidden {
            return Err(Error::ShapeMismatch {
                op: "diffusion_decoder",
                lhs: xs.to_vec(),
                rhs: ss.to_vec(),
            });
        }
        let b = xs[0];
        let ts: Vec<f64> = match ts.len() {
            1 => vec![ts[0] as f64; b],
            n if n == b => ts.iter().map(|&t| t as f64).collect(),
            n => {
                return Err(Error::InvalidParameter(format!("{n} time steps for batch of {b}")));
            }
        };
        let r = c.residual_channels;
        let temb = sinusoidal_tensor::<S>(&ts, c.time_embed_dim)?;
        let temb = linear(p, "dec.t2", &linear(p, "dec.t1", &temb)?.silu()?)?;

        let mut h = conv1d(p, "dec.in", x_t, 1)?.relu()?;
        let mut skip: Option<Tensor<S>> = None;
        let norm = S::lit(std::f64::consts::FRAC_1_SQRT_2);
        for i in 0..c.residual_blocks {
            let n = format!("dec.block{i}");
            let tproj = linear(p, &format!("{n}.t"), &temb)?.reshape(&[b, r, 1])?;
            let y = h.add(&tproj)?;
            let dil = 1 << (i % c.dilation_cycle);
            let y = conv1d(p, &format!("{n}.dil"), &y, dil)?.add(&conv1d(p, &format!("{n}.cond"), ms, 1)?)?;
            let gate = y.slice(1, 0, r)?.tanh()?.mul(&y.slice(1, r, r)?.sigmoid()?)?;
            let out = conv1d(p, &format!("{n}.out"), &gate, 1)?;
            h = h.add(&out.slice(1, 0, r)?)?.scale(norm)?;
            let s = out.slice(1, r, r)?;
            skip = Some(match skip {
                Some(acc) => acc.add(&s)?,
                None => s,
            });
        }
        let mut y = match skip {
            Some(s) => s.scale(S::lit(1.0 / (c.residual_blocks as f64).sqrt()))?,
            None => h,
        };
        y = conv1d(p, "dec.skip", &y, 1)?.relu()?;
        conv1d(p, "dec.proj", &y, 1)
    }

    /// Transformer stack over frames, then a linear map to `M` bins.
    pub fn fft_decoder(&self, ms: &Tensor<S>) -> Result<Tensor<S>> {
        let p = &self.params;
        let c = &self.config;
        if c.decoder != DecoderKind::FeedForward {
            return Err(Error::Config("generator has no feed-forward decoder".into()));
        }
        let (b, ch, l) = (ms.shape()[0], ms.shape()[1], ms.shape()[2]);
        if ch != c.hidden {
            return Err(Error::InvalidShape {
                op: "fft_decoder",
                msg: format!("ms has {ch} channels, expected {}", c.hidden),
            });
        }
        let (bias, keep) = sequence_masks::<S>(&vec![l; b], l)?;
        let pos = sinusoidal_tensor::<S>(&(0..l).map(|i| i as f64).collect::<Vec<_>>(), ch)?;
        let mut x = swap(ms)?.add(&pos)?;
        for i in 0..c.fft_layers {
            x = transformer_block(p, &format!("fft.block{i}"), c.heads, &x, &bias, &keep)?;
        }
        swap(&linear(p, "fft.proj", &x)?)
    }
}

/// Names and shapes of `got` must equal those of `want`.
pub(crate) fn check_layout<S: Scalar>(want: &ParamStore<S>, got: &ParamStore<S>, what: &str) -> Result<()> {
    if want.len() != got.len() {
        return Err(Error::Format(format!(
            "{what}: checkpoint has {} tensors, config expects {}",
            got.len(),
            want.len()
        )));
    }
    for (name, t) in want.iter() {
        let g = got
            .get(name)
            .map_err(|_| Error::Format(format!("{what}: checkpoint lacks `{name}`")))?;
        if g.shape() != t.shape() {
            return Err(Error::Format(format!(
                "{what}: `{name}` has shape {:?}, config expects {:?}",
                g.shape(),
                t.shape()
            )));
        }
    }
    Ok(())
}
