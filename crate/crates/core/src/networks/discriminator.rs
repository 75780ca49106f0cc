use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::generator::{check_layout, length_regulate};
use super::layers::{conv1d, conv2d, linear, sinusoidal_tensor, swap};
use super::params::Init;
use super::{MusicalScore, ParamStore, ScoreVocab};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminatorConfig {
    pub n_mels: usize,
    pub vocab: ScoreVocab,
    pub note_length_buckets: usize,
    /// Channels of the critic's own score encoding (`C_s`).
    pub score_channels: usize,
    /// Singer identity vector size (`C_v`).
    pub singer_channels: usize,
    /// Width of the first ResBlock; doubled at each following block.
    pub base_channels: usize,
    pub blocks: usize,
    pub time_embed_dim: usize,
    pub zero_init_head: bool,
}

impl DiscriminatorConfig {
    pub fn desk(vocab: ScoreVocab, n_mels: usize) -> Self {
        Self {
            n_mels,
            vocab,
            note_length_buckets: 64,
            score_channels: 32,
            singer_channels: 16,
            base_channels: 16,
            blocks: 4,
            time_embed_dim: 32,
            zero_init_head: false,
        }
    }

    pub fn paper(vocab: ScoreVocab) -> Self {
        Self {
            n_mels: 80,
            vocab,
            note_length_buckets: 256,
            score_channels: 256,
            singer_channels: 64,
            base_channels: 32,
            blocks: 4,
            time_embed_dim: 128,
            zero_init_head: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.blocks == 0 || self.base_channels == 0 || self.score_channels == 0 || self.singer_channels == 0 {
            return Err(Error::Config("discriminator: zero-sized layer".into()));
        }
        if self.time_embed_dim < 2 || self.time_embed_dim % 2 != 0 {
            return Err(Error::Config("discriminator: time embedding size must be even".into()));
        }
        Ok(())
    }

    pub fn channels(&self, block: usize) -> usize {
        self.base_channels << block
    }

    /// Blocks alternate unconditional / conditional, starting unconditional.
    pub fn is_conditional(&self, block: usize) -> bool {
        block % 2 == 1
    }

    /// Spatial size after every block (stride 2, padding 1, kernel 3).
    pub fn output_size(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let need = 1usize << self.blocks;
        if h < need || w < need {
            return Err(Error::InvalidShape {
                op: "msc_discriminator",
                msg: format!("{h}×{w} input too small for {} downsampling blocks (need {need}×{need})", self.blocks),
            });
        }
        let (mut h, mut w) = (h, w);
        for _ in 0..self.blocks {
            h = h.div_ceil(2);
            w = w.div_ceil(2);
        }
        Ok((h, w))
    }
}

/// `s = Dense_ms(ms) + Dense_id(v)`: `ms` is `[B, C_s, W]`, `v` is
/// `[B, C_v]`, weights `[C_s, 2C]` and `[C_v, 2C]`. Output `[B, 2C, W]`.
pub fn lbmod_project<S: Scalar>(
    ms: &Tensor<S>,
    v: &Tensor<S>,
    w_ms: &Tensor<S>,
    b_ms: Option<&Tensor<S>>,
    w_id: &Tensor<S>,
    b_id: Option<&Tensor<S>>,
) -> Result<Tensor<S>> {
    if ms.rank() != 3 || v.rank() != 2 || ms.shape()[0] != v.shape()[0] || w_ms.shape()[1] != w_id.shape()[1] {
        return Err(Error::ShapeMismatch {
            op: "lbmod_project",
            lhs: ms.shape().to_vec(),
            rhs: v.shape().to_vec(),
        });
    }
    let mut a = swap(ms)?.matmul(w_ms)?;
    if let Some(b) = b_ms {
        a = a.add(b)?;
    }
    let mut c = v.matmul(w_id)?;
    if let Some(b) = b_id {
        c = c.add(b)?;
    }
    let (bsz, two_c) = (v.shape()[0], w_id.shape()[1]);
    swap(&a.add(&c.reshape(&[bsz, 1, two_c])?)?)
}

/// `s'_{1:C} ⊙ y + s'_{C+1:2C}` with `s` `[B, 2C, W]` repeated along the
/// `H` axis of `y` `[B, C, H, W]`.
pub fn lbmod_apply<S: Scalar>(y: &Tensor<S>, s: &Tensor<S>) -> Result<Tensor<S>> {
    let (ys, ss) = (y.shape(), s.shape());
    if ys.len() != 4 || ss.len() != 3 || ys[0] != ss[0] || ss[1] != 2 * ys[1] || ys[3] != ss[2] {
        return Err(Error::ShapeMismatch {
            op: "lbmod_apply",
            lhs: ys.to_vec(),
            rhs: ss.to_vec(),
        });
    }
    let (b, c, w) = (ys[0], ys[1], ys[3]);
    let scale = s.slice(1, 0, c)?.reshape(&[b, c, 1, w])?;
    let bias = s.slice(1, c, c)?.reshape(&[b, c, 1, w])?;
    y.mul(&scale)?.add(&bias)
}

/// `[L, W]` linear interpolation weights resampling `L` frames to `W`
/// (half-pixel centers, clamped at the ends).
pub fn interpolation_matrix(l: usize, w: usize) -> Vec<f64> {
    let mut m = vec![0.0; l * w];
    for j in 0..w {
        let src = ((j as f64 + 0.5) * l as f64 / w as f64 - 0.5).clamp(0.0, (l - 1) as f64);
        let lo = src.floor() as usize;
        let hi = (lo + 1).min(l - 1);
        let frac = src - lo as f64;
        m[lo * w + j] += 1.0 - frac;
        m[hi * w + j] += frac;
    }
    m
}

/// Musical-score-conditioned critic.
#[derive(Debug, Clone)]
pub struct Discriminator<S: Scalar> {
    pub config: DiscriminatorConfig,
    pub params: ParamStore<S>,
}

impl<S: Scalar> Discriminator<S> {
    pub fn new(config: DiscriminatorConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut init = Init { store: &mut store, rng: &mut rng };
        let c = &config;
        let cs = c.score_channels;
        init.embedding("score.phone", c.vocab.phones, cs)?;
        init.embedding("score.note_len", c.note_length_buckets, cs)?;
        init.embedding("score.pitch", c.vocab.pitches, cs)?;
        init.conv1d("score.conv", cs, cs, 3)?;
        init.embedding("singer", c.vocab.singers, c.singer_channels)?;
        init.linear("time", c.time_embed_dim, c.time_embed_dim, true)?;
        let mut cin = 2;
        for i in 0..c.blocks {
            let n = format!("block{i}");
            let co = c.channels(i);
            init.conv2d(&format!("{n}.conv1"), cin, co, 3)?;
            init.linear(&format!("{n}.t"), c.time_embed_dim, co, true)?;
            init.conv2d(&format!("{n}.conv2"), co, co, 3)?;
            init.conv2d(&format!("{n}.skip"), cin, co, 1)?;
            if c.is_conditional(i) {
                init.linear(&format!("{n}.lb_ms"), cs, 2 * co, true)?;
                init.linear(&format!("{n}.lb_id"), c.singer_channels, 2 * co, false)?;
                // Neutral start: unit scale, zero bias.
                let mut b = vec![1.0; co];
                b.extend(vec![0.0; co]);
                init.store.insert(
                    format!("{n}.lb_ms.b"),
                    Tensor::param(b.into_iter().map(S::lit).collect(), &[2 * co])?,
                );
            }
            cin = co;
        }
        init.linear("head", cin, 1, true)?;
        if c.zero_init_head {
            init.constant("head.w", &[cin, 1], 0.0)?;
            init.constant("head.b", &[1], 0.0)?;
        }
        Ok(Self { config, params: store })
    }

    pub fn from_params(config: DiscriminatorConfig, params: ParamStore<S>) -> Result<Self> {
        let reference = Self::new(config.clone(), 0)?;
        check_layout(&reference.params, &params, "discriminator")?;
        Ok(Self { config, params })
    }

    /// Copy whose parameters do not collect gradients (inputs still do).
    pub fn frozen(&self) -> Self {
        Self {
            config: self.config.clone(),
            params: self.params.frozen(),
        }
    }

    /// Frame-level score features `[B, C_s, L_f]` expanded by `durations`.
    pub fn encode_score(&self, scores: &[MusicalScore], durations: &[Vec<usize>]) -> Result<Tensor<S>> {
        let p = &self.params;
        let c = &self.config;
        if scores.is_empty() || durations.len() != scores.len() {
            return Err(Error::InvalidParameter("durations do not match the scores".into()));
        }
        for (s, d) in scores.iter().zip(durations) {
            s.validate(&c.vocab)?;
            if d.len() != s.len() {
                return Err(Error::InvalidParameter("durations do not match the scores".into()));
            }
        }
        let b = scores.len();
        let lp = scores.iter().map(|s| s.len()).max().unwrap();
        let cs = c.score_channels;
        let buckets = c.note_length_buckets - 1;
        let flat = |f: &dyn Fn(&MusicalScore) -> Vec<usize>| -> Vec<usize> {
            scores
                .iter()
                .flat_map(|s| {
                    let mut v = f(s);
                    v.resize(lp, 0);
                    v
                })
                .collect()
        };
        let tok = p
            .get("score.phone")?
            .embed(&flat(&|s| s.phones.clone()))?
            .add(&p.get("score.note_len")?.embed(&flat(&|s| s.note_lengths.iter().map(|&n| n.min(buckets)).collect()))?)?
            .add(&p.get("score.pitch")?.embed(&flat(&|s| s.pitches.clone()))?)?
            .reshape(&[b, lp, cs])?;
        let frames = swap(&length_regulate(&tok, durations)?)?;
        conv1d(p, "score.conv", &frames, 1)?.silu()
    }

    /// Critic score per item. `x_prev`, `x_t`: `[B, M, L]`; `ms`:
    /// `[B, C_s, L]` from [`Self::encode_score`] (cropped like the mels);
    /// `singers`: one id per item. Returns `[B]`, unbounded.
    pub fn forward(
        &self,
        x_prev: &Tensor<S>,
        x_t: &Tensor<S>,
        ts: &[usize],
        ms: &Tensor<S>,
        singers: &[usize],
    ) -> Result<Tensor<S>> {
        let p = &self.params;
        let c = &self.config;
        let xs = x_prev.shape();
        if xs != x_t.shape() || xs.len() != 3 || xs[1] != c.n_mels {
            return Err(Error::ShapeMismatch {
                op: "msc_discriminator",
                lhs: xs.to_vec(),
                rhs: x_t.shape().to_vec(),
            });
        }
        let (b, m, l) = (xs[0], xs[1], xs[2]);
        if ms.shape() != [b, c.score_channels, l] || singers.len() != b {
            return Err(Error::ShapeMismatch {
                op: "msc_discriminator",
                lhs: vec![b, c.score_channels, l],
                rhs: ms.shape().to_vec(),
            });
        }
        c.output_size(m, l)?;
        let ts: Vec<f64> = match ts.len() {
            1 => vec![ts[0] as f64; b],
            n if n == b => ts.iter().map(|&t| t as f64).collect(),
            n => return Err(Error::InvalidParameter(format!("{n} time steps for batch of {b}"))),
        };
        let temb = linear(p, "time", &sinusoidal_tensor::<S>(&ts, c.time_embed_dim)?)?.silu()?;
        let v = p.get("singer")?.embed(singers)?;

        let mut x = Tensor::concat(&[&x_prev.reshape(&[b, 1, m, l])?, &x_t.reshape(&[b, 1, m, l])?], 1)?;
        let norm = S::lit(std::f64::consts::FRAC_1_SQRT_2);
        for i in 0..c.blocks {
            let n = format!("block{i}");
            let co = c.channels(i);
            let tproj = linear(p, &format!("{n}.t"), &temb)?.reshape(&[b, co, 1, 1])?;
            let h = conv2d(p, &format!("{n}.conv1"), &x, 2)?.silu()?.add(&tproj)?;
            let mut h = conv2d(p, &format!("{n}.conv2"), &h, 1)?;
            if c.is_conditional(i) {
                let w = h.shape()[3];
                let interp = Tensor::new(
                    interpolation_matrix(l, w).into_iter().map(S::lit).collect(),
                    &[l, w],
                )?;
                let ms_w = ms.matmul(&interp)?;
                let s = lbmod_project(
                    &ms_w,
                    &v,
                    p.get(&format!("{n}.lb_ms.w"))?,
                    Some(p.get(&format!("{n}.lb_ms.b"))?),
                    p.get(&format!("{n}.lb_id.w"))?,
                    None,
                )?;
                h = lbmod_apply(&h, &s)?;
            }
            let skip = conv2d(p, &format!("{n}.skip"), &x, 2)?;
            x = h.silu()?.add(&skip)?.scale(norm)?;
        }
        let pooled = x.mean_axes(&[2, 3], false)?;
        linear(p, "head", &pooled)?.reshape(&[b])
    }
}
