//! Optimization loop for the four experimental configurations, the
//! optimizer, the vocoder fine-tune mixing law, and checkpoint-driven
//! synthesis.

mod adamw;
mod config;
mod synth;

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use adamw::{adamw_step, AdamW, AdamWParams, Moments};
pub use config::{ModelSize, Preset, TrainConfig, CONFIG_KEYS};
pub use synth::Synthesizer;

use crate::autodiff::{backward, Tensor};
use crate::corpus::{load_batch, Dataset, Split, Utterance, PITCH_VOCAB};
use crate::diffusion::{standard_normal, DiffusionSchedule};
use crate::error::{Error, Result};
use crate::kv::KvDoc;
use crate::networks::{
    config_hash, crop_frames, hex, Checkpoint, DecoderKind, Discriminator, DiscriminatorConfig, Generator,
    GeneratorConfig, MusicalScore, ScoreVocab,
};
use crate::objectives::{
    check_finite, duration_loss_batch, generator_adv_loss, generator_objective, gradient_penalty, interpolate_pair,
    recon_loss_masked, total_losses, wasserstein_loss, LossBreakdown, LossParts,
};
use crate::scalar::Scalar;
use crate::signal::{MelConfig, LOG_FLOOR};

/// Probability that the vocoder fine-tune set uses the generated `x̂₀`
/// in place of the real mel at step `t`: `(1 − (t − 1)/T)²`.
pub fn replace_probability(t: usize, steps: usize) -> Result<f64> {
    if t == 0 || t > steps {
        return Err(Error::TimeStepOutOfRange { t, steps });
    }
    Ok((1.0 - (t - 1) as f64 / steps as f64).powi(2))
}

pub fn finetune_mix_sampler<R: Rng + ?Sized>(t: usize, steps: usize, rng: &mut R) -> Result<bool> {
    let p = replace_probability(t, steps)?;
    Ok(rng.gen::<f64>() < p)
}

/// One draw of the fine-tune mixing law, as consumed by a vocoder
/// fine-tuning job.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MixEvent {
    pub step: usize,
    pub t: usize,
    pub replaced: bool,
}

/// Everything needed to rebuild the networks outside the trainer.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub preset: Preset,
    pub model: ModelSize,
    pub mel: MelConfig,
    pub vocab: ScoreVocab,
    pub diffusion_steps: usize,
    pub beta_min: f64,
    pub beta_max: f64,
    pub mel_min: f64,
    pub mel_max: f64,
    pub duration_init: f64,
}

impl ModelSpec {
    pub fn generator_config(&self) -> GeneratorConfig {
        let mut g = match self.model {
            ModelSize::Desk => GeneratorConfig::desk(self.vocab, self.mel.n_mels),
            ModelSize::Paper => GeneratorConfig::paper(self.vocab),
        };
        g.n_mels = self.mel.n_mels;
        g.duration_init = self.duration_init;
        if self.preset == Preset::Fft {
            g.decoder = DecoderKind::FeedForward;
        }
        g
    }

    pub fn discriminator_config(&self) -> Option<DiscriminatorConfig> {
        if !self.preset.is_adversarial() {
            return None;
        }
        let mut d = match self.model {
            ModelSize::Desk => DiscriminatorConfig::desk(self.vocab, self.mel.n_mels),
            ModelSize::Paper => DiscriminatorConfig::paper(self.vocab),
        };
        d.n_mels = self.mel.n_mels;
        Some(d)
    }

    pub fn schedule<S: Scalar>(&self) -> Result<DiffusionSchedule<S>> {
        DiffusionSchedule::vp(self.diffusion_steps, S::lit(self.beta_min), S::lit(self.beta_max))
    }

    /// Log-mel to `[−1, 1]`.
    pub fn normalize(&self, v: f64) -> f64 {
        2.0 * (v - self.mel_min) / (self.mel_max - self.mel_min) - 1.0
    }

    pub fn denormalize(&self, v: f64) -> f64 {
        (v + 1.0) * 0.5 * (self.mel_max - self.mel_min) + self.mel_min
    }

    fn push_kv(&self, d: &mut KvDoc) {
        d.push("preset", self.preset);
        d.push("model", self.model);
        d.push("sample_rate", self.mel.sample_rate);
        d.push("n_fft", self.mel.n_fft);
        d.push("hop", self.mel.hop);
        d.push("n_mels", self.mel.n_mels);
        d.push("fmin", self.mel.fmin);
        d.push("fmax", self.mel.fmax);
        d.push("phones", self.vocab.phones);
        d.push("pitches", self.vocab.pitches);
        d.push("singers", self.vocab.singers);
        d.push("diffusion_steps", self.diffusion_steps);
        d.push("beta_min", self.beta_min);
        d.push("beta_max", self.beta_max);
        d.push("mel_min", self.mel_min);
        d.push("mel_max", self.mel_max);
        d.push("duration_init", self.duration_init);
    }

    pub fn from_kv(d: &KvDoc) -> Result<Self> {
        Ok(Self {
            preset: d.require("preset")?,
            model: d.require("model")?,
            mel: MelConfig {
                sample_rate: d.require("sample_rate")?,
                n_fft: d.require("n_fft")?,
                hop: d.require("hop")?,
                n_mels: d.require("n_mels")?,
                fmin: d.require("fmin")?,
                fmax: d.require("fmax")?,
            },
            vocab: ScoreVocab {
                phones: d.require("phones")?,
                pitches: d.require("pitches")?,
                singers: d.require("singers")?,
            },
            diffusion_steps: d.require("diffusion_steps")?,
            beta_min: d.require("beta_min")?,
            beta_max: d.require("beta_max")?,
            mel_min: d.require("mel_min")?,
            mel_max: d.require("mel_max")?,
            duration_init: d.require("duration_init")?,
        })
    }
}

/// Text stored in a checkpoint: the model spec, the hash of the training
/// config, and the training config itself under a `train.` prefix.
pub fn checkpoint_config(spec: &ModelSpec, cfg: &TrainConfig) -> String {
    let mut d = KvDoc::default();
    spec.push_kv(&mut d);
    d.push("train_config_hash", hex(&config_hash(&cfg.render())));
    for (k, v) in cfg.to_kv().entries() {
        d.push(&format!("train.{k}"), v);
    }
    format!("# svsgan checkpoint config\n{}", d.render())
}

/// A batch ready for a training step: normalized mels plus score data.
#[derive(Debug, Clone)]
pub struct TrainBatch<S: Scalar> {
    /// `[B, M, L]` in `[−1, 1]`.
    pub x0: Tensor<S>,
    /// `[B, 1, L]`.
    pub frame_mask: Tensor<S>,
    pub scores: Vec<MusicalScore>,
    pub durations: Vec<Vec<usize>>,
    /// Window start per item when training on crops.
    pub starts: Option<Vec<usize>>,
}

impl<S: Scalar> TrainBatch<S> {
    pub fn singers(&self) -> Vec<usize> {
        self.scores.iter().map(|s| s.singer).collect()
    }

    fn frames(&self) -> usize {
        self.x0.shape()[2]
    }

    /// Frame-aligned view of full-utterance conditioning `[B, C, L_full]`.
    fn align(&self, full: &Tensor<S>) -> Result<Tensor<S>> {
        match &self.starts {
            Some(st) => crop_frames(full, st, self.frames()),
            None => Ok(full.clone()),
        }
    }
}

/// Training log row.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub step: usize,
    pub ts: Vec<usize>,
    pub lr_g: f64,
    pub losses: LossBreakdown,
}

impl LogRow {
    /// The critic's Wasserstein estimate `E[D(real)] − E[D(fake)]`.
    pub fn wasserstein_estimate(&self) -> f64 {
        -self.losses.l_wd
    }
}

pub const LOG_HEADER: &str = "step,t,lr_g,l_dur,l_recon,l_adv,l_wd,l_gp,l_g_total,l_d_total";

pub fn log_csv(rows: &[LogRow]) -> String {
    let mut out = String::from(LOG_HEADER);
    out.push('\n');
    for r in rows {
        let ts: Vec<String> = r.ts.iter().map(|t| t.to_string()).collect();
        let l = &r.losses;
        let _ = writeln!(
            out,
            "{},{},{:e},{},{},{},{},{},{},{}",
            r.step,
            ts.join("|"),
            r.lr_g,
            l.l_dur,
            l.l_recon,
            l.l_adv,
            l.l_wd,
            l.l_gp,
            l.l_g_total,
            l.l_d_total
        );
    }
    out
}

pub struct Trainer<S: Scalar> {
    pub config: TrainConfig,
    pub spec: ModelSpec,
    pub generator: Generator<S>,
    pub discriminator: Option<Discriminator<S>>,
    pub opt_g: AdamW,
    pub opt_d: Option<AdamW>,
    schedule: DiffusionSchedule<S>,
    rng: ChaCha8Rng,
    mix_rng: ChaCha8Rng,
    data: Vec<Utterance>,
    order: Vec<usize>,
    cursor: usize,
    step: usize,
    pub log: Vec<LogRow>,
    pub mix_events: Vec<MixEvent>,
}

fn min_max(data: &[Utterance]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for u in data {
        for &v in u.mel.data() {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    (lo, hi)
}

impl<S: Scalar> Trainer<S> {
    /// Builds networks and optimizers for `data` (the training split).
    pub fn new(config: TrainConfig, data: Vec<Utterance>, mel: MelConfig, singers: usize, phones: usize) -> Result<Self> {
        config.validate()?;
        if data.is_empty() {
            return Err(Error::InvalidParameter("no training utterances".into()));
        }
        if config.crop_frames > 0 {
            if let Some(u) = data.iter().find(|u| u.frames() < config.crop_frames) {
                return Err(Error::InvalidParameter(format!(
                    "{} has {} frames, fewer than crop_frames = {}",
                    u.name,
                    u.frames(),
                    config.crop_frames
                )));
            }
        }
        let (lo, hi) = match (config.mel_min, config.mel_max) {
            (Some(a), Some(b)) => (a, b),
            _ => {
                let (a, b) = min_max(&data);
                (a.min(LOG_FLOOR.ln()), b.max(a + 1.0))
            }
        };
        let all: Vec<usize> = data.iter().flat_map(|u| u.durations.iter().copied()).collect();
        let duration_init = all.iter().sum::<usize>() as f64 / all.len().max(1) as f64;
        let spec = ModelSpec {
            preset: config.preset,
            model: config.model,
            mel,
            vocab: ScoreVocab { phones, pitches: PITCH_VOCAB, singers },
            diffusion_steps: config.diffusion_steps,
            beta_min: config.beta_min,
            beta_max: config.beta_max,
            mel_min: lo,
            mel_max: hi,
            duration_init,
        };
        let generator = Generator::new(spec.generator_config(), config.seed)?;
        let discriminator = match spec.discriminator_config() {
            Some(dc) => Some(Discriminator::new(dc, config.seed.wrapping_add(1))?),
            None => None,
        };
        let hp = |lr: f64| AdamWParams {
            lr,
            beta1: config.beta1,
            beta2: config.beta2,
            eps: 1e-8,
            weight_decay: config.weight_decay,
        };
        let opt_d = discriminator.as_ref().map(|_| AdamW::new(hp(config.lr_d)));
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(1);
        let mut mix_rng = ChaCha8Rng::seed_from_u64(config.seed);
        mix_rng.set_stream(2);
        let schedule = spec.schedule()?;
        Ok(Self {
            opt_g: AdamW::new(hp(config.lr_g)),
            opt_d,
            schedule,
            rng,
            mix_rng,
            order: (0..data.len()).collect(),
            cursor: data.len(),
            data,
            step: 0,
            log: Vec::new(),
            mix_events: Vec::new(),
            config,
            spec,
            generator,
            discriminator,
        })
    }

    /// Opens the configured corpus and trains on its training split.
    pub fn from_corpus(config: TrainConfig) -> Result<Self> {
        let ds = Dataset::open(&config.corpus)?;
        let data = ds.load_split(Split::Train)?;
        let spec = ds.spec().clone();
        Self::new(config, data, spec.mel, spec.singers, spec.phone_vocab())
    }

    pub fn step_count(&self) -> usize {
        self.step
    }

    pub fn schedule(&self) -> &DiffusionSchedule<S> {
        &self.schedule
    }

    pub fn steps_per_epoch(&self) -> usize {
        self.data.len().div_ceil(self.config.batch_size)
    }

    /// Learning-rate multiplier after the completed epochs.
    pub fn lr_scale(&self) -> f64 {
        let epochs = self.step / self.steps_per_epoch();
        self.config.lr_decay.powi(epochs as i32)
    }

    /// Prepares a batch from utterance indices, cropping windows when
    /// `crop_frames > 0`.
    pub fn make_batch(&mut self, indices: &[usize]) -> Result<TrainBatch<S>> {
        let b = load_batch::<f64>(&self.data, indices, self.spec.mel_min)?;
        let (x0, mask, starts) = if self.config.crop_frames > 0 {
            let len = self.config.crop_frames;
            let starts: Vec<usize> = b
                .lengths
                .iter()
                .map(|&n| self.rng.gen_range(0..=n - len))
                .collect();
            (crop_frames(&b.mel, &starts, len)?, Tensor::ones(&[indices.len(), 1, len]), Some(starts))
        } else {
            (b.mel.clone(), b.frame_mask.clone(), None)
        };
        let norm: Vec<S> = x0.data().iter().map(|&v| S::lit(self.spec.normalize(v))).collect();
        Ok(TrainBatch {
            x0: Tensor::new(norm, x0.shape())?,
            frame_mask: Tensor::new(mask.data().iter().map(|&v| S::lit(v)).collect(), mask.shape())?,
            scores: b.scores,
            durations: b.durations,
            starts,
        })
    }

    /// Next batch of a shuffled pass over the training split.
    pub fn next_batch(&mut self) -> Result<TrainBatch<S>> {
        let bsz = self.config.batch_size;
        let mut idx = Vec::with_capacity(bsz);
        while idx.len() < bsz {
            if self.cursor >= self.order.len() {
                self.order.shuffle(&mut self.rng);
                self.cursor = 0;
            }
            idx.push(self.order[self.cursor]);
            self.cursor += 1;
        }
        self.make_batch(&idx)
    }

    fn draw_steps(&mut self, b: usize) -> Vec<usize> {
        let t_max = self.schedule.steps();
        (0..b).map(|_| self.rng.gen_range(1..=t_max)).collect()
    }

    fn noise(&mut self, shape: &[usize]) -> Result<Tensor<S>> {
        standard_normal(shape, &mut self.rng)
    }

    fn lr(&self, base: f64) -> f64 {
        base * self.lr_scale()
    }

    /// Replaces padded frames of `x` by those of `reference`.
    fn fill_padding(x: &Tensor<S>, reference: &Tensor<S>, mask: &Tensor<S>) -> Result<Tensor<S>> {
        x.mul(mask)?.add(&reference.mul(&mask.neg()?.shift(S::one())?)?)
    }

    /// Generator-only step on duration plus reconstruction loss.
    pub fn train_step_recon(&mut self, batch: &TrainBatch<S>) -> Result<LossBreakdown> {
        if self.config.preset.is_adversarial() {
            return Err(Error::Config(format!("preset {} needs train_step_gan", self.config.preset)));
        }
        let b = batch.x0.shape()[0];
        let enc = self.generator.encode_score(&batch.scores, Some(&batch.durations))?;
        let ms = batch.align(&enc.ms)?;
        let (x0_hat, ts) = if self.config.preset.is_diffusion() {
            let ts = self.draw_steps(b);
            let eps = self.noise(batch.x0.shape())?;
            let x_t = self.schedule.forward_noise(&batch.x0, &ts, &eps)?;
            (self.generator.decode(Some(&x_t), &ts, &ms)?, ts)
        } else {
            (self.generator.decode(None, &[1], &ms)?, Vec::new())
        };
        let l_recon = recon_loss_masked(&batch.x0, &x0_hat, &batch.frame_mask)?;
        let l_dur = duration_loss_batch(&batch.durations, &enc.durations_pred)?;
        let w = self.config.weights;
        let total = generator_objective(&l_dur, Some(&l_recon), None, w)?;
        let parts = LossParts {
            l_dur: l_dur.item()?.as_f64(),
            l_recon: l_recon.item()?.as_f64(),
            ..LossParts::default()
        };
        let out = total_losses(parts, w);
        check_finite(&out)?;
        let grads = backward(&total)?;
        let lr = self.lr(self.config.lr_g);
        self.opt_g.step(&mut self.generator.params, &grads, lr)?;
        self.finish_step(ts, lr, out);
        Ok(out)
    }

    /// `d_updates_per_g` critic updates followed by one generator update.
    pub fn train_step_gan(&mut self, batch: &TrainBatch<S>) -> Result<LossBreakdown> {
        if !self.config.preset.is_adversarial() {
            return Err(Error::Config(format!("preset {} has no critic", self.config.preset)));
        }
        let b = batch.x0.shape()[0];
        let shape = batch.x0.shape().to_vec();
        let singers = batch.singers();
        let w = self.config.weights;
        let mask = &batch.frame_mask;

        // The critic never trains the generator: use a frozen copy.
        let frozen_g = Generator {
            config: self.generator.config.clone(),
            params: self.generator.params.frozen(),
        };
        let enc_frozen = frozen_g.encode_score(&batch.scores, Some(&batch.durations))?;
        let ms_frozen = batch.align(&enc_frozen.ms)?;
        let (mut l_wd, mut l_gp) = (0.0, 0.0);
        for _ in 0..self.config.d_updates_per_g {
            let ts = self.draw_steps(b);
            let eps = self.noise(&shape)?;
            let z_real = self.noise(&shape)?;
            let z_fake = self.noise(&shape)?;
            let alpha: Vec<S> = (0..b).map(|_| S::lit(self.rng.gen::<f64>())).collect();
            let x_t = self.schedule.forward_noise(&batch.x0, &ts, &eps)?;
            let real = self.schedule.denoise_step(&x_t, &ts, &batch.x0, &z_real)?;
            let x0_hat = frozen_g.decode(Some(&x_t), &ts, &ms_frozen)?;
            let x0_hat = Self::fill_padding(&x0_hat, &batch.x0, mask)?;
            let fake = self.schedule.denoise_step(&x_t, &ts, &x0_hat, &z_fake)?;
            let disc = self.discriminator.as_ref().expect("adversarial preset has a critic");
            let ms_d = batch.align(&disc.encode_score(&batch.scores, &batch.durations)?)?;
            let d_real = disc.forward(&real, &x_t, &ts, &ms_d, &singers)?;
            let d_fake = disc.forward(&fake, &x_t, &ts, &ms_d, &singers)?;
            let wd = wasserstein_loss(&d_real, &d_fake)?;
            let x_tilde = interpolate_pair(&real, &fake, &alpha)?;
            let gp = gradient_penalty(|x| disc.forward(x, &x_t, &ts, &ms_d, &singers), &x_tilde)?;
            let l_d = wd.add(&gp.scale(S::lit(w.gp))?)?;
            l_wd = wd.item()?.as_f64();
            l_gp = gp.item()?.as_f64();
            if !l_d.item()?.as_f64().is_finite() {
                return Err(Error::NonFiniteLoss(if l_wd.is_finite() { "l_gp" } else { "l_wd" }));
            }
            let grads = backward(&l_d)?;
            let lr = self.lr(self.config.lr_d);
            let disc = self.discriminator.as_mut().unwrap();
            self.opt_d.as_mut().unwrap().step(&mut disc.params, &grads, lr)?;
        }

        // Generator update against the current critic, parameters frozen.
        let critic = self.discriminator.as_ref().unwrap().frozen();
        let ms_d = batch.align(&critic.encode_score(&batch.scores, &batch.durations)?)?;
        let ts = self.draw_steps(b);
        let eps = self.noise(&shape)?;
        let x_t = self.schedule.forward_noise(&batch.x0, &ts, &eps)?;
        let z = self.noise(&shape)?;
        let enc = self.generator.encode_score(&batch.scores, Some(&batch.durations))?;
        let ms = batch.align(&enc.ms)?;
        let x0_hat = self.generator.decode(Some(&x_t), &ts, &ms)?;
        let fake = self
            .schedule
            .denoise_step(&x_t, &ts, &Self::fill_padding(&x0_hat, &batch.x0, mask)?, &z)?;
        let l_adv = generator_adv_loss(&critic.forward(&fake, &x_t, &ts, &ms_d, &singers)?, self.config.adv_sign)?;
        let l_recon = recon_loss_masked(&batch.x0, &x0_hat, mask)?;
        let l_dur = duration_loss_batch(&batch.durations, &enc.durations_pred)?;
        let total = generator_objective(&l_dur, Some(&l_recon), Some(&l_adv), w)?;
        let parts = LossParts {
            l_dur: l_dur.item()?.as_f64(),
            l_recon: l_recon.item()?.as_f64(),
            l_adv: l_adv.item()?.as_f64(),
            l_wd,
            l_gp,
        };
        let out = total_losses(parts, w);
        check_finite(&out)?;
        let grads = backward(&total)?;
        let lr = self.lr(self.config.lr_g);
        self.opt_g.step(&mut self.generator.params, &grads, lr)?;
        for &t in &ts {
            let replaced = finetune_mix_sampler(t, self.schedule.steps(), &mut self.mix_rng)?;
            self.mix_events.push(MixEvent { step: self.step, t, replaced });
        }
        self.finish_step(ts, lr, out);
        Ok(out)
    }

    fn finish_step(&mut self, ts: Vec<usize>, lr: f64, losses: LossBreakdown) {
        self.log.push(LogRow {
            step: self.step,
            ts,
            lr_g: lr,
            losses,
        });
        self.step += 1;
    }

    /// Masked L1 of the clean estimate averaged over every diffusion step
    /// with noise drawn from `seed`. Parameters are untouched.
    pub fn eval_recon(&self, batch: &TrainBatch<S>, seed: u64) -> Result<f64> {
        let g = Generator {
            config: self.generator.config.clone(),
            params: self.generator.params.frozen(),
        };
        let enc = g.encode_score(&batch.scores, Some(&batch.durations))?;
        let ms = batch.align(&enc.ms)?;
        if !self.config.preset.is_diffusion() {
            let x0_hat = g.decode(None, &[1], &ms)?;
            return Ok(recon_loss_masked(&batch.x0, &x0_hat, &batch.frame_mask)?.item()?.as_f64());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut total = 0.0;
        for t in 1..=self.schedule.steps() {
            let eps = standard_normal(batch.x0.shape(), &mut rng)?;
            let x_t = self.schedule.forward_noise(&batch.x0, &[t], &eps)?;
            let x0_hat = g.decode(Some(&x_t), &[t], &ms)?;
            total += recon_loss_masked(&batch.x0, &x0_hat, &batch.frame_mask)?.item()?.as_f64();
        }
        Ok(total / self.schedule.steps() as f64)
    }

    /// One step of whichever update the preset calls for.
    pub fn train_step(&mut self, batch: &TrainBatch<S>) -> Result<LossBreakdown> {
        if self.config.preset.is_adversarial() {
            self.train_step_gan(batch)
        } else {
            self.train_step_recon(batch)
        }
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new(checkpoint_config(&self.spec, &self.config));
        ck.add_params("generator", &self.generator.params);
        if let Some(d) = &self.discriminator {
            ck.add_params("discriminator", &d.params);
        }
        ck
    }

    /// Runs the configured number of steps, writing checkpoints, the loss
    /// log and the fine-tune mixing log under `out_dir`.
    pub fn run(&mut self, mut progress: impl FnMut(usize, &LossBreakdown)) -> Result<()> {
        let out = self.config.out_dir.clone();
        fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
        while self.step < self.config.steps {
            let batch = self.next_batch()?;
            let losses = self.train_step(&batch)?;
            progress(self.step, &losses);
            let every = self.config.checkpoint_every;
            if every > 0 && self.step % every == 0 && self.step < self.config.steps {
                self.checkpoint().write(&out.join(format!("step_{:06}.ckpt", self.step)))?;
            }
        }
        self.checkpoint().write(&out.join("final.ckpt"))?;
        self.write_logs(&out)
    }

    pub fn write_logs(&self, out: &Path) -> Result<()> {
        let p = out.join("train_log.csv");
        fs::write(&p, log_csv(&self.log)).map_err(|e| Error::io(&p, e))?;
        if !self.mix_events.is_empty() {
            let mut s = String::from("step,t,replaced\n");
            for e in &self.mix_events {
                let _ = writeln!(s, "{},{},{}", e.step, e.t, e.replaced as u8);
            }
            let p = out.join("finetune_mix.csv");
            fs::write(&p, s).map_err(|e| Error::io(&p, e))?;
        }
        Ok(())
    }
}
