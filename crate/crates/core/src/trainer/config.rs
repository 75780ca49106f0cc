use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::kv::KvDoc;
use crate::objectives::{AdvSign, LossWeights};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// Feed-forward decoder trained on L1 alone.
    Fft,
    /// Diffusion decoder trained on L1 alone.
    DiffL1,
    /// Diffusion decoder, adversarial plus L1.
    DiffMixed,
    /// Diffusion decoder, adversarial only.
    DiffWgan,
}

impl Preset {
    pub fn is_adversarial(self) -> bool {
        matches!(self, Preset::DiffMixed | Preset::DiffWgan)
    }

    pub fn is_diffusion(self) -> bool {
        self != Preset::Fft
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::Fft => "fft",
            Preset::DiffL1 => "diff-l1",
            Preset::DiffMixed => "diff-mixed",
            Preset::DiffWgan => "diff-wgan",
        })
    }
}

impl FromStr for Preset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fft" => Ok(Preset::Fft),
            "diff-l1" => Ok(Preset::DiffL1),
            "diff-mixed" => Ok(Preset::DiffMixed),
            "diff-wgan" => Ok(Preset::DiffWgan),
            _ => Err(Error::Config(format!(
                "unknown preset `{s}` (expected fft, diff-l1, diff-mixed or diff-wgan)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelSize {
    Desk,
    Paper,
}

impl fmt::Display for ModelSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelSize::Desk => "desk",
            ModelSize::Paper => "paper",
        })
    }
}

impl FromStr for ModelSize {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(ModelSize::Desk),
            "paper" => Ok(ModelSize::Paper),
            _ => Err(Error::Config(format!("unknown model size `{s}` (expected desk or paper)"))),
        }
    }
}

fn sign_str(s: AdvSign) -> &'static str {
    match s {
        AdvSign::Wgan => "wgan",
        AdvSign::Printed => "printed",
    }
}

/// Everything that defines a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub preset: Preset,
    pub model: ModelSize,
    pub corpus: PathBuf,
    pub out_dir: PathBuf,
    pub steps: usize,
    pub batch_size: usize,
    /// Training window in frames; 0 trains on whole padded utterances.
    pub crop_frames: usize,
    pub seed: u64,
    pub diffusion_steps: usize,
    pub beta_min: f64,
    pub beta_max: f64,
    pub weights: LossWeights,
    pub adv_sign: AdvSign,
    pub lr_g: f64,
    pub lr_d: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub weight_decay: f64,
    /// Per-epoch multiplicative learning-rate decay (1 disables).
    pub lr_decay: f64,
    pub d_updates_per_g: usize,
    /// 0 writes only the final checkpoint.
    pub checkpoint_every: usize,
    /// Mel normalization bounds; taken from the training split when unset.
    pub mel_min: Option<f64>,
    pub mel_max: Option<f64>,
}

pub const CONFIG_KEYS: &[&str] = &[
    "preset",
    "model",
    "corpus",
    "out_dir",
    "steps",
    "batch_size",
    "crop_frames",
    "seed",
    "diffusion_steps",
    "beta_min",
    "beta_max",
    "lambda_recon",
    "lambda_adv",
    "lambda_gp",
    "adv_sign",
    "lr_g",
    "lr_d",
    "beta1",
    "beta2",
    "weight_decay",
    "lr_decay",
    "d_updates_per_g",
    "checkpoint_every",
    "mel_min",
    "mel_max",
];

impl TrainConfig {
    pub fn preset(preset: Preset) -> Self {
        let weights = match preset {
            Preset::Fft | Preset::DiffL1 => LossWeights { recon: 1.0, adv: 0.0, gp: 10.0 },
            Preset::DiffMixed => LossWeights::default(),
            Preset::DiffWgan => LossWeights { recon: 0.0, adv: 1.0, gp: 10.0 },
        };
        Self {
            preset,
            model: ModelSize::Desk,
            corpus: PathBuf::from("corpus"),
            out_dir: PathBuf::from("run"),
            steps: 2000,
            batch_size: 4,
            crop_frames: 32,
            seed: 1,
            diffusion_steps: 4,
            beta_min: 0.1,
            beta_max: 20.0,
            weights,
            adv_sign: AdvSign::Wgan,
            lr_g: 1e-4,
            lr_d: 1e-4,
            beta1: if preset == Preset::Fft { 0.9 } else { 0.5 },
            beta2: if preset == Preset::Fft { 0.98 } else { 0.9 },
            weight_decay: 1e-6,
            lr_decay: if preset == Preset::DiffL1 { 0.999 } else { 1.0 },
            d_updates_per_g: 2,
            checkpoint_every: 0,
            mel_min: None,
            mel_max: None,
        }
    }

    /// Parses `key = value` text. `preset` selects the defaults and every
    /// other key overrides them; unknown or repeated keys are errors.
    pub fn parse(text: &str) -> Result<Self> {
        let doc = KvDoc::parse(text)?;
        doc.reject_unknown(CONFIG_KEYS)?;
        let preset: Preset = doc.require("preset")?;
        let mut c = Self::preset(preset);
        macro_rules! set {
            ($key:literal, $field:expr) => {
                if let Some(v) = doc.parse_value($key)? {
                    $field = v;
                }
            };
        }
        set!("model", c.model);
        if let Some(v) = doc.get("corpus") {
            c.corpus = PathBuf::from(v);
        }
        if let Some(v) = doc.get("out_dir") {
            c.out_dir = PathBuf::from(v);
        }
        set!("steps", c.steps);
        set!("batch_size", c.batch_size);
        set!("crop_frames", c.crop_frames);
        set!("seed", c.seed);
        set!("diffusion_steps", c.diffusion_steps);
        set!("beta_min", c.beta_min);
        set!("beta_max", c.beta_max);
        set!("lambda_recon", c.weights.recon);
        set!("lambda_adv", c.weights.adv);
        set!("lambda_gp", c.weights.gp);
        if let Some(v) = doc.get("adv_sign") {
            c.adv_sign = match v {
                "wgan" => AdvSign::Wgan,
                "printed" => AdvSign::Printed,
                _ => return Err(Error::Config(format!("adv_sign `{v}` (expected wgan or printed)"))),
            };
        }
        set!("lr_g", c.lr_g);
        set!("lr_d", c.lr_d);
        set!("beta1", c.beta1);
        set!("beta2", c.beta2);
        set!("weight_decay", c.weight_decay);
        set!("lr_decay", c.lr_decay);
        set!("d_updates_per_g", c.d_updates_per_g);
        set!("checkpoint_every", c.checkpoint_every);
        c.mel_min = doc.parse_value("mel_min")?;
        c.mel_max = doc.parse_value("mel_max")?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.d_updates_per_g == 0 {
            return bad("d_updates_per_g must be at least 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if self.diffusion_steps == 0 || !(self.beta_min > 0.0 && self.beta_min < self.beta_max) {
            return bad("diffusion schedule needs steps >= 1 and 0 < beta_min < beta_max".into());
        }
        for (k, v) in [
            ("lambda_recon", self.weights.recon),
            ("lambda_adv", self.weights.adv),
            ("lambda_gp", self.weights.gp),
            ("lr_g", self.lr_g),
            ("lr_d", self.lr_d),
            ("weight_decay", self.weight_decay),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{k} must be a finite non-negative number"));
            }
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("optimizer betas must lie in [0, 1)".into());
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return bad("lr_decay must lie in (0, 1]".into());
        }
        if let (Some(a), Some(b)) = (self.mel_min, self.mel_max) {
            if a >= b {
                return bad("mel_min must be below mel_max".into());
            }
        }
        if self.mel_min.is_some() != self.mel_max.is_some() {
            return bad("set both mel_min and mel_max or neither".into());
        }
        Ok(())
    }

    pub fn to_kv(&self) -> KvDoc {
        let mut d = KvDoc::default();
        d.push("preset", self.preset);
        d.push("model", self.model);
        d.push("corpus", self.corpus.display());
        d.push("out_dir", self.out_dir.display());
        d.push("steps", self.steps);
        d.push("batch_size", self.batch_size);
        d.push("crop_frames", self.crop_frames);
        d.push("seed", self.seed);
        d.push("diffusion_steps", self.diffusion_steps);
        d.push("beta_min", self.beta_min);
        d.push("beta_max", self.beta_max);
        d.push("lambda_recon", self.weights.recon);
        d.push("lambda_adv", self.weights.adv);
        d.push("lambda_gp", self.weights.gp);
        d.push("adv_sign", sign_str(self.adv_sign));
        d.push("lr_g", self.lr_g);
        d.push("lr_d", self.lr_d);
        d.push("beta1", self.beta1);
        d.push("beta2", self.beta2);
        d.push("weight_decay", self.weight_decay);
        d.push("lr_decay", self.lr_decay);
        d.push("d_updates_per_g", self.d_updates_per_g);
        d.push("checkpoint_every", self.checkpoint_every);
        if let (Some(a), Some(b)) = (self.mel_min, self.mel_max) {
            d.push("mel_min", a);
            d.push("mel_max", b);
        }
        d
    }

    pub fn render(&self) -> String {
        self.to_kv().render()
    }
}
