use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{ModelSpec, TrainConfig};
use crate::autodiff::Tensor;
use crate::diffusion::DiffusionSchedule;
use crate::error::{Error, Result};
use crate::kv::KvDoc;
use crate::networks::{config_hash, hex, Checkpoint, Generator, MusicalScore};
use crate::scalar::Scalar;
use crate::signal::MelSpectrogram;

/// Score-to-mel inference from a checkpoint.
#[derive(Debug, Clone)]
pub struct Synthesizer<S: Scalar> {
    pub spec: ModelSpec,
    pub generator: Generator<S>,
    schedule: DiffusionSchedule<S>,
    train_hash: String,
}

impl<S: Scalar> Synthesizer<S> {
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let doc = KvDoc::parse(&ck.config)?;
        let spec = ModelSpec::from_kv(&doc)?;
        let params = ck.params::<S>("generator")?;
        let generator = Generator::from_params(spec.generator_config(), params)?;
        let schedule = spec.schedule()?;
        let train_hash = doc.get("train_config_hash").unwrap_or_default().to_string();
        Ok(Self {
            spec,
            generator,
            schedule,
            train_hash,
        })
    }

    /// Fails unless `cfg` is the training config the checkpoint came from.
    pub fn check_config(&self, cfg: &TrainConfig) -> Result<()> {
        let h = hex(&config_hash(&cfg.render()));
        if h != self.train_hash {
            return Err(Error::Config(format!(
                "checkpoint/config mismatch: config hash {} but checkpoint records {}",
                &h[..12],
                self.train_hash.get(..12).unwrap_or("nothing")
            )));
        }
        Ok(())
    }

    /// Log-mel for one score. Uses `durations` for the length regulator
    /// when given, predicted durations otherwise. The same seed always
    /// gives the same output.
    pub fn synthesize(&self, score: &MusicalScore, durations: Option<&[usize]>, seed: u64) -> Result<MelSpectrogram<S>> {
        let d = durations.map(|d| vec![d.to_vec()]);
        let enc = self.generator.encode_score(std::slice::from_ref(score), d.as_deref())?;
        let m = self.spec.mel.n_mels;
        let l = enc.ms.shape()[2];
        let x0 = if self.spec.preset.is_diffusion() {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            self.schedule.sample_loop(
                &[1, m, l],
                |x, t| self.generator.diffusion_decoder(x, &[t], &enc.ms),
                &mut rng,
            )?
        } else {
            self.generator.fft_decoder(&enc.ms)?
        };
        let data: Vec<S> = x0
            .data()
            .iter()
            .map(|&v| S::lit(self.spec.denormalize(v.as_f64())))
            .collect();
        MelSpectrogram::from_tensor(self.spec.mel, &Tensor::new(data, &[m, l])?)
    }
}
