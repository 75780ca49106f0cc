//! Generator (score encoder, variance adaptor, WaveNet or feed-forward
//! decoder) and the musical-score-conditioned critic.

mod checkpoint;
mod discriminator;
mod generator;
mod layers;
mod params;
mod score;

pub use checkpoint::{config_hash, hex, Checkpoint, CKPT_MAGIC, CKPT_VERSION};
pub use discriminator::{interpolation_matrix, lbmod_apply, lbmod_project, Discriminator, DiscriminatorConfig};
pub use generator::{
    crop_frames, length_regulate, length_regulator_map, round_durations, DecoderKind, EncodedScore, Generator,
    GeneratorConfig,
};
pub use layers::sinusoidal;
pub use params::ParamStore;
pub use score::{MusicalScore, ScoreFile, ScoreVocab};
