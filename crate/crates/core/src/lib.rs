pub mod autodiff;
pub mod corpus;
pub mod diffusion;
pub mod error;
pub mod kv;
pub mod metrics;
pub mod networks;
pub mod objectives;
pub mod scalar;
pub mod signal;
pub mod trainer;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// 64-bit instantiations used by the CLI and tests.
pub type Tensor = autodiff::Tensor<f64>;
pub type DiffusionSchedule = diffusion::DiffusionSchedule<f64>;
pub type MelSpectrogram = signal::MelSpectrogram<f64>;
pub type Generator = networks::Generator<f64>;
pub type Discriminator = networks::Discriminator<f64>;
