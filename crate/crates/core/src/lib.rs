//! Differentiable modelling of modulation effects (flanger, chorus,
//! phaser): frequency-sampling training with reverse-mode gradients and a
//! zero-latency time-domain engine for inference.

pub mod analysis;
pub mod diffmodel;
pub mod error;
pub mod grad;
pub mod io;
pub mod signals;
pub mod spectral;
pub mod tdengine;
pub mod trainer;

pub use diffmodel::{ChannelParams, FbConfig, ModelParams, ModelShape, Variant};
pub use error::{Error, Result};
pub use spectral::HalfSpectrum;
