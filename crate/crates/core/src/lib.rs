//! Deep time-series forecasting, latent-centroid verification, multi-source
//! domain adaptation and refrigeration demand-response tooling.

pub mod adapt;
pub mod error;
pub mod fridge;
pub mod latent;
pub mod numerics;
pub mod recurrent;
pub mod seq2seq;
pub mod signal;

pub use error::{Error, Result};

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
