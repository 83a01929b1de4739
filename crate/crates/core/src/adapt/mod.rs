//! Multi-source domain adaptation on feature vectors: MMD, CORAL and class
//! discrepancy losses, a branch-per-source network and its trainer.

mod losses;
mod model;
mod moons;
mod train;

pub use losses::{class_discrepancy, coral, heuristic_bandwidths, median_bandwidth, mmd, DEFAULT_BANDWIDTH_SCALES};
pub use model::{AdaptConfig, AdaptLossReport, AdaptModel, Bandwidths, Branch, DomainBatch, LossWeights};
pub use moons::{shifted_two_moons, two_moons, MoonsDomain, ShiftedMoons};
pub use train::{compare_settings, loss_curve_csv, train_multisource, AdaptOutcome, LabeledDomain, SettingAccuracies};
