//! Encoder-decoder pretraining, attention and the composite forecaster, with
//! training, evaluation and the ablation harness.

mod ablation;
mod attention;
mod autoencoder;
mod config;
mod forecaster;
mod training;

pub use ablation::{ablate, run_variant, AblationReport, AblationRow, PredictionTrace, Variant, OUT_OF_SCOPE_ROWS};
pub use attention::{attention_context, Attention, AttentionOutput};
pub use autoencoder::{pretrain_autoencoder, EncoderDecoder};
pub use config::ForecasterConfig;
pub use forecaster::Forecaster;
pub use training::{
    config_fingerprint, train_forecaster, train_forecaster_on, train_mlp_on, variant_label, EvalReport,
    PredictionRecord, PreparedData, SplitSummary,
};

#[cfg(test)]
mod tests;
