use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::SgdConfig;
use crate::signal::{Horizon, SplitFractions};

/// Architecture, preprocessing and optimisation settings of one forecaster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecasterConfig {
    pub use_wavelet: bool,
    pub use_attention: bool,
    pub use_encoder: bool,
    /// Keep the pretrained encoder fixed during supervised training.
    pub freeze_encoder: bool,
    pub wavelet_levels: usize,
    pub encoder_hidden: Vec<usize>,
    pub predictor_hidden: Vec<usize>,
    /// Width of the attention alignment layer.
    pub attention_size: usize,
    /// Hidden layers of the MLP baseline.
    pub mlp_hidden: Vec<usize>,
    /// Learning rate of the MLP baseline; the rest of `train` is shared.
    pub mlp_learning_rate: f64,
    pub window: usize,
    pub horizon: Horizon,
    pub split: SplitFractions,
    pub pretrain: SgdConfig,
    pub train: SgdConfig,
}

impl ForecasterConfig {
    /// Full-size settings: 128/32 encoder, 128-unit predictor, learning rate
    /// 0.001, batch 32, 100 epochs.
    pub fn paper() -> Self {
        let sgd = SgdConfig {
            learning_rate: 0.001,
            batch_size: 32,
            epochs: 100,
            seed: 0,
            clip_norm: Some(5.0),
        };
        Self {
            use_wavelet: true,
            use_attention: true,
            use_encoder: true,
            freeze_encoder: false,
            wavelet_levels: 1,
            encoder_hidden: vec![128, 32],
            predictor_hidden: vec![128],
            attention_size: 128,
            mlp_hidden: vec![64, 64],
            mlp_learning_rate: 0.001,
            window: 15,
            horizon: Horizon::OneStep,
            split: SplitFractions::default(),
            pretrain: sgd.clone(),
            train: sgd,
        }
    }

    /// Small settings that train in minutes on one core.
    pub fn desk() -> Self {
        let sgd = SgdConfig {
            learning_rate: 0.4,
            batch_size: 4,
            epochs: 40,
            seed: 0,
            clip_norm: Some(5.0),
        };
        Self {
            encoder_hidden: vec![16, 8],
            predictor_hidden: vec![16],
            attention_size: 16,
            mlp_learning_rate: 0.05,
            pretrain: SgdConfig {
                learning_rate: 0.5,
                epochs: 5,
                ..sgd.clone()
            },
            train: sgd,
            ..Self::paper()
        }
    }

    /// Sets both the initialisation/shuffling seed and the pretraining seed.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.train.seed = seed;
        self.pretrain.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.split.validate()?;
        self.train.validate()?;
        self.pretrain.validate()?;
        if self.window == 0 {
            return Err(Error::invalid("window must be at least 1"));
        }
        if self.predictor_hidden.is_empty() || self.predictor_hidden.contains(&0) {
            return Err(Error::invalid("predictor needs nonzero hidden sizes"));
        }
        if self.use_encoder && (self.encoder_hidden.is_empty() || self.encoder_hidden.contains(&0)) {
            return Err(Error::invalid("encoder needs nonzero hidden sizes"));
        }
        if self.use_attention && self.attention_size == 0 {
            return Err(Error::invalid("attention_size must be nonzero"));
        }
        if !(self.mlp_learning_rate > 0.0 && self.mlp_learning_rate.is_finite()) {
            return Err(Error::invalid("mlp_learning_rate must be positive"));
        }
        if self.mlp_hidden.contains(&0) {
            return Err(Error::invalid("MLP hidden sizes must be nonzero"));
        }
        if self.use_wavelet && (self.wavelet_levels == 0 || self.window < 1 << self.wavelet_levels) {
            return Err(Error::invalid(format!(
                "wavelet depth {} does not fit a window of {}",
                self.wavelet_levels, self.window
            )));
        }
        Ok(())
    }
}

impl Default for ForecasterConfig {
    fn default() -> Self {
        Self::desk()
    }
}
