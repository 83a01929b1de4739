use serde::{Deserialize, Serialize};

use super::autoencoder::pretrain_autoencoder;
use super::config::ForecasterConfig;
use super::forecaster::{preprocess, Forecaster};
use crate::error::{Error, Result};
use crate::numerics::{tensor_io::hex_digest, Matrix};
use crate::recurrent::{fit_regressor, FitOutcome, MlpRegressor, WindowRegressor};
use crate::signal::{fit_apply_minmax, NormalizerState, Sample, TimeSeriesFrame, WindowedDataset, TIMESTAMP_FORMAT};

/// Normalised, windowed and chronologically split data shared by every
/// model trained on one frame and horizon.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub normalizer: NormalizerState,
    pub dataset: WindowedDataset,
}

impl PreparedData {
    pub fn new(frame: &TimeSeriesFrame, config: &ForecasterConfig) -> Result<Self> {
        config.validate()?;
        let (normalized, normalizer) = fit_apply_minmax(frame, config.split.train)?;
        let dataset = WindowedDataset::chronological(&normalized, config.window, config.horizon.lead(), config.split)?;
        Ok(Self { normalizer, dataset })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub timestamp: String,
    pub truth: f64,
    pub prediction: f64,
}

/// Sample counts and time ranges of the three splits. Times are the
/// earliest input and the latest target of each split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub train_samples: usize,
    pub validation_samples: usize,
    pub test_samples: usize,
    pub train_span: (String, String),
    pub validation_span: (String, String),
    pub test_span: (String, String),
}

fn span(samples: &[Sample]) -> (String, String) {
    match (samples.first(), samples.last()) {
        (Some(a), Some(b)) => (
            a.input_start.format(TIMESTAMP_FORMAT).to_string(),
            b.target_time.format(TIMESTAMP_FORMAT).to_string(),
        ),
        _ => (String::new(), String::new()),
    }
}

impl SplitSummary {
    fn of(d: &WindowedDataset) -> Self {
        Self {
            train_samples: d.train.len(),
            validation_samples: d.validation.len(),
            test_samples: d.test.len(),
            train_span: span(&d.train),
            validation_span: span(&d.validation),
            test_span: span(&d.test),
        }
    }
}

/// Test-split evaluation of one trained model. Errors are in normalised
/// target units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub horizon: crate::signal::Horizon,
    pub rmse: f64,
    pub mse: f64,
    pub predictions: Vec<PredictionRecord>,
    pub split: SplitSummary,
    pub config_fingerprint: String,
    pub pretrain_loss: Vec<f64>,
    pub fit: FitOutcome,
}

pub fn config_fingerprint(config: &ForecasterConfig) -> Result<String> {
    Ok(hex_digest(serde_json::to_string(config)?.as_bytes()))
}

fn split_xy(samples: &[Sample], prep: &dyn Fn(&Matrix) -> Result<Matrix>) -> Result<(Vec<Matrix>, Vec<f64>)> {
    let xs = samples.iter().map(|s| prep(&s.input)).collect::<Result<Vec<_>>>()?;
    Ok((xs, samples.iter().map(|s| s.target).collect()))
}

fn fit_and_evaluate<M: WindowRegressor>(
    name: &str,
    model: &mut M,
    config: &ForecasterConfig,
    data: &PreparedData,
    train_x: &[Matrix],
    prep: &dyn Fn(&Matrix) -> Result<Matrix>,
    pretrain_loss: Vec<f64>,
) -> Result<EvalReport> {
    let d = &data.dataset;
    let train_y: Vec<f64> = d.train.iter().map(|s| s.target).collect();
    let (val_x, val_y) = split_xy(&d.validation, prep)?;
    let fit = fit_regressor(model, train_x, &train_y, &val_x, &val_y, &config.train)?;
    if d.test.is_empty() {
        return Err(Error::InsufficientData("test split has no samples".into()));
    }
    let mut predictions = Vec::with_capacity(d.test.len());
    let mut sq = 0.0;
    for s in &d.test {
        let prediction = model.predict_prepared(&prep(&s.input)?)?;
        if !prediction.is_finite() {
            return Err(Error::Diverged {
                stage: "evaluation",
                unit: "sample",
                index: predictions.len(),
            });
        }
        sq += (prediction - s.target).powi(2);
        predictions.push(PredictionRecord {
            timestamp: s.target_time.format(TIMESTAMP_FORMAT).to_string(),
            truth: s.target,
            prediction,
        });
    }
    let mse = sq / d.test.len() as f64;
    Ok(EvalReport {
        model: name.to_owned(),
        horizon: config.horizon,
        rmse: mse.sqrt(),
        mse,
        predictions,
        split: SplitSummary::of(d),
        config_fingerprint: config_fingerprint(config)?,
        pretrain_loss,
        fit,
    })
}

/// Builds, optionally pretrains, trains and evaluates a forecaster on
/// already prepared data.
pub fn train_forecaster_on(config: &ForecasterConfig, data: &PreparedData) -> Result<(Forecaster, EvalReport)> {
    let features = data.dataset.num_features();
    let mut model = Forecaster::new(config, features, config.train.seed)?;
    let prep = |w: &Matrix| preprocess(config, w);
    let (train_x, _) = split_xy(&data.dataset.train, &prep)?;
    let pretrain_loss = match &model.autoencoder {
        Some(ae) => pretrain_autoencoder(ae, &mut model.params, &train_x, &config.pretrain)?,
        None => Vec::new(),
    };
    let report = fit_and_evaluate(
        &variant_label(config),
        &mut model,
        config,
        data,
        &train_x,
        &prep,
        pretrain_loss,
    )?;
    Ok((model, report))
}

/// Normalises and splits `frame`, then trains and evaluates a forecaster.
pub fn train_forecaster(config: &ForecasterConfig, frame: &TimeSeriesFrame) -> Result<(Forecaster, EvalReport)> {
    let data = PreparedData::new(frame, config)?;
    train_forecaster_on(config, &data)
}

/// Trains the flattened-window MLP baseline with the same data and
/// optimiser settings apart from its own learning rate.
pub fn train_mlp_on(config: &ForecasterConfig, data: &PreparedData) -> Result<(MlpRegressor, EvalReport)> {
    let features = data.dataset.num_features();
    let mut model = MlpRegressor::new(config.window, features, &config.mlp_hidden, config.train.seed);
    let prep = |w: &Matrix| Ok(w.clone());
    let (train_x, _) = split_xy(&data.dataset.train, &prep)?;
    let mut mlp_config = config.clone();
    mlp_config.train.learning_rate = config.mlp_learning_rate;
    let mut report = fit_and_evaluate("MLP", &mut model, &mlp_config, data, &train_x, &prep, Vec::new())?;
    report.config_fingerprint = config_fingerprint(config)?;
    Ok((model, report))
}

/// Row label of the variant a flag combination represents.
pub fn variant_label(config: &ForecasterConfig) -> String {
    let mut name = String::new();
    if config.use_wavelet {
        name.push_str("WT-");
    }
    if config.use_encoder {
        name.push_str("ED-");
    }
    name.push_str("LSTM");
    if config.use_attention {
        name.push_str("-AM");
    }
    name
}
