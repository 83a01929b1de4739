use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::attention::{Attention, AttentionOutput};
use super::autoencoder::EncoderDecoder;
use super::config::ForecasterConfig;
use crate::error::{Error, Result};
use crate::numerics::{Matrix, ParamSet, TensorFile, Tensors};
use crate::recurrent::{Dense, LstmStack, StackCache, WindowRegressor};
use crate::signal::denoise_columns;

/// Optional wavelet denoising, optional pretrained encoder, LSTM predictor,
/// optional attention over the predictor's hidden sequence and a single
/// dense output layer.
#[derive(Debug, Clone)]
pub struct Forecaster {
    pub config: ForecasterConfig,
    pub num_features: usize,
    pub params: ParamSet,
    pub predictor: LstmStack,
    pub head: Dense,
    pub attention: Option<Attention>,
    pub autoencoder: Option<EncoderDecoder>,
}

struct ForwardCache {
    embeddings: Option<(StackCache, Matrix)>,
    predictor: StackCache,
    hidden: Matrix,
    attention: Option<AttentionOutput>,
    features: Vec<f64>,
    prediction: f64,
}

/// Wavelet denoising of every column when the configuration asks for it.
pub(crate) fn preprocess(config: &ForecasterConfig, window: &Matrix) -> Result<Matrix> {
    if config.use_wavelet {
        denoise_columns(window, config.wavelet_levels)
    } else {
        Ok(window.clone())
    }
}

impl Forecaster {
    /// Builds a freshly initialised model. Parameters are drawn from `seed`
    /// in the order predictor, head, attention, encoder/decoder, so a model
    /// with every addition disabled matches
    /// [`crate::recurrent::LstmRegressor::new`] exactly.
    pub fn new(config: &ForecasterConfig, num_features: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        if num_features == 0 {
            return Err(Error::invalid("forecaster needs at least one input feature"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let predictor_input = if config.use_encoder {
            *config.encoder_hidden.last().expect("validated")
        } else {
            num_features
        };
        let predictor = LstmStack::new(
            &mut params,
            "predictor",
            predictor_input,
            &config.predictor_hidden,
            &mut rng,
        );
        let hidden = predictor.output_size();
        let head_input = if config.use_attention { 2 * hidden } else { hidden };
        let head = Dense::new(&mut params, "head", head_input, 1, &mut rng);
        let attention = config.use_attention.then(|| {
            Attention::new(
                &mut params,
                "attention",
                hidden,
                hidden,
                config.attention_size,
                &mut rng,
            )
        });
        let autoencoder = config
            .use_encoder
            .then(|| EncoderDecoder::new(&mut params, num_features, &config.encoder_hidden, &mut rng));
        Ok(Forecaster {
            config: config.clone(),
            num_features,
            params,
            predictor,
            head,
            attention,
            autoencoder,
        })
    }

    /// Applies the configured preprocessing (wavelet denoising of every
    /// column) to a raw normalised window.
    pub fn prepare(&self, window: &Matrix) -> Result<Matrix> {
        if window.cols() != self.num_features || window.rows() != self.config.window {
            return Err(Error::shape(format!(
                "expected a {}x{} window, got {}x{}",
                self.config.window,
                self.num_features,
                window.rows(),
                window.cols()
            )));
        }
        preprocess(&self.config, window)
    }

    /// Prediction for a raw normalised window.
    pub fn forecast(&self, window: &Matrix) -> Result<f64> {
        self.predict_prepared(&self.prepare(window)?)
    }

    /// Attention weights over the window for a raw normalised window, if the
    /// model has attention.
    pub fn attention_weights(&self, window: &Matrix) -> Result<Option<Vec<f64>>> {
        let cache = self.forward(self.params.values(), &self.prepare(window)?)?;
        Ok(cache.attention.map(|a| a.weights))
    }

    /// Input of the output layer (`[h_T; context]` with attention) for a raw
    /// normalised window; used as a latent vector for clustering.
    pub fn latent(&self, window: &Matrix) -> Result<Vec<f64>> {
        Ok(self.forward(self.params.values(), &self.prepare(window)?)?.features)
    }

    fn forward(&self, p: &Tensors, window: &Matrix) -> Result<ForwardCache> {
        if window.cols() != self.num_features {
            return Err(Error::shape(format!(
                "window has {} features, model expects {}",
                window.cols(),
                self.num_features
            )));
        }
        let embeddings = match &self.autoencoder {
            Some(ae) => {
                let cache = ae.encoder.forward(p, window, None)?;
                let seq = cache.top_sequence();
                Some((cache, seq))
            }
            None => None,
        };
        let input = embeddings.as_ref().map_or(window, |(_, e)| e);
        let predictor = self.predictor.forward(p, input, None)?;
        let hidden = predictor.top_sequence();
        let last = hidden.rows() - 1;
        let mut features = hidden.row(last).to_vec();
        let attention = match &self.attention {
            Some(att) => {
                let out = att.forward(p, &hidden, hidden.row(last))?;
                features.extend_from_slice(&out.context);
                Some(out)
            }
            None => None,
        };
        let prediction = self.head.forward_vec(p, &features)[0];
        Ok(ForwardCache {
            embeddings,
            predictor,
            hidden,
            attention,
            features,
            prediction,
        })
    }

    /// Serialises weights together with the configuration and the given
    /// extra metadata.
    pub fn to_tensor_file(&self, extra: &[(&str, String)]) -> Result<TensorFile> {
        let mut file = self.params.to_tensor_file();
        file.push_meta("kind", "forecaster");
        file.push_meta("config", serde_json::to_string(&self.config)?);
        file.push_meta("num_features", self.num_features);
        for (k, v) in extra {
            file.push_meta(*k, v);
        }
        Ok(file)
    }

    pub fn from_tensor_file(file: &TensorFile) -> Result<Self> {
        let missing = |key: &str| Error::invalid(format!("checkpoint lacks `{key}` metadata"));
        if file.meta("kind") != Some("forecaster") {
            return Err(Error::invalid("checkpoint does not hold a forecaster"));
        }
        let config: ForecasterConfig = serde_json::from_str(file.meta("config").ok_or_else(|| missing("config"))?)?;
        let num_features: usize = file
            .meta("num_features")
            .ok_or_else(|| missing("num_features"))?
            .parse()
            .map_err(|_| Error::invalid("num_features is not an integer"))?;
        let mut model = Forecaster::new(&config, num_features, 0)?;
        model.params.load_values(file)?;
        Ok(model)
    }
}

impl WindowRegressor for Forecaster {
    fn params(&self) -> &ParamSet {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn predict_prepared(&self, window: &Matrix) -> Result<f64> {
        Ok(self.forward(self.params.values(), window)?.prediction)
    }

    fn accumulate(&mut self, window: &Matrix, target: f64, scale: f64) -> Result<f64> {
        let mut params = std::mem::take(&mut self.params);
        let result = self.accumulate_into(&mut params, window, target, scale);
        self.params = params;
        result
    }
}

impl Forecaster {
    fn accumulate_into(&self, params: &mut ParamSet, window: &Matrix, target: f64, scale: f64) -> Result<f64> {
        let (p, g) = params.split_mut();
        let cache = self.forward(p, window)?;
        let err = cache.prediction - target;
        let hidden_size = self.predictor.output_size();
        let mut d_features = vec![0.0; cache.features.len()];
        self.head
            .backward(p, g, &cache.features, &[2.0 * err * scale], Some(&mut d_features));

        let last = cache.hidden.rows() - 1;
        let mut d_hidden = Matrix::zeros(cache.hidden.rows(), hidden_size);
        let mut d_query = d_features[..hidden_size].to_vec();
        if let (Some(att), Some(out)) = (&self.attention, &cache.attention) {
            att.backward(
                p,
                g,
                &cache.hidden,
                cache.hidden.row(last),
                out,
                &d_features[hidden_size..],
                &mut d_hidden,
                &mut d_query,
            );
        }
        for (d, q) in d_hidden.row_mut(last).iter_mut().zip(&d_query) {
            *d += q;
        }
        let (d_input, _) = self.predictor.backward(p, g, &cache.predictor, &d_hidden, None);
        if let (Some(ae), Some((enc_cache, _))) = (&self.autoencoder, &cache.embeddings) {
            if !self.config.freeze_encoder {
                ae.encoder.backward(p, g, enc_cache, &d_input, None);
            }
        }
        Ok(err * err)
    }
}
