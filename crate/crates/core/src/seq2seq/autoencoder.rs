use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{sgd_step, Matrix, ParamSet, SgdConfig, Tensors};
use crate::recurrent::{Dense, LstmStack, LstmState, StackCache};

/// Sequence autoencoder. The encoder's top-layer hidden states are the
/// per-step embeddings; the decoder is the mirrored stack, starts from the
/// encoder's final states (layer order reversed) and is fed the last
/// embedding at every step; a dense head maps each decoder output back to
/// the input features.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderDecoder {
    pub encoder: LstmStack,
    pub decoder: LstmStack,
    pub reconstruction: Dense,
}

pub(crate) struct AutoencoderCache {
    encoder: StackCache,
    decoder_input: Matrix,
    decoder: StackCache,
    output: Matrix,
}

fn reversed(state: &LstmState) -> LstmState {
    LstmState {
        h: state.h.iter().rev().cloned().collect(),
        c: state.c.iter().rev().cloned().collect(),
    }
}

impl EncoderDecoder {
    pub fn new<R: Rng + ?Sized>(params: &mut ParamSet, input_size: usize, hidden_sizes: &[usize], rng: &mut R) -> Self {
        let encoder = LstmStack::new(params, "encoder", input_size, hidden_sizes, rng);
        let mirrored: Vec<usize> = hidden_sizes.iter().rev().copied().collect();
        let decoder = LstmStack::new(params, "decoder", encoder.output_size(), &mirrored, rng);
        let reconstruction = Dense::new(params, "reconstruction", decoder.output_size(), input_size, rng);
        EncoderDecoder {
            encoder,
            decoder,
            reconstruction,
        }
    }

    pub fn input_size(&self) -> usize {
        self.encoder.input_size()
    }

    pub fn embedding_size(&self) -> usize {
        self.encoder.output_size()
    }

    /// Per-step embeddings of a window, one row per step.
    pub fn embed(&self, p: &Tensors, window: &Matrix) -> Result<Matrix> {
        Ok(self.encoder.forward(p, window, None)?.top_sequence())
    }

    pub(crate) fn forward(&self, p: &Tensors, window: &Matrix) -> Result<AutoencoderCache> {
        let encoder = self.encoder.forward(p, window, None)?;
        let steps = encoder.steps();
        let last = encoder.top_hidden(steps - 1).to_vec();
        let mut decoder_input = Matrix::zeros(steps, last.len());
        for t in 0..steps {
            decoder_input.row_mut(t).copy_from_slice(&last);
        }
        let init = reversed(&encoder.final_state());
        let decoder = self.decoder.forward(p, &decoder_input, Some(&init))?;
        let mut output = Matrix::zeros(steps, self.input_size());
        for t in 0..steps {
            self.reconstruction.forward(p, decoder.top_hidden(t), output.row_mut(t));
        }
        Ok(AutoencoderCache {
            encoder,
            decoder_input,
            decoder,
            output,
        })
    }

    /// Reconstructed window.
    pub fn reconstruct(&self, p: &Tensors, window: &Matrix) -> Result<Matrix> {
        Ok(self.forward(p, window)?.output)
    }

    /// Mean squared reconstruction error of one window; accumulates
    /// `scale` times its gradient.
    pub fn accumulate(&self, p: &Tensors, g: &mut Tensors, window: &Matrix, scale: f64) -> Result<f64> {
        let cache = self.forward(p, window)?;
        let steps = window.rows();
        let count = window.len() as f64;
        let mut loss = 0.0;
        let mut d_dec = Matrix::zeros(steps, self.decoder.output_size());
        let mut d_out = vec![0.0; self.input_size()];
        for t in 0..steps {
            for ((d, y), x) in d_out.iter_mut().zip(cache.output.row(t)).zip(window.row(t)) {
                let e = y - x;
                loss += e * e;
                *d = 2.0 * e * scale / count;
            }
            self.reconstruction
                .backward(p, g, cache.decoder.top_hidden(t), &d_out, Some(d_dec.row_mut(t)));
        }
        debug_assert_eq!(cache.decoder_input.rows(), steps);
        let (d_dec_in, d_dec_init) = self.decoder.backward(p, g, &cache.decoder, &d_dec, None);
        let mut d_enc = Matrix::zeros(steps, self.embedding_size());
        let last = d_enc.row_mut(steps - 1);
        for t in 0..steps {
            for (a, b) in last.iter_mut().zip(d_dec_in.row(t)) {
                *a += b;
            }
        }
        self.encoder
            .backward(p, g, &cache.encoder, &d_enc, Some(&reversed(&d_dec_init)));
        Ok(loss / count)
    }
}

/// Minibatch SGD on the mean squared reconstruction error of `windows`.
/// Returns the mean loss of every epoch. Only the autoencoder's gradients are
/// populated, so other parameters in `params` are left untouched.
pub fn pretrain_autoencoder(
    model: &EncoderDecoder,
    params: &mut ParamSet,
    windows: &[Matrix],
    config: &SgdConfig,
) -> Result<Vec<f64>> {
    config.validate()?;
    let mut curve = Vec::with_capacity(config.epochs);
    if config.epochs == 0 {
        return Ok(curve);
    }
    if windows.is_empty() {
        return Err(Error::InsufficientData("no windows to pretrain on".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..windows.len()).collect();
    params.zero_grads();
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(config.batch_size) {
            let scale = 1.0 / batch.len() as f64;
            let (p, g) = params.split_mut();
            for &i in batch {
                total += model.accumulate(p, g, &windows[i], scale)?;
            }
            if !total.is_finite() {
                return Err(Error::Diverged {
                    stage: "pretraining",
                    unit: "epoch",
                    index: epoch,
                });
            }
            sgd_step(params, config)?;
        }
        curve.push(total / windows.len() as f64);
    }
    Ok(curve)
}
