use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{sgd_step, Matrix, ParamSet, SgdConfig};

/// A model mapping a preprocessed `(steps x features)` window to a scalar.
pub trait WindowRegressor {
    fn params(&self) -> &ParamSet;
    fn params_mut(&mut self) -> &mut ParamSet;

    fn predict_prepared(&self, window: &Matrix) -> Result<f64>;

    /// Forward and backward pass for one example. Adds
    /// `scale * d(pred - target)^2 / d(theta)` into the gradient slots and
    /// returns the squared error.
    fn accumulate(&mut self, window: &Matrix, target: f64, scale: f64) -> Result<f64>;
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FitOutcome {
    /// Mean training MSE per epoch.
    pub train_loss: Vec<f64>,
    /// Validation RMSE after each epoch (empty without validation data).
    pub validation_rmse: Vec<f64>,
    /// Epoch whose parameters were kept, `None` if no epoch ran.
    pub best_epoch: Option<usize>,
}

pub fn rmse<M: WindowRegressor + ?Sized>(model: &M, xs: &[Matrix], ys: &[f64]) -> Result<f64> {
    if xs.is_empty() {
        return Ok(f64::NAN);
    }
    let mut total = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        let e = model.predict_prepared(x)? - y;
        total += e * e;
    }
    Ok((total / xs.len() as f64).sqrt())
}

/// Minibatch SGD on mean squared error. Samples are reshuffled every epoch
/// from `config.seed`; the parameters of the epoch with the lowest validation
/// RMSE are restored at the end (the last epoch when there is no validation
/// data).
pub fn fit_regressor<M: WindowRegressor + ?Sized>(
    model: &mut M,
    train_x: &[Matrix],
    train_y: &[f64],
    val_x: &[Matrix],
    val_y: &[f64],
    config: &SgdConfig,
) -> Result<FitOutcome> {
    config.validate()?;
    if train_x.len() != train_y.len() || val_x.len() != val_y.len() {
        return Err(Error::shape("inputs and targets differ in length"));
    }
    let mut outcome = FitOutcome::default();
    if config.epochs == 0 {
        return Ok(outcome);
    }
    if train_x.is_empty() {
        return Err(Error::InsufficientData("no training samples".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train_x.len()).collect();
    let mut best: Option<(f64, ParamSet)> = None;
    model.params_mut().zero_grads();
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                epoch_loss += model.accumulate(&train_x[i], train_y[i], scale)?;
            }
            if !epoch_loss.is_finite() {
                return Err(Error::Diverged {
                    stage: "training",
                    unit: "epoch",
                    index: epoch,
                });
            }
            sgd_step(model.params_mut(), config)?;
        }
        outcome.train_loss.push(epoch_loss / train_x.len() as f64);

        let score = if val_x.is_empty() {
            outcome.train_loss[epoch]
        } else {
            let r = rmse(model, val_x, val_y)?;
            outcome.validation_rmse.push(r);
            r
        };
        if !score.is_finite() {
            return Err(Error::Diverged {
                stage: "training",
                unit: "epoch",
                index: epoch,
            });
        }
        let improved = val_x.is_empty() || best.as_ref().is_none_or(|(b, _)| score < *b);
        if improved {
            best = Some((score, model.params().clone()));
            outcome.best_epoch = Some(epoch);
        }
    }
    if let Some((_, snapshot)) = best {
        model.params_mut().copy_values_from(&snapshot)?;
    }
    Ok(outcome)
}
