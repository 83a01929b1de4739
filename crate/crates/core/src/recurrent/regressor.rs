use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::dense::{Activation, Dense};
use super::lstm::LstmStack;
use super::mlp::Mlp;
use super::train::WindowRegressor;
use crate::error::{Error, Result};
use crate::numerics::{Matrix, ParamSet};

/// Stacked LSTM read out by a dense layer on the final top-layer hidden state.
#[derive(Debug, Clone)]
pub struct LstmRegressor {
    pub params: ParamSet,
    pub stack: LstmStack,
    pub head: Dense,
}

impl LstmRegressor {
    /// Parameters are drawn in the order stack, head from `seed`.
    pub fn new(input_size: usize, hidden: &[usize], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let stack = LstmStack::new(&mut params, "predictor", input_size, hidden, &mut rng);
        let head = Dense::new(&mut params, "head", stack.output_size(), 1, &mut rng);
        LstmRegressor { params, stack, head }
    }
}

impl WindowRegressor for LstmRegressor {
    fn params(&self) -> &ParamSet {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn predict_prepared(&self, window: &Matrix) -> Result<f64> {
        let p = self.params.values();
        let cache = self.stack.forward(p, window, None)?;
        let last = cache.steps() - 1;
        Ok(self.head.forward_vec(p, cache.top_hidden(last))[0])
    }

    fn accumulate(&mut self, window: &Matrix, target: f64, scale: f64) -> Result<f64> {
        let (p, g) = self.params.split_mut();
        let cache = self.stack.forward(p, window, None)?;
        let last = cache.steps() - 1;
        let h = cache.top_hidden(last);
        let pred = self.head.forward_vec(p, h)[0];
        let err = pred - target;
        let mut dh = vec![0.0; h.len()];
        self.head.backward(p, g, h, &[2.0 * err * scale], Some(&mut dh));
        let mut d_top = Matrix::zeros(cache.steps(), self.stack.output_size());
        d_top.row_mut(last).copy_from_slice(&dh);
        self.stack.backward(p, g, &cache, &d_top, None);
        Ok(err * err)
    }
}

/// Feed-forward baseline on the flattened window.
#[derive(Debug, Clone)]
pub struct MlpRegressor {
    pub params: ParamSet,
    pub mlp: Mlp,
}

impl MlpRegressor {
    pub fn new(window: usize, features: usize, hidden: &[usize], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let mlp = Mlp::new(
            &mut params,
            "mlp",
            window * features,
            hidden,
            1,
            Activation::Relu,
            &mut rng,
        );
        MlpRegressor { params, mlp }
    }

    fn check(&self, window: &Matrix) -> Result<()> {
        if window.len() != self.mlp.input_size() {
            return Err(Error::shape(format!(
                "flattened window has {} values, MLP expects {}",
                window.len(),
                self.mlp.input_size()
            )));
        }
        Ok(())
    }
}

impl WindowRegressor for MlpRegressor {
    fn params(&self) -> &ParamSet {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn predict_prepared(&self, window: &Matrix) -> Result<f64> {
        self.check(window)?;
        self.mlp.predict(self.params.values(), window.data())
    }

    fn accumulate(&mut self, window: &Matrix, target: f64, scale: f64) -> Result<f64> {
        self.check(window)?;
        let (p, g) = self.params.split_mut();
        let cache = self.mlp.forward(p, window.data())?;
        let err = cache.output()[0] - target;
        self.mlp.backward(p, g, &cache, &[2.0 * err * scale]);
        Ok(err * err)
    }
}
