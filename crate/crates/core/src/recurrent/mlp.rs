use rand::Rng;
use serde::{Deserialize, Serialize};

use super::dense::{Activation, Dense};
use crate::error::{Error, Result};
use crate::numerics::{ParamSet, Tensors};

/// Dense network: hidden layers share one activation, the output layer is
/// linear.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Dense>,
    pub hidden_activation: Activation,
}

pub struct MlpCache {
    /// `acts[0]` is the input, `acts[k + 1]` the (activated) output of layer `k`.
    acts: Vec<Vec<f64>>,
}

impl MlpCache {
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("nonempty")
    }

    /// Activations feeding the output layer.
    pub fn penultimate(&self) -> &[f64] {
        &self.acts[self.acts.len() - 2]
    }
}

impl Mlp {
    pub fn new<R: Rng + ?Sized>(
        params: &mut ParamSet,
        name: &str,
        input: usize,
        hidden: &[usize],
        output: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut fan_in = input;
        for (k, &h) in hidden.iter().chain(std::iter::once(&output)).enumerate() {
            layers.push(Dense::new(params, &format!("{name}.d{k}"), fan_in, h, rng));
            fan_in = h;
        }
        Mlp {
            layers,
            hidden_activation: activation,
        }
    }

    pub fn input_size(&self) -> usize {
        self.layers[0].input
    }

    pub fn output_size(&self) -> usize {
        self.layers.last().map_or(0, |l| l.output)
    }

    pub fn forward(&self, p: &Tensors, x: &[f64]) -> Result<MlpCache> {
        if self.layers.is_empty() {
            return Err(Error::invalid("MLP without layers"));
        }
        if x.len() != self.input_size() {
            return Err(Error::shape(format!(
                "MLP expects {} features, got {}",
                self.input_size(),
                x.len()
            )));
        }
        if self.layers.windows(2).any(|w| w[0].output != w[1].input) {
            return Err(Error::shape("MLP layer shapes do not compose"));
        }
        let last = self.layers.len() - 1;
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_vec());
        for (k, layer) in self.layers.iter().enumerate() {
            let mut y = layer.forward_vec(p, acts.last().expect("nonempty"));
            if k < last {
                y.iter_mut().for_each(|v| *v = self.hidden_activation.apply(*v));
            }
            acts.push(y);
        }
        Ok(MlpCache { acts })
    }

    /// Scalar output for a flattened window.
    pub fn predict(&self, p: &Tensors, features: &[f64]) -> Result<f64> {
        Ok(self.forward(p, features)?.output()[0])
    }

    /// Returns the gradient with respect to the input.
    pub fn backward(&self, p: &Tensors, g: &mut Tensors, cache: &MlpCache, d_out: &[f64]) -> Vec<f64> {
        let last = self.layers.len() - 1;
        let mut delta = d_out.to_vec();
        for k in (0..self.layers.len()).rev() {
            if k < last {
                for (d, y) in delta.iter_mut().zip(&cache.acts[k + 1]) {
                    *d *= self.hidden_activation.derivative_from_output(*y);
                }
            }
            let mut dx = vec![0.0; self.layers[k].input];
            self.layers[k].backward(p, g, &cache.acts[k], &delta, Some(&mut dx));
            delta = dx;
        }
        delta
    }
}
