use std::ops::{Index, IndexMut};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Matrix;
use crate::error::{Error, Result};

/// Handle to a tensor inside a [`ParamSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// An indexed list of tensors. Used both for parameter values and for their
/// gradient slots, so a backward pass can read one while writing the other.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Tensors(Vec<Matrix>);

impl Tensors {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Matrix> {
        self.0.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Matrix> {
        self.0.iter_mut()
    }
}

impl Index<ParamId> for Tensors {
    type Output = Matrix;

    fn index(&self, id: ParamId) -> &Matrix {
        &self.0[id.0]
    }
}

impl IndexMut<ParamId> for Tensors {
    fn index_mut(&mut self, id: ParamId) -> &mut Matrix {
        &mut self.0[id.0]
    }
}

/// Named parameter tensors, one gradient slot per tensor, and a step counter.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    names: Vec<String>,
    values: Tensors,
    grads: Tensors,
    step: u64,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a tensor. Panics on a duplicate name, which is always a
    /// model-construction bug.
    pub fn add(&mut self, name: impl Into<String>, value: Matrix) -> ParamId {
        let name = name.into();
        assert!(!self.names.contains(&name), "duplicate parameter name `{name}`");
        let (r, c) = value.shape();
        self.names.push(name);
        self.values.0.push(value);
        self.grads.0.push(Matrix::zeros(r, c));
        ParamId(self.names.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.names.len()).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn values(&self) -> &Tensors {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut Tensors {
        &mut self.values
    }

    pub fn grads(&self) -> &Tensors {
        &self.grads
    }

    pub fn grads_mut(&mut self) -> &mut Tensors {
        &mut self.grads
    }

    /// Values for reading and gradients for writing, borrowed together.
    pub fn split_mut(&mut self) -> (&Tensors, &mut Tensors) {
        (&self.values, &mut self.grads)
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn set_step(&mut self, step: u64) {
        self.step = step;
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Matrix::len).sum()
    }

    pub fn zero_grads(&mut self) {
        self.grads.iter_mut().for_each(|g| g.fill(0.0));
    }

    pub fn grad_norm(&self) -> f64 {
        self.grads.iter().map(Matrix::norm_sq).sum::<f64>().sqrt()
    }

    pub fn scale_grads(&mut self, k: f64) {
        self.grads.iter_mut().for_each(|g| g.scale(k));
    }

    /// Copies values (not gradients) from a structurally identical set.
    pub fn copy_values_from(&mut self, other: &ParamSet) -> Result<()> {
        if self.names != other.names {
            return Err(Error::shape("parameter layouts differ"));
        }
        for (dst, src) in self.values.iter_mut().zip(other.values.iter()) {
            if dst.shape() != src.shape() {
                return Err(Error::shape("parameter shapes differ"));
            }
            dst.data_mut().copy_from_slice(src.data());
        }
        Ok(())
    }

    pub fn named_values(&self) -> impl Iterator<Item = (&str, &Matrix)> {
        self.names.iter().map(String::as_str).zip(self.values.iter())
    }
}

/// Uniform Glorot initialisation: `U(-b, b)` with `b = sqrt(6 / (fan_in + fan_out))`.
pub fn xavier_uniform<R: Rng + ?Sized>(rows: usize, cols: usize, fan_in: usize, fan_out: usize, rng: &mut R) -> Matrix {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.random_range(-bound..=bound)).collect();
    Matrix::from_vec(rows, cols, data).expect("shape by construction")
}

/// Plain minibatch SGD hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Global gradient-norm clip; `None` disables clipping.
    pub clip_norm: Option<f64>,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            batch_size: 32,
            epochs: 100,
            seed: 0,
            clip_norm: Some(5.0),
        }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid(format!(
                "learning_rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be >= 1"));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return Err(Error::invalid("clip_norm must be > 0"));
            }
        }
        Ok(())
    }
}

/// One SGD update: `p <- p - lr * grad(p)`, after optional global-norm
/// clipping. Gradients are zeroed and the step counter advanced.
///
/// Fails without touching any parameter if a gradient is non-finite.
pub fn sgd_step(params: &mut ParamSet, config: &SgdConfig) -> Result<()> {
    for id in params.ids() {
        if !params.grads[id].is_finite() {
            return Err(Error::NonFiniteGradient {
                name: params.name(id).to_owned(),
            });
        }
    }
    let mut scale = config.learning_rate;
    if let Some(max_norm) = config.clip_norm {
        let norm = params.grad_norm();
        if norm > max_norm {
            scale *= max_norm / norm;
        }
    }
    let (values, grads) = (&mut params.values, &mut params.grads);
    for (v, g) in values.iter_mut().zip(grads.iter_mut()) {
        if scale != 0.0 {
            v.add_scaled(g, -scale);
        }
        g.fill(0.0);
    }
    params.step += 1;
    Ok(())
}
