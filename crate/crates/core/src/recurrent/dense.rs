use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::numerics::{xavier_uniform, Matrix, ParamId, ParamSet, Tensors};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the activation's output `y`.
    #[inline]
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
        }
    }
}

/// Affine layer `y = W x + b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dense {
    pub w: ParamId,
    pub b: ParamId,
    pub input: usize,
    pub output: usize,
}

impl Dense {
    pub fn new<R: Rng + ?Sized>(params: &mut ParamSet, name: &str, input: usize, output: usize, rng: &mut R) -> Self {
        let w = params.add(format!("{name}.w"), xavier_uniform(output, input, input, output, rng));
        let b = params.add(format!("{name}.b"), Matrix::zeros(output, 1));
        Dense { w, b, input, output }
    }

    #[inline]
    pub fn forward(&self, p: &Tensors, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(p[self.b].data());
        p[self.w].matvec_add(x, out);
    }

    pub fn forward_vec(&self, p: &Tensors, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.output];
        self.forward(p, x, &mut out);
        out
    }

    /// Accumulates parameter gradients and, if requested, adds `W^T dout`
    /// into `dx`.
    #[inline]
    pub fn backward(&self, p: &Tensors, g: &mut Tensors, x: &[f64], dout: &[f64], dx: Option<&mut [f64]>) {
        g[self.w].add_outer(dout, x);
        for (gb, d) in g[self.b].data_mut().iter_mut().zip(dout) {
            *gb += d;
        }
        if let Some(dx) = dx {
            p[self.w].matvec_t_add(dout, dx);
        }
    }
}
