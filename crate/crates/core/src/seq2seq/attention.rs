use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{softmax, xavier_uniform, Matrix, ParamId, ParamSet, Tensors};

/// Additive alignment: `score_t = v . tanh(W_h h_t + W_q q)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attention {
    pub w_hidden: ParamId,
    pub w_query: ParamId,
    pub v: ParamId,
    pub hidden_size: usize,
    pub query_size: usize,
    pub align_size: usize,
}

/// Result of one attention read.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionOutput {
    pub context: Vec<f64>,
    pub weights: Vec<f64>,
    /// `tanh(W_h h_t + W_q q)`, one row per step.
    activations: Matrix,
}

impl Attention {
    pub fn new<R: Rng + ?Sized>(
        params: &mut ParamSet,
        name: &str,
        hidden_size: usize,
        query_size: usize,
        align_size: usize,
        rng: &mut R,
    ) -> Self {
        let w_hidden = params.add(
            format!("{name}.w_hidden"),
            xavier_uniform(align_size, hidden_size, hidden_size, align_size, rng),
        );
        let w_query = params.add(
            format!("{name}.w_query"),
            xavier_uniform(align_size, query_size, query_size, align_size, rng),
        );
        let v = params.add(format!("{name}.v"), xavier_uniform(align_size, 1, align_size, 1, rng));
        Attention {
            w_hidden,
            w_query,
            v,
            hidden_size,
            query_size,
            align_size,
        }
    }

    pub fn forward(&self, p: &Tensors, hidden: &Matrix, query: &[f64]) -> Result<AttentionOutput> {
        if hidden.rows() == 0 {
            return Err(Error::InsufficientData("attention over an empty sequence".into()));
        }
        if hidden.cols() != self.hidden_size || query.len() != self.query_size {
            return Err(Error::shape(format!(
                "attention expects hidden width {} and query {}, got {} and {}",
                self.hidden_size,
                self.query_size,
                hidden.cols(),
                query.len()
            )));
        }
        let steps = hidden.rows();
        let mut q_proj = vec![0.0; self.align_size];
        p[self.w_query].matvec_add(query, &mut q_proj);
        let v = p[self.v].data();
        let mut activations = Matrix::zeros(steps, self.align_size);
        let mut scores = vec![0.0; steps];
        for t in 0..steps {
            let u = activations.row_mut(t);
            u.copy_from_slice(&q_proj);
            p[self.w_hidden].matvec_add(hidden.row(t), u);
            u.iter_mut().for_each(|x| *x = x.tanh());
            scores[t] = u.iter().zip(v).map(|(a, b)| a * b).sum();
        }
        let weights = softmax(&scores);
        let mut context = vec![0.0; self.hidden_size];
        for (t, &a) in weights.iter().enumerate() {
            for (c, h) in context.iter_mut().zip(hidden.row(t)) {
                *c += a * h;
            }
        }
        Ok(AttentionOutput {
            context,
            weights,
            activations,
        })
    }

    /// Accumulates parameter gradients for a gradient `d_context` on the
    /// context vector. Adds into `d_hidden` (per step) and `d_query`.
    #[allow(clippy::too_many_arguments)]
    pub fn backward(
        &self,
        p: &Tensors,
        g: &mut Tensors,
        hidden: &Matrix,
        query: &[f64],
        out: &AttentionOutput,
        d_context: &[f64],
        d_hidden: &mut Matrix,
        d_query: &mut [f64],
    ) {
        let steps = hidden.rows();
        let d_weight: Vec<f64> = (0..steps)
            .map(|t| hidden.row(t).iter().zip(d_context).map(|(h, d)| h * d).sum())
            .collect();
        let mean: f64 = out.weights.iter().zip(&d_weight).map(|(a, d)| a * d).sum();
        let v = p[self.v].data().to_vec();
        let mut dz_sum = vec![0.0; self.align_size];
        let mut dz = vec![0.0; self.align_size];
        for t in 0..steps {
            let a = out.weights[t];
            for (dh, dc) in d_hidden.row_mut(t).iter_mut().zip(d_context) {
                *dh += a * dc;
            }
            let d_score = a * (d_weight[t] - mean);
            let u = out.activations.row(t);
            for (gv, ui) in g[self.v].data_mut().iter_mut().zip(u) {
                *gv += d_score * ui;
            }
            for k in 0..self.align_size {
                dz[k] = d_score * v[k] * (1.0 - u[k] * u[k]);
                dz_sum[k] += dz[k];
            }
            g[self.w_hidden].add_outer(&dz, hidden.row(t));
            p[self.w_hidden].matvec_t_add(&dz, d_hidden.row_mut(t));
        }
        g[self.w_query].add_outer(&dz_sum, query);
        p[self.w_query].matvec_t_add(&dz_sum, d_query);
    }
}

/// Context vector and weights of `hidden` read with `query`.
pub fn attention_context(
    attention: &Attention,
    p: &Tensors,
    hidden: &Matrix,
    query: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let out = attention.forward(p, hidden, query)?;
    Ok((out.context, out.weights))
}
