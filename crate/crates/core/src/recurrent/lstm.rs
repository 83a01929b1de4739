use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{sigmoid, xavier_uniform, Matrix, ParamId, ParamSet, Tensors};

/// Vanilla LSTM layer (no peepholes). Gate blocks are stacked in the order
/// forget, input, candidate, output, each `hidden_size` rows tall.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LstmLayer {
    pub w_x: ParamId,
    pub w_h: ParamId,
    pub b: ParamId,
    pub input_size: usize,
    pub hidden_size: usize,
}

/// Gate pre-activations and activations of one step.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmStep {
    pub forget: Vec<f64>,
    pub input: Vec<f64>,
    pub candidate: Vec<f64>,
    pub output: Vec<f64>,
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl LstmLayer {
    /// Glorot-uniform weights per gate block, zero biases except the forget
    /// gate, which starts at +1.
    pub fn new<R: Rng + ?Sized>(
        params: &mut ParamSet,
        name: &str,
        input_size: usize,
        hidden_size: usize,
        rng: &mut R,
    ) -> Self {
        assert!(hidden_size > 0 && input_size > 0);
        let h4 = 4 * hidden_size;
        let w_x = params.add(
            format!("{name}.w_x"),
            xavier_uniform(h4, input_size, input_size, hidden_size, rng),
        );
        let w_h = params.add(
            format!("{name}.w_h"),
            xavier_uniform(h4, hidden_size, hidden_size, hidden_size, rng),
        );
        let mut bias = Matrix::zeros(h4, 1);
        bias.data_mut()[..hidden_size].fill(1.0);
        let b = params.add(format!("{name}.b"), bias);
        LstmLayer {
            w_x,
            w_h,
            b,
            input_size,
            hidden_size,
        }
    }

    /// Activated gates `[f, i, g, o]` into `gates`, new cell into `c`, its
    /// tanh into `tanh_c` and the new hidden state into `h`.
    #[inline]
    fn step_into(
        &self,
        p: &Tensors,
        x: &[f64],
        h_prev: &[f64],
        c_prev: &[f64],
        gates: &mut [f64],
        c: &mut [f64],
        tanh_c: &mut [f64],
        h: &mut [f64],
    ) {
        let n = self.hidden_size;
        gates.copy_from_slice(p[self.b].data());
        p[self.w_x].matvec_add(x, gates);
        p[self.w_h].matvec_add(h_prev, gates);
        let (fi, go) = gates.split_at_mut(2 * n);
        let (f, i) = fi.split_at_mut(n);
        let (g, o) = go.split_at_mut(n);
        for k in 0..n {
            f[k] = sigmoid(f[k]);
            i[k] = sigmoid(i[k]);
            g[k] = g[k].tanh();
            o[k] = sigmoid(o[k]);
            c[k] = f[k] * c_prev[k] + i[k] * g[k];
            tanh_c[k] = c[k].tanh();
            h[k] = o[k] * tanh_c[k];
        }
    }

    /// One recurrence step `f, i, o = sigmoid(.)`, `g = tanh(.)`,
    /// `c' = f*c + i*g`, `h' = o*tanh(c')`.
    pub fn step(&self, p: &Tensors, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> Result<LstmStep> {
        if x.len() != self.input_size {
            return Err(Error::shape(format!(
                "LSTM input has {} features, layer expects {}",
                x.len(),
                self.input_size
            )));
        }
        if h_prev.len() != self.hidden_size || c_prev.len() != self.hidden_size {
            return Err(Error::shape("LSTM state size mismatch"));
        }
        let n = self.hidden_size;
        let mut gates = vec![0.0; 4 * n];
        let mut c = vec![0.0; n];
        let mut tanh_c = vec![0.0; n];
        let mut h = vec![0.0; n];
        self.step_into(p, x, h_prev, c_prev, &mut gates, &mut c, &mut tanh_c, &mut h);
        Ok(LstmStep {
            forget: gates[..n].to_vec(),
            input: gates[n..2 * n].to_vec(),
            candidate: gates[2 * n..3 * n].to_vec(),
            output: gates[3 * n..].to_vec(),
            h,
            c,
        })
    }

    fn forward_sequence(&self, p: &Tensors, xs: &Matrix, h0: &[f64], c0: &[f64]) -> LayerCache {
        let t_len = xs.rows();
        let n = self.hidden_size;
        let mut cache = LayerCache {
            xs: xs.clone(),
            h: Matrix::zeros(t_len + 1, n),
            c: Matrix::zeros(t_len + 1, n),
            gates: Matrix::zeros(t_len, 4 * n),
            tanh_c: Matrix::zeros(t_len, n),
        };
        cache.h.row_mut(0).copy_from_slice(h0);
        cache.c.row_mut(0).copy_from_slice(c0);
        let (mut h_buf, mut c_buf) = (vec![0.0; n], vec![0.0; n]);
        for t in 0..t_len {
            self.step_into(
                p,
                xs.row(t),
                cache.h.row(t),
                cache.c.row(t),
                cache.gates.row_mut(t),
                &mut c_buf,
                cache.tanh_c.row_mut(t),
                &mut h_buf,
            );
            cache.h.row_mut(t + 1).copy_from_slice(&h_buf);
            cache.c.row_mut(t + 1).copy_from_slice(&c_buf);
        }
        cache
    }

    /// Backpropagation through time for one layer.
    ///
    /// `dh_out` holds the gradient arriving at every emitted hidden state;
    /// `dh_final`/`dc_final` the gradient on the final state from outside the
    /// sequence. Returns the input gradients and the initial-state gradients.
    fn backward_sequence(
        &self,
        p: &Tensors,
        g: &mut Tensors,
        cache: &LayerCache,
        dh_out: &Matrix,
        dh_final: &[f64],
        dc_final: &[f64],
    ) -> (Matrix, Vec<f64>, Vec<f64>) {
        let n = self.hidden_size;
        let t_len = cache.xs.rows();
        let mut dx = Matrix::zeros(t_len, self.input_size);
        let mut dh_next = dh_final.to_vec();
        let mut dc_next = dc_final.to_vec();
        let mut dz = vec![0.0; 4 * n];
        for t in (0..t_len).rev() {
            let gates = cache.gates.row(t);
            let (f, i, gg, o) = (&gates[..n], &gates[n..2 * n], &gates[2 * n..3 * n], &gates[3 * n..]);
            let tc = cache.tanh_c.row(t);
            let c_prev = cache.c.row(t);
            let dh_row = dh_out.row(t);
            for k in 0..n {
                let dh = dh_row[k] + dh_next[k];
                let d_o = dh * tc[k];
                let dc = dc_next[k] + dh * o[k] * (1.0 - tc[k] * tc[k]);
                dz[k] = dc * c_prev[k] * f[k] * (1.0 - f[k]);
                dz[n + k] = dc * gg[k] * i[k] * (1.0 - i[k]);
                dz[2 * n + k] = dc * i[k] * (1.0 - gg[k] * gg[k]);
                dz[3 * n + k] = d_o * o[k] * (1.0 - o[k]);
                dc_next[k] = dc * f[k];
            }
            g[self.w_x].add_outer(&dz, cache.xs.row(t));
            g[self.w_h].add_outer(&dz, cache.h.row(t));
            for (gb, d) in g[self.b].data_mut().iter_mut().zip(&dz) {
                *gb += d;
            }
            p[self.w_x].matvec_t_add(&dz, dx.row_mut(t));
            dh_next.fill(0.0);
            p[self.w_h].matvec_t_add(&dz, &mut dh_next);
        }
        (dx, dh_next, dc_next)
    }
}

/// Per-layer hidden and cell vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub h: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
}

impl LstmState {
    pub fn zeros(sizes: &[usize]) -> Self {
        LstmState {
            h: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            c: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }
}

#[derive(Debug, Clone)]
struct LayerCache {
    xs: Matrix,
    /// Row 0 is the initial state, row `t + 1` the state after step `t`.
    h: Matrix,
    c: Matrix,
    gates: Matrix,
    tanh_c: Matrix,
}

/// Everything the backward pass of a stack needs.
#[derive(Debug, Clone)]
pub struct StackCache {
    layers: Vec<LayerCache>,
}

impl StackCache {
    pub fn steps(&self) -> usize {
        self.layers[0].xs.rows()
    }

    /// Top-layer hidden state after step `t`.
    pub fn top_hidden(&self, t: usize) -> &[f64] {
        self.layers.last().expect("nonempty stack").h.row(t + 1)
    }

    /// Top-layer hidden states, one row per step.
    pub fn top_sequence(&self) -> Matrix {
        let top = &self.layers.last().expect("nonempty stack").h;
        let (rows, cols) = top.shape();
        Matrix::from_vec(rows - 1, cols, top.data()[cols..].to_vec()).expect("shape by construction")
    }

    pub fn final_state(&self) -> LstmState {
        let t = self.steps();
        LstmState {
            h: self.layers.iter().map(|l| l.h.row(t).to_vec()).collect(),
            c: self.layers.iter().map(|l| l.c.row(t).to_vec()).collect(),
        }
    }
}

/// Output of [`LstmStack::sequence`].
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceOutput {
    pub hidden: Matrix,
    pub final_state: LstmState,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LstmStack {
    pub layers: Vec<LstmLayer>,
}

impl LstmStack {
    pub fn new<R: Rng + ?Sized>(
        params: &mut ParamSet,
        name: &str,
        input_size: usize,
        hidden_sizes: &[usize],
        rng: &mut R,
    ) -> Self {
        assert!(!hidden_sizes.is_empty(), "LSTM stack needs at least one layer");
        let mut layers = Vec::with_capacity(hidden_sizes.len());
        let mut fan_in = input_size;
        for (l, &h) in hidden_sizes.iter().enumerate() {
            layers.push(LstmLayer::new(params, &format!("{name}.l{l}"), fan_in, h, rng));
            fan_in = h;
        }
        LstmStack { layers }
    }

    pub fn input_size(&self) -> usize {
        self.layers[0].input_size
    }

    pub fn output_size(&self) -> usize {
        self.layers.last().map_or(0, |l| l.hidden_size)
    }

    pub fn hidden_sizes(&self) -> Vec<usize> {
        self.layers.iter().map(|l| l.hidden_size).collect()
    }

    fn validate(&self, inputs: &Matrix, init: Option<&LstmState>) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::invalid("empty LSTM stack"));
        }
        for pair in self.layers.windows(2) {
            if pair[1].input_size != pair[0].hidden_size {
                return Err(Error::shape("LSTM stack layer sizes do not chain"));
            }
        }
        if inputs.rows() == 0 {
            return Err(Error::InsufficientData("empty input window".into()));
        }
        if inputs.cols() != self.input_size() {
            return Err(Error::shape(format!(
                "window has {} features, stack expects {}",
                inputs.cols(),
                self.input_size()
            )));
        }
        if let Some(s) = init {
            let sizes = self.hidden_sizes();
            let ok = s.h.len() == sizes.len()
                && s.c.len() == sizes.len()
                && s.h
                    .iter()
                    .zip(&s.c)
                    .zip(&sizes)
                    .all(|((h, c), &n)| h.len() == n && c.len() == n);
            if !ok {
                return Err(Error::shape("initial state does not match stack sizes"));
            }
        }
        Ok(())
    }

    pub fn forward(&self, p: &Tensors, inputs: &Matrix, init: Option<&LstmState>) -> Result<StackCache> {
        self.validate(inputs, init)?;
        let mut layers: Vec<LayerCache> = Vec::with_capacity(self.layers.len());
        for (l, layer) in self.layers.iter().enumerate() {
            let zeros = vec![0.0; layer.hidden_size];
            let (h0, c0) = match init {
                Some(s) => (s.h[l].as_slice(), s.c[l].as_slice()),
                None => (zeros.as_slice(), zeros.as_slice()),
            };
            let cache = match layers.last() {
                None => layer.forward_sequence(p, inputs, h0, c0),
                Some(below) => {
                    let (rows, cols) = below.h.shape();
                    let xs = Matrix::from_vec(rows - 1, cols, below.h.data()[cols..].to_vec())
                        .expect("shape by construction");
                    layer.forward_sequence(p, &xs, h0, c0)
                }
            };
            layers.push(cache);
        }
        Ok(StackCache { layers })
    }

    /// Full top-layer hidden sequence plus every layer's final state.
    pub fn sequence(&self, p: &Tensors, inputs: &Matrix) -> Result<SequenceOutput> {
        let cache = self.forward(p, inputs, None)?;
        Ok(SequenceOutput {
            hidden: cache.top_sequence(),
            final_state: cache.final_state(),
        })
    }

    /// Accumulates parameter gradients. `d_top` is the gradient on every
    /// top-layer hidden output, `d_final` an optional gradient on the final
    /// state of each layer. Returns the input gradient and the gradient on the
    /// initial state.
    pub fn backward(
        &self,
        p: &Tensors,
        g: &mut Tensors,
        cache: &StackCache,
        d_top: &Matrix,
        d_final: Option<&LstmState>,
    ) -> (Matrix, LstmState) {
        let n_layers = self.layers.len();
        let mut d_init = LstmState::zeros(&self.hidden_sizes());
        let mut d_out = d_top.clone();
        for l in (0..n_layers).rev() {
            let layer = &self.layers[l];
            let zeros = vec![0.0; layer.hidden_size];
            let (dh_f, dc_f) = match d_final {
                Some(s) => (s.h[l].as_slice(), s.c[l].as_slice()),
                None => (zeros.as_slice(), zeros.as_slice()),
            };
            let (dx, dh0, dc0) = layer.backward_sequence(p, g, &cache.layers[l], &d_out, dh_f, dc_f);
            d_init.h[l] = dh0;
            d_init.c[l] = dc0;
            d_out = dx;
        }
        (d_out, d_init)
    }
}
