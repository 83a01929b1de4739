//! Haar discrete wavelet transform and detail-zeroing denoiser.
//!
//! The transform uses the averaging normalisation: each pair `(a, b)` maps to
//! the approximation `(a + b) / 2` and the detail `(a - b) / 2`, and inverts
//! as `(s + d, s - d)`. This is the orthonormal Haar basis up to a per-level
//! scale, so zeroing details is still an orthogonal projection (onto signals
//! that are constant over dyadic blocks), and a constant pair reconstructs
//! bit-exactly, which makes the denoiser exactly idempotent.
//!
//! Odd lengths are extended by repeating the last sample before each level and
//! trimmed again on reconstruction.

use crate::error::{Error, Result};
use crate::numerics::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct HaarCoefficients {
    /// Coarsest approximation.
    pub approximation: Vec<f64>,
    /// Detail bands, finest first.
    pub details: Vec<Vec<f64>>,
    /// Signal length entering each level, finest first.
    lengths: Vec<usize>,
}

fn check_depth(len: usize, levels: usize) -> Result<()> {
    if levels == 0 {
        return Err(Error::invalid("wavelet levels must be >= 1"));
    }
    if levels >= usize::BITS as usize || len < (1usize << levels) {
        return Err(Error::invalid(format!(
            "{levels} wavelet levels need at least 2^{levels} samples, got {len}"
        )));
    }
    Ok(())
}

pub fn haar_forward(signal: &[f64], levels: usize) -> Result<HaarCoefficients> {
    check_depth(signal.len(), levels)?;
    let mut approx = signal.to_vec();
    let mut details = Vec::with_capacity(levels);
    let mut lengths = Vec::with_capacity(levels);
    for _ in 0..levels {
        lengths.push(approx.len());
        if approx.len() % 2 == 1 {
            approx.push(*approx.last().unwrap());
        }
        let (s, d): (Vec<f64>, Vec<f64>) = approx
            .chunks_exact(2)
            .map(|p| ((p[0] + p[1]) / 2.0, (p[0] - p[1]) / 2.0))
            .unzip();
        details.push(d);
        approx = s;
    }
    Ok(HaarCoefficients {
        approximation: approx,
        details,
        lengths,
    })
}

pub fn haar_inverse(coeffs: &HaarCoefficients) -> Vec<f64> {
    let mut approx = coeffs.approximation.clone();
    for (d, &len) in coeffs.details.iter().zip(&coeffs.lengths).rev() {
        let mut next = Vec::with_capacity(2 * d.len());
        for (s, d) in approx.iter().zip(d) {
            next.push(s + d);
            next.push(s - d);
        }
        next.truncate(len);
        approx = next;
    }
    approx
}

/// Removes the high-frequency component: transforms to `levels` depth, zeroes
/// every detail band and reconstructs. Output length equals input length.
pub fn wavelet_denoise(series: &[f64], levels: usize) -> Result<Vec<f64>> {
    let mut c = haar_forward(series, levels)?;
    c.details.iter_mut().for_each(|d| d.iter_mut().for_each(|v| *v = 0.0));
    Ok(haar_inverse(&c))
}

/// Denoises every column of a `(steps x features)` window independently.
pub fn denoise_columns(window: &Matrix, levels: usize) -> Result<Matrix> {
    let (rows, cols) = window.shape();
    let mut out = Matrix::zeros(rows, cols);
    let mut column = vec![0.0; rows];
    for c in 0..cols {
        for (r, v) in column.iter_mut().enumerate() {
            *v = window.get(r, c);
        }
        for (r, v) in wavelet_denoise(&column, levels)?.into_iter().enumerate() {
            out.set(r, c, v);
        }
    }
    Ok(out)
}
