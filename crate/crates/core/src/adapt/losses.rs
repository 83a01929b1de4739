use log::warn;

use crate::error::{Error, Result};
use crate::numerics::{softmax, squared_distance, Matrix};

/// Multipliers applied to the median-heuristic bandwidth.
pub const DEFAULT_BANDWIDTH_SCALES: [f64; 3] = [0.5, 1.0, 2.0];

/// Median pairwise Euclidean distance over the pooled rows of both batches;
/// 1 when every pair coincides.
pub fn median_bandwidth(source: &Matrix, target: &Matrix) -> f64 {
    let rows: Vec<&[f64]> = source.iter_rows().chain(target.iter_rows()).collect();
    let mut d2 = Vec::with_capacity(rows.len() * rows.len().saturating_sub(1) / 2);
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            d2.push(squared_distance(rows[i], rows[j]));
        }
    }
    if d2.is_empty() {
        return 1.0;
    }
    let mid = d2.len() / 2;
    let (_, m, _) = d2.select_nth_unstable_by(mid, f64::total_cmp);
    let sigma = m.sqrt();
    if sigma > 0.0 && sigma.is_finite() {
        sigma
    } else {
        1.0
    }
}

/// Median-heuristic bandwidth times each of `scales`.
pub fn heuristic_bandwidths(source: &Matrix, target: &Matrix, scales: &[f64]) -> Vec<f64> {
    let sigma = median_bandwidth(source, target);
    scales.iter().map(|s| s * sigma).collect()
}

fn check_pair(source: &Matrix, target: &Matrix) -> Result<()> {
    if source.rows() == 0 || target.rows() == 0 {
        return Err(Error::InsufficientData("empty feature batch".into()));
    }
    if source.cols() != target.cols() {
        return Err(Error::shape(format!(
            "feature dimensions differ: {} vs {}",
            source.cols(),
            target.cols()
        )));
    }
    Ok(())
}

/// Mean of RBF kernels `exp(-|x-y|^2 / (2 s^2))`; adds `coef * dk/dx` into
/// `dx` and `-coef * dk/dx` into `dy` when given.
fn kernel(x: &[f64], y: &[f64], inv_two_s2: &[f64], grad: Option<(f64, &mut [f64], &mut [f64])>) -> f64 {
    let d2 = squared_distance(x, y);
    let b = inv_two_s2.len() as f64;
    let mut k = 0.0;
    let mut dk_dd2 = 0.0;
    for &c in inv_two_s2 {
        let e = (-d2 * c).exp();
        k += e;
        dk_dd2 -= c * e;
    }
    if let Some((coef, dx, dy)) = grad {
        // d(d2)/dx = 2 (x - y)
        let s = coef * 2.0 * dk_dd2 / b;
        for ((gx, gy), (a, c)) in dx.iter_mut().zip(dy.iter_mut()).zip(x.iter().zip(y)) {
            let v = s * (a - c);
            *gx += v;
            *gy -= v;
        }
    }
    k / b
}

/// Squared MMD and its gradient with respect to both batches.
///
/// Uses the unbiased estimator unless a batch has a single row, in which case
/// the biased one is used. Negative estimates are clamped to zero, with zero
/// gradient.
pub(crate) fn mmd_grad(source: &Matrix, target: &Matrix, bandwidths: &[f64]) -> Result<(f64, Matrix, Matrix, bool)> {
    check_pair(source, target)?;
    if bandwidths.is_empty() || bandwidths.iter().any(|b| !(*b > 0.0 && b.is_finite())) {
        return Err(Error::invalid("bandwidths must be positive"));
    }
    let inv: Vec<f64> = bandwidths.iter().map(|b| 1.0 / (2.0 * b * b)).collect();
    let (m, n) = (source.rows(), target.rows());
    let unbiased = m >= 2 && n >= 2;
    let mut ds = Matrix::zeros(m, source.cols());
    let mut dt = Matrix::zeros(n, target.cols());

    let within = |x: &Matrix, dx: &mut Matrix| -> f64 {
        let r = x.rows();
        let norm = if unbiased { (r * (r - 1)) as f64 } else { (r * r) as f64 };
        let mut sum = if unbiased { 0.0 } else { r as f64 };
        // Each unordered pair appears twice in the double sum.
        let coef = 2.0 / norm;
        let mut gi = vec![0.0; x.cols()];
        let mut gj = vec![0.0; x.cols()];
        for i in 0..r {
            for j in i + 1..r {
                gi.fill(0.0);
                gj.fill(0.0);
                sum += 2.0 * kernel(x.row(i), x.row(j), &inv, Some((coef, &mut gi, &mut gj)));
                for (a, v) in dx.row_mut(i).iter_mut().zip(&gi) {
                    *a += v;
                }
                for (a, v) in dx.row_mut(j).iter_mut().zip(&gj) {
                    *a += v;
                }
            }
        }
        sum / norm
    };
    let ss = within(source, &mut ds);
    let tt = within(target, &mut dt);
    let coef = -2.0 / (m * n) as f64;
    let mut st = 0.0;
    for i in 0..m {
        for j in 0..n {
            st += kernel(
                source.row(i),
                target.row(j),
                &inv,
                Some((coef, ds.row_mut(i), dt.row_mut(j))),
            );
        }
    }
    let value = ss + tt - 2.0 * st / (m * n) as f64;
    if value <= 0.0 {
        ds.fill(0.0);
        dt.fill(0.0);
        return Ok((0.0, ds, dt, unbiased));
    }
    Ok((value, ds, dt, unbiased))
}

/// Squared maximum mean discrepancy with a mean of RBF kernels.
///
/// `bandwidths` defaults to the median heuristic times 0.5, 1 and 2.
pub fn mmd(source: &Matrix, target: &Matrix, bandwidths: Option<&[f64]>) -> Result<f64> {
    check_pair(source, target)?;
    let owned;
    let bw = match bandwidths {
        Some(b) => b,
        None => {
            owned = heuristic_bandwidths(source, target, &DEFAULT_BANDWIDTH_SCALES);
            &owned
        }
    };
    let (value, _, _, unbiased) = mmd_grad(source, target, bw)?;
    if !unbiased {
        warn!("single-sample batch: using the biased MMD estimator");
    }
    Ok(value)
}

fn covariance(x: &Matrix) -> (Matrix, Matrix) {
    let (n, d) = x.shape();
    let mut mean = vec![0.0; d];
    for row in x.iter_rows() {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut centered = x.clone();
    for r in 0..n {
        for (v, m) in centered.row_mut(r).iter_mut().zip(&mean) {
            *v -= m;
        }
    }
    let mut cov = Matrix::zeros(d, d);
    for row in centered.iter_rows() {
        cov.add_outer(row, row);
    }
    cov.scale(1.0 / (n - 1) as f64);
    (cov, centered)
}

/// CORAL loss and gradients with respect to both batches.
pub(crate) fn coral_grad(source: &Matrix, target: &Matrix) -> Result<(f64, Matrix, Matrix)> {
    check_pair(source, target)?;
    if source.rows() < 2 || target.rows() < 2 {
        return Err(Error::InsufficientData(
            "CORAL needs at least two samples per batch".into(),
        ));
    }
    let d = source.cols() as f64;
    let (cs, xs) = covariance(source);
    let (ct, xt) = covariance(target);
    let mut diff = cs;
    diff.add_scaled(&ct, -1.0);
    let scale = 1.0 / (4.0 * d * d);
    let value = scale * diff.norm_sq();
    // dL/dC_s = 2 scale (C_s - C_t); dL/dX = 2 (X - mean) dL/dC / (n - 1).
    let grad_of = |centered: &Matrix, sign: f64| -> Matrix {
        let k = sign * 4.0 * scale / (centered.rows() - 1) as f64;
        let mut g = centered.matmul(&diff).expect("d x d");
        g.scale(k);
        g
    };
    Ok((value, grad_of(&xs, 1.0), grad_of(&xt, -1.0)))
}

/// Squared Frobenius distance between the batch covariances over `4 d^2`.
pub fn coral(source: &Matrix, target: &Matrix) -> Result<f64> {
    Ok(coral_grad(source, target)?.0)
}

fn check_stochastic(outputs: &[Matrix]) -> Result<()> {
    let shape = outputs[0].shape();
    for (k, p) in outputs.iter().enumerate() {
        if p.shape() != shape {
            return Err(Error::shape(format!("classifier {k} output shape differs")));
        }
        for row in p.iter_rows() {
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-9 || row.iter().any(|v| *v < 0.0) {
                return Err(Error::invalid(format!("classifier {k} output is not row-stochastic")));
            }
        }
    }
    Ok(())
}

/// Mean pairwise L1 distance and its gradient with respect to each output.
pub(crate) fn class_discrepancy_grad(outputs: &[Matrix]) -> (f64, Vec<Matrix>) {
    let mut grads: Vec<Matrix> = outputs.iter().map(|p| Matrix::zeros(p.rows(), p.cols())).collect();
    let k = outputs.len();
    if k < 2 || outputs[0].rows() == 0 {
        return (0.0, grads);
    }
    let pairs = (k * (k - 1) / 2) as f64;
    let norm = pairs * outputs[0].rows() as f64;
    let mut total = 0.0;
    for a in 0..k {
        for b in a + 1..k {
            for (i, (pa, pb)) in outputs[a].data().iter().zip(outputs[b].data()).enumerate() {
                let diff = pa - pb;
                total += diff.abs();
                let s = if diff > 0.0 {
                    1.0
                } else if diff < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                grads[a].data_mut()[i] += s / norm;
                grads[b].data_mut()[i] -= s / norm;
            }
        }
    }
    (total / norm, grads)
}

/// Mean over classifier pairs and samples of the L1 distance between their
/// probability rows. A single classifier yields zero.
pub fn class_discrepancy(outputs: &[Matrix]) -> Result<f64> {
    if outputs.is_empty() {
        return Err(Error::invalid("no classifier outputs"));
    }
    check_stochastic(outputs)?;
    if outputs.len() == 1 {
        warn!("class discrepancy with a single classifier is zero");
    }
    Ok(class_discrepancy_grad(outputs).0)
}

/// Mean cross-entropy of softmax(logits) against `labels`, and its gradient
/// with respect to the logits.
pub(crate) fn cross_entropy_grad(logits: &Matrix, labels: &[usize]) -> (f64, Matrix) {
    let n = logits.rows() as f64;
    let mut grad = Matrix::zeros(logits.rows(), logits.cols());
    let mut loss = 0.0;
    for (r, &y) in labels.iter().enumerate() {
        let p = softmax(logits.row(r));
        loss -= p[y].max(f64::MIN_POSITIVE).ln();
        for (c, (g, pc)) in grad.row_mut(r).iter_mut().zip(&p).enumerate() {
            *g = (pc - if c == y { 1.0 } else { 0.0 }) / n;
        }
    }
    (loss / n, grad)
}
