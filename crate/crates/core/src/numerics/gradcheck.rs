use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Matrix, ParamSet};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// `name[index]` of the worst coordinate.
    pub worst: String,
    /// Analytic and numeric derivative at the worst coordinate.
    pub worst_pair: (f64, f64),
    pub coordinates_checked: usize,
}

/// Compares an analytic gradient against central differences.
///
/// `loss_and_grad` must return the loss at the current parameter values and
/// accumulate its gradient into the parameter set's gradient slots (which are
/// zeroed before every call). At most `max_coords_per_param` coordinates of
/// each tensor are perturbed, chosen with `seed`; `None` checks all of them.
///
/// The error for one coordinate is
/// `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn grad_check<F>(
    params: &mut ParamSet,
    epsilon: f64,
    max_coords_per_param: Option<usize>,
    seed: u64,
    mut loss_and_grad: F,
) -> Result<GradCheckReport>
where
    F: FnMut(&mut ParamSet) -> Result<f64>,
{
    if !(1e-6..=1e-3).contains(&epsilon) {
        return Err(Error::invalid(format!("epsilon {epsilon} outside [1e-6, 1e-3]")));
    }
    params.zero_grads();
    let base = loss_and_grad(params)?;
    if !base.is_finite() {
        return Err(Error::NonFiniteLoss(format!("{base}")));
    }
    let analytic: Vec<Matrix> = params.grads().iter().cloned().collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst: String::new(),
        worst_pair: (0.0, 0.0),
        coordinates_checked: 0,
    };
    let ids: Vec<_> = params.ids().collect();
    for id in ids {
        let n = params.values()[id].len();
        let coords: Vec<usize> = match max_coords_per_param {
            Some(k) if k < n => sample(&mut rng, n, k).into_vec(),
            _ => (0..n).collect(),
        };
        for k in coords {
            let orig = params.values()[id].data()[k];

            params.values_mut()[id].data_mut()[k] = orig + epsilon;
            params.zero_grads();
            let plus = loss_and_grad(params)?;
            params.values_mut()[id].data_mut()[k] = orig - epsilon;
            params.zero_grads();
            let minus = loss_and_grad(params)?;
            params.values_mut()[id].data_mut()[k] = orig;

            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::NonFiniteLoss(format!("perturbing {}[{k}]", params.name(id))));
            }
            let numeric = (plus - minus) / (2.0 * epsilon);
            let a = analytic[id.index()].data()[k];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            report.coordinates_checked += 1;
            if rel > report.max_relative_error {
                report.max_relative_error = rel;
                report.worst = format!("{}[{k}]", params.name(id));
                report.worst_pair = (a, numeric);
            }
        }
    }
    // leave the analytic gradient in place for the caller
    params.zero_grads();
    for (slot, g) in params.grads_mut().iter_mut().zip(&analytic) {
        slot.data_mut().copy_from_slice(g.data());
    }
    Ok(report)
}
