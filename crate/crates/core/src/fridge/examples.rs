use serde::{Deserialize, Serialize};

use super::sim::{FridgeTrace, EVENT_CAP_S};
use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Minutes of history fed to the predictor at the default 60 s interval.
pub const DEFAULT_WINDOW: usize = 30;

/// Features per window row: temperature and compressor state.
pub const WINDOW_FEATURES: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefrostExample {
    pub fridge_id: String,
    pub switch_off_s: f64,
    pub lead_s: f64,
    /// Time of the last window row.
    pub window_end_s: f64,
    /// `window x 2`: temperature (°C) and compressor state (0/1).
    pub window: Matrix,
    /// Seconds from switch-off to the interpolated threshold crossing.
    pub label_s: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionCounts {
    pub examples: usize,
    /// Off-segments whose recorded temperature never crossed the threshold
    /// within the event cap.
    pub no_crossing: usize,
    /// Off-segments starting at or above the threshold.
    pub already_above: usize,
    /// Off-segments without enough history for a full window.
    pub short_history: usize,
}

/// Seconds from sample `start` to the first recorded upward threshold
/// crossing while the compressor stays off, interpolating linearly between
/// samples. `None` if the temperature already starts above the threshold,
/// the compressor comes back on first, or the crossing exceeds the cap.
pub fn time_to_threshold(trace: &FridgeTrace, start: usize) -> Option<f64> {
    let thr = trace.threshold_c;
    let temps = &trace.temperature_c;
    if temps[start] >= thr {
        return None;
    }
    let mut j = start + 1;
    while j < trace.len() && !trace.compressor[j - 1] {
        if temps[j] >= thr && temps[j - 1] < thr {
            let frac = (thr - temps[j - 1]) / (temps[j] - temps[j - 1]);
            let label = ((j - 1 - start) as f64 + frac) * trace.interval_s;
            return (label <= EVENT_CAP_S).then_some(label);
        }
        j += 1;
    }
    None
}

/// One example per forced switch-off (a run of `defrost` samples). The
/// window holds `window` samples ending `lead_s` before the switch-off;
/// `lead_s` must be a whole number of intervals.
pub fn extract_examples(
    trace: &FridgeTrace,
    lead_s: f64,
    window: usize,
) -> Result<(Vec<DefrostExample>, ExtractionCounts)> {
    if window == 0 {
        return Err(Error::invalid("window must be at least one sample"));
    }
    let steps = lead_s / trace.interval_s;
    if !(lead_s >= 0.0) || (steps - steps.round()).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "lead {lead_s} s is not a whole number of {} s intervals",
            trace.interval_s
        )));
    }
    let lead = steps.round() as usize;
    let mut examples = Vec::new();
    let mut counts = ExtractionCounts::default();
    for s in 0..trace.len() {
        let starts = trace.defrost[s] && (s == 0 || !trace.defrost[s - 1]);
        if !starts {
            continue;
        }
        if trace.temperature_c[s] >= trace.threshold_c {
            counts.already_above += 1;
            continue;
        }
        let Some(label) = time_to_threshold(trace, s) else {
            counts.no_crossing += 1;
            continue;
        };
        if s < lead + window - 1 {
            counts.short_history += 1;
            continue;
        }
        let end = s - lead;
        let begin = end + 1 - window;
        let mut m = Matrix::zeros(window, WINDOW_FEATURES);
        for (r, k) in (begin..=end).enumerate() {
            m.set(r, 0, trace.temperature_c[k]);
            m.set(r, 1, if trace.compressor[k] { 1.0 } else { 0.0 });
        }
        examples.push(DefrostExample {
            fridge_id: trace.fridge_id.clone(),
            switch_off_s: trace.timestamps_s[s],
            lead_s,
            window_end_s: trace.timestamps_s[end],
            window: m,
            label_s: label,
        });
    }
    counts.examples = examples.len();
    Ok((examples, counts))
}
