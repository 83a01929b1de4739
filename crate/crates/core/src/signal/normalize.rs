use log::warn;
use serde::{Deserialize, Serialize};

use super::TimeSeriesFrame;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

impl Range {
    fn of(values: &[f64]) -> Self {
        let (min, max) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
        Range { min, max }
    }

    pub fn is_degenerate(&self) -> bool {
        self.max <= self.min
    }

    #[inline]
    pub fn apply(&self, v: f64) -> f64 {
        if self.is_degenerate() {
            0.0
        } else {
            (v - self.min) / (self.max - self.min)
        }
    }

    /// Inverse of [`Range::apply`]; a degenerate range maps back to its min.
    #[inline]
    pub fn invert(&self, v: f64) -> f64 {
        if self.is_degenerate() {
            self.min
        } else {
            v * (self.max - self.min) + self.min
        }
    }
}

/// Per-column minima and maxima fitted on the training rows only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizerState {
    pub channel_names: Vec<String>,
    pub channels: Vec<Range>,
    pub target_name: String,
    pub target: Range,
    pub fitted_rows: usize,
}

impl NormalizerState {
    pub fn apply(&self, frame: &TimeSeriesFrame) -> Result<TimeSeriesFrame> {
        if frame.num_channels() != self.channels.len() {
            return Err(Error::shape(format!(
                "normalizer fitted on {} channels, frame has {}",
                self.channels.len(),
                frame.num_channels()
            )));
        }
        let channels = frame
            .channels()
            .iter()
            .zip(&self.channels)
            .map(|(col, r)| col.iter().map(|&v| r.apply(v)).collect())
            .collect();
        let target = frame.target().iter().map(|&v| self.target.apply(v)).collect();
        Ok(frame.with_values(channels, target))
    }

    pub fn invert(&self, frame: &TimeSeriesFrame) -> Result<TimeSeriesFrame> {
        if frame.num_channels() != self.channels.len() {
            return Err(Error::shape("normalizer/frame channel count mismatch"));
        }
        let channels = frame
            .channels()
            .iter()
            .zip(&self.channels)
            .map(|(col, r)| col.iter().map(|&v| r.invert(v)).collect())
            .collect();
        let target = frame.target().iter().map(|&v| self.target.invert(v)).collect();
        Ok(frame.with_values(channels, target))
    }
}

/// Number of leading rows covered by `fraction` of `n`.
pub fn leading_rows(n: usize, fraction: f64) -> usize {
    ((n as f64 * fraction).round() as usize).clamp(1, n.max(1))
}

/// Fits min-max statistics on the leading `train_fraction` of rows and maps
/// every column (target included) through `(x - min) / (max - min)`.
///
/// Later rows may fall outside `[0, 1]`. A constant training column maps to
/// zeros with a warning.
pub fn fit_apply_minmax(frame: &TimeSeriesFrame, train_fraction: f64) -> Result<(TimeSeriesFrame, NormalizerState)> {
    if !(train_fraction > 0.0 && train_fraction <= 1.0) {
        return Err(Error::invalid(format!(
            "train_fraction must be in (0, 1], got {train_fraction}"
        )));
    }
    if frame.is_empty() {
        return Err(Error::InsufficientData("empty frame".into()));
    }
    let rows = leading_rows(frame.len(), train_fraction);
    let fit = |name: &str, col: &[f64]| {
        let r = Range::of(&col[..rows]);
        if r.is_degenerate() {
            warn!("column `{name}` is constant over the training rows; mapping to zeros");
        }
        r
    };
    let state = NormalizerState {
        channel_names: frame.channel_names().to_vec(),
        channels: frame
            .channel_names()
            .iter()
            .zip(frame.channels())
            .map(|(n, c)| fit(n, c))
            .collect(),
        target_name: frame.target_name().to_owned(),
        target: fit(frame.target_name(), frame.target()),
        fitted_rows: rows,
    };
    let normalized = state.apply(frame)?;
    Ok((normalized, state))
}
