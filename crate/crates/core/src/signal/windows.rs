use std::fmt;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use super::normalize::leading_rows;
use super::TimeSeriesFrame;
use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Forecast horizon. Two and three steps are 6- and 12-hour-ahead single-point
/// predictions, not iterated rollouts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Horizon {
    OneStep,
    TwoStep,
    ThreeStep,
}

impl Horizon {
    pub const ALL: [Horizon; 3] = [Horizon::OneStep, Horizon::TwoStep, Horizon::ThreeStep];

    /// Hours between the last input row and the predicted row.
    pub fn lead(self) -> usize {
        match self {
            Horizon::OneStep => 1,
            Horizon::TwoStep => 6,
            Horizon::ThreeStep => 12,
        }
    }

    pub fn steps(self) -> usize {
        match self {
            Horizon::OneStep => 1,
            Horizon::TwoStep => 2,
            Horizon::ThreeStep => 3,
        }
    }

    pub fn from_steps(steps: usize) -> Result<Self> {
        match steps {
            1 => Ok(Horizon::OneStep),
            2 => Ok(Horizon::TwoStep),
            3 => Ok(Horizon::ThreeStep),
            other => Err(Error::invalid(format!("horizon steps must be 1, 2 or 3, got {other}"))),
        }
    }
}

impl fmt::Display for Horizon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Horizon::OneStep => f.write_str("one_step"),
            Horizon::TwoStep => f.write_str("two_step"),
            Horizon::ThreeStep => f.write_str("three_step"),
        }
    }
}

/// One supervised pair: a `(window x features)` input and the target value
/// `lead` rows after the last input row.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub input: Matrix,
    pub target: f64,
    pub input_start: NaiveDateTime,
    pub input_end: NaiveDateTime,
    pub target_time: NaiveDateTime,
}

/// All windows of a frame, `len - window - lead + 1` of them, in order.
pub fn make_windows(frame: &TimeSeriesFrame, window: usize, lead: usize) -> Result<Vec<Sample>> {
    if window == 0 || lead == 0 {
        return Err(Error::invalid("window and lead must be >= 1"));
    }
    if frame.len() < window + lead {
        return Err(Error::InsufficientData(format!(
            "{} rows cannot hold a window of {window} plus lead {lead}",
            frame.len()
        )));
    }
    let features = frame.num_features();
    let count = frame.len() - window - lead + 1;
    let ts = frame.timestamps();
    Ok((0..count)
        .map(|start| {
            let mut input = Matrix::zeros(window, features);
            for r in 0..window {
                for (j, v) in input.row_mut(r).iter_mut().enumerate() {
                    *v = frame.feature(start + r, j);
                }
            }
            let last = start + window - 1;
            Sample {
                input,
                target: frame.target()[last + lead],
                input_start: ts[start],
                input_end: ts[last],
                target_time: ts[last + lead],
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            train: 0.7,
            validation: 0.1,
            test: 0.2,
        }
    }
}

impl SplitFractions {
    pub fn validate(&self) -> Result<()> {
        let ok = [self.train, self.validation, self.test].iter().all(|f| *f > 0.0)
            && ((self.train + self.validation + self.test) - 1.0).abs() < 1e-9;
        if ok {
            Ok(())
        } else {
            Err(Error::invalid("split fractions must be positive and sum to 1"))
        }
    }

    /// Row boundaries `(end_train, end_validation)` for `n` chronological rows.
    pub fn boundaries(&self, n: usize) -> (usize, usize) {
        let a = leading_rows(n, self.train);
        let b = leading_rows(n, self.train + self.validation).max(a);
        (a, b)
    }
}

/// Chronologically split windows. Each split is windowed on its own row
/// segment, so no window or target straddles a boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedDataset {
    pub window: usize,
    pub lead: usize,
    pub train: Vec<Sample>,
    pub validation: Vec<Sample>,
    pub test: Vec<Sample>,
}

impl WindowedDataset {
    pub fn chronological(
        frame: &TimeSeriesFrame,
        window: usize,
        lead: usize,
        fractions: SplitFractions,
    ) -> Result<Self> {
        fractions.validate()?;
        let (a, b) = fractions.boundaries(frame.len());
        let segment = |range: std::ops::Range<usize>, name: &str| {
            make_windows(&frame.slice(range), window, lead).map_err(|e| match e {
                Error::InsufficientData(msg) => Error::InsufficientData(format!("{name} split: {msg}")),
                other => other,
            })
        };
        Ok(Self {
            window,
            lead,
            train: segment(0..a, "train")?,
            validation: segment(a..b, "validation")?,
            test: segment(b..frame.len(), "test")?,
        })
    }

    pub fn num_features(&self) -> usize {
        self.train.first().map_or(0, |s| s.input.cols())
    }
}
