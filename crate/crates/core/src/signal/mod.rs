//! Series ingestion and preprocessing: min-max scaling, Haar denoising,
//! supervised windowing and weekly-to-daily yield resampling.

mod frame;
mod normalize;
mod resample;
pub mod synthetic;
mod wavelet;
mod windows;

pub use frame::{parse_timestamp, TimeSeriesFrame, TIMESTAMP_FORMAT};
pub use normalize::{fit_apply_minmax, leading_rows, NormalizerState, Range};
pub use resample::resample_yield;
pub use wavelet::{denoise_columns, haar_forward, haar_inverse, wavelet_denoise, HaarCoefficients};
pub use windows::{make_windows, Horizon, Sample, SplitFractions, WindowedDataset};
