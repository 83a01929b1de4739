//! Synthetic greenhouse climate and stem-diameter series used for the bundled
//! demo data and the ablation benchmarks.

use std::f64::consts::TAU;

use chrono::{Duration, NaiveDate};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::TimeSeriesFrame;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreenhouseConfig {
    pub hours: usize,
    pub seed: u64,
    /// Growth-rate drift per 1000 hours, in target units.
    pub trend_per_khour: f64,
    /// Lag-one coefficient of the autoregressive disturbance.
    pub ar_coefficient: f64,
    pub ar_std: f64,
    /// White sensor noise on every recorded column, relative to its scale.
    pub sensor_noise: f64,
}

impl Default for GreenhouseConfig {
    fn default() -> Self {
        Self {
            hours: 5000,
            seed: 2024,
            trend_per_khour: 0.002,
            ar_coefficient: 0.8,
            ar_std: 0.004,
            sensor_noise: 0.05,
        }
    }
}

/// Per-hour retention of the plant water deficit.
const DEFICIT_MEMORY: f64 = 0.85;

pub const GREENHOUSE_CHANNELS: [&str; 5] = [
    "co2_ppm",
    "humidity_pct",
    "radiation_w_m2",
    "outside_temp_c",
    "inside_temp_c",
];

/// Hourly climate channels plus the stem-diameter hourly variation rate.
///
/// Climate follows a daily cycle with a slow seasonal drift. The stem signal
/// shrinks under lagged radiation and vapour-pressure deficit during the day,
/// recovers at night, carries a drifting growth trend and an AR(1)
/// disturbance, and is recorded with white sensor noise.
pub fn synthetic_greenhouse(cfg: &GreenhouseConfig) -> TimeSeriesFrame {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let unit = Normal::new(0.0, 1.0).expect("valid normal");
    let n = cfg.hours;
    let start = NaiveDate::from_ymd_opt(2019, 3, 1)
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .expect("valid start");

    let mut co2 = Vec::with_capacity(n);
    let mut hum = Vec::with_capacity(n);
    let mut rad = Vec::with_capacity(n);
    let mut out_t = Vec::with_capacity(n);
    let mut in_t = Vec::with_capacity(n);
    let mut stem = Vec::with_capacity(n);

    let mut weather: f64 = 0.0; // slow cloudiness / outside temperature anomaly
    let mut disturbance = 0.0;
    // water deficit: leaky integral of radiation-driven transpiration
    let mut deficit = [0.0f64; 3];
    for t in 0..n {
        let hour = (t % 24) as f64;
        let season = (TAU * t as f64 / (24.0 * 120.0)).sin();
        weather = 0.97 * weather + 0.25 * unit.sample(&mut rng);
        let daylight = (TAU * (hour - 6.0) / 24.0).sin().max(0.0);
        let radiation = daylight * (600.0 + 150.0 * season) * (1.0 - 0.08 * weather.clamp(-3.0, 3.0));
        let outside = 10.0 + 5.0 * season + 6.0 * (TAU * (hour - 9.0) / 24.0).sin() + 1.5 * weather;
        let inside = 19.0 + 0.25 * (outside - 10.0) + 0.004 * radiation;
        let humidity = 78.0 - 1.2 * (inside - 19.0) - 0.01 * radiation;
        let carbon = 420.0 + 250.0 * daylight - 0.05 * radiation;

        let vpd = ((inside - 15.0) / 10.0).max(0.0) * (100.0 - humidity) / 25.0;
        deficit.rotate_right(1);
        deficit[0] = DEFICIT_MEMORY * deficit[1] + radiation / 600.0 * vpd;
        let trend = cfg.trend_per_khour * t as f64 / 1000.0;
        disturbance = cfg.ar_coefficient * disturbance + cfg.ar_std * unit.sample(&mut rng);
        // the stem responds to the deficit change with a one-hour lag
        let clean = 0.01 + trend - 0.04 * (deficit[1] - deficit[2]);
        let recorded = clean + disturbance;

        let noise = |scale: f64, rng: &mut ChaCha8Rng| cfg.sensor_noise * scale * unit.sample(rng);
        co2.push(carbon + noise(20.0, &mut rng));
        hum.push(humidity + noise(3.0, &mut rng));
        rad.push((radiation + noise(30.0, &mut rng)).max(0.0));
        out_t.push(outside + noise(1.0, &mut rng));
        in_t.push(inside + noise(1.0, &mut rng));
        stem.push(recorded + noise(0.01, &mut rng));
    }
    let timestamps = (0..n).map(|i| start + Duration::hours(i as i64)).collect();
    TimeSeriesFrame::new(
        timestamps,
        GREENHOUSE_CHANNELS.iter().map(|s| s.to_string()).collect(),
        vec![co2, hum, rad, out_t, in_t],
        "stem_diameter_rate",
        stem,
    )
    .expect("generator produces a valid frame")
}
