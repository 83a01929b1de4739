use std::collections::BTreeSet;
use std::fmt::Write as _;

use log::info;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::examples::{extract_examples, DefrostExample, ExtractionCounts, WINDOW_FEATURES};
use super::sim::{simulate_trace, FridgeSpec, FridgeTrace, Schedule};
use crate::error::{Error, Result};
use crate::numerics::{Matrix, SgdConfig, TensorFile};
use crate::recurrent::{fit_regressor, FitOutcome, LstmRegressor, WindowRegressor};

/// A synthetic fleet of chillers with varied thermal constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FleetSimConfig {
    pub fridges: usize,
    pub events_per_fridge: usize,
    pub tau_range_s: (f64, f64),
    pub ambient_range_c: (f64, f64),
    pub noise_std_c: f64,
    pub door_rate_per_hour: f64,
    pub threshold_c: f64,
    /// Mean gap between forced switch-offs.
    pub event_spacing_s: f64,
    /// Uniform jitter added to each gap, `[-j, j]`.
    pub event_jitter_s: f64,
    pub interval_s: f64,
}

impl Default for FleetSimConfig {
    /// 110 fridges with 100 switch-offs each: 11,000 examples.
    fn default() -> Self {
        Self {
            fridges: 110,
            events_per_fridge: 100,
            tau_range_s: (300.0, 1200.0),
            ambient_range_c: (19.0, 23.0),
            noise_std_c: 0.05,
            door_rate_per_hour: 0.0,
            threshold_c: 8.0,
            event_spacing_s: 5400.0,
            event_jitter_s: 1200.0,
            interval_s: 60.0,
        }
    }
}

impl FleetSimConfig {
    pub fn validate(&self) -> Result<()> {
        let (t0, t1) = self.tau_range_s;
        let (a0, a1) = self.ambient_range_c;
        if self.fridges == 0 || !(t0 > 0.0 && t0 <= t1) || !(a0 <= a1) {
            return Err(Error::invalid(
                "fleet needs fridges and ordered, positive parameter ranges",
            ));
        }
        if !(self.event_spacing_s > self.event_jitter_s && self.event_jitter_s >= 0.0) {
            return Err(Error::invalid("event spacing must exceed its jitter"));
        }
        Ok(())
    }
}

/// Specs and traces for every fridge of the fleet.
pub fn simulate_fleet(config: &FleetSimConfig, seed: u64) -> Result<Vec<(FridgeSpec, FridgeTrace)>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..config.fridges)
        .map(|i| {
            let tau = rng.random_range(config.tau_range_s.0..=config.tau_range_s.1);
            let mut spec = FridgeSpec::chiller(format!("fridge-{i:04}"), tau);
            spec.ambient_c = rng.random_range(config.ambient_range_c.0..=config.ambient_range_c.1);
            spec.noise_std_c = config.noise_std_c;
            spec.door_rate_per_hour = config.door_rate_per_hour;
            spec.threshold_c = config.threshold_c;
            spec.interval_s = config.interval_s;
            spec.initial_c = rng.random_range(spec.setpoint_c - 1.0..=spec.setpoint_c + 1.0);
            let j = config.event_jitter_s;
            let mut t = 0.0;
            let switch_offs: Vec<f64> = (0..config.events_per_fridge)
                .map(|_| {
                    t += config.event_spacing_s + if j > 0.0 { rng.random_range(-j..=j) } else { 0.0 };
                    t
                })
                .collect();
            let schedule = Schedule {
                duration_s: t + config.event_spacing_s,
                switch_offs_s: switch_offs,
            };
            let trace = simulate_trace(&spec, &schedule, rng.random())?;
            Ok((spec, trace))
        })
        .collect()
}

/// Examples from every trace, with summed extraction counts.
pub fn fleet_examples(
    traces: &[FridgeTrace],
    lead_s: f64,
    window: usize,
) -> Result<(Vec<DefrostExample>, ExtractionCounts)> {
    let mut all = Vec::new();
    let mut total = ExtractionCounts::default();
    for trace in traces {
        let (ex, c) = extract_examples(trace, lead_s, window)?;
        all.extend(ex);
        total.examples += c.examples;
        total.no_crossing += c.no_crossing;
        total.already_above += c.already_above;
        total.short_history += c.short_history;
    }
    Ok((all, total))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefrostConfig {
    /// Hidden sizes of the LSTM layers.
    pub hidden: Vec<usize>,
    pub sgd: SgdConfig,
    /// Fractions of fridges held out for validation and test.
    pub validation_fraction: f64,
    pub test_fraction: f64,
}

impl DefrostConfig {
    /// Two 64-unit layers, learning rate 0.001, batch 32, 100 epochs; one
    /// eleventh of the fridges each for validation and test (10,000 of
    /// 110,000 examples).
    pub fn paper() -> Self {
        Self {
            hidden: vec![64, 64],
            sgd: SgdConfig {
                learning_rate: 0.001,
                batch_size: 32,
                epochs: 100,
                seed: 0,
                clip_norm: Some(5.0),
            },
            validation_fraction: 1.0 / 11.0,
            test_fraction: 1.0 / 11.0,
        }
    }

    pub fn desk() -> Self {
        Self {
            hidden: vec![16, 16],
            sgd: SgdConfig {
                learning_rate: 0.1,
                batch_size: 16,
                epochs: 12,
                ..Self::paper().sgd
            },
            validation_fraction: 0.1,
            test_fraction: 0.2,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.sgd.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.sgd.validate()?;
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::invalid("LSTM hidden sizes must be nonzero"));
        }
        let ok = |f: f64| (0.0..1.0).contains(&f);
        if !ok(self.validation_fraction)
            || !ok(self.test_fraction)
            || self.validation_fraction + self.test_fraction >= 1.0
        {
            return Err(Error::invalid(
                "held-out fractions must be in [0, 1) and leave training fridges",
            ));
        }
        Ok(())
    }
}

impl Default for DefrostConfig {
    fn default() -> Self {
        Self::desk()
    }
}

/// Fridge ids assigned to each split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FridgeSplit {
    pub train: Vec<String>,
    pub validation: Vec<String>,
    pub test: Vec<String>,
}

/// Shuffles the distinct fridge ids with `seed` and deals out the held-out
/// fractions (at least one fridge each when there are three or more).
pub fn split_fridges(ids: &[String], validation_fraction: f64, test_fraction: f64, seed: u64) -> FridgeSplit {
    let mut unique: Vec<String> = ids.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    unique.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n = unique.len();
    let count = |f: f64| {
        let k = (n as f64 * f).round() as usize;
        if f > 0.0 && n >= 3 {
            k.max(1)
        } else {
            k
        }
    };
    let n_test = count(test_fraction);
    let n_val = count(validation_fraction).min(n.saturating_sub(n_test + 1));
    let test = unique.split_off(n - n_test);
    let validation = unique.split_off(unique.len() - n_val);
    let sort = |mut v: Vec<String>| {
        v.sort();
        v
    };
    FridgeSplit {
        train: sort(unique),
        validation: sort(validation),
        test: sort(test),
    }
}

/// Two-layer LSTM mapping a raw window to seconds until the threshold.
#[derive(Debug, Clone)]
pub struct DefrostPredictor {
    pub regressor: LstmRegressor,
    pub hidden: Vec<usize>,
    /// Training-window temperature range used for scaling.
    pub temperature_range: (f64, f64),
    /// Training label range used for scaling.
    pub label_range: (f64, f64),
    pub window: usize,
    pub lead_s: f64,
}

fn scale(v: f64, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        (v - lo) / (hi - lo)
    } else {
        0.0
    }
}

impl DefrostPredictor {
    fn prepare(&self, window: &Matrix) -> Result<Matrix> {
        if window.shape() != (self.window, WINDOW_FEATURES) {
            return Err(Error::shape(format!(
                "expected a {}x{WINDOW_FEATURES} window, got {}x{}",
                self.window,
                window.rows(),
                window.cols()
            )));
        }
        let mut m = window.clone();
        for r in 0..m.rows() {
            let t = m.get(r, 0);
            m.set(r, 0, scale(t, self.temperature_range));
        }
        Ok(m)
    }

    pub fn predict(&self, window: &Matrix) -> Result<f64> {
        let y = self.regressor.predict_prepared(&self.prepare(window)?)?;
        let (lo, hi) = self.label_range;
        Ok(lo + y * (hi - lo))
    }

    pub fn to_tensor_file(&self, extra: &[(&str, String)]) -> Result<TensorFile> {
        let mut file = self.regressor.params.to_tensor_file();
        file.push_meta("kind", "defrost-predictor");
        file.push_meta("hidden", serde_json::to_string(&self.hidden)?);
        file.push_meta("temperature_range", serde_json::to_string(&self.temperature_range)?);
        file.push_meta("label_range", serde_json::to_string(&self.label_range)?);
        file.push_meta("window", self.window);
        file.push_meta("lead_s", self.lead_s);
        for (k, v) in extra {
            file.push_meta(*k, v);
        }
        Ok(file)
    }

    pub fn from_tensor_file(file: &TensorFile) -> Result<Self> {
        if file.meta("kind") != Some("defrost-predictor") {
            return Err(Error::invalid("checkpoint does not hold a defrost predictor"));
        }
        let get = |key: &str| {
            file.meta(key)
                .ok_or_else(|| Error::invalid(format!("checkpoint lacks `{key}`")))
        };
        let hidden: Vec<usize> = serde_json::from_str(get("hidden")?)?;
        let window: usize = get("window")?.parse().map_err(|_| Error::invalid("bad `window`"))?;
        let lead_s: f64 = get("lead_s")?.parse().map_err(|_| Error::invalid("bad `lead_s`"))?;
        let mut regressor = LstmRegressor::new(WINDOW_FEATURES, &hidden, 0);
        regressor.params.load_values(file)?;
        Ok(Self {
            regressor,
            hidden,
            temperature_range: serde_json::from_str(get("temperature_range")?)?,
            label_range: serde_json::from_str(get("label_range")?)?,
            window,
            lead_s,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefrostPrediction {
    pub fridge_id: String,
    pub switch_off_s: f64,
    pub truth_s: f64,
    pub predicted_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefrostReport {
    /// Test RMSE in seconds.
    pub rmse_s: f64,
    pub validation_rmse_s: f64,
    pub split: FridgeSplit,
    pub train_examples: usize,
    pub validation_examples: usize,
    pub test_examples: usize,
    pub predictions: Vec<DefrostPrediction>,
    pub fit: FitOutcome,
}

impl DefrostReport {
    /// `fridge_id,switch_off_s,truth_s,predicted_s`
    pub fn predictions_csv(&self) -> String {
        let mut out = String::from("fridge_id,switch_off_s,truth_s,predicted_s\n");
        for p in &self.predictions {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                p.fridge_id, p.switch_off_s, p.truth_s, p.predicted_s
            );
        }
        out
    }
}

fn rmse_seconds(model: &DefrostPredictor, examples: &[&DefrostExample]) -> Result<f64> {
    if examples.is_empty() {
        return Ok(f64::NAN);
    }
    let mut total = 0.0;
    for e in examples {
        let err = model.predict(&e.window)? - e.label_s;
        total += err * err;
    }
    Ok((total / examples.len() as f64).sqrt())
}

/// Fits a stacked LSTM to the examples of the training fridges, selecting
/// the epoch with the lowest validation error, and reports test RMSE in
/// seconds.
pub fn train_defrost_predictor(
    examples: &[DefrostExample],
    config: &DefrostConfig,
) -> Result<(DefrostPredictor, DefrostReport)> {
    config.validate()?;
    let first = examples
        .first()
        .ok_or_else(|| Error::InsufficientData("no defrost examples".into()))?;
    let window = first.window.rows();
    if examples
        .iter()
        .any(|e| e.window.shape() != (window, WINDOW_FEATURES) || e.lead_s != first.lead_s)
    {
        return Err(Error::shape("examples differ in window shape or lead"));
    }
    let ids: Vec<String> = examples.iter().map(|e| e.fridge_id.clone()).collect();
    let split = split_fridges(&ids, config.validation_fraction, config.test_fraction, config.sgd.seed);
    let part = |names: &[String]| -> Vec<&DefrostExample> {
        let set: BTreeSet<&str> = names.iter().map(String::as_str).collect();
        examples.iter().filter(|e| set.contains(e.fridge_id.as_str())).collect()
    };
    let (train, val, test) = (part(&split.train), part(&split.validation), part(&split.test));
    if train.is_empty() {
        return Err(Error::InsufficientData("no training fridges".into()));
    }

    let range = |vals: &mut dyn Iterator<Item = f64>| {
        vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
    };
    let temperature_range = range(&mut train.iter().flat_map(|e| (0..window).map(|r| e.window.get(r, 0))));
    let label_range = range(&mut train.iter().map(|e| e.label_s));
    let mut model = DefrostPredictor {
        regressor: LstmRegressor::new(WINDOW_FEATURES, &config.hidden, config.sgd.seed),
        hidden: config.hidden.clone(),
        temperature_range,
        label_range,
        window,
        lead_s: first.lead_s,
    };
    let prep = |set: &[&DefrostExample]| -> Result<(Vec<Matrix>, Vec<f64>)> {
        let xs = set
            .iter()
            .map(|e| model.prepare(&e.window))
            .collect::<Result<Vec<_>>>()?;
        let ys = set.iter().map(|e| scale(e.label_s, label_range)).collect();
        Ok((xs, ys))
    };
    let (train_x, train_y) = prep(&train)?;
    let (val_x, val_y) = prep(&val)?;
    info!(
        "defrost predictor: {} train / {} validation / {} test examples",
        train.len(),
        val.len(),
        test.len()
    );
    let fit = fit_regressor(&mut model.regressor, &train_x, &train_y, &val_x, &val_y, &config.sgd)?;

    let predictions = test
        .iter()
        .map(|e| {
            Ok(DefrostPrediction {
                fridge_id: e.fridge_id.clone(),
                switch_off_s: e.switch_off_s,
                truth_s: e.label_s,
                predicted_s: model.predict(&e.window)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let report = DefrostReport {
        rmse_s: rmse_seconds(&model, &test)?,
        validation_rmse_s: rmse_seconds(&model, &val)?,
        train_examples: train.len(),
        validation_examples: val.len(),
        test_examples: test.len(),
        split,
        predictions,
        fit,
    };
    Ok((model, report))
}
