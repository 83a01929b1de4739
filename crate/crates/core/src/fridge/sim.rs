use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Longest forced switch-off, in seconds.
pub const EVENT_CAP_S: f64 = 1800.0;

/// A forced switch-off ends once the true temperature passes the threshold
/// by this much, so the recorded crossing survives sensor noise.
pub const OVERSHOOT_C: f64 = 0.5;

/// Thermal and thermostat parameters of one refrigerator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FridgeSpec {
    pub id: String,
    /// Warming time constant with the compressor off.
    pub tau_s: f64,
    /// Cooling time constant with the compressor on.
    pub cooling_tau_s: f64,
    pub ambient_c: f64,
    /// Centre of the thermostat band.
    pub setpoint_c: f64,
    /// Width of the thermostat band.
    pub band_c: f64,
    /// Temperature the compressor drives towards when on.
    pub pull_down_c: f64,
    /// Food-safety threshold.
    pub threshold_c: f64,
    pub initial_c: f64,
    pub noise_std_c: f64,
    /// Expected door openings per hour; each adds `door_jump_c`.
    pub door_rate_per_hour: f64,
    pub door_jump_c: f64,
    pub interval_s: f64,
}

impl FridgeSpec {
    /// High-temperature cabinet: 2-4 °C band, 8 °C threshold.
    pub fn chiller(id: impl Into<String>, tau_s: f64) -> Self {
        Self {
            id: id.into(),
            tau_s,
            cooling_tau_s: 300.0,
            ambient_c: 20.0,
            setpoint_c: 3.0,
            band_c: 2.0,
            pull_down_c: -5.0,
            threshold_c: 8.0,
            initial_c: 3.0,
            noise_std_c: 0.0,
            door_rate_per_hour: 0.0,
            door_jump_c: 1.5,
            interval_s: 60.0,
        }
    }

    /// Low-temperature cabinet: -23 to -19 °C band, -18 °C threshold.
    pub fn freezer(id: impl Into<String>, tau_s: f64) -> Self {
        Self {
            setpoint_c: -21.0,
            band_c: 4.0,
            pull_down_c: -35.0,
            threshold_c: -18.0,
            initial_c: -21.0,
            ..Self::chiller(id, tau_s)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.tau_s) || !positive(self.cooling_tau_s) || !positive(self.interval_s) {
            return Err(Error::invalid(format!(
                "fridge {}: time constants and interval must be positive",
                self.id
            )));
        }
        let finite = [
            self.ambient_c,
            self.setpoint_c,
            self.band_c,
            self.pull_down_c,
            self.threshold_c,
            self.initial_c,
            self.noise_std_c,
            self.door_rate_per_hour,
            self.door_jump_c,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("fridge {}: non-finite parameter", self.id)));
        }
        if self.ambient_c <= self.setpoint_c {
            return Err(Error::invalid(format!(
                "fridge {}: ambient must exceed the setpoint",
                self.id
            )));
        }
        if self.band_c < 0.0 || self.noise_std_c < 0.0 || self.door_rate_per_hour < 0.0 {
            return Err(Error::invalid(format!(
                "fridge {}: band, noise and door rate must be nonnegative",
                self.id
            )));
        }
        if self.pull_down_c >= self.setpoint_c - self.band_c / 2.0 && self.band_c > 0.0 {
            return Err(Error::invalid(format!(
                "fridge {}: pull-down temperature must lie below the thermostat band",
                self.id
            )));
        }
        Ok(())
    }

    fn lower(&self) -> f64 {
        self.setpoint_c - self.band_c / 2.0
    }

    fn upper(&self) -> f64 {
        self.setpoint_c + self.band_c / 2.0
    }
}

/// Trace length and forced switch-off times, in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub duration_s: f64,
    pub switch_offs_s: Vec<f64>,
}

/// Samples at a fixed interval. `compressor[k]` and `defrost[k]` hold
/// during `[t_k, t_k + interval)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FridgeTrace {
    pub fridge_id: String,
    pub interval_s: f64,
    pub timestamps_s: Vec<f64>,
    pub temperature_c: Vec<f64>,
    pub compressor: Vec<bool>,
    pub defrost: Vec<bool>,
    pub ambient_c: f64,
    pub tau_s: f64,
    pub threshold_c: f64,
}

impl FridgeTrace {
    pub fn len(&self) -> usize {
        self.timestamps_s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps_s.is_empty()
    }

    /// `timestamp_s,temp_c,compressor,defrost_flag`
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["timestamp_s", "temp_c", "compressor", "defrost_flag"])?;
        for k in 0..self.len() {
            w.write_record([
                self.timestamps_s[k].to_string(),
                self.temperature_c[k].to_string(),
                u8::from(self.compressor[k]).to_string(),
                u8::from(self.defrost[k]).to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the CSV written by [`FridgeTrace::write_csv`]. Ambient and
    /// time constant are not part of the file and come back as NaN.
    pub fn read_csv<R: std::io::Read>(
        reader: R,
        path: &std::path::Path,
        fridge_id: &str,
        threshold_c: f64,
    ) -> Result<Self> {
        let err = |line: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = r.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["timestamp_s", "temp_c", "compressor", "defrost_flag"] {
            return Err(err(
                1,
                "expected columns timestamp_s,temp_c,compressor,defrost_flag".into(),
            ));
        }
        let mut trace = FridgeTrace {
            fridge_id: fridge_id.to_string(),
            interval_s: f64::NAN,
            timestamps_s: Vec::new(),
            temperature_c: Vec::new(),
            compressor: Vec::new(),
            defrost: Vec::new(),
            ambient_c: f64::NAN,
            tau_s: f64::NAN,
            threshold_c,
        };
        for record in r.records() {
            let record = record?;
            let line = record.position().map_or(0, |p| p.line() as usize);
            let num = |i: usize| -> Result<f64> {
                record[i]
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| err(line, format!("bad number `{}`", &record[i])))
            };
            let flag = |i: usize| -> Result<bool> {
                match &record[i] {
                    "0" => Ok(false),
                    "1" => Ok(true),
                    other => Err(err(line, format!("expected 0 or 1, found `{other}`"))),
                }
            };
            let t = num(0)?;
            if let Some(&prev) = trace.timestamps_s.last() {
                let step = t - prev;
                if trace.timestamps_s.len() == 1 {
                    trace.interval_s = step;
                }
                if !(step > 0.0) || (step - trace.interval_s).abs() > 1e-6 * trace.interval_s {
                    return Err(err(line, "timestamps must be evenly spaced and increasing".into()));
                }
            }
            trace.timestamps_s.push(t);
            trace.temperature_c.push(num(1)?);
            trace.compressor.push(flag(2)?);
            trace.defrost.push(flag(3)?);
        }
        if trace.len() < 2 {
            return Err(err(1, "a trace needs at least two samples".into()));
        }
        Ok(trace)
    }
}

/// First-order thermal simulation.
///
/// With the compressor off the temperature relaxes towards ambient with
/// time constant `tau_s`; with it on, towards `pull_down_c` with
/// `cooling_tau_s`. Between events a thermostat switches the compressor off
/// at the bottom of the band and on at the top. At each scheduled
/// switch-off the compressor is held off until the threshold is passed or
/// [`EVENT_CAP_S`] elapses. Sensor noise only affects the recorded values.
pub fn simulate_trace(spec: &FridgeSpec, schedule: &Schedule, seed: u64) -> Result<FridgeTrace> {
    spec.validate()?;
    if !(schedule.duration_s >= 0.0 && schedule.duration_s.is_finite()) {
        return Err(Error::invalid("schedule duration must be finite and nonnegative"));
    }
    let dt = spec.interval_s;
    let n = (schedule.duration_s / dt).floor() as usize + 1;
    let mut event_at = vec![false; n];
    for &t in &schedule.switch_offs_s {
        if !t.is_finite() || t < 0.0 {
            return Err(Error::invalid(format!("bad switch-off time {t}")));
        }
        let k = (t / dt).round() as usize;
        if k < n {
            event_at[k] = true;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, spec.noise_std_c.max(f64::MIN_POSITIVE)).expect("valid sigma");
    let door_p = (spec.door_rate_per_hour * dt / 3600.0).min(1.0);
    let warm = (-dt / spec.tau_s).exp();
    let cool = (-dt / spec.cooling_tau_s).exp();

    let mut trace = FridgeTrace {
        fridge_id: spec.id.clone(),
        interval_s: dt,
        timestamps_s: Vec::with_capacity(n),
        temperature_c: Vec::with_capacity(n),
        compressor: Vec::with_capacity(n),
        defrost: Vec::with_capacity(n),
        ambient_c: spec.ambient_c,
        tau_s: spec.tau_s,
        threshold_c: spec.threshold_c,
    };
    let mut temp = spec.initial_c;
    let mut on = temp > spec.lower();
    let mut event_start: Option<usize> = None;
    for (k, &scheduled) in event_at.iter().enumerate() {
        match event_start {
            None if scheduled => {
                event_start = Some(k);
                on = false;
            }
            Some(start) => {
                if temp >= spec.threshold_c + OVERSHOOT_C || (k - start) as f64 * dt >= EVENT_CAP_S {
                    event_start = None;
                    on = true;
                }
            }
            None => {
                if on && temp <= spec.lower() {
                    on = false;
                } else if !on && temp >= spec.upper() {
                    on = true;
                }
            }
        }
        let recorded = if spec.noise_std_c > 0.0 {
            temp + noise.sample(&mut rng)
        } else {
            temp
        };
        trace.timestamps_s.push(k as f64 * dt);
        trace.temperature_c.push(recorded);
        trace.compressor.push(on);
        trace.defrost.push(event_start.is_some());

        if door_p > 0.0 && rng.random_bool(door_p) {
            temp += spec.door_jump_c;
        }
        temp = if on {
            spec.pull_down_c + (temp - spec.pull_down_c) * cool
        } else {
            spec.ambient_c + (temp - spec.ambient_c) * warm
        };
    }
    Ok(trace)
}
