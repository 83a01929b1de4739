use std::fmt::{self, Write as _};

use log::info;
use serde::{Deserialize, Serialize};

use super::config::ForecasterConfig;
use super::training::{train_forecaster_on, train_mlp_on, EvalReport, PreparedData};
use crate::error::{Error, Result};
use crate::signal::{Horizon, TimeSeriesFrame};

/// Baselines that the comparison table lists but this crate does not train.
pub const OUT_OF_SCOPE_ROWS: [&str; 2] = ["SVR", "RFR"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    Mlp,
    Lstm,
    WtEdLstm,
    EdLstmAm,
    WtEdLstmAm,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Mlp,
        Variant::Lstm,
        Variant::WtEdLstm,
        Variant::EdLstmAm,
        Variant::WtEdLstmAm,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Variant::Mlp => "MLP",
            Variant::Lstm => "LSTM",
            Variant::WtEdLstm => "WT-ED-LSTM",
            Variant::EdLstmAm => "ED-LSTM-AM",
            Variant::WtEdLstmAm => "WT-ED-LSTM-AM",
        }
    }

    /// `(use_wavelet, use_encoder, use_attention)`; `None` for the MLP.
    pub fn flags(self) -> Option<(bool, bool, bool)> {
        match self {
            Variant::Mlp => None,
            Variant::Lstm => Some((false, false, false)),
            Variant::WtEdLstm => Some((true, true, false)),
            Variant::EdLstmAm => Some((false, true, true)),
            Variant::WtEdLstmAm => Some((true, true, true)),
        }
    }

    /// `base` with this variant's flags applied.
    pub fn configure(self, base: &ForecasterConfig) -> ForecasterConfig {
        let mut cfg = base.clone();
        if let Some((wt, ed, am)) = self.flags() {
            cfg.use_wavelet = wt;
            cfg.use_encoder = ed;
            cfg.use_attention = am;
        } else {
            cfg.use_wavelet = false;
            cfg.use_encoder = false;
            cfg.use_attention = false;
        }
        cfg
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: Variant,
    /// Mean test RMSE over seeds, one entry per horizon.
    pub mean_rmse: Vec<f64>,
    /// `per_seed[h][s]`: RMSE for horizon `h` and seed `s`.
    pub per_seed: Vec<Vec<f64>>,
}

/// Truth and every variant's predictions on the test split of one horizon,
/// for the first seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionTrace {
    pub horizon: Horizon,
    pub timestamps: Vec<String>,
    pub truth: Vec<f64>,
    pub predictions: Vec<(Variant, Vec<f64>)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub horizons: Vec<Horizon>,
    pub seeds: Vec<u64>,
    pub rows: Vec<AblationRow>,
    pub traces: Vec<PredictionTrace>,
}

impl AblationReport {
    pub fn row(&self, variant: Variant) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.variant == variant)
    }

    /// Mean RMSE of `variant` at `horizon`.
    pub fn mean_rmse(&self, variant: Variant, horizon: Horizon) -> Option<f64> {
        let h = self.horizons.iter().position(|&x| x == horizon)?;
        self.row(variant).map(|r| r.mean_rmse[h])
    }

    /// `method,<horizon>...` with the out-of-scope baselines first.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method");
        for h in &self.horizons {
            let _ = write!(out, ",{h}");
        }
        out.push('\n');
        for name in OUT_OF_SCOPE_ROWS {
            out.push_str(name);
            for _ in &self.horizons {
                out.push_str(",out of scope");
            }
            out.push('\n');
        }
        for row in &self.rows {
            out.push_str(row.variant.label());
            for v in &row.mean_rmse {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }

    /// Per-seed results: `method,horizon,seed,rmse`.
    pub fn seeds_csv(&self) -> String {
        let mut out = String::from("method,horizon,seed,rmse\n");
        for row in &self.rows {
            for (h, values) in self.horizons.iter().zip(&row.per_seed) {
                for (seed, v) in self.seeds.iter().zip(values) {
                    let _ = writeln!(out, "{},{h},{seed},{v}", row.variant);
                }
            }
        }
        out
    }

    /// Fixed-width table for terminals.
    pub fn to_table(&self) -> String {
        let mut out = format!("{:<15}", "Method");
        for h in &self.horizons {
            let _ = write!(out, " {:>12}", h.to_string());
        }
        out.push('\n');
        for name in OUT_OF_SCOPE_ROWS {
            let _ = write!(out, "{name:<15}");
            for _ in &self.horizons {
                let _ = write!(out, " {:>12}", "out of scope");
            }
            out.push('\n');
        }
        for row in &self.rows {
            let _ = write!(out, "{:<15}", row.variant.label());
            for v in &row.mean_rmse {
                let _ = write!(out, " {v:>12.6}");
            }
            out.push('\n');
        }
        out
    }
}

impl PredictionTrace {
    /// `timestamp,truth,<variant>...`
    pub fn to_csv(&self) -> String {
        let mut out = String::from("timestamp,truth");
        for (v, _) in &self.predictions {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
        for (i, (ts, y)) in self.timestamps.iter().zip(&self.truth).enumerate() {
            let _ = write!(out, "{ts},{y}");
            for (_, p) in &self.predictions {
                let _ = write!(out, ",{}", p[i]);
            }
            out.push('\n');
        }
        out
    }
}

/// Trains one variant on prepared data.
pub fn run_variant(variant: Variant, base: &ForecasterConfig, data: &PreparedData) -> Result<EvalReport> {
    let cfg = variant.configure(base);
    let mut report = match variant {
        Variant::Mlp => train_mlp_on(&cfg, data)?.1,
        _ => train_forecaster_on(&cfg, data)?.1,
    };
    report.model = variant.label().to_owned();
    Ok(report)
}

/// Trains every variant for every horizon and seed on shared splits.
pub fn ablate(
    frame: &TimeSeriesFrame,
    base: &ForecasterConfig,
    horizons: &[Horizon],
    seeds: &[u64],
) -> Result<AblationReport> {
    if horizons.is_empty() || seeds.is_empty() {
        return Err(Error::invalid("ablation needs at least one horizon and one seed"));
    }
    let mut rows: Vec<AblationRow> = Variant::ALL
        .iter()
        .map(|&variant| AblationRow {
            variant,
            mean_rmse: Vec::new(),
            per_seed: Vec::new(),
        })
        .collect();
    let mut traces = Vec::new();
    for &horizon in horizons {
        let cfg = ForecasterConfig {
            horizon,
            ..base.clone()
        };
        let data = PreparedData::new(frame, &cfg)?;
        let mut trace: Option<PredictionTrace> = None;
        for row in rows.iter_mut() {
            let mut values = Vec::with_capacity(seeds.len());
            for (k, &seed) in seeds.iter().enumerate() {
                let report = run_variant(row.variant, &cfg.clone().with_seed(seed), &data)?;
                info!("{} {horizon} seed {seed}: rmse {:.6}", row.variant, report.rmse);
                if k == 0 {
                    let t = trace.get_or_insert_with(|| PredictionTrace {
                        horizon,
                        timestamps: report.predictions.iter().map(|p| p.timestamp.clone()).collect(),
                        truth: report.predictions.iter().map(|p| p.truth).collect(),
                        predictions: Vec::new(),
                    });
                    t.predictions
                        .push((row.variant, report.predictions.iter().map(|p| p.prediction).collect()));
                }
                values.push(report.rmse);
            }
            row.mean_rmse.push(values.iter().sum::<f64>() / values.len() as f64);
            row.per_seed.push(values);
        }
        traces.extend(trace);
    }
    Ok(AblationReport {
        horizons: horizons.to_vec(),
        seeds: seeds.to_vec(),
        rows,
        traces,
    })
}
