//! Refrigeration subcommands: fridge-sim, fridge-train, fridge-select.

use std::path::{Path, PathBuf};

use clap::Args;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use fsc_core::fridge::{
    fleet_examples, read_fleet_file, select_fleet, simulate_fleet, train_defrost_predictor, DefrostPredictor,
    ExtractionCounts, FleetCandidate, FleetPlan, FridgeTrace, Registry, SelectionMethod, WINDOW_FEATURES,
};
use fsc_core::numerics::tensor_io::hex_digest;
use fsc_core::numerics::{Matrix, TensorFile};

use crate::config::Settings;
use crate::error::CliError;
use crate::output::{line_chart, Run};

#[derive(Debug, Args)]
pub struct SimArgs {}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Output directory of `fridge-sim` (fleet.csv and traces/); simulated
    /// on the fly when omitted.
    #[arg(long, value_name = "DIR")]
    sim: Option<PathBuf>,
    /// Registry directory to publish the trained model into.
    #[arg(long, value_name = "DIR")]
    registry: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    /// Fleet CSV: fridge_id,power_kw[,predicted_safe_off_s].
    #[arg(long, value_name = "CSV")]
    fleet: PathBuf,
    /// Trace directory (`fridge-sim` output) used to predict safe-off
    /// durations the fleet CSV does not provide.
    #[arg(long, value_name = "DIR")]
    sim: Option<PathBuf>,
    /// Predictor checkpoint written by `fridge-train`.
    #[arg(long, value_name = "FILE", conflicts_with = "registry")]
    model: Option<PathBuf>,
    /// Registry whose best model predicts the safe-off durations.
    #[arg(long, value_name = "DIR")]
    registry: Option<PathBuf>,
    /// Power reduction to reach, kW (sets fridge.required_kw).
    #[arg(long, value_name = "KW")]
    required_kw: Option<f64>,
    /// Event length in seconds (sets fridge.event_duration).
    #[arg(long, value_name = "S")]
    event_duration: Option<f64>,
    /// Safety margin fraction (sets fridge.margin).
    #[arg(long, value_name = "F")]
    margin: Option<f64>,
}

impl SelectArgs {
    /// Flag values that override configuration keys.
    pub fn overrides(&self) -> Vec<(&'static str, String)> {
        [
            ("fridge.required_kw", self.required_kw),
            ("fridge.event_duration", self.event_duration),
            ("fridge.margin", self.margin),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.map(|v| (k, v.to_string())))
        .collect()
    }
}

#[derive(Serialize)]
struct SimSummary {
    fridges: usize,
    samples_per_fridge: usize,
    lead_s: f64,
    window: usize,
    counts: ExtractionCounts,
    label_mean_s: f64,
    label_min_s: f64,
    label_max_s: f64,
}

fn simulated_traces(settings: &Settings) -> Result<Vec<(FridgeTrace, f64)>, CliError> {
    let seed = settings.seed()?;
    let sims = simulate_fleet(&settings.fleet()?, seed)?;
    let (lo, hi): (f64, f64) = (settings.get("fridge.power_min")?, settings.get("fridge.power_max")?);
    if !(lo > 0.0 && lo <= hi) {
        return Err(CliError::Config(
            "fridge.power_min must be positive and at most fridge.power_max".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_f1ee7);
    Ok(sims
        .into_iter()
        .map(|(_, trace)| {
            let kw = (rng.random_range(lo..=hi) * 100.0).round() / 100.0;
            (trace, kw)
        })
        .collect())
}

pub fn simulate(_args: &SimArgs, settings: &Settings, run: &mut Run) -> Result<(), CliError> {
    let fleet = simulated_traces(settings)?;
    let mut csv = String::from("fridge_id,power_kw,tau_s,ambient_c\n");
    for (trace, kw) in &fleet {
        let mut buf = Vec::new();
        trace.write_csv(&mut buf)?;
        run.write(&format!("traces/{}.csv", trace.fridge_id), &buf)?;
        csv.push_str(&format!(
            "{},{kw},{},{}\n",
            trace.fridge_id, trace.tau_s, trace.ambient_c
        ));
    }
    run.write("fleet.csv", csv.as_bytes())?;
    let traces: Vec<FridgeTrace> = fleet.into_iter().map(|(t, _)| t).collect();
    let (lead, window): (f64, usize) = (settings.get("fridge.lead")?, settings.get("fridge.window")?);
    let (examples, counts) = fleet_examples(&traces, lead, window)?;
    let labels = examples.iter().map(|e| e.label_s);
    let summary = SimSummary {
        fridges: traces.len(),
        samples_per_fridge: traces.first().map_or(0, FridgeTrace::len),
        lead_s: lead,
        window,
        counts,
        label_mean_s: labels.clone().sum::<f64>() / examples.len().max(1) as f64,
        label_min_s: labels.clone().fold(f64::INFINITY, f64::min),
        label_max_s: labels.fold(f64::NEG_INFINITY, f64::max),
    };
    run.write_json("summary.json", &summary)?;
    println!(
        "{} fridges, {} examples (skipped: {} no crossing, {} already above, {} short history)",
        summary.fridges, counts.examples, counts.no_crossing, counts.already_above, counts.short_history
    );
    Ok(())
}

/// Traces listed in `<dir>/fleet.csv`, read from `<dir>/traces/<id>.csv`.
fn load_traces(dir: &Path, ids: &[String], threshold: f64, run: &mut Run) -> Result<Vec<FridgeTrace>, CliError> {
    ids.iter()
        .map(|id| {
            let path = dir.join("traces").join(format!("{id}.csv"));
            run.input(&path)?;
            let file = std::fs::File::open(&path)?;
            Ok(FridgeTrace::read_csv(file, &path, id, threshold)?)
        })
        .collect()
}

pub fn train(args: &TrainArgs, settings: &Settings, run: &mut Run) -> Result<(), CliError> {
    let (traces, data_fingerprint) = match &args.sim {
        Some(dir) => {
            run.option("sim", dir.display());
            let fleet_path = dir.join("fleet.csv");
            run.input(&fleet_path)?;
            let ids: Vec<String> = read_fleet_file(&fleet_path)?.into_iter().map(|r| r.fridge_id).collect();
            let traces = load_traces(dir, &ids, settings.get("fridge.threshold")?, run)?;
            let mut digest_input = String::new();
            for t in &traces {
                let mut buf = Vec::new();
                t.write_csv(&mut buf)?;
                digest_input.push_str(&hex_digest(&buf));
            }
            (traces, hex_digest(digest_input.as_bytes()))
        }
        None => {
            let traces: Vec<FridgeTrace> = simulated_traces(settings)?.into_iter().map(|(t, _)| t).collect();
            let fleet = serde_json::to_string(&settings.fleet()?).map_err(fsc_core::Error::from)?;
            (traces, hex_digest(format!("{fleet}/{}", settings.seed()?).as_bytes()))
        }
    };
    let (lead, window): (f64, usize) = (settings.get("fridge.lead")?, settings.get("fridge.window")?);
    let (examples, counts) = fleet_examples(&traces, lead, window)?;
    let config = settings.defrost()?;
    let (model, report) = train_defrost_predictor(&examples, &config)?;

    let file = model.to_tensor_file(&[
        ("data_fingerprint", data_fingerprint.clone()),
        ("validation_rmse_s", report.validation_rmse_s.to_string()),
        ("test_rmse_s", report.rmse_s.to_string()),
    ])?;
    let text = file.to_text();
    run.write("model.fsct", text.as_bytes())?;
    run.write_json("report.json", &report)?;
    run.write("predictions.csv", report.predictions_csv().as_bytes())?;
    let x: Vec<f64> = (0..report.predictions.len()).map(|i| i as f64).collect();
    let truth: Vec<f64> = report.predictions.iter().map(|p| p.truth_s).collect();
    let pred: Vec<f64> = report.predictions.iter().map(|p| p.predicted_s).collect();
    let svg = line_chart(
        "safe-off duration on test fridges (s)",
        "test example",
        &x,
        &[("truth", &truth), ("prediction", &pred)],
    );
    run.write("predictions.svg", svg.as_bytes())?;
    println!(
        "{} examples ({} skipped); test RMSE {:.2} s, validation RMSE {:.2} s",
        counts.examples,
        counts.no_crossing + counts.already_above + counts.short_history,
        report.rmse_s,
        report.validation_rmse_s
    );

    if let Some(dir) = &args.registry {
        run.option("registry", dir.display());
        let registry = Registry::open(dir)?;
        let id = format!("defrost-{}", &hex_digest(text.as_bytes())[..16]);
        if registry.get(&id)?.is_some() {
            log::info!("{id} is already registered");
        } else {
            registry.publish(&id, &file, report.validation_rmse_s, &data_fingerprint)?;
            println!("published {id} to {}", dir.display());
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct SelectReport<'a> {
    plan: &'a FleetPlan,
    candidates: &'a [FleetCandidate],
    model: Option<String>,
}

fn latest_window(trace: &FridgeTrace, window: usize) -> Result<Matrix, CliError> {
    if trace.len() < window {
        return Err(CliError::Input(format!(
            "trace of {} has {} samples, the predictor needs {window}",
            trace.fridge_id,
            trace.len()
        )));
    }
    let mut m = Matrix::zeros(window, WINDOW_FEATURES);
    for (r, k) in (trace.len() - window..trace.len()).enumerate() {
        m.set(r, 0, trace.temperature_c[k]);
        m.set(r, 1, if trace.compressor[k] { 1.0 } else { 0.0 });
    }
    Ok(m)
}

pub fn select(args: &SelectArgs, settings: &Settings, run: &mut Run) -> Result<(), CliError> {
    run.option("fleet", args.fleet.display());
    run.input(&args.fleet)?;
    let rows = read_fleet_file(&args.fleet)?;
    let required: f64 = settings.get("fridge.required_kw")?;
    let event: f64 = settings.get("fridge.event_duration")?;
    let margin: f64 = settings.get("fridge.margin")?;
    if !(required >= 0.0 && event >= 0.0 && (0.0..1.0).contains(&margin)) {
        return Err(CliError::Config(
            "fridge.required_kw and fridge.event_duration must be non-negative and fridge.margin in [0, 1)".into(),
        ));
    }

    let missing: Vec<&str> = rows
        .iter()
        .filter(|r| r.predicted_safe_off_s.is_none())
        .map(|r| r.fridge_id.as_str())
        .collect();
    let mut model_name = None;
    let mut predicted: Vec<Option<f64>> = rows.iter().map(|r| r.predicted_safe_off_s).collect();
    let source = args.model.clone().map(Ok).or_else(|| {
        args.registry.as_ref().map(|dir| -> Result<PathBuf, CliError> {
            run.option("registry", dir.display());
            let registry = Registry::open(dir)?;
            let best = registry
                .best()?
                .ok_or_else(|| CliError::Input(format!("registry {} is empty", dir.display())))?;
            model_name = Some(best.id.clone());
            Ok(registry.root().join(&best.artifact))
        })
    });
    if !missing.is_empty() {
        match (source, &args.sim) {
            (Some(path), Some(dir)) => {
                let path = path?;
                run.option("model", path.display());
                run.option("sim", dir.display());
                run.input(&path)?;
                let model = DefrostPredictor::from_tensor_file(&TensorFile::load(&path)?)?;
                model_name.get_or_insert_with(|| path.display().to_string());
                let ids: Vec<String> = missing.iter().map(|s| s.to_string()).collect();
                let traces = load_traces(dir, &ids, settings.get("fridge.threshold")?, run)?;
                for trace in traces {
                    let slot = rows
                        .iter()
                        .position(|r| r.fridge_id == trace.fridge_id)
                        .expect("listed");
                    predicted[slot] = Some(model.predict(&latest_window(&trace, model.window)?)?);
                }
            }
            _ if required == 0.0 => {}
            _ => {
                return Err(CliError::Input(format!(
                    "no prediction for {} fridge(s) (first: {}); pass --sim with --model or --registry",
                    missing.len(),
                    missing[0]
                )))
            }
        }
    }

    let candidates: Vec<FleetCandidate> = rows
        .iter()
        .zip(&predicted)
        .map(|(r, p)| FleetCandidate {
            fridge_id: r.fridge_id.clone(),
            predicted_safe_off_s: p.unwrap_or(f64::NAN),
            power_kw: r.power_kw,
        })
        .collect();
    let plan = if required == 0.0 && predicted.iter().any(Option::is_none) {
        FleetPlan {
            selected: Vec::new(),
            predicted_safe_off_s: Vec::new(),
            total_power_kw: 0.0,
            required_kw: 0.0,
            event_duration_s: event,
            method: SelectionMethod::Exact,
        }
    } else {
        select_fleet(&candidates, required, event, margin)?
    };
    let mut csv = Vec::new();
    plan.write_csv(&candidates, &mut csv)?;
    run.write("plan.csv", &csv)?;
    run.write_json(
        "plan.json",
        &SelectReport {
            plan: &plan,
            candidates: &candidates,
            model: model_name,
        },
    )?;
    println!(
        "selected {} of {} fridges: {:.2} kW for a {:.2} kW request over {} s",
        plan.len(),
        candidates.len(),
        plan.total_power_kw,
        required,
        event
    );
    Ok(())
}
