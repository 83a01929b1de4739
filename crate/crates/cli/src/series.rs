//! Greenhouse time-series subcommands: ingest, train, forecast, ablate.

use std::path::{Path, PathBuf};

use clap::Args;
use serde::Serialize;

use fsc_core::numerics::TensorFile;
use fsc_core::seq2seq::{ablate as run_ablation, train_forecaster_on, Forecaster, PreparedData};
use fsc_core::signal::synthetic::{synthetic_greenhouse, GreenhouseConfig};
use fsc_core::signal::{make_windows, resample_yield, NormalizerState, TimeSeriesFrame, TIMESTAMP_FORMAT};

use crate::config::Settings;
use crate::error::CliError;
use crate::output::{line_chart, Run};

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("source").required(true).args(["input", "synthetic"])))]
pub struct IngestArgs {
    /// Climate CSV: timestamp column first, target column last (or
    /// forecast.target).
    #[arg(long, value_name = "CSV")]
    input: Option<PathBuf>,
    /// Weekly yield CSV (timestamp,yield) to interpolate to daily values
    /// against daily climate means.
    #[arg(long = "yield", value_name = "CSV", requires = "input")]
    yield_csv: Option<PathBuf>,
    /// Generate this many hours of the synthetic greenhouse series instead
    /// of reading a file (seeded by run.seed).
    #[arg(long, value_name = "HOURS")]
    synthetic: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Series CSV as accepted by `ingest`.
    #[arg(long, value_name = "CSV")]
    input: PathBuf,
}

#[derive(Debug, Args)]
pub struct ForecastArgs {
    /// Checkpoint written by `train`.
    #[arg(long, value_name = "FILE")]
    model: PathBuf,
    /// Series CSV with the same columns as the training data.
    #[arg(long, value_name = "CSV")]
    input: PathBuf,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    /// Series CSV as accepted by `ingest`.
    #[arg(long, value_name = "CSV")]
    input: PathBuf,
}

#[derive(Serialize)]
struct ColumnSummary {
    name: String,
    min: f64,
    max: f64,
    mean: f64,
}

#[derive(Serialize)]
struct IngestSummary {
    rows: usize,
    first_timestamp: String,
    last_timestamp: String,
    target: String,
    columns: Vec<ColumnSummary>,
    normalizer: NormalizerState,
    train_samples: usize,
    validation_samples: usize,
    test_samples: usize,
}

fn summarize(name: &str, values: &[f64]) -> ColumnSummary {
    let (min, max) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    });
    ColumnSummary {
        name: name.to_string(),
        min,
        max,
        mean: values.iter().sum::<f64>() / values.len().max(1) as f64,
    }
}

fn read_frame(path: &Path, target: Option<&str>, run: &mut Run) -> Result<TimeSeriesFrame, CliError> {
    run.input(path)?;
    Ok(TimeSeriesFrame::read_csv(path, target)?)
}

pub fn ingest(args: &IngestArgs, settings: &Settings, run: &mut Run) -> Result<(), CliError> {
    let frame = match (&args.input, args.synthetic) {
        (Some(path), _) => {
            run.option("input", path.display());
            let climate = read_frame(path, settings.target_column(), run)?;
            match &args.yield_csv {
                Some(y) => {
                    run.option("yield", y.display());
                    let weekly = read_frame(y, None, run)?;
                    resample_yield(&climate, &weekly)?
                }
                None => climate,
            }
        }
        (None, Some(hours)) => {
            run.option("synthetic", hours);
            synthetic_greenhouse(&GreenhouseConfig {
                hours,
                seed: settings.seed()?,
                ..GreenhouseConfig::default()
            })
        }
        (None, None) => unreachable!("clap requires a source"),
    };
    let mut csv = Vec::new();
    frame.write_csv(&mut csv)?;
    run.write("series.csv", &csv)?;

    let cfg = settings.forecaster()?;
    let data = PreparedData::new(&frame, &cfg)?;
    let mut columns: Vec<ColumnSummary> = frame
        .channel_names()
        .iter()
        .zip(frame.channels())
        .map(|(n, c)| summarize(n, c))
        .collect();
    columns.push(summarize(frame.target_name(), frame.target()));
    let ts = frame.timestamps();
    let summary = IngestSummary {
        rows: frame.len(),
        first_timestamp: ts[0].format(TIMESTAMP_FORMAT).to_string(),
        last_timestamp: ts[ts.len() - 1].format(TIMESTAMP_FORMAT).to_string(),
        target: frame.target_name().to_string(),
        columns,
        normalizer: data.normalizer,
        train_samples: data.dataset.train.len(),
        validation_samples: data.dataset.validation.len(),
        test_samples: data.dataset.test.len(),
    };
    run.write_json("summary.json", &summary)?;
    println!(
        "{} rows, {} channels, target `{}`; {}/{}/{} train/validation/test windows",
        summary.rows,
        frame.num_channels(),
        summary.target,
        summary.train_samples,
        summary.validation_samples,
        summary.test_samples
    );
    Ok(())
}

fn prediction_chart(title: &str, truth: &[f64], predicted: &[(&str, &[f64])]) -> String {
    let x: Vec<f64> = (0..truth.len()).map(|i| i as f64).collect();
    let mut series = vec![("truth", truth)];
    series.extend_from_slice(predicted);
    line_chart(title, "test sample", &x, &series)
}

pub fn train(args: &TrainArgs, settings: &Settings, run: &mut Run) -> Result<(), CliError> {
    run.option("input", args.input.display());
    let frame = read_frame(&args.input, settings.target_column(), run)?;
    let cfg = settings.forecaster()?;
    let data = PreparedData::new(&frame, &cfg)?;
    let (model, report) = train_forecaster_on(&cfg, &data)?;

    let normalizer = serde_json::to_string(&data.normalizer).map_err(fsc_core::Error::from)?;
    let file = model.to_tensor_file(&[
        ("normalizer", normalizer),
        ("target", frame.target_name().to_string()),
        ("test_rmse", report.rmse.to_string()),
    ])?;
    run.write("model.fsct", file.to_text().as_bytes())?;
    run.write_json("report.json", &report)?;

    let target = data.normalizer.target;
    let mut csv = String::from("timestamp,truth,prediction,truth_raw,prediction_raw\n");
    for p in &report.predictions {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            p.timestamp,
            p.truth,
            p.prediction,
            target.invert(p.truth),
            target.invert(p.prediction)
        ));
    }
    run.write("predictions.csv", csv.as_bytes())?;
    let truth: Vec<f64> = report.predictions.iter().map(|p| p.truth).collect();
    let pred: Vec<f64> = report.predictions.iter().map(|p| p.prediction).collect();
    let svg = prediction_chart(
        &format!("{} {} test predictions", report.model, report.horizon),
        &truth,
        &[(report.model.as_str(), &pred)],
    );
    run.write("predictions.svg", svg.as_bytes())?;
    println!(
        "{} ({}): test RMSE {:.6} (normalised), best epoch {:?}",
        report.model, report.horizon, report.rmse, report.fit.best_epoch
    );
    Ok(())
}

#[derive(Serialize)]
struct ForecastSummary {
    model: String,
    windows: usize,
    rmse_normalised: f64,
    rmse: f64,
}

pub fn forecast(args: &ForecastArgs, _settings: &Settings, run: &mut Run) -> Result<(), CliError> {
    run.option("model", args.model.display());
    run.option("input", args.input.display());
    run.input(&args.model)?;
    let file = TensorFile::load(&args.model)?;
    let model = Forecaster::from_tensor_file(&file)?;
    let missing = |k: &str| CliError::Input(format!("{} lacks `{k}` metadata", args.model.display()));
    let normalizer: NormalizerState =
        serde_json::from_str(file.meta("normalizer").ok_or_else(|| missing("normalizer"))?)
            .map_err(fsc_core::Error::from)?;
    let target = file.meta("target").ok_or_else(|| missing("target"))?;
    let frame = read_frame(&args.input, Some(target), run)?;
    if frame.channel_names() != normalizer.channel_names.as_slice() {
        return Err(CliError::Input(format!(
            "columns {:?} differ from the training columns {:?}",
            frame.channel_names(),
            normalizer.channel_names
        )));
    }
    let normalized = normalizer.apply(&frame)?;
    let samples = make_windows(&normalized, model.config.window, model.config.horizon.lead())?;
    let mut csv = String::from("timestamp,truth,prediction\n");
    let (mut sq, mut sq_raw) = (0.0, 0.0);
    let mut truth = Vec::with_capacity(samples.len());
    let mut pred = Vec::with_capacity(samples.len());
    for s in &samples {
        let p = model.forecast(&s.input)?;
        let (t_raw, p_raw) = (normalizer.target.invert(s.target), normalizer.target.invert(p));
        sq += (p - s.target).powi(2);
        sq_raw += (p_raw - t_raw).powi(2);
        csv.push_str(&format!("{},{t_raw},{p_raw}\n", s.target_time.format(TIMESTAMP_FORMAT)));
        truth.push(t_raw);
        pred.push(p_raw);
    }
    run.write("forecasts.csv", csv.as_bytes())?;
    let n = samples.len() as f64;
    let summary = ForecastSummary {
        model: fsc_core::seq2seq::variant_label(&model.config),
        windows: samples.len(),
        rmse_normalised: (sq / n).sqrt(),
        rmse: (sq_raw / n).sqrt(),
    };
    run.write_json("summary.json", &summary)?;
    let svg = prediction_chart("forecasts", &truth, &[(summary.model.as_str(), &pred)]);
    run.write("forecasts.svg", svg.as_bytes())?;
    println!("{} windows, RMSE {:.6}", summary.windows, summary.rmse);
    Ok(())
}

pub fn ablate(args: &AblateArgs, settings: &Settings, run: &mut Run) -> Result<(), CliError> {
    run.option("input", args.input.display());
    let frame = read_frame(&args.input, settings.target_column(), run)?;
    let cfg = settings.forecaster()?;
    let seeds: Vec<u64> = settings.list("run.seeds")?;
    let report = run_ablation(&frame, &cfg, &settings.horizons()?, &seeds)?;
    run.write("ablation.csv", report.to_csv().as_bytes())?;
    run.write("ablation_seeds.csv", report.seeds_csv().as_bytes())?;
    run.write("ablation.txt", report.to_table().as_bytes())?;
    run.write_json("report.json", &report)?;
    for trace in &report.traces {
        run.write(&format!("trace_{}.csv", trace.horizon), trace.to_csv().as_bytes())?;
        let labels: Vec<String> = trace.predictions.iter().map(|(v, _)| v.to_string()).collect();
        let series: Vec<(&str, &[f64])> = labels
            .iter()
            .zip(&trace.predictions)
            .map(|(l, (_, p))| (l.as_str(), p.as_slice()))
            .collect();
        let svg = prediction_chart(&format!("{} test predictions", trace.horizon), &trace.truth, &series);
        run.write(&format!("trace_{}.svg", trace.horizon), svg.as_bytes())?;
    }
    print!("{}", report.to_table());
    Ok(())
}
