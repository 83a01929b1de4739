//! `fsc`: command-line entry point for forecasting, latent clustering,
//! domain adaptation and refrigeration demand response.

mod config;
mod error;
mod fridge;
mod latent;
mod output;
mod report;
mod series;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};

use config::{key_table, Profile, Settings};
use error::{CliError, EXIT_CODES_HELP, EXIT_OK};

#[derive(Debug, Parser)]
#[command(
    name = "fsc",
    version,
    about = "Deep time-series forecasting, latent-centroid verification, multi-source domain adaptation and refrigeration demand response"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Default hyperparameters: small desk-scale models or the full-size
    /// settings.
    #[arg(long, global = true, value_enum, default_value = "desk", env = "FSC_PROFILE")]
    profile: Profile,
    /// TOML file with [section] key = value entries (a run manifest works).
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override one key; repeatable. Takes precedence over file and
    /// environment.
    #[arg(long = "set", global = true, value_name = "SECTION.KEY=VALUE")]
    set: Vec<String>,
    /// Shortcut for --set run.seed=N.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (default: runs/<subcommand>).
    #[arg(long, short, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Log progress to stderr (-v info, -vv debug).
    #[arg(long, short, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate a climate CSV (optionally resampling weekly yield to daily)
    /// or generate the synthetic greenhouse series.
    Ingest(series::IngestArgs),
    /// Train one forecaster and evaluate it on the chronological test split.
    Train(series::TrainArgs),
    /// Apply a trained forecaster to every window of a CSV.
    Forecast(series::ForecastArgs),
    /// Train all comparison variants over seeds and horizons.
    Ablate(series::AblateArgs),
    /// Per-origin k-means, merge, prune and adapt centroids on validation
    /// vectors.
    Cluster(latent::ClusterArgs),
    /// Multi-source domain adaptation on labelled feature vectors.
    Adapt(latent::AdaptArgs),
    /// Simulate a fleet of refrigerators with forced switch-offs.
    FridgeSim(fridge::SimArgs),
    /// Train the safe-off duration predictor.
    FridgeTrain(fridge::TrainArgs),
    /// Choose the fewest fridges that cover a power reduction request.
    FridgeSelect(fridge::SelectArgs),
    /// Summarise finished run directories.
    Report(report::ReportArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Ingest(_) => "ingest",
            Command::Train(_) => "train",
            Command::Forecast(_) => "forecast",
            Command::Ablate(_) => "ablate",
            Command::Cluster(_) => "cluster",
            Command::Adapt(_) => "adapt",
            Command::FridgeSim(_) => "fridge-sim",
            Command::FridgeTrain(_) => "fridge-train",
            Command::FridgeSelect(_) => "fridge-select",
            Command::Report(_) => "report",
        }
    }
}

fn settings(common: &Common) -> Result<Settings, CliError> {
    let mut s = Settings::new(common.profile);
    if let Some(path) = &common.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        s.apply_toml(&text, path)?;
    }
    s.apply_env(|var| std::env::var(var).ok())?;
    if let Some(seed) = common.seed {
        s.set("run.seed", &seed.to_string(), "--seed")?;
    }
    for assignment in &common.set {
        s.apply_assignment(assignment)?;
    }
    Ok(s)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut settings = settings(&cli.common)?;
    if let Command::FridgeSelect(a) = &cli.command {
        for (key, value) in a.overrides() {
            settings.set(key, &value, "command line")?;
        }
    }
    let name = cli.command.name();
    let out = cli
        .common
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("runs").join(name));
    let mut run = output::Run::new(&out, name, &settings)?;
    match &cli.command {
        Command::Ingest(a) => series::ingest(a, &settings, &mut run)?,
        Command::Train(a) => series::train(a, &settings, &mut run)?,
        Command::Forecast(a) => series::forecast(a, &settings, &mut run)?,
        Command::Ablate(a) => series::ablate(a, &settings, &mut run)?,
        Command::Cluster(a) => latent::cluster(a, &settings, &mut run)?,
        Command::Adapt(a) => latent::adapt(a, &settings, &mut run)?,
        Command::FridgeSim(a) => fridge::simulate(a, &settings, &mut run)?,
        Command::FridgeTrain(a) => fridge::train(a, &settings, &mut run)?,
        Command::FridgeSelect(a) => fridge::select(a, &settings, &mut run)?,
        Command::Report(a) => report::report(a, &mut run)?,
    }
    let manifest = run.finish()?;
    log::info!("wrote {}", manifest.display());
    Ok(())
}

fn main() -> ExitCode {
    let help = format!("{}\n{EXIT_CODES_HELP}", key_table());
    let command = Cli::command().after_help(help);
    let cli = match command.try_get_matches().and_then(|m| Cli::from_arg_matches(&m)) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::from(EXIT_OK as u8);
            }
            let first = e.to_string();
            let first = first.lines().next().unwrap_or("invalid arguments");
            let err = CliError::Usage(first.trim_start_matches("error: ").to_string());
            eprintln!("{}", err.line());
            return ExitCode::from(err.code() as u8);
        }
    };
    let level = match cli.common.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.line());
            ExitCode::from(e.code() as u8)
        }
    }
}
