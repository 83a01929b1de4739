//! Layered run configuration: profile defaults, then a TOML file, then
//! `FSC_<SECTION>_<KEY>` environment variables, then `--set` flags.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use fsc_core::adapt::{AdaptConfig, LossWeights};
use fsc_core::fridge::{DefrostConfig, FleetSimConfig};
use fsc_core::numerics::SgdConfig;
use fsc_core::seq2seq::ForecasterConfig;
use fsc_core::signal::{Horizon, SplitFractions};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Profile {
    Desk,
    Paper,
}

impl Profile {
    pub fn name(self) -> &'static str {
        match self {
            Profile::Desk => "desk",
            Profile::Paper => "paper",
        }
    }
}

pub struct KeySpec {
    pub section: &'static str,
    pub key: &'static str,
    pub desk: &'static str,
    pub paper: &'static str,
    pub help: &'static str,
}

const fn k(
    section: &'static str,
    key: &'static str,
    desk: &'static str,
    paper: &'static str,
    help: &'static str,
) -> KeySpec {
    KeySpec {
        section,
        key,
        desk,
        paper,
        help,
    }
}

/// Every configuration key with its desk default and paper value.
pub const KEYS: &[KeySpec] = &[
    k(
        "run",
        "seed",
        "0",
        "0",
        "seed for initialisation, shuffling and simulation",
    ),
    k(
        "run",
        "seeds",
        "0,1,2,3,4",
        "0,1,2,3,4",
        "seeds averaged by ablate and adapt --compare",
    ),
    k("forecast", "target", "", "", "target column (empty: last column)"),
    k("forecast", "window", "15", "15", "input window length in rows"),
    k(
        "forecast",
        "horizon",
        "1",
        "1",
        "forecast horizon in steps (1, 2 or 3 = 1, 6, 12 rows ahead)",
    ),
    k("forecast", "horizons", "1,2,3", "1,2,3", "horizons covered by ablate"),
    k(
        "forecast",
        "use_wavelet",
        "true",
        "true",
        "Haar denoising of each input window",
    ),
    k(
        "forecast",
        "use_encoder",
        "true",
        "true",
        "pretrained encoder-decoder front end",
    ),
    k(
        "forecast",
        "use_attention",
        "true",
        "true",
        "attention over the predictor states",
    ),
    k(
        "forecast",
        "freeze_encoder",
        "false",
        "false",
        "keep pretrained encoder weights fixed",
    ),
    k("forecast", "wavelet_levels", "1", "1", "Haar decomposition depth"),
    k(
        "forecast",
        "encoder_hidden",
        "16,8",
        "128,32",
        "encoder LSTM layer sizes",
    ),
    k(
        "forecast",
        "predictor_hidden",
        "16",
        "128",
        "predictor LSTM layer sizes",
    ),
    k("forecast", "attention_size", "16", "128", "attention alignment width"),
    k("forecast", "mlp_hidden", "64,64", "64,64", "MLP baseline hidden layers"),
    k(
        "forecast",
        "mlp_learning_rate",
        "0.05",
        "0.001",
        "MLP baseline learning rate",
    ),
    k("forecast", "learning_rate", "0.4", "0.001", "supervised learning rate"),
    k("forecast", "batch_size", "4", "32", "supervised batch size"),
    k("forecast", "epochs", "40", "100", "supervised epochs"),
    k("forecast", "clip_norm", "5", "5", "gradient norm clip (none disables)"),
    k(
        "forecast",
        "pretrain_learning_rate",
        "0.5",
        "0.001",
        "autoencoder learning rate",
    ),
    k("forecast", "pretrain_batch_size", "4", "32", "autoencoder batch size"),
    k("forecast", "pretrain_epochs", "5", "100", "autoencoder epochs"),
    k(
        "forecast",
        "train_fraction",
        "0.7",
        "0.7",
        "chronological training share",
    ),
    k(
        "forecast",
        "validation_fraction",
        "0.1",
        "0.1",
        "chronological validation share",
    ),
    k("forecast", "test_fraction", "0.2", "0.2", "chronological test share"),
    k("cluster", "k", "7", "7", "k-means clusters per origin"),
    k("adapt", "trunk_hidden", "32", "2048", "shared layer sizes"),
    k(
        "adapt",
        "branch_hidden",
        "16",
        "256",
        "per-source layer sizes (last = feature layer)",
    ),
    k("adapt", "num_classes", "2", "2", "number of classes"),
    k(
        "adapt",
        "bandwidth_scales",
        "0.5,1,2",
        "0.5,1,2",
        "RBF bandwidths as multiples of the median distance",
    ),
    k("adapt", "weight_mmd", "1", "1", "MMD coefficient"),
    k("adapt", "weight_coral", "1", "1", "CORAL coefficient"),
    k(
        "adapt",
        "weight_class_discrepancy",
        "1",
        "1",
        "class-discrepancy coefficient",
    ),
    k("adapt", "weight_classification", "1", "1", "classification coefficient"),
    k("adapt", "learning_rate", "0.2", "0.01", "learning rate"),
    k("adapt", "batch_size", "32", "32", "per-domain batch size"),
    k("adapt", "epochs", "150", "100", "passes over the largest source"),
    k("adapt", "clip_norm", "5", "5", "gradient norm clip (none disables)"),
    k(
        "adapt",
        "moons_samples",
        "300",
        "300",
        "points per synthetic two-moons domain",
    ),
    k(
        "adapt",
        "moons_noise",
        "0.1",
        "0.1",
        "noise of the synthetic two-moons domains",
    ),
    k("fridge", "fridges", "110", "1100", "simulated fridges"),
    k(
        "fridge",
        "events_per_fridge",
        "100",
        "100",
        "forced switch-offs per fridge",
    ),
    k("fridge", "tau_min", "300", "300", "smallest warming time constant (s)"),
    k("fridge", "tau_max", "1200", "1200", "largest warming time constant (s)"),
    k("fridge", "ambient_min", "19", "19", "lowest ambient temperature (C)"),
    k("fridge", "ambient_max", "23", "23", "highest ambient temperature (C)"),
    k("fridge", "noise_std", "0.05", "0.05", "sensor noise (C)"),
    k("fridge", "door_rate", "0", "0", "door openings per hour"),
    k("fridge", "threshold", "8", "8", "food-safety threshold (C)"),
    k(
        "fridge",
        "event_spacing",
        "5400",
        "5400",
        "mean gap between switch-offs (s)",
    ),
    k(
        "fridge",
        "event_jitter",
        "1200",
        "1200",
        "uniform jitter on each gap (s)",
    ),
    k("fridge", "interval", "60", "60", "sample interval (s)"),
    k("fridge", "power_min", "1", "1", "smallest simulated power draw (kW)"),
    k("fridge", "power_max", "4", "4", "largest simulated power draw (kW)"),
    k("fridge", "window", "30", "30", "predictor window in samples"),
    k(
        "fridge",
        "lead",
        "0",
        "120",
        "seconds between window end and switch-off",
    ),
    k("fridge", "hidden", "16,16", "64,64", "predictor LSTM layer sizes"),
    k("fridge", "learning_rate", "0.1", "0.001", "predictor learning rate"),
    k("fridge", "batch_size", "16", "32", "predictor batch size"),
    k("fridge", "epochs", "12", "100", "predictor epochs"),
    k("fridge", "clip_norm", "5", "5", "gradient norm clip (none disables)"),
    k(
        "fridge",
        "validation_fraction",
        "0.1",
        "0.0909090909090909",
        "share of fridges held out for validation",
    ),
    k(
        "fridge",
        "test_fraction",
        "0.2",
        "0.0909090909090909",
        "share of fridges held out for testing",
    ),
    k(
        "fridge",
        "required_kw",
        "0",
        "0",
        "power reduction requested by the event (kW)",
    ),
    k("fridge", "event_duration", "180", "180", "event length (s)"),
    k(
        "fridge",
        "margin",
        "0.1",
        "0.1",
        "fraction shaved off each predicted safe-off duration",
    ),
];

/// Sections of a manifest that a config file may carry but the loader
/// skips.
const IGNORED_SECTIONS: [&str; 1] = ["manifest"];

fn spec(name: &str) -> Option<&'static KeySpec> {
    let (section, key) = name.split_once('.')?;
    KEYS.iter().find(|s| s.section == section && s.key == key)
}

/// Help text table of every key.
pub fn key_table() -> String {
    let mut out = String::from("Configuration keys (section.key: desk default | paper value):\n");
    for s in KEYS {
        let show = |v: &str| {
            if v.is_empty() {
                "\"\"".to_string()
            } else {
                v.to_string()
            }
        };
        let _ = writeln!(
            out,
            "  {}.{}: {} | {}  ({})",
            s.section,
            s.key,
            show(s.desk),
            show(s.paper),
            s.help
        );
    }
    out
}

/// Fully resolved `section.key -> value` strings.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub profile: Profile,
    values: BTreeMap<String, String>,
}

fn toml_scalar(v: &toml::Value) -> Option<String> {
    match v {
        toml::Value::String(s) => Some(s.clone()),
        toml::Value::Integer(i) => Some(i.to_string()),
        toml::Value::Float(f) => Some(f.to_string()),
        toml::Value::Boolean(b) => Some(b.to_string()),
        toml::Value::Array(items) => items
            .iter()
            .map(toml_scalar)
            .collect::<Option<Vec<_>>>()
            .map(|v| v.join(",")),
        _ => None,
    }
}

impl Settings {
    pub fn new(profile: Profile) -> Self {
        let values = KEYS
            .iter()
            .map(|s| {
                let v = match profile {
                    Profile::Desk => s.desk,
                    Profile::Paper => s.paper,
                };
                (format!("{}.{}", s.section, s.key), v.to_string())
            })
            .collect();
        Self { profile, values }
    }

    pub fn set(&mut self, name: &str, value: &str, origin: &str) -> Result<(), CliError> {
        if spec(name).is_none() {
            return Err(CliError::Config(format!("{origin}: unknown key `{name}`")));
        }
        self.values.insert(name.to_string(), value.trim().to_string());
        Ok(())
    }

    pub fn apply_toml(&mut self, text: &str, path: &Path) -> Result<(), CliError> {
        let origin = path.display().to_string();
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| CliError::Config(format!("{origin}: {}", e.message())))?;
        for (section, body) in &table {
            if IGNORED_SECTIONS.contains(&section.as_str()) {
                continue;
            }
            let toml::Value::Table(body) = body else {
                return Err(CliError::Config(format!("{origin}: `{section}` must be a [section]")));
            };
            for (key, value) in body {
                let name = format!("{section}.{key}");
                let value = toml_scalar(value)
                    .ok_or_else(|| CliError::Config(format!("{origin}: `{name}` must be a scalar or array")))?;
                self.set(&name, &value, &origin)?;
            }
        }
        Ok(())
    }

    pub fn apply_env(&mut self, lookup: impl Fn(&str) -> Option<String>) -> Result<(), CliError> {
        for s in KEYS {
            let var = format!("FSC_{}_{}", s.section, s.key).to_uppercase();
            if let Some(v) = lookup(&var) {
                self.set(&format!("{}.{}", s.section, s.key), &v, &var)?;
            }
        }
        Ok(())
    }

    /// `section.key=value` from the command line.
    pub fn apply_assignment(&mut self, assignment: &str) -> Result<(), CliError> {
        let (name, value) = assignment
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("--set expects section.key=value, got `{assignment}`")))?;
        self.set(name.trim(), value, "--set")
    }

    pub fn raw(&self, name: &str) -> &str {
        self.values
            .get(name)
            .unwrap_or_else(|| panic!("`{name}` is not a registered key"))
    }

    pub fn get<T: FromStr>(&self, name: &str) -> Result<T, CliError> {
        let raw = self.raw(name);
        raw.parse()
            .map_err(|_| CliError::Config(format!("`{name}`: cannot parse `{raw}`")))
    }

    pub fn list<T: FromStr>(&self, name: &str) -> Result<Vec<T>, CliError> {
        let raw = self.raw(name);
        if raw.is_empty() {
            return Ok(Vec::new());
        }
        raw.split(',')
            .map(|p| {
                p.trim()
                    .parse()
                    .map_err(|_| CliError::Config(format!("`{name}`: cannot parse `{p}` in `{raw}`")))
            })
            .collect()
    }

    fn clip(&self, name: &str) -> Result<Option<f64>, CliError> {
        match self.raw(name) {
            "none" | "" => Ok(None),
            _ => self.get(name).map(Some),
        }
    }

    pub fn seed(&self) -> Result<u64, CliError> {
        self.get("run.seed")
    }

    /// Plain-text rendering in config-file form; also the fingerprint input.
    pub fn to_toml(&self) -> String {
        let mut out = String::new();
        let mut current = "";
        for s in KEYS {
            if s.section != current {
                if !current.is_empty() {
                    out.push('\n');
                }
                let _ = writeln!(out, "[{}]", s.section);
                current = s.section;
            }
            let value = self.raw(&format!("{}.{}", s.section, s.key));
            let _ = writeln!(out, "{} = {}", s.key, toml::Value::String(value.to_string()));
        }
        out
    }

    pub fn forecaster(&self) -> Result<ForecasterConfig, CliError> {
        let seed = self.seed()?;
        let train = SgdConfig {
            learning_rate: self.get("forecast.learning_rate")?,
            batch_size: self.get("forecast.batch_size")?,
            epochs: self.get("forecast.epochs")?,
            seed,
            clip_norm: self.clip("forecast.clip_norm")?,
        };
        let cfg = ForecasterConfig {
            use_wavelet: self.get("forecast.use_wavelet")?,
            use_attention: self.get("forecast.use_attention")?,
            use_encoder: self.get("forecast.use_encoder")?,
            freeze_encoder: self.get("forecast.freeze_encoder")?,
            wavelet_levels: self.get("forecast.wavelet_levels")?,
            encoder_hidden: self.list("forecast.encoder_hidden")?,
            predictor_hidden: self.list("forecast.predictor_hidden")?,
            attention_size: self.get("forecast.attention_size")?,
            mlp_hidden: self.list("forecast.mlp_hidden")?,
            mlp_learning_rate: self.get("forecast.mlp_learning_rate")?,
            window: self.get("forecast.window")?,
            horizon: Horizon::from_steps(self.get("forecast.horizon")?).map_err(config_err)?,
            split: SplitFractions {
                train: self.get("forecast.train_fraction")?,
                validation: self.get("forecast.validation_fraction")?,
                test: self.get("forecast.test_fraction")?,
            },
            pretrain: SgdConfig {
                learning_rate: self.get("forecast.pretrain_learning_rate")?,
                batch_size: self.get("forecast.pretrain_batch_size")?,
                epochs: self.get("forecast.pretrain_epochs")?,
                ..train.clone()
            },
            train,
        };
        cfg.validate().map_err(config_err)?;
        Ok(cfg)
    }

    pub fn horizons(&self) -> Result<Vec<Horizon>, CliError> {
        self.list::<usize>("forecast.horizons")?
            .into_iter()
            .map(|s| Horizon::from_steps(s).map_err(config_err))
            .collect()
    }

    pub fn target_column(&self) -> Option<&str> {
        Some(self.raw("forecast.target")).filter(|t| !t.is_empty())
    }

    pub fn adapt(&self) -> Result<AdaptConfig, CliError> {
        let cfg = AdaptConfig {
            trunk_hidden: self.list("adapt.trunk_hidden")?,
            branch_hidden: self.list("adapt.branch_hidden")?,
            num_classes: self.get("adapt.num_classes")?,
            bandwidth_scales: self.list("adapt.bandwidth_scales")?,
            weights: LossWeights {
                mmd: self.get("adapt.weight_mmd")?,
                coral: self.get("adapt.weight_coral")?,
                class_discrepancy: self.get("adapt.weight_class_discrepancy")?,
                classification: self.get("adapt.weight_classification")?,
            },
            sgd: SgdConfig {
                learning_rate: self.get("adapt.learning_rate")?,
                batch_size: self.get("adapt.batch_size")?,
                epochs: self.get("adapt.epochs")?,
                seed: self.seed()?,
                clip_norm: self.clip("adapt.clip_norm")?,
            },
        };
        cfg.validate().map_err(config_err)?;
        Ok(cfg)
    }

    pub fn fleet(&self) -> Result<FleetSimConfig, CliError> {
        let cfg = FleetSimConfig {
            fridges: self.get("fridge.fridges")?,
            events_per_fridge: self.get("fridge.events_per_fridge")?,
            tau_range_s: (self.get("fridge.tau_min")?, self.get("fridge.tau_max")?),
            ambient_range_c: (self.get("fridge.ambient_min")?, self.get("fridge.ambient_max")?),
            noise_std_c: self.get("fridge.noise_std")?,
            door_rate_per_hour: self.get("fridge.door_rate")?,
            threshold_c: self.get("fridge.threshold")?,
            event_spacing_s: self.get("fridge.event_spacing")?,
            event_jitter_s: self.get("fridge.event_jitter")?,
            interval_s: self.get("fridge.interval")?,
        };
        cfg.validate().map_err(config_err)?;
        Ok(cfg)
    }

    pub fn defrost(&self) -> Result<DefrostConfig, CliError> {
        let cfg = DefrostConfig {
            hidden: self.list("fridge.hidden")?,
            sgd: SgdConfig {
                learning_rate: self.get("fridge.learning_rate")?,
                batch_size: self.get("fridge.batch_size")?,
                epochs: self.get("fridge.epochs")?,
                seed: self.seed()?,
                clip_norm: self.clip("fridge.clip_norm")?,
            },
            validation_fraction: self.get("fridge.validation_fraction")?,
            test_fraction: self.get("fridge.test_fraction")?,
        };
        cfg.validate().map_err(config_err)?;
        Ok(cfg)
    }
}

fn config_err(e: fsc_core::Error) -> CliError {
    CliError::Config(e.to_string())
}
