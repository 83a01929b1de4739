//! `report`: collect finished run directories into one markdown summary.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::Args;

use crate::error::CliError;
use crate::output::Run;

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Run directories (each holding manifest.toml); repeatable.
    #[arg(long = "run", value_name = "DIR", required = true)]
    runs: Vec<PathBuf>,
}

/// JSON files whose scalar fields are quoted in the summary.
const RESULT_FILES: &[&str] = &["report.json", "summary.json", "plan.json"];

fn read_manifest(dir: &Path) -> Result<toml::Table, CliError> {
    let path = dir.join("manifest.toml");
    let text =
        std::fs::read_to_string(&path).map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    text.parse::<toml::Table>()
        .map_err(|e| CliError::Input(format!("{}: {}", path.display(), e.message())))
}

fn scalar(v: &serde_json::Value) -> Option<String> {
    match v {
        serde_json::Value::Number(n) => Some(n.to_string()),
        serde_json::Value::String(s) => Some(s.clone()),
        serde_json::Value::Bool(b) => Some(b.to_string()),
        _ => None,
    }
}

/// Scalars at the top level and one level down (e.g. `fit.best_epoch`).
fn scalars(value: &serde_json::Value) -> Vec<(String, String)> {
    let mut out = Vec::new();
    let Some(obj) = value.as_object() else { return out };
    for (k, v) in obj {
        if let Some(s) = scalar(v) {
            out.push((k.clone(), s));
        } else if let Some(inner) = v.as_object() {
            out.extend(
                inner
                    .iter()
                    .filter_map(|(k2, v2)| scalar(v2).map(|s| (format!("{k}.{k2}"), s))),
            );
        }
    }
    out
}

fn section(dir: &Path, run: &mut Run) -> Result<String, CliError> {
    let manifest = read_manifest(dir)?;
    run.input(&dir.join("manifest.toml"))?;
    let head = manifest
        .get("manifest")
        .and_then(|v| v.as_table())
        .ok_or_else(|| CliError::Input(format!("{}/manifest.toml lacks [manifest]", dir.display())))?;
    let field = |k: &str| {
        head.get(k)
            .map_or("?".to_string(), |v| v.to_string().trim_matches('"').to_string())
    };
    let mut md = String::new();
    let _ = writeln!(md, "## {} ({})\n", field("subcommand"), dir.display());
    let _ = writeln!(md, "- profile: {}", field("profile"));
    let _ = writeln!(md, "- seed: {}", field("seed"));
    let _ = writeln!(md, "- config fingerprint: {}", field("config_fingerprint"));
    if let Some(artifacts) = head.get("artifacts").and_then(|v| v.as_table()) {
        let names: Vec<&str> = artifacts.keys().map(String::as_str).collect();
        let _ = writeln!(md, "- artifacts: {}", names.join(", "));
    }
    for name in RESULT_FILES {
        let path = dir.join(name);
        if !path.exists() {
            continue;
        }
        run.input(&path)?;
        let text = std::fs::read_to_string(&path)?;
        let value: serde_json::Value = serde_json::from_str(&text).map_err(fsc_core::Error::from)?;
        let rows = scalars(&value);
        if rows.is_empty() {
            continue;
        }
        let _ = writeln!(md, "\n| {name} | value |\n|---|---|");
        for (k, v) in rows {
            let _ = writeln!(md, "| {k} | {v} |");
        }
    }
    let table = dir.join("ablation.txt");
    if table.exists() {
        run.input(&table)?;
        let _ = writeln!(md, "\n```\n{}```", std::fs::read_to_string(&table)?);
    }
    Ok(md)
}

pub fn report(args: &ReportArgs, run: &mut Run) -> Result<(), CliError> {
    let mut md = String::from("# Run summary\n");
    for dir in &args.runs {
        run.option("run", dir.display());
        md.push('\n');
        md.push_str(&section(dir, run)?);
    }
    run.write("report.md", md.as_bytes())?;
    print!("{md}");
    Ok(())
}
