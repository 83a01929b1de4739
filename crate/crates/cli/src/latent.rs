//! Feature-space subcommands: cluster and adapt.

use std::path::PathBuf;

use clap::Args;
use serde::Serialize;

use fsc_core::adapt::{
    compare_settings, loss_curve_csv, shifted_two_moons, train_multisource, AdaptLossReport, AdaptModel, LabeledDomain,
    ShiftedMoons,
};
use fsc_core::latent::{
    group_by_origin, kmeans_fit, prune_adapt, read_labeled_csv, write_labeled_csv, CentroidSet, LatentVector,
};

use crate::config::Settings;
use crate::error::CliError;
use crate::output::{line_chart, Run};

#[derive(Debug, Args)]
pub struct ClusterArgs {
    /// Labelled vectors (x0.., label, domain) clustered per domain.
    #[arg(long, value_name = "CSV")]
    train: PathBuf,
    /// Labelled vectors used to prune and adapt the merged centroids.
    #[arg(long, value_name = "CSV")]
    validation: PathBuf,
    /// Optional held-out vectors scored before and after pruning.
    #[arg(long, value_name = "CSV")]
    test: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AdaptArgs {
    /// Labelled source-domain vectors; repeat once per source. Without
    /// sources the synthetic shifted two-moons domains are used.
    #[arg(long = "source", value_name = "CSV", requires = "target")]
    sources: Vec<PathBuf>,
    /// Target-domain vectors; labels are only used for scoring.
    #[arg(long, value_name = "CSV")]
    target: Option<PathBuf>,
    /// Also compare single-source, source-combined and multi-source
    /// training over run.seeds.
    #[arg(long)]
    compare: bool,
}

#[derive(Serialize)]
struct ClusterReport {
    clusters_per_origin: usize,
    origins: Vec<String>,
    merged_centroids: usize,
    final_centroids: usize,
    removed: Vec<usize>,
    validation_accuracy_before: f64,
    validation_accuracy_after: f64,
    test_accuracy_before: Option<f64>,
    test_accuracy_after: Option<f64>,
}

fn read_vectors(path: &PathBuf, run: &mut Run) -> Result<Vec<LatentVector>, CliError> {
    run.input(path)?;
    Ok(read_labeled_csv(path)?)
}

pub fn cluster(args: &ClusterArgs, settings: &Settings, run: &mut Run) -> Result<(), CliError> {
    run.option("train", args.train.display());
    run.option("validation", args.validation.display());
    let train = read_vectors(&args.train, run)?;
    let validation = read_vectors(&args.validation, run)?;
    let test = match &args.test {
        Some(p) => {
            run.option("test", p.display());
            Some(read_vectors(p, run)?)
        }
        None => None,
    };
    let k: usize = settings.get("cluster.k")?;
    let seed = settings.seed()?;
    let groups = group_by_origin(&train);
    let mut sets = Vec::with_capacity(groups.len());
    for (i, vectors) in groups.values().enumerate() {
        let fit = kmeans_fit(vectors, k.min(vectors.len()), seed.wrapping_add(i as u64))?;
        sets.push(fit.centroids);
    }
    let merged = CentroidSet::merge(&sets)?;
    let (pruned, trace) = prune_adapt(&merged, &validation)?;

    run.write("centroids_merged.fsct", merged.to_tensor_file().to_text().as_bytes())?;
    run.write("centroids.fsct", pruned.to_tensor_file().to_text().as_bytes())?;
    run.write("prune_trace.csv", trace.to_csv().as_bytes())?;
    run.write("centroids.csv", trace.centroid_csv(&merged, &pruned).as_bytes())?;
    let score = |set: &CentroidSet| test.as_ref().map(|t| set.accuracy(t)).transpose();
    let report = ClusterReport {
        clusters_per_origin: k,
        origins: groups.keys().cloned().collect(),
        merged_centroids: merged.len(),
        final_centroids: pruned.len(),
        removed: trace.removed(),
        validation_accuracy_before: trace.initial_accuracy(),
        validation_accuracy_after: trace.final_accuracy(),
        test_accuracy_before: score(&merged)?,
        test_accuracy_after: score(&pruned)?,
    };
    run.write_json("report.json", &report)?;
    println!(
        "{} -> {} centroids; validation accuracy {:.4} -> {:.4}",
        report.merged_centroids,
        report.final_centroids,
        report.validation_accuracy_before,
        report.validation_accuracy_after
    );
    if let (Some(a), Some(b)) = (report.test_accuracy_before, report.test_accuracy_after) {
        println!("test accuracy {a:.4} -> {b:.4}");
    }
    Ok(())
}

#[derive(Serialize)]
struct AdaptReport {
    sources: Vec<String>,
    target: String,
    steps: usize,
    target_accuracy: Option<f64>,
    final_losses: Option<AdaptLossReport>,
}

#[derive(Serialize)]
struct SettingsRow {
    seed: u64,
    single: Vec<f64>,
    single_mean: f64,
    combined: f64,
    multi_source: f64,
}

fn latent_vectors(
    model: &AdaptModel,
    domain: &LabeledDomain,
    rows: impl Iterator<Item = usize>,
) -> Result<Vec<LatentVector>, CliError> {
    let features = model.latent(&domain.features, 0)?;
    Ok(rows
        .map(|r| LatentVector::new(features.row(r).to_vec(), domain.labels[r], domain.name.clone()))
        .collect())
}

/// Splits rows in two by alternating within each class, so both halves
/// keep the class balance.
fn alternate_per_class(labels: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let mut seen = std::collections::HashMap::new();
    let (mut first, mut second) = (Vec::new(), Vec::new());
    for (row, label) in labels.iter().enumerate() {
        let n = seen.entry(label).or_insert(0usize);
        if *n % 2 == 0 {
            first.push(row)
        } else {
            second.push(row)
        }
        *n += 1;
    }
    (first, second)
}

fn write_vectors(run: &mut Run, name: &str, vectors: &[LatentVector]) -> Result<(), CliError> {
    let mut buf = Vec::new();
    write_labeled_csv(vectors, &mut buf)?;
    run.write(name, &buf)?;
    Ok(())
}

pub fn adapt(args: &AdaptArgs, settings: &Settings, run: &mut Run) -> Result<(), CliError> {
    let config = settings.adapt()?;
    let seed = settings.seed()?;
    for p in &args.sources {
        run.option("source", p.display());
    }
    if let Some(t) = &args.target {
        run.option("target", t.display());
    }
    run.option("compare", args.compare);
    let mut loaded = None;
    if !args.sources.is_empty() {
        let mut sources = Vec::new();
        for path in &args.sources {
            let vectors = read_vectors(path, run)?;
            let name = path
                .file_stem()
                .map_or("source".into(), |s| s.to_string_lossy().into_owned());
            sources.push(LabeledDomain::from_vectors(name, &vectors)?);
        }
        let target_path = args.target.as_ref().expect("clap requires a target with sources");
        let target = LabeledDomain::from_vectors("target", &read_vectors(target_path, run)?)?;
        loaded = Some((sources, target));
    }
    let domains = |seed: u64| -> Result<(Vec<LabeledDomain>, LabeledDomain), CliError> {
        if let Some(d) = &loaded {
            return Ok(d.clone());
        }
        let mut spec = ShiftedMoons::default();
        for d in spec.sources.iter_mut().chain(std::iter::once(&mut spec.target)) {
            d.samples = settings.get("adapt.moons_samples")?;
            d.noise = settings.get("adapt.moons_noise")?;
        }
        Ok(shifted_two_moons(&spec, seed)?)
    };
    let (sources, target) = domains(seed)?;
    let outcome = train_multisource(&sources, &target.features, Some(&target.labels), &config)?;

    run.write(
        "model.fsct",
        outcome.model.to_tensor_file(&config)?.to_text().as_bytes(),
    )?;
    run.write("loss_curve.csv", loss_curve_csv(&outcome.curve).as_bytes())?;
    let steps: Vec<f64> = (0..outcome.curve.len()).map(|i| i as f64).collect();
    let pick = |f: fn(&AdaptLossReport) -> f64| outcome.curve.iter().map(f).collect::<Vec<f64>>();
    let (fd, cd, cl, total) = (
        pick(|r| r.feature_discrepancy),
        pick(|r| r.class_discrepancy),
        pick(|r| r.classification),
        pick(|r| r.total),
    );
    let svg = line_chart(
        "adaptation losses",
        "step",
        &steps,
        &[
            ("feature discrepancy", &fd),
            ("class discrepancy", &cd),
            ("classification", &cl),
            ("total", &total),
        ],
    );
    run.write("loss_curve.svg", svg.as_bytes())?;

    let mut source_latents = Vec::new();
    for s in &sources {
        source_latents.extend(latent_vectors(&outcome.model, s, 0..s.len())?);
    }
    write_vectors(run, "latents_sources.csv", &source_latents)?;
    let (val_rows, test_rows) = alternate_per_class(&target.labels);
    let val = latent_vectors(&outcome.model, &target, val_rows.into_iter())?;
    let test = latent_vectors(&outcome.model, &target, test_rows.into_iter())?;
    write_vectors(run, "latents_target_validation.csv", &val)?;
    write_vectors(run, "latents_target_test.csv", &test)?;

    let report = AdaptReport {
        sources: sources.iter().map(|s| s.name.clone()).collect(),
        target: target.name.clone(),
        steps: outcome.curve.len(),
        target_accuracy: outcome.target_accuracy,
        final_losses: outcome.curve.last().cloned(),
    };
    run.write_json("report.json", &report)?;
    println!(
        "{} sources, {} steps, target accuracy {:.4}",
        report.sources.len(),
        report.steps,
        report.target_accuracy.unwrap_or(f64::NAN)
    );

    if args.compare {
        let mut rows = Vec::new();
        let mut csv = String::from("seed,single_mean,combined,multi_source\n");
        for s in settings.list::<u64>("run.seeds")? {
            let (sources, target) = domains(s)?;
            let acc = compare_settings(&sources, &target, &config.clone().with_seed(s))?;
            csv.push_str(&format!(
                "{s},{},{},{}\n",
                acc.single_mean(),
                acc.combined,
                acc.multi_source
            ));
            rows.push(SettingsRow {
                seed: s,
                single_mean: acc.single_mean(),
                single: acc.single,
                combined: acc.combined,
                multi_source: acc.multi_source,
            });
        }
        let n = rows.len().max(1) as f64;
        let mean = |f: fn(&SettingsRow) -> f64| rows.iter().map(f).sum::<f64>() / n;
        let (single, combined, multi) = (mean(|r| r.single_mean), mean(|r| r.combined), mean(|r| r.multi_source));
        csv.push_str(&format!("mean,{single},{combined},{multi}\n"));
        run.write("settings.csv", csv.as_bytes())?;
        run.write_json("settings.json", &rows)?;
        println!("mean target accuracy: single {single:.4}, combined {combined:.4}, multi-source {multi:.4}");
    }
    Ok(())
}
