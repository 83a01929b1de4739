//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test -p fsc-cli --test acceptance`; pass criterion
//! numbers after `--` to run a subset (`-- 3 4`).

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::sync::Arc;
use std::time::{Duration, Instant};

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use fsc_core::adapt::{
    compare_settings, coral, mmd, shifted_two_moons, train_multisource, AdaptConfig, AdaptModel, Bandwidths,
    DomainBatch, LossWeights, ShiftedMoons,
};
use fsc_core::fridge::{
    extract_examples, fleet_examples, parse_index, select_fleet, simulate_fleet, simulate_trace,
    train_defrost_predictor, DefrostConfig, FleetCandidate, FleetSimConfig, FridgeSpec, Registry, Schedule,
    DEFAULT_WINDOW,
};
use fsc_core::latent::{classify_nearest, kmeans_fit, prune_adapt, Centroid, CentroidSet, LatentVector};
use fsc_core::numerics::{grad_check, squared_distance, Matrix, ParamSet, TensorFile};
use fsc_core::recurrent::{Activation, LstmRegressor, LstmStack, LstmState, Mlp, WindowRegressor};
use fsc_core::seq2seq::{ablate, Attention, EncoderDecoder, Forecaster, ForecasterConfig, Variant};
use fsc_core::signal::{fit_apply_minmax, haar_forward, haar_inverse, wavelet_denoise, Horizon, TimeSeriesFrame};
use fsc_core::Error;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    Matrix::from_vec(
        rows,
        cols,
        (0..rows * cols).map(|_| rng.random_range(-scale..scale)).collect(),
    )
    .unwrap()
}

fn uniform_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

// ---------------------------------------------------------------- 1

const GRAD_TOL: f64 = 1e-4;
const GRAD_SEEDS: [u64; 3] = [0, 1, 3];

fn stack_loss(
    stack: &LstmStack,
    ps: &mut ParamSet,
    xs: &Matrix,
    w_top: &Matrix,
    w_c: &[Vec<f64>],
) -> fsc_core::Result<f64> {
    let (p, g) = ps.split_mut();
    let cache = stack.forward(p, xs, None)?;
    let top = cache.top_sequence();
    let mut loss: f64 = top.data().iter().zip(w_top.data()).map(|(a, b)| a * b).sum();
    let fin = cache.final_state();
    for (c, w) in fin.c.iter().zip(w_c) {
        loss += c.iter().zip(w).map(|(a, b)| a * b).sum::<f64>();
    }
    let d_final = LstmState {
        h: stack.hidden_sizes().iter().map(|&n| vec![0.0; n]).collect(),
        c: w_c.to_vec(),
    };
    stack.backward(p, g, &cache, w_top, Some(&d_final));
    Ok(loss)
}

fn randomize(ps: &mut ParamSet, rng: &mut ChaCha8Rng, scale: f64) {
    for m in ps.values_mut().iter_mut() {
        m.data_mut()
            .iter_mut()
            .for_each(|v| *v = rng.random_range(-scale..scale));
    }
}

fn lstm_check(seed: u64, input: usize, hidden: &[usize], steps: usize) -> fsc_core::Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ps = ParamSet::new();
    let stack = LstmStack::new(&mut ps, "s", input, hidden, &mut rng);
    randomize(&mut ps, &mut rng, 0.6);
    let xs = uniform(&mut rng, steps, input, 1.0);
    let top = *hidden.last().unwrap();
    let w_top = uniform(&mut rng, steps, top, 1.0);
    let w_c: Vec<Vec<f64>> = hidden.iter().map(|&n| uniform_vec(&mut rng, n)).collect();
    Ok(grad_check(&mut ps, 1e-5, None, seed, |ps| {
        stack_loss(&stack, ps, &xs, &w_top, &w_c)
    })?
    .max_relative_error)
}

fn regressor_check<M: WindowRegressor + Clone>(
    model: &M,
    x: &Matrix,
    y: f64,
    seed: u64,
    coords: Option<usize>,
) -> fsc_core::Result<f64> {
    let mut work = model.clone();
    let mut params = model.params().clone();
    let report = grad_check(&mut params, 1e-5, coords, seed, |ps| {
        *work.params_mut() = ps.clone();
        let loss = work.accumulate(x, y, 1.0)?;
        for (dst, src) in ps.grads_mut().iter_mut().zip(work.params().grads().iter()) {
            dst.data_mut().copy_from_slice(src.data());
        }
        Ok(loss)
    })?;
    Ok(report.max_relative_error)
}

fn gradient_fidelity() -> Check {
    let mut worst: BTreeMap<&str, f64> = BTreeMap::new();
    let mut failures = Vec::new();
    for seed in GRAD_SEEDS {
        let mut record = |name: &'static str, err: fsc_core::Result<f64>| -> Result<(), String> {
            let err = err.map_err(|e| format!("{name}: {e}"))?;
            let slot = worst.entry(name).or_insert(0.0);
            *slot = slot.max(err);
            if !(err <= GRAD_TOL) {
                failures.push(format!("{name} seed {seed}: {err:.1e}"));
            }
            Ok(())
        };
        record("lstm cell", lstm_check(seed, 4, &[5], 1))?;
        record("stacked lstm", lstm_check(seed, 3, &[4, 3], 6))?;

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ps = ParamSet::new();
        let mlp = Mlp::new(&mut ps, "m", 5, &[7, 6], 2, Activation::Tanh, &mut rng);
        let x = uniform_vec(&mut rng, 5);
        let w = uniform_vec(&mut rng, 2);
        record(
            "dense heads",
            grad_check(&mut ps, 1e-5, None, seed, |ps| {
                let (p, g) = ps.split_mut();
                let cache = mlp.forward(p, &x)?;
                let loss = cache.output().iter().zip(&w).map(|(a, b)| a * b).sum();
                mlp.backward(p, g, &cache, &w);
                Ok(loss)
            })
            .map(|r| r.max_relative_error),
        )?;

        let mut ps = ParamSet::new();
        let att = Attention::new(&mut ps, "att", 4, 4, 3, &mut rng);
        let h = uniform(&mut rng, 5, 4, 1.0);
        let q = uniform_vec(&mut rng, 4);
        let w_out = uniform_vec(&mut rng, 4);
        record(
            "attention",
            grad_check(&mut ps, 1e-5, None, seed, |ps| {
                let (p, g) = ps.split_mut();
                let out = att.forward(p, &h, &q)?;
                let (mut dh, mut dq) = (Matrix::zeros(5, 4), vec![0.0; 4]);
                att.backward(p, g, &h, &q, &out, &w_out, &mut dh, &mut dq);
                Ok(out.context.iter().zip(&w_out).map(|(a, b)| a * b).sum())
            })
            .map(|r| r.max_relative_error),
        )?;

        let mut ps = ParamSet::new();
        let ae = EncoderDecoder::new(&mut ps, 3, &[5, 2], &mut rng);
        let x = uniform(&mut rng, 4, 3, 1.0);
        record(
            "encoder-decoder",
            grad_check(&mut ps, 1e-5, None, seed, |ps| {
                let (p, g) = ps.split_mut();
                ae.accumulate(p, g, &x, 1.0)
            })
            .map(|r| r.max_relative_error),
        )?;

        let model = LstmRegressor::new(3, &[4, 3], seed);
        let x = uniform(&mut rng, 5, 3, 1.0);
        record("lstm regressor", regressor_check(&model, &x, 0.3, seed, None))?;

        let sgd = fsc_core::numerics::SgdConfig {
            learning_rate: 0.1,
            batch_size: 8,
            epochs: 1,
            seed,
            clip_norm: None,
        };
        let cfg = ForecasterConfig {
            use_wavelet: false,
            encoder_hidden: vec![5, 3],
            predictor_hidden: vec![4],
            attention_size: 3,
            mlp_hidden: vec![6],
            window: 7,
            pretrain: sgd.clone(),
            train: sgd,
            ..ForecasterConfig::desk()
        };
        let mut forecaster = Forecaster::new(&cfg, 3, seed).map_err(|e| e.to_string())?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        randomize(&mut forecaster.params, &mut rng, 1.0);
        let x = uniform(&mut rng, 7, 3, 1.0);
        record("full forecaster", regressor_check(&forecaster, &x, 0.4, seed, Some(40)))?;

        let da_cfg = AdaptConfig {
            trunk_hidden: vec![6],
            branch_hidden: vec![5],
            ..AdaptConfig::desk().with_seed(seed)
        };
        // Four sources: with an odd count the L1 class discrepancy has exact
        // zero subgradients whose round-off exceeds the relative floor.
        let mut model = AdaptModel::new(3, 4, &da_cfg).map_err(|e| e.to_string())?;
        // Zero-initialised biases put rows exactly on ReLU kinks; check at a
        // generic point instead.
        randomize(&mut model.params, &mut rng, 0.5);
        let batch = DomainBatch {
            sources: (0..4)
                .map(|_| {
                    (
                        uniform(&mut rng, 5, 3, 1.0),
                        (0..5).map(|_| rng.random_range(0..2)).collect(),
                    )
                })
                .collect(),
            target: uniform(&mut rng, 6, 3, 1.0),
        };
        let bw = Bandwidths::Fixed(vec![0.3, 0.6, 1.2]);
        let weights = LossWeights::default();
        let mut ps = model.params.clone();
        record(
            "adaptation losses end to end",
            grad_check(&mut ps, 1e-5, Some(25), seed, |ps| {
                let (p, g) = ps.split_mut();
                Ok(model.accumulate(p, g, &batch, &bw, &weights)?.total)
            })
            .map(|r| r.max_relative_error),
        )?;
    }
    let summary = worst
        .iter()
        .map(|(k, v)| format!("{k} {v:.1e}"))
        .collect::<Vec<_>>()
        .join(", ");
    ensure(failures.is_empty(), || {
        format!("above {GRAD_TOL:e}: {}", failures.join("; "))
    })?;
    Ok(format!(
        "{} seeds; worst relative error per layer: {summary}",
        GRAD_SEEDS.len()
    ))
}

// ---------------------------------------------------------------- 2

fn ablation_ordering() -> Check {
    let path = repo_root().join("data/greenhouse.csv");
    let frame = TimeSeriesFrame::read_csv(&path, None).map_err(|e| e.to_string())?;
    ensure(frame.len() == 5000, || {
        format!("bundled series has {} rows", frame.len())
    })?;
    let one = Horizon::from_steps(1).unwrap();
    let seeds = [0, 1, 2, 3, 4];
    let report = ablate(&frame, &ForecasterConfig::desk(), &[one], &seeds).map_err(|e| e.to_string())?;
    let mean = |v| report.mean_rmse(v, one).unwrap();
    let (full, wt_ed, ed_am, mlp) = (
        mean(Variant::WtEdLstmAm),
        mean(Variant::WtEdLstm),
        mean(Variant::EdLstmAm),
        mean(Variant::Mlp),
    );
    let bound = wt_ed.min(ed_am) * 1.10;
    let rows: Vec<String> = report
        .to_csv()
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap().to_string())
        .collect();
    let detail = format!(
        "mean one-step RMSE over 5 seeds: WT-ED-LSTM-AM {full:.5}, WT-ED-LSTM {wt_ed:.5}, ED-LSTM-AM {ed_am:.5}, MLP {mlp:.5}, LSTM {:.5}",
        mean(Variant::Lstm)
    );
    ensure(full <= bound, || format!("{detail}; full model above {bound:.5}"))?;
    ensure(full < mlp, || format!("{detail}; full model does not beat MLP"))?;
    let expected = ["SVR", "RFR", "MLP", "LSTM", "WT-ED-LSTM", "ED-LSTM-AM", "WT-ED-LSTM-AM"];
    ensure(rows == expected, || format!("report rows {rows:?}"))?;
    ensure(report.to_csv().lines().nth(1) == Some("SVR,out of scope"), || {
        "SVR row is not an out-of-scope marker".into()
    })?;
    Ok(detail)
}

// ---------------------------------------------------------------- 3

fn hourly_frame(col: Vec<f64>) -> TimeSeriesFrame {
    let start = NaiveDate::from_ymd_opt(2024, 1, 1)
        .unwrap()
        .and_hms_opt(0, 0, 0)
        .unwrap();
    let ts = (0..col.len())
        .map(|i| start + chrono::Duration::hours(i as i64))
        .collect();
    TimeSeriesFrame::new(ts, vec!["x".into()], vec![col.clone()], "y", col).unwrap()
}

fn signal_oracles() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut round_trip: f64 = 0.0;
    for _ in 0..500 {
        let levels = rng.random_range(1..5usize);
        let n = rng.random_range((1 << levels)..300);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-100.0..100.0)).collect();
        let back = haar_inverse(&haar_forward(&x, levels).unwrap());
        ensure(back.len() == n, || "round trip changed the length".into())?;
        round_trip = back
            .iter()
            .zip(&x)
            .map(|(a, b)| (a - b).abs())
            .fold(round_trip, f64::max);
        let once = wavelet_denoise(&x, levels).unwrap();
        ensure(wavelet_denoise(&once, levels).unwrap() == once, || {
            format!("denoise not idempotent (n {n}, levels {levels})")
        })?;
    }
    ensure(round_trip < 1e-10, || format!("round-trip error {round_trip:e}"))?;
    ensure(
        wavelet_denoise(&[1.0, 3.0, 1.0, 3.0], 1).unwrap() == vec![2.0; 4],
        || "[1,3,1,3] did not give [2,2,2,2]".into(),
    )?;
    ensure(wavelet_denoise(&[5.0; 4], 1).unwrap() == vec![5.0; 4], || {
        "constant series changed".into()
    })?;

    let (f, _) = fit_apply_minmax(&hourly_frame(vec![2.0, 4.0, 6.0]), 1.0).unwrap();
    ensure(f.channel(0) == [0.0, 0.5, 1.0], || {
        format!("[2,4,6] -> {:?}", f.channel(0))
    })?;
    let (f, _) = fit_apply_minmax(&hourly_frame(vec![7.0, 7.0, 7.0]), 1.0).unwrap();
    ensure(f.channel(0) == [0.0, 0.0, 0.0], || {
        format!("[7,7,7] -> {:?}", f.channel(0))
    })?;
    let (f, _) = fit_apply_minmax(&hourly_frame(vec![2.0, 4.0, 6.0]), 2.0 / 3.0).unwrap();
    ensure(f.channel(0) == [0.0, 1.0, 2.0], || {
        format!("fit on two rows -> {:?}", f.channel(0))
    })?;
    Ok(format!(
        "500 random series, max round-trip error {round_trip:.1e}; idempotence exact; worked examples match"
    ))
}

// ---------------------------------------------------------------- 4

fn centroid(values: &[f64], label: usize, origin: &str) -> Centroid {
    Centroid {
        values: values.to_vec(),
        label,
        origin: origin.into(),
    }
}

fn linear_scan(q: &[f64], set: &CentroidSet) -> usize {
    let mut best = (f64::INFINITY, 0);
    for (i, c) in set.centroids().iter().enumerate() {
        let d = squared_distance(q, &c.values);
        if d < best.0 {
            best = (d, i);
        }
    }
    best.1
}

fn clustering() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for instance in 0..100u64 {
        let n = rng.random_range(5..150);
        let d = rng.random_range(1..6);
        let k = rng.random_range(1..=n.min(12));
        let vectors: Vec<LatentVector> = (0..n)
            .map(|_| {
                LatentVector::new(
                    uniform_vec(&mut rng, d).iter().map(|v| v * 5.0).collect(),
                    rng.random_range(0..3),
                    "r",
                )
            })
            .collect();
        let fit = kmeans_fit(&vectors, k, instance).map_err(|e| e.to_string())?;
        for w in fit.objective_trace.windows(2) {
            ensure(w[1] <= w[0] * (1.0 + 1e-12), || {
                format!("instance {instance}: objective {} -> {}", w[0], w[1])
            })?;
        }
    }

    let set = CentroidSet::new(
        (0..15)
            .map(|i| {
                centroid(
                    &uniform_vec(&mut rng, 6).iter().map(|v| v * 3.0).collect::<Vec<_>>(),
                    i % 4,
                    "a",
                )
            })
            .collect(),
    )
    .unwrap();
    for q in 0..1000 {
        let query: Vec<f64> = uniform_vec(&mut rng, 6).iter().map(|v| v * 4.0).collect();
        ensure(
            classify_nearest(&query, &set) == set.get(linear_scan(&query, &set)).label,
            || format!("query {q} disagrees with the scan"),
        )?;
    }

    // Two clean centroids per class plus a class-1 centroid planted inside
    // the class-0 blob.
    let noise = rand_distr::Normal::new(0.0, 0.3).unwrap();
    let mut validation = Vec::new();
    for (center, label) in [([0.0, 0.0], 0), ([3.0, 0.0], 1)] {
        for _ in 0..60 {
            let v = center
                .iter()
                .map(|c| c + rand_distr::Distribution::sample(&noise, &mut rng))
                .collect();
            validation.push(LatentVector::new(v, label, "val"));
        }
    }
    let planted = 3;
    let merged = CentroidSet::new(vec![
        centroid(&[0.0, 0.0], 0, "a"),
        centroid(&[3.0, 0.0], 1, "a"),
        centroid(&[0.1, -0.1], 0, "b"),
        centroid(&[0.5, 0.1], 1, "b"),
        centroid(&[2.9, 0.1], 1, "b"),
    ])
    .unwrap();
    let (pruned, trace) = prune_adapt(&merged, &validation).map_err(|e| e.to_string())?;
    ensure(trace.removed().contains(&planted), || {
        format!("removed {:?}, not the planted centroid", trace.removed())
    })?;
    ensure(trace.final_accuracy() > trace.initial_accuracy(), || {
        "validation accuracy did not improve".into()
    })?;
    Ok(format!(
        "100 Lloyd runs monotone; 1000 queries match the scan; pruning removed {:?}, {} -> {} centroids, validation accuracy {:.3} -> {:.3}",
        trace.removed(),
        merged.len(),
        pruned.len(),
        trace.initial_accuracy(),
        trace.final_accuracy()
    ))
}

// ---------------------------------------------------------------- 5

fn domain_adaptation() -> Check {
    let (sources, target) = shifted_two_moons(&ShiftedMoons::default(), 5).map_err(|e| e.to_string())?;
    let mut cfg = AdaptConfig::desk().with_seed(5);
    cfg.sgd.epochs = 3;
    let out = train_multisource(&sources, &target.features, Some(&target.labels), &cfg).map_err(|e| e.to_string())?;
    for (step, r) in out.curve.iter().enumerate() {
        ensure(r.feature_discrepancy == r.mmd + r.coral, || {
            format!("step {step}: FD != MMD + CORAL")
        })?;
        ensure(
            r.total == r.feature_discrepancy + r.class_discrepancy + r.classification,
            || format!("step {step}: total != FD + CD + CL"),
        )?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = uniform(&mut rng, 40, 3, 2.0);
    let m = mmd(&x, &x, None).unwrap();
    let c = coral(&x, &x).unwrap();
    ensure(m.abs() < 1e-10 && c.abs() < 1e-10, || {
        format!("identical batches: MMD {m:e}, CORAL {c:e}")
    })?;
    let batch = |a2: f64, b2: f64| {
        let (a, b) = (f64::sqrt(a2), f64::sqrt(b2));
        Matrix::from_rows(&[vec![a, 0.0], vec![-a, 0.0], vec![0.0, b], vec![0.0, -b]]).unwrap()
    };
    // Sample covariances diag(1, 1) and diag(2, 1).
    let hand = coral(&batch(1.5, 1.5), &batch(3.0, 1.5)).unwrap();
    ensure((hand - 0.0625).abs() < 1e-12, || format!("CORAL hand case {hand}"))?;

    let (mut single, mut combined, mut multi) = (0.0, 0.0, 0.0);
    let seeds = 0..10u64;
    for seed in seeds.clone() {
        let (sources, target) = shifted_two_moons(&ShiftedMoons::default(), seed).map_err(|e| e.to_string())?;
        let acc =
            compare_settings(&sources, &target, &AdaptConfig::desk().with_seed(seed)).map_err(|e| e.to_string())?;
        single += acc.single_mean();
        combined += acc.combined;
        multi += acc.multi_source;
    }
    let n = seeds.count() as f64;
    let (single, combined, multi) = (single / n * 100.0, combined / n * 100.0, multi / n * 100.0);
    let detail = format!(
        "identities exact over {} steps; mean target accuracy over 10 seeds: multi-source {multi:.2}%, combined {combined:.2}%, single {single:.2}%",
        out.curve.len()
    );
    ensure(multi - combined > 1.0 && combined - single > 1.0, || {
        format!("{detail}; ordering gaps not above 1 point")
    })?;
    Ok(detail)
}

// ---------------------------------------------------------------- 6

fn brute_force(fleet: &[FleetCandidate], required: f64, event: f64, margin: f64) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for mask in 0u32..(1 << fleet.len()) {
        let members: Vec<&FleetCandidate> = (0..fleet.len())
            .filter(|i| mask & (1 << i) != 0)
            .map(|i| &fleet[i])
            .collect();
        if members.iter().any(|c| c.predicted_safe_off_s * (1.0 - margin) < event) {
            continue;
        }
        let power: f64 = members.iter().map(|c| c.power_kw).sum();
        if power < required {
            continue;
        }
        let key = (members.len(), power);
        if best.is_none_or(|b| key.0 < b.0 || (key.0 == b.0 && key.1 < b.1)) {
            best = Some(key);
        }
    }
    best
}

fn registry_file(tag: &str) -> TensorFile {
    let mut f = TensorFile::default();
    f.push_meta("kind", "acceptance");
    f.push_meta("tag", tag);
    f.tensors.push(("w".into(), Matrix::filled(2, 2, 0.5)));
    f
}

fn refrigeration() -> Check {
    let spec = FridgeSpec::chiller("f", 600.0);
    let trace = simulate_trace(
        &spec,
        &Schedule {
            duration_s: 3600.0,
            switch_offs_s: vec![0.0],
        },
        0,
    )
    .map_err(|e| e.to_string())?;
    let (examples, _) = extract_examples(&trace, 0.0, 1).map_err(|e| e.to_string())?;
    let exact = 600.0 * (17.0f64 / 12.0).ln();
    let label = examples.first().ok_or("no example extracted")?.label_s;
    ensure((label - exact).abs() < trace.interval_s, || {
        format!("label {label} vs {exact}")
    })?;

    let fleet = simulate_fleet(&FleetSimConfig::default(), 0).map_err(|e| e.to_string())?;
    let traces: Vec<_> = fleet.into_iter().map(|(_, t)| t).collect();
    let (examples, counts) = fleet_examples(&traces, 0.0, DEFAULT_WINDOW).map_err(|e| e.to_string())?;
    ensure(examples.len() == 11_000, || {
        format!("{} examples instead of 11000", examples.len())
    })?;
    let (_, report) =
        train_defrost_predictor(&examples, &DefrostConfig::desk().with_seed(0)).map_err(|e| e.to_string())?;
    ensure(report.rmse_s < 60.0, || format!("test RMSE {:.2} s", report.rmse_s))?;

    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut feasible = 0;
    for trial in 0..200 {
        let n = rng.random_range(1..=15);
        let fleet: Vec<FleetCandidate> = (0..n)
            .map(|i| FleetCandidate {
                fridge_id: format!("f{i:02}"),
                predicted_safe_off_s: rng.random_range(200.0..1800.0),
                power_kw: (rng.random_range(0.5..8.0f64) * 4.0).round() / 4.0,
            })
            .collect();
        let total: f64 = fleet.iter().map(|c| c.power_kw).sum();
        let required = rng.random_range(0.0..total * 0.8);
        match (
            select_fleet(&fleet, required, 600.0, 0.1),
            brute_force(&fleet, required, 600.0, 0.1),
        ) {
            (Ok(plan), Some((size, power))) => {
                feasible += 1;
                ensure(plan.len() == size, || {
                    format!("trial {trial}: {} fridges, brute force {size}", plan.len())
                })?;
                ensure((plan.total_power_kw - power).abs() < 1e-9, || {
                    format!("trial {trial}: power differs")
                })?;
            }
            (Err(Error::Infeasible { .. }), None) => {}
            (got, want) => return Err(format!("trial {trial}: {got:?} vs {want:?}")),
        }
    }

    for trial in 0..100 {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let root = Arc::new(dir.path().to_path_buf());
        let workers: Vec<_> = (0..4)
            .map(|w| {
                let root = Arc::clone(&root);
                std::thread::spawn(move || -> fsc_core::Result<()> {
                    let reg = Registry::open(root.as_path())?;
                    reg.publish(&format!("w{w}"), &registry_file(&w.to_string()), w as f64, "d")?;
                    reg.entries()?;
                    Ok(())
                })
            })
            .collect();
        for w in workers {
            w.join()
                .map_err(|_| "publisher panicked")?
                .map_err(|e| format!("trial {trial}: {e}"))?;
        }
        let index = std::fs::read_to_string(root.join("index.jsonl")).map_err(|e| e.to_string())?;
        let entries = parse_index(&index, &root.join("index.jsonl")).map_err(|e| format!("trial {trial}: {e}"))?;
        let mut seqs: Vec<u64> = entries.iter().map(|e| e.sequence).collect();
        seqs.sort();
        ensure(seqs == [1, 2, 3, 4], || format!("trial {trial}: sequences {seqs:?}"))?;
        let reg = Registry::open(root.as_path()).map_err(|e| e.to_string())?;
        let best = reg.best().map_err(|e| e.to_string())?.ok_or("empty registry")?;
        ensure(best.id == "w0", || format!("trial {trial}: best {}", best.id))?;
        for e in &entries {
            reg.load(e).map_err(|err| format!("trial {trial}: {err}"))?;
        }
    }
    Ok(format!(
        "label {label:.2} s vs {exact:.2} s; {} examples ({} skipped), test RMSE {:.2} s; 200 selections match brute force ({feasible} feasible); 100 registry trials intact",
        counts.examples,
        counts.no_crossing + counts.already_above + counts.short_history,
        report.rmse_s
    ))
}

// ---------------------------------------------------------------- 7

fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                files.insert(
                    path.strip_prefix(root).unwrap().to_path_buf(),
                    std::fs::read(&path).unwrap(),
                );
            }
        }
    }
    files
}

fn determinism() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();
    let csv = repo_root().join("data/greenhouse.csv");
    let csv = csv.to_str().unwrap();
    let series = [
        "--set",
        "forecast.epochs=2",
        "--set",
        "forecast.pretrain_epochs=1",
        "--set",
        "run.seeds=0,1",
    ];
    let fridge = [
        "--set",
        "fridge.fridges=12",
        "--set",
        "fridge.events_per_fridge=15",
        "--set",
        "fridge.epochs=3",
    ];
    let runs: Vec<(&str, Vec<&str>)> = vec![
        ("ingest", vec!["ingest", "--synthetic", "600"]),
        ("train", [&series[..], &["train", "--input", csv]].concat()),
        (
            "forecast",
            vec!["forecast", "--model", "train-a/model.fsct", "--input", csv],
        ),
        (
            "ablate",
            [&series[..], &["ablate", "--input", "ingest-a/series.csv"]].concat(),
        ),
        (
            "adapt",
            vec![
                "--set",
                "adapt.epochs=20",
                "--set",
                "run.seeds=0,1",
                "adapt",
                "--compare",
            ],
        ),
        (
            "cluster",
            vec![
                "cluster",
                "--train",
                "adapt-a/latents_sources.csv",
                "--validation",
                "adapt-a/latents_target_validation.csv",
                "--test",
                "adapt-a/latents_target_test.csv",
            ],
        ),
        ("fridge-sim", [&fridge[..], &["fridge-sim"]].concat()),
        (
            "fridge-train",
            [&fridge[..], &["fridge-train", "--sim", "fridge-sim-a"]].concat(),
        ),
        (
            "fridge-select",
            [
                &fridge[..],
                &[
                    "fridge-select",
                    "--fleet",
                    "fridge-sim-a/fleet.csv",
                    "--sim",
                    "fridge-sim-a",
                    "--model",
                ],
                &[
                    "fridge-train-a/model.fsct",
                    "--required-kw",
                    "3",
                    "--event-duration",
                    "60",
                ],
            ]
            .concat(),
        ),
        (
            "report",
            vec![
                "report",
                "--run",
                "train-a",
                "--run",
                "ablate-a",
                "--run",
                "fridge-select-a",
            ],
        ),
    ];
    let mut files = 0;
    for (name, args) in &runs {
        for copy in ["a", "b"] {
            let out = Command::new(env!("CARGO_BIN_EXE_fsc"))
                .current_dir(d)
                .env_remove("FSC_PROFILE")
                .args(args)
                .args(["--out", &format!("{name}-{copy}")])
                .output()
                .map_err(|e| e.to_string())?;
            ensure(out.status.success(), || {
                format!("{name}: {}", String::from_utf8_lossy(&out.stderr).trim())
            })?;
        }
        let (a, b) = (tree(&d.join(format!("{name}-a"))), tree(&d.join(format!("{name}-b"))));
        ensure(a.keys().eq(b.keys()), || format!("{name}: different file sets"))?;
        for (path, bytes) in &a {
            ensure(bytes == &b[path], || format!("{name}: {} differs", path.display()))?;
        }
        files += a.len();
    }
    Ok(format!(
        "{} subcommands rerun, {files} artifacts byte-identical",
        runs.len()
    ))
}

// ----------------------------------------------------------------

struct Criterion {
    number: u32,
    name: &'static str,
    budget: Duration,
    run: fn() -> Check,
}

const CRITERIA: &[Criterion] = &[
    Criterion {
        number: 1,
        name: "gradient fidelity",
        budget: Duration::from_secs(120),
        run: gradient_fidelity,
    },
    Criterion {
        number: 2,
        name: "ablation ordering",
        budget: Duration::from_secs(15 * 60),
        run: ablation_ordering,
    },
    Criterion {
        number: 3,
        name: "wavelet and normalization oracles",
        budget: Duration::from_secs(30),
        run: signal_oracles,
    },
    Criterion {
        number: 4,
        name: "clustering",
        budget: Duration::from_secs(60),
        run: clustering,
    },
    Criterion {
        number: 5,
        name: "domain adaptation",
        budget: Duration::from_secs(10 * 60),
        run: domain_adaptation,
    },
    Criterion {
        number: 6,
        name: "refrigeration",
        budget: Duration::from_secs(10 * 60),
        run: refrigeration,
    },
    Criterion {
        number: 7,
        name: "determinism",
        budget: Duration::from_secs(10 * 60),
        run: determinism,
    },
];

fn main() -> ExitCode {
    let wanted: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for c in CRITERIA
        .iter()
        .filter(|c| wanted.is_empty() || wanted.contains(&c.number))
    {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(c.run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        let result = match result {
            Ok(detail) if elapsed > c.budget => Err(format!("{detail}; took longer than {:?}", c.budget)),
            r => r,
        };
        let (status, detail) = match &result {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        println!(
            "{status} {} {} ({:.1} s): {detail}",
            c.number,
            c.name,
            elapsed.as_secs_f64()
        );
        failed += result.is_err() as u32;
    }
    if failed > 0 {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
