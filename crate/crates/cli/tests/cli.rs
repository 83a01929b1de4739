use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const FSC: &str = env!("CARGO_BIN_EXE_fsc");

fn bundled_csv() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/greenhouse.csv")
}

fn fsc(dir: &Path, args: &[&str]) -> Output {
    Command::new(FSC)
        .args(args)
        .current_dir(dir)
        .env_remove("FSC_PROFILE")
        .output()
        .expect("spawn fsc")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = fsc(dir, args);
    assert!(
        out.status.success(),
        "fsc {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit status")
}

fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                files.insert(path.strip_prefix(root).unwrap().to_path_buf(), fs::read(&path).unwrap());
            }
        }
    }
    files
}

fn assert_same_tree(dir: &Path, a: &str, b: &str) {
    let (ta, tb) = (tree(&dir.join(a)), tree(&dir.join(b)));
    assert_eq!(
        ta.keys().collect::<Vec<_>>(),
        tb.keys().collect::<Vec<_>>(),
        "{a} vs {b}"
    );
    for (name, bytes) in &ta {
        assert!(bytes == &tb[name], "{a}/{} differs from {b}", name.display());
    }
}

/// Runs the same command twice into `<out>1` and `<out>2` and compares.
fn twice(dir: &Path, out: &str, args: &[&str]) {
    for n in 1..=2 {
        let target = format!("{out}{n}");
        let mut full = args.to_vec();
        full.extend(["--out", target.as_str()]);
        ok(dir, &full);
    }
    assert_same_tree(dir, &format!("{out}1"), &format!("{out}2"));
}

#[test]
fn help_lists_subcommands_keys_and_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(dir.path(), &["--help"]);
    let text = String::from_utf8(out.stdout).unwrap();
    for cmd in [
        "ingest",
        "train",
        "forecast",
        "ablate",
        "cluster",
        "adapt",
        "fridge-sim",
        "fridge-train",
        "fridge-select",
        "report",
    ] {
        assert!(text.contains(cmd), "help lacks {cmd}");
    }
    for key in [
        "run.seed",
        "forecast.window",
        "cluster.k",
        "adapt.weight_mmd",
        "fridge.margin",
    ] {
        assert!(text.contains(key), "help lacks {key}");
    }
    assert!(text.contains("5  fleet requirement infeasible"));
}

#[test]
fn failures_map_to_documented_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("bad.csv"), "timestamp,a,b\n2019-01-01T00:00:00,1,x\n").unwrap();
    fs::write(
        d.join("fleet.csv"),
        "fridge_id,power_kw,predicted_safe_off_s\nf1,2.0,900\nf2,1.5,100\n",
    )
    .unwrap();

    let cases: &[(&[&str], i32)] = &[
        (&["ingest", "--bogus"], 2),
        (&["no-such-command"], 2),
        (&["--set", "forecast.nope=1", "ingest", "--synthetic", "100"], 3),
        (&["--set", "forecast.window=abc", "ingest", "--synthetic", "100"], 3),
        (
            &["--set", "fridge.margin=1.5", "fridge-select", "--fleet", "fleet.csv"],
            3,
        ),
        (&["train", "--input", "bad.csv"], 4),
        (&["train", "--input", "missing.csv"], 4),
        (&["ingest", "--synthetic", "20"], 4),
        (&["fridge-select", "--fleet", "fleet.csv", "--required-kw", "3"], 5),
    ];
    for (args, expected) in cases {
        let out = fsc(d, args);
        assert_eq!(
            code(&out),
            *expected,
            "fsc {args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        let stderr = String::from_utf8(out.stderr).unwrap();
        assert_eq!(stderr.lines().count(), 1, "{stderr}");
        assert!(stderr.starts_with(&format!("fsc: error code={expected} ")), "{stderr}");
    }
}

#[test]
fn zero_requirement_gives_an_empty_plan() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("fleet.csv"), "fridge_id,power_kw\nf1,2.0\nf2,1.5\n").unwrap();
    ok(
        d,
        &[
            "fridge-select",
            "--fleet",
            "fleet.csv",
            "--required-kw",
            "0",
            "--out",
            "plan",
        ],
    );
    let plan: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("plan/plan.json")).unwrap()).unwrap();
    assert_eq!(plan["plan"]["selected"].as_array().unwrap().len(), 0);
    assert_eq!(plan["plan"]["total_power_kw"], 0.0);
    let csv = fs::read_to_string(d.join("plan/plan.csv")).unwrap();
    assert!(csv.lines().skip(1).all(|l| l.ends_with(",false")), "{csv}");
}

#[test]
fn selection_uses_given_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(
        d.join("fleet.csv"),
        "fridge_id,power_kw,predicted_safe_off_s\na,3.0,100\nb,2.0,900\nc,1.5,900\nd,1.0,900\n",
    )
    .unwrap();
    ok(
        d,
        &[
            "fridge-select",
            "--fleet",
            "fleet.csv",
            "--required-kw",
            "3",
            "--event-duration",
            "600",
            "--out",
            "p",
        ],
    );
    let csv = fs::read_to_string(d.join("p/plan.csv")).unwrap();
    let chosen: Vec<&str> = csv
        .lines()
        .filter(|l| l.ends_with(",true"))
        .map(|l| l.split(',').next().unwrap())
        .collect();
    // `a` has the most power but cannot stay off for the event; b+d meets
    // the request with the least surplus.
    assert_eq!(chosen, ["b", "d"]);
    let manifest = fs::read_to_string(d.join("p/manifest.toml")).unwrap();
    assert!(manifest.contains("required_kw = \"3\""), "{manifest}");
}

#[test]
fn manifest_reloads_as_config() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(
        d,
        &[
            "--seed",
            "7",
            "--set",
            "forecast.window=12",
            "ingest",
            "--synthetic",
            "300",
            "--out",
            "first",
        ],
    );
    ok(
        d,
        &[
            "--config",
            "first/manifest.toml",
            "ingest",
            "--synthetic",
            "300",
            "--out",
            "second",
        ],
    );
    assert_same_tree(d, "first", "second");
}

#[test]
fn environment_sits_between_file_and_flags() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("cfg.toml"), "[run]\nseed = 3\n").unwrap();
    let run = |extra: &[&str], env: Option<&str>| {
        let mut cmd = Command::new(FSC);
        cmd.current_dir(d).args(["--config", "cfg.toml"]).args(extra);
        cmd.args(["ingest", "--synthetic", "300", "--out", "o"]);
        if let Some(v) = env {
            cmd.env("FSC_RUN_SEED", v);
        }
        assert!(cmd.output().unwrap().status.success());
        let manifest = fs::read_to_string(d.join("o/manifest.toml")).unwrap();
        manifest.lines().find(|l| l.starts_with("seed = ")).unwrap().to_string()
    };
    assert_eq!(run(&[], None), "seed = \"3\"");
    assert_eq!(run(&[], Some("4")), "seed = \"4\"");
    assert_eq!(run(&["--seed", "5"], Some("4")), "seed = \"5\"");
}

#[test]
fn series_subcommands_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let csv = bundled_csv();
    let csv = csv.to_str().unwrap();
    let quick = ["--set", "forecast.epochs=2", "--set", "forecast.pretrain_epochs=1"];

    twice(d, "ingest", &["ingest", "--synthetic", "400"]);
    let mut train = quick.to_vec();
    train.extend(["train", "--input", csv]);
    twice(d, "train", &train);
    twice(
        d,
        "forecast",
        &["forecast", "--model", "train1/model.fsct", "--input", csv],
    );
    let forecasts = fs::read_to_string(d.join("forecast1/forecasts.csv")).unwrap();
    assert_eq!(forecasts.lines().next(), Some("timestamp,truth,prediction"));

    let mut ablate = quick.to_vec();
    ablate.extend(["--set", "run.seeds=0", "ablate", "--input", "ingest1/series.csv"]);
    twice(d, "ablate", &ablate);
    let table = fs::read_to_string(d.join("ablate1/ablation.csv")).unwrap();
    let methods: Vec<&str> = table.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(
        methods,
        ["SVR", "RFR", "MLP", "LSTM", "WT-ED-LSTM", "ED-LSTM-AM", "WT-ED-LSTM-AM"]
    );
    assert!(table
        .lines()
        .nth(1)
        .unwrap()
        .ends_with("out of scope,out of scope,out of scope"));
    for h in ["one_step", "two_step", "three_step"] {
        assert!(d.join(format!("ablate1/trace_{h}.svg")).exists());
    }
    twice(d, "report", &["report", "--run", "train1", "--run", "ablate1"]);
    let md = fs::read_to_string(d.join("report1/report.md")).unwrap();
    assert!(md.contains("## train") && md.contains("## ablate"), "{md}");
}

#[test]
fn feature_space_subcommands_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let quick = ["--set", "adapt.epochs=20"];
    let mut adapt = quick.to_vec();
    adapt.push("adapt");
    twice(d, "adapt", &adapt);
    twice(
        d,
        "cluster",
        &[
            "cluster",
            "--train",
            "adapt1/latents_sources.csv",
            "--validation",
            "adapt1/latents_target_validation.csv",
            "--test",
            "adapt1/latents_target_test.csv",
        ],
    );
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.join("cluster1/report.json")).unwrap()).unwrap();
    let (before, after) = (
        report["validation_accuracy_before"].as_f64().unwrap(),
        report["validation_accuracy_after"].as_f64().unwrap(),
    );
    assert!(after >= before);

    let mut compare = quick.to_vec();
    compare.extend(["--set", "run.seeds=0,1", "adapt", "--compare"]);
    twice(d, "compare", &compare);
    let settings = fs::read_to_string(d.join("compare1/settings.csv")).unwrap();
    assert_eq!(settings.lines().count(), 4);
    assert!(settings.lines().last().unwrap().starts_with("mean,"));
}

#[test]
fn fridge_subcommands_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let small = [
        "--set",
        "fridge.fridges=12",
        "--set",
        "fridge.events_per_fridge=15",
        "--set",
        "fridge.epochs=3",
    ];
    let mut sim = small.to_vec();
    sim.push("fridge-sim");
    twice(d, "sim", &sim);
    assert_eq!(fs::read_dir(d.join("sim1/traces")).unwrap().count(), 12);

    let mut train = small.to_vec();
    train.extend(["fridge-train", "--sim", "sim1"]);
    twice(d, "train", &train);

    // Publishing is idempotent: the id derives from the checkpoint bytes.
    let mut publish = train.clone();
    publish.extend(["--registry", "reg", "--out", "pub"]);
    ok(d, &publish);
    ok(d, &publish);
    let index = fs::read_to_string(d.join("reg/index.jsonl")).unwrap();
    assert_eq!(index.lines().count(), 1);

    let fleet: String = fs::read_to_string(d.join("sim1/fleet.csv"))
        .unwrap()
        .lines()
        .map(|l| format!("{}\n", l.split(',').take(2).collect::<Vec<_>>().join(",")))
        .collect();
    fs::write(d.join("fleet.csv"), fleet).unwrap();
    let select = [
        "fridge-select",
        "--fleet",
        "fleet.csv",
        "--sim",
        "sim1",
        "--registry",
        "reg",
        "--required-kw",
        "2",
        "--event-duration",
        "60",
    ];
    twice(d, "select", &select);
    let mut with_model = select.to_vec();
    with_model.splice(5..7, ["--model", "train1/model.fsct"]);
    let out = ok(d, &[&with_model[..], &["--out", "direct"]].concat());
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("selected "));
    let selected = |run: &str| fs::read_to_string(d.join(run).join("plan.csv")).unwrap();
    assert_eq!(selected("select1"), selected("direct"));
}
