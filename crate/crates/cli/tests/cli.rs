use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use fairshift_cli::commands::{EvalFile, WarnReport};
use fairshift_cli::config::{
    parse_config, presets, EvalCommand, FinetuneCommand, FitCommand, ScoreWarningsCommand, SweepCommand,
    TrainCommand, WarnCommand,
};
use fairshift_cli::rundir::Manifest;
use serde_json::{json, Value};
use tempfile::TempDir;

struct Out {
    code: i32,
    stdout: String,
    stderr: String,
}

fn fairshift(args: &[&str], cwd: &Path) -> Out {
    let o = Command::new(env!("CARGO_BIN_EXE_fairshift"))
        .args(args)
        .current_dir(cwd)
        .env_remove("FAIRSHIFT_DATA_DIR")
        .output()
        .unwrap();
    Out {
        code: o.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&o.stdout).trim().to_string(),
        stderr: String::from_utf8_lossy(&o.stderr).to_string(),
    }
}

/// Runs a config and returns the run directory.
fn run_ok(cmd: &str, cfg: &Value, dir: &Path, extra: &[&str]) -> PathBuf {
    let path = dir.join(format!("{cmd}-{}.json", fs::read_dir(dir).unwrap().count()));
    fs::write(&path, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    let mut args = vec![cmd, "--config", path.to_str().unwrap(), "--out", "runs", "--data-dir", "."];
    args.extend_from_slice(extra);
    let o = fairshift(&args, dir);
    assert_eq!(o.code, 0, "{cmd} failed: {}", o.stderr);
    dir.join(o.stdout)
}

fn run_code(cmd: &str, cfg: &Value, dir: &Path) -> Out {
    let path = dir.join("cfg.json");
    fs::write(&path, serde_json::to_string(cfg).unwrap()).unwrap();
    fairshift(&[cmd, "--config", "cfg.json", "--out", "runs", "--data-dir", "."], dir)
}

/// 400 rows; label depends on x1 and on group membership.
fn write_fixture(dir: &Path) {
    let mut csv = String::from("x1,x2,flag,group,label,note\n");
    for i in 0..400u32 {
        let x1 = ((i * 37) % 101) as f64 / 10.0 - 5.0;
        let x2 = ((i * 53) % 89) as f64 / 8.0;
        let flag = (i / 3) % 2;
        let group = u32::from(i % 5 < 2);
        let label = u32::from(x1 + 2.0 * group as f64 - 1.0 > 0.0);
        csv.push_str(&format!("{x1},{x2},{flag},{group},{label},r{i}\n"));
    }
    fs::write(dir.join("toy.csv"), csv).unwrap();
    let schema = json!({"x1": "feature", "x2": "feature", "flag": "feature", "group": "sensitive", "label": "label"});
    fs::write(dir.join("toy.schema.json"), schema.to_string()).unwrap();
}

fn toy_data() -> Value {
    json!({"kind": "csv", "path": "toy.csv", "schema": "toy.schema.json"})
}

fn fit_section() -> Value {
    json!({
        "trainer": "pretrain",
        "meta": {"K": 16, "meta_batch_size": 1, "meta_iterations": 60, "alpha": 0.05, "beta": 1e-3,
                 "hidden": [8], "spec": {"regularizer": "none", "gamma": 0}}
    })
}

fn fit_config() -> Value {
    json!({"command": "fit", "seed": 3, "data": toy_data(), "select": {"holdout": {"fraction": 0.25}}, "fit": fit_section()})
}

fn warn_config(n_shifts: usize, threshold: f64) -> Value {
    json!({
        "command": "warn", "seed": 1, "data": toy_data(), "select": {"holdout": {"fraction": 0.25}},
        "model": {"fit": fit_section()},
        "notion": {"kind": "demographic_parity", "threshold": threshold},
        "n_shifts": n_shifts, "test_fraction": 0.2
    })
}

fn sweep_config() -> Value {
    json!({
        "command": "sweep", "seed": 2, "trainer": "fair-maml",
        "tasks": {"kind": "synthetic", "pool_size": 10, "holdout": 3, "holdout_rows": 40},
        "meta": {"K": 5, "meta_batch_size": 2, "meta_iterations": 5, "alpha": 0.3, "beta": 1e-3,
                 "hidden": [4], "spec": {"regularizer": "dp", "gamma": 0}},
        "gammas": [0, 1], "finetune": {"K": 5, "steps": 1, "lr": 0.3}, "repeats": 2
    })
}

fn read_json<T: serde::de::DeserializeOwned>(p: &Path) -> T {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn fit_then_eval_reproduces_report() {
    let tmp = TempDir::new().unwrap();
    write_fixture(tmp.path());
    let fit = run_ok("fit", &fit_config(), tmp.path(), &[]);
    let eval_cfg = json!({"command": "eval", "seed": 3, "model": fit.join("model.json"), "data": toy_data(),
                          "select": {"holdout": {"fraction": 0.25}}});
    let eval = run_ok("eval", &eval_cfg, tmp.path(), &[]);
    let a: EvalFile = read_json(&fit.join("report.json"));
    let b: EvalFile = read_json(&eval.join("report.json"));
    assert_eq!(a, b);
    assert_eq!(a.rows, 100);
    assert_eq!(a.format, "fairshift-eval-report");
}

#[test]
fn reports_round_trip() {
    let tmp = TempDir::new().unwrap();
    write_fixture(tmp.path());
    let fit = run_ok("fit", &fit_config(), tmp.path(), &[]);
    let text = fs::read_to_string(fit.join("report.json")).unwrap();
    let report: EvalFile = serde_json::from_str(&text).unwrap();
    assert_eq!(serde_json::to_string_pretty(&report).unwrap() + "\n", text);
    let text = fs::read_to_string(fit.join("manifest.json")).unwrap();
    let m: Manifest = serde_json::from_str(&text).unwrap();
    assert_eq!(serde_json::to_string_pretty(&m).unwrap() + "\n", text);
}

#[test]
fn manifest_records_config_seed_and_inputs() {
    let tmp = TempDir::new().unwrap();
    write_fixture(tmp.path());
    let fit = run_ok("fit", &fit_config(), tmp.path(), &["--seed", "11"]);
    let m: Manifest = read_json(&fit.join("manifest.json"));
    assert_eq!(m.seed, 11);
    assert_eq!(m.config["seed"], 11);
    assert_eq!(m.command, "fit");
    let paths: Vec<&str> = m.inputs.iter().map(|i| i.path.as_str()).collect();
    assert_eq!(paths, ["toy.csv", "toy.schema.json"]);
    let bytes = fs::read(tmp.path().join("toy.csv")).unwrap();
    use sha2::Digest;
    assert_eq!(m.inputs[0].sha256, hex::encode(sha2::Sha256::digest(&bytes)));
    assert!(fit.ends_with(format!("fit-{}", &m.run_hash[..16])));
    for a in &m.artifacts {
        assert!(fit.join(a).is_file(), "{a}");
    }
    // a different seed names a different directory
    let other = run_ok("fit", &fit_config(), tmp.path(), &[]);
    assert_ne!(fit, other);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    let mut trees = Vec::new();
    for tmp in [&a, &b] {
        write_fixture(tmp.path());
        let fit = run_ok("fit", &fit_config(), tmp.path(), &[]);
        let warn = run_ok("warn", &warn_config(120, 0.8), tmp.path(), &[]);
        let sweep = run_ok("sweep", &sweep_config(), tmp.path(), &[]);
        trees.push((
            fit.file_name().unwrap().to_owned(),
            tree(&fit),
            tree(&warn),
            tree(&sweep),
        ));
    }
    assert!(trees[0] == trees[1]);
}

#[test]
fn warn_writes_the_artifact_set() {
    let tmp = TempDir::new().unwrap();
    write_fixture(tmp.path());
    let warn = run_ok("warn", &warn_config(150, 0.8), tmp.path(), &[]);
    for f in ["scorecard.json", "scorecard.txt", "warning_set.csv", "warning_test.csv", "report.json", "model.json"] {
        assert!(warn.join(f).is_file(), "{f}");
    }
    let r: WarnReport = read_json(&warn.join("report.json"));
    assert_eq!(r.fair + r.unfair, 150);
    assert_eq!(r.warning_train_rows + r.warning_test_rows, 150);
    assert!((0.0..=1.0).contains(&r.warning_accuracy));
    let rows = fs::read_to_string(warn.join("warning_set.csv")).unwrap().lines().count();
    assert_eq!(rows, 151);
}

#[test]
fn warn_with_one_outcome_is_a_runtime_error() {
    let tmp = TempDir::new().unwrap();
    write_fixture(tmp.path());
    // a threshold this low makes every shift fair
    let o = run_code("warn", &warn_config(10, 0.01), tmp.path());
    assert_eq!(o.code, 3, "{}", o.stderr);
    assert!(o.stderr.contains("insufficient shifts"), "{}", o.stderr);
    assert!(!tmp.path().join("runs").exists() || fs::read_dir(tmp.path().join("runs")).unwrap().count() == 0);
}

#[test]
fn score_warnings_scores_external_predictions() {
    let tmp = TempDir::new().unwrap();
    write_fixture(tmp.path());
    let warn = run_ok("warn", &warn_config(100, 0.8), tmp.path(), &[]);
    let r: WarnReport = read_json(&warn.join("report.json"));
    let mut preds = String::from("unfair\n");
    for _ in 0..100 {
        preds.push_str("1\n");
    }
    fs::write(tmp.path().join("preds.csv"), preds).unwrap();
    let cfg = json!({"command": "score-warnings", "warning_set": warn.join("warning_set.csv"), "predictions": "preds.csv"});
    let out = run_ok("score-warnings", &cfg, tmp.path(), &[]);
    let s: Value = read_json(&out.join("report.json"));
    assert_eq!(s["rows"], 100);
    assert!((s["accuracy"].as_f64().unwrap() - r.unfair as f64 / 100.0).abs() < 1e-12);
    assert_eq!(s["tpr"], 1.0);
    assert_eq!(s["tnr"], 0.0);

    fs::write(tmp.path().join("short.csv"), "unfair\n1\n").unwrap();
    let cfg = json!({"command": "score-warnings", "warning_set": warn.join("warning_set.csv"), "predictions": "short.csv"});
    assert_eq!(run_code("score-warnings", &cfg, tmp.path()).code, 3);
}

#[test]
fn sweep_row_count() {
    let tmp = TempDir::new().unwrap();
    let sweep = run_ok("sweep", &sweep_config(), tmp.path(), &[]);
    let text = fs::read_to_string(sweep.join("results.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), "gamma,repeat,task_id,accuracy,dp_ratio,eop_ratio");
    // |gammas| * repeats * |holdout|
    assert_eq!(text.lines().count() - 1, 2 * 2 * 3);
    let summary: Value = read_json(&sweep.join("summary.json"));
    assert_eq!(summary["gammas"].as_array().unwrap().len(), 2);
    assert!(sweep.join("models/gamma-1-repeat-1.json").is_file());
}

#[test]
fn train_pretrain_finetune_chain() {
    let tmp = TempDir::new().unwrap();
    let mut train = sweep_config();
    let obj = train.as_object_mut().unwrap();
    obj.insert("command".into(), json!("train"));
    obj.remove("gammas");
    obj.remove("finetune");
    obj.remove("repeats");
    let t = run_ok("train", &train, tmp.path(), &[]);
    assert!(t.join("holdout.json").is_file());
    assert_eq!(fs::read_to_string(t.join("train_log.csv")).unwrap().lines().count(), 6);
    train["command"] = json!("pretrain");
    let p = run_ok("pretrain", &train, tmp.path(), &[]);
    assert_ne!(fs::read(t.join("model.json")).unwrap(), fs::read(p.join("model.json")).unwrap());

    let ft = json!({"command": "finetune", "seed": 0, "model": "unused.json",
                    "data": {"kind": "synthetic-biased", "eval_size": 200},
                    "finetune": {"K": 5, "steps": 1, "lr": 0.3},
                    "spec": {"regularizer": "dp", "gamma": 1},
                    "grid": {"min": -1, "max": 1, "steps": 3}});
    let model = t.join("model.json");
    let f = run_ok("finetune", &ft, tmp.path(), &["--model", model.to_str().unwrap()]);
    let report: Value = read_json(&f.join("report.json"));
    assert_eq!(report["support_rows"], 5);
    assert_eq!(report["eval_rows"], 200);
    let grid = fs::read_to_string(f.join("grid.csv")).unwrap();
    assert_eq!(grid.lines().count(), 1 + 9);
}

#[test]
fn config_errors_exit_2() {
    let tmp = TempDir::new().unwrap();
    write_fixture(tmp.path());
    let mut bad = fit_config();
    bad["bogus"] = json!(1);
    let o = run_code("fit", &bad, tmp.path());
    assert_eq!(o.code, 2);
    assert!(o.stderr.contains("bogus"), "{}", o.stderr);

    let mut nested = fit_config();
    nested["fit"]["meta"]["lr"] = json!(1);
    assert_eq!(run_code("fit", &nested, tmp.path()).code, 2);

    // config for another command
    assert_eq!(run_code("eval", &fit_config(), tmp.path()).code, 2);

    let mut trainer = fit_config();
    trainer["fit"]["trainer"] = json!("nope");
    assert_eq!(run_code("fit", &trainer, tmp.path()).code, 2);

    let mut alpha = fit_config();
    alpha["fit"]["meta"]["alpha"] = json!(-1);
    assert_eq!(run_code("fit", &alpha, tmp.path()).code, 2);

    assert_eq!(fairshift(&["fit"], tmp.path()).code, 2);
    assert_eq!(fairshift(&["fit", "--config", "missing.json"], tmp.path()).code, 2);
    assert_eq!(fairshift(&["fit", "--preset", "nope"], tmp.path()).code, 2);
    assert_eq!(fairshift(&["frobnicate"], tmp.path()).code, 2);
    assert_eq!(fairshift(&["fit", "--preset", "compas-dp-model", "--model", "m.json"], tmp.path()).code, 2);
}

#[test]
fn runtime_errors_exit_3() {
    let tmp = TempDir::new().unwrap();
    write_fixture(tmp.path());
    let mut missing = fit_config();
    missing["data"]["path"] = json!("absent.csv");
    assert_eq!(run_code("fit", &missing, tmp.path()).code, 3);

    let eval = json!({"command": "eval", "model": "absent.json", "data": toy_data()});
    assert_eq!(run_code("eval", &eval, tmp.path()).code, 3);

    // model trained on other columns
    let fit = run_ok("fit", &fit_config(), tmp.path(), &[]);
    let ft = json!({"command": "eval", "model": fit.join("model.json"), "data": {"kind": "synthetic-biased"}});
    assert_eq!(run_code("eval", &ft, tmp.path()).code, 3);
}

#[test]
fn every_preset_parses() {
    for name in presets().names() {
        let text = presets().get(name).unwrap();
        let v: Value = serde_json::from_str(text).unwrap();
        let cmd = v["command"].as_str().unwrap();
        let origin = format!("preset {name}");
        match cmd {
            "fit" => drop(parse_config::<FitCommand>(text, &origin, cmd).unwrap()),
            "train" | "pretrain" => drop(parse_config::<TrainCommand>(text, &origin, cmd).unwrap()),
            "finetune" => drop(parse_config::<FinetuneCommand>(text, &origin, cmd).unwrap()),
            "eval" => drop(parse_config::<EvalCommand>(text, &origin, cmd).unwrap()),
            "sweep" => drop(parse_config::<SweepCommand>(text, &origin, cmd).unwrap()),
            "warn" => drop(parse_config::<WarnCommand>(text, &origin, cmd).unwrap()),
            "score-warnings" => drop(parse_config::<ScoreWarningsCommand>(text, &origin, cmd).unwrap()),
            other => panic!("{name}: unknown command {other}"),
        }
    }
    let tmp = TempDir::new().unwrap();
    let o = fairshift(&["presets"], tmp.path());
    assert_eq!(o.code, 0);
    assert!(o.stdout.lines().any(|l| l == "compas-dp"));
    let o = fairshift(&["presets", "synthetic-desk"], tmp.path());
    assert!(o.stdout.contains("\"meta_iterations\": 1000"));
}
