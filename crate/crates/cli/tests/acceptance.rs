//! Acceptance criteria. Prints one PASS/FAIL line per criterion and exits
//! non-zero when a criterion outside `KNOWN_FAILING` fails.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use fairshift::data::Dataset;
use fairshift::fairmaml::{FairMaml, MetaConfig, TaskSampler, Trainer};
use fairshift::nn::{grad, init_mlp, meta_grad, mlp_shapes, task_loss, Batch, ParamSet, TaskLossSpec};
use fairshift::shiftwarn::{apply_shift, predict_warning, sample_shift_vector, ShiftConfig, ShiftVector, Warning};
use fairshift::slim::{solvers, IntegerProblem, Scorecard, SlimConfig};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

/// Criteria that fail with the faithful implementation; see README.
const KNOWN_FAILING: [u32; 2] = [6, 7];

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn data_dir() -> PathBuf {
    std::env::var_os("FAIRSHIFT_DATA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data"))
}

fn fairshift(args: &[&str], out: &Path) -> Result<PathBuf, String> {
    let o = Command::new(env!("CARGO_BIN_EXE_fairshift"))
        .args(args)
        .arg("--out")
        .arg(out)
        .arg("--data-dir")
        .arg(data_dir())
        .output()
        .map_err(|e| e.to_string())?;
    if !o.status.success() {
        return Err(format!("{args:?}: {}", String::from_utf8_lossy(&o.stderr).trim()));
    }
    Ok(PathBuf::from(String::from_utf8_lossy(&o.stdout).trim()))
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

// 1: exact meta-gradient against central differences.
fn meta_gradient() -> Verdict {
    const H: f64 = 1e-5;
    let composed = |p: &ParamSet, s: &Batch, q: &Batch, spec: &TaskLossSpec| {
        let g = grad(p, s, spec).unwrap();
        let v: Vec<f64> = p.values().iter().zip(&g).map(|(v, g)| v - 0.3 * g).collect();
        task_loss(&p.with_values(v).unwrap(), q, spec).unwrap().total
    };
    let batch = |rng: &mut ChaCha8Rng| {
        let x = Array2::from_shape_fn((5, 2), |_| rng.random_range(-2.0..2.0));
        let mut y: Vec<u8> = (0..5).map(|_| rng.random_range(0..2)).collect();
        let mut a: Vec<u8> = (0..5).map(|_| rng.random_range(0..2)).collect();
        y[0] = 1;
        a[0] = 0;
        Batch::new(x, y, a).unwrap()
    };
    let mut worst: f64 = 0.0;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(7000 + seed);
        let p = init_mlp(&mlp_shapes(2, &[4]), 7000 + seed).unwrap();
        let (s, q) = (batch(&mut rng), batch(&mut rng));
        for reg in ["dp", "eop"] {
            let spec = TaskLossSpec::new(reg, 1.0).unwrap();
            let (_, exact) = meta_grad(&p, &s, &q, &spec, 0.3, false).unwrap();
            for (i, e) in exact.iter().enumerate() {
                let shifted = |d: f64| {
                    let mut v = p.values().to_vec();
                    v[i] += d;
                    p.with_values(v).unwrap()
                };
                let fd = (composed(&shifted(H), &s, &q, &spec) - composed(&shifted(-H), &s, &q, &spec)) / (2.0 * H);
                worst = worst.max((e - fd).abs() / e.abs().max(fd.abs()).max(1e-6));
            }
        }
    }
    verdict(worst < 1e-4, format!("max relative error {worst:.2e} (< 1e-4)"))
}

// 2: gamma = 0 Fair-MAML equals MAML.
fn gamma_zero_is_maml() -> Verdict {
    let sampler = TaskSampler::synthetic(20, 11).unwrap();
    let cfg = |reg: &str| MetaConfig {
        k: 5,
        meta_batch_size: 4,
        meta_iterations: 100,
        alpha: 0.3,
        beta: 1e-3,
        spec: TaskLossSpec::new(reg, 0.0).unwrap(),
        first_order: false,
        seed: 11,
        hidden: vec![20, 20],
    };
    let fair = FairMaml.train(&sampler, &cfg("dp")).unwrap();
    let plain = FairMaml.train(&sampler, &cfg("none")).unwrap();
    let same = fair.params.values() == plain.params.values();
    verdict(same, format!("{} parameters bit-identical: {same}", fair.params.len()))
}

// 3: heuristic scorecard solver against exhaustive search.
fn heuristic_vs_exhaustive() -> Verdict {
    let cfg = SlimConfig {
        coeff_bound: 5,
        intercept_bound: 10,
        ..SlimConfig::default()
    };
    let (ex, he) = (solvers().get("exhaustive").unwrap(), solvers().get("heuristic").unwrap());
    let mut worst: f64 = 0.0;
    for seed in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(9000 + seed);
        let d = rng.random_range(2..=3);
        let w: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
        let rows: Vec<Vec<i64>> = (0..200).map(|_| (0..d).map(|_| rng.random_range(-4..=4)).collect()).collect();
        let mut unfair: Vec<bool> = rows
            .iter()
            .map(|r| r.iter().zip(&w).map(|(x, w)| *x as f64 * w).sum::<f64>() + rng.random_range(-3.0..3.0) < 0.0)
            .collect();
        unfair[0] = true;
        unfair[1] = false;
        let p = IntegerProblem::new(rows, unfair);
        let a = ex.solve(&p, &cfg, seed).unwrap();
        let b = he.solve(&p, &cfg, seed).unwrap();
        worst = worst.max(b.objective / a.objective - 1.0);
    }
    verdict(worst <= 0.05, format!("worst heuristic gap {:.2}% (<= 5%)", 100.0 * worst))
}

// 4: worked scorecard example.
fn scorecard_example() -> Verdict {
    let card = Scorecard::from_coefficients([("priors_count", 20), ("age", -2)], -1).unwrap();
    let shift = ShiftVector::from_pairs([("priors_count", -1.0), ("age", -3.0)]);
    let score = card.score(&shift).unwrap();
    let warn = predict_warning(&card, &shift).unwrap();
    verdict(score == -14 && warn == Warning::Unfair, format!("score {score}, warning {warn:?}"))
}

// 5: COMPAS warning pipeline.
fn compas_warnings() -> Verdict {
    if !data_dir().join("compas-scores-two-years.csv").is_file() {
        return verdict(false, "BLOCKED: compas-scores-two-years.csv not in the data directory");
    }
    let out = tempfile::tempdir().unwrap();
    let mut counts = Vec::new();
    let mut accs = Vec::new();
    for seed in 0..3 {
        let dir = match fairshift(&["warn", "--preset", "compas-dp", "--seed", &seed.to_string()], out.path()) {
            Ok(d) => d,
            Err(e) => return verdict(false, e),
        };
        let r = read_json(&dir.join("report.json"));
        counts.push(r["unfair"].as_u64().unwrap());
        accs.push(r["warning_accuracy"].as_f64().unwrap());
    }
    let counts_ok = counts.iter().all(|c| (550..=1050).contains(c));
    let acc_ok = accs.iter().filter(|&&a| a >= 0.80).count() >= 2;
    verdict(
        counts_ok && acc_ok,
        format!("unfair counts {counts:?} (800 +- 250), held-out accuracy {accs:.3?} (>= 0.80 on 2 of 3)"),
    )
}

// 6: biased synthetic task after 5-point fine-tuning.
fn synthetic_biased() -> Verdict {
    let out = tempfile::tempdir().unwrap();
    let mut fair_ok = 0;
    let mut base_fails = 0;
    let mut detail = Vec::new();
    for seed in 0..3u64 {
        let s = seed.to_string();
        let after = |train: &str, preset: &str| -> Result<(f64, f64), String> {
            let m = fairshift(&[train, "--preset", preset, "--seed", &s], out.path())?;
            let model = m.join("model.json");
            let f = fairshift(
                &["finetune", "--preset", "synthetic-biased-finetune", "--seed", &s, "--model", model.to_str().unwrap()],
                out.path(),
            )?;
            let r = read_json(&f.join("report.json"));
            Ok((
                r["after"]["dp_ratio"].as_f64().unwrap_or(0.0),
                r["after"]["accuracy"].as_f64().unwrap(),
            ))
        };
        let (fair, base) = match (after("train", "synthetic-desk"), after("pretrain", "synthetic-desk-pretrain")) {
            (Ok(a), Ok(b)) => (a, b),
            (Err(e), _) | (_, Err(e)) => return verdict(false, e),
        };
        fair_ok += usize::from(fair.0 >= 0.9 && fair.1 >= 0.75);
        base_fails += usize::from(base.0 < 0.9 || base.1 < 0.75);
        detail.push(format!(
            "seed {seed}: fair-maml dp {:.3} acc {:.3}, baseline dp {:.3} acc {:.3}",
            fair.0, fair.1, base.0, base.1
        ));
    }
    verdict(fair_ok >= 2 && base_fails >= 2, detail.join("; "))
}

// 7: regularization strength against fairness on Communities.
fn communities_sweep() -> Verdict {
    if !data_dir().join("communities.data").is_file() {
        return verdict(false, "BLOCKED: communities.data not in the data directory");
    }
    let out = tempfile::tempdir().unwrap();
    let dir = match fairshift(&["sweep", "--preset", "communities-desk"], out.path()) {
        Ok(d) => d,
        Err(e) => return verdict(false, e),
    };
    let s = read_json(&dir.join("summary.json"));
    let rho = s["spearman_dp"].as_f64().unwrap_or(f64::NAN);
    let g = s["gammas"].as_array().unwrap();
    let acc = |i: usize| g[i]["mean_accuracy"].as_f64().unwrap();
    let drop = acc(0) - acc(g.len() - 1);
    verdict(
        rho >= 0.5 && drop.abs() <= 0.15,
        format!("spearman {rho:.3} (>= 0.5), accuracy gamma 0 vs 4 differ by {drop:.3} (<= 0.15)"),
    )
}

// 8: shift engine statistics.
fn shift_statistics() -> Verdict {
    let n = 5000;
    let x = Array2::from_shape_fn((n, 2), |(i, j)| if j == 0 { 18.0 + (i * 7 % 60) as f64 } else { (i % 2) as f64 });
    let ds = Dataset::new(
        x,
        (0..n).map(|i| u8::from(i % 3 == 0)).collect(),
        (0..n).map(|i| u8::from(i % 4 == 0)).collect(),
        vec!["age".into(), "flag".into()],
    )
    .unwrap();
    let shifted = apply_shift(&ds, &ShiftVector::from_pairs([("age", -3.0)]), 4).unwrap();
    let err = (shifted.columns()[0].mean - ds.columns()[0].mean + 3.0).abs();
    let draws = 10_000u64;
    let clipped = (0..draws)
        .filter(|&s| {
            let p = 0.5 + sample_shift_vector(&ds, &ShiftConfig::default(), s).get("flag").unwrap();
            p == 0.0 || p == 1.0
        })
        .count() as f64
        / draws as f64;
    verdict(
        err <= 1e-9 * n as f64 && (0.55..=0.65).contains(&clipped),
        format!("mean shift error {err:.1e} (<= {:.0e}), clip frequency {clipped:.4} ([0.55, 0.65])", 1e-9 * n as f64),
    )
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
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

// 9: every command is deterministic.
fn determinism() -> Verdict {
    let work = tempfile::tempdir().unwrap();
    let w = work.path();
    let has_compas = data_dir().join("compas-scores-two-years.csv").is_file();
    let write = |name: &str, v: Value| {
        let p = w.join(name);
        fs::write(&p, v.to_string()).unwrap();
        p.display().to_string()
    };
    let sweep = write(
        "sweep.json",
        serde_json::json!({
            "command": "sweep", "trainer": "fair-maml",
            "tasks": {"kind": "synthetic", "pool_size": 20, "holdout": 3},
            "meta": {"K": 5, "meta_batch_size": 4, "meta_iterations": 50, "alpha": 0.3, "beta": 1e-3,
                     "spec": {"regularizer": "dp", "gamma": 0}},
            "gammas": [0, 5], "finetune": {"K": 5, "steps": 1, "lr": 0.3}, "repeats": 2
        }),
    );
    let mut names = Vec::new();
    let mut runs: Vec<Vec<Vec<(String, Vec<u8>)>>> = Vec::new();
    // both rounds use the same paths, since configs name model files
    let out = w.join("runs");
    for round in 0..2 {
        if round == 1 {
            fs::remove_dir_all(&out).unwrap();
        }
        let out = &out;
        let mut run = |args: &[&str]| -> Result<PathBuf, String> {
            let d = fairshift(args, out)?;
            if round == 0 {
                names.push(args[0].to_string());
            }
            Ok(d)
        };
        let result = (|| -> Result<Vec<PathBuf>, String> {
            let mut dirs = Vec::new();
            let train = run(&["train", "--preset", "synthetic-desk"])?;
            let model = train.join("model.json").display().to_string();
            dirs.push(train);
            dirs.push(run(&["pretrain", "--preset", "synthetic-desk-pretrain"])?);
            dirs.push(run(&["finetune", "--preset", "synthetic-biased-finetune", "--model", &model])?);
            let eval = write(
                "eval.json",
                serde_json::json!({"command": "eval", "model": model, "data": {"kind": "synthetic-biased"}}),
            );
            dirs.push(run(&["eval", "--config", &eval])?);
            dirs.push(run(&["sweep", "--config", &sweep])?);
            if has_compas {
                dirs.push(run(&["fit", "--preset", "compas-dp-model"])?);
                let warn = run(&["warn", "--preset", "compas-dp"])?;
                let rows = fs::read_to_string(warn.join("warning_set.csv")).unwrap().lines().count() - 1;
                let preds: String = std::iter::once("unfair".to_string())
                    .chain((0..rows).map(|i| (i % 2).to_string()))
                    .collect::<Vec<_>>()
                    .join("\n");
                fs::write(w.join("preds.csv"), preds + "\n").unwrap();
                let score = write(
                    "score.json",
                    serde_json::json!({"command": "score-warnings",
                        "warning_set": warn.join("warning_set.csv"), "predictions": w.join("preds.csv")}),
                );
                dirs.push(warn);
                dirs.push(run(&["score-warnings", "--config", &score])?);
            }
            Ok(dirs)
        })();
        match result {
            Ok(dirs) => runs.push(dirs.iter().map(|d| snapshot(d)).collect()),
            Err(e) => return verdict(false, e),
        }
    }
    let mut differing = Vec::new();
    for (i, (a, b)) in runs[0].iter().zip(&runs[1]).enumerate() {
        if a != b {
            differing.push(names[i].clone());
        }
    }
    let checked = names.join(", ");
    let mut detail = format!("compared {checked}");
    if !has_compas {
        detail.push_str("; fit, warn and score-warnings skipped (no COMPAS file)");
    }
    if !differing.is_empty() {
        detail.push_str(&format!("; differing: {}", differing.join(", ")));
    }
    verdict(differing.is_empty() && has_compas, detail)
}

fn main() {
    // cargo passes libtest flags; only --list needs an answer
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    type Criterion = (u32, &'static str, Duration, fn() -> Verdict);
    let criteria: [Criterion; 9] = [
        (1, "meta-gradient matches finite differences", Duration::from_secs(5), meta_gradient),
        (2, "gamma = 0 reproduces MAML bit for bit", Duration::from_secs(30), gamma_zero_is_maml),
        (3, "heuristic scorecard within 5% of optimum", Duration::from_secs(120), heuristic_vs_exhaustive),
        (4, "scorecard worked example", Duration::from_secs(1), scorecard_example),
        (5, "COMPAS warnings", Duration::from_secs(15 * 60), compas_warnings),
        (6, "fair fine-tuning on the biased synthetic task", Duration::from_secs(20 * 60), synthetic_biased),
        (7, "Communities gamma sweep", Duration::from_secs(30 * 60), communities_sweep),
        (8, "shift engine statistics", Duration::from_secs(60), shift_statistics),
        (9, "byte-identical reruns of every command", Duration::from_secs(10 * 60), determinism),
    ];
    let mut unexpected = Vec::new();
    for (id, name, budget, check) in criteria {
        let start = Instant::now();
        let v = check();
        let took = start.elapsed();
        let pass = v.pass && took <= budget;
        let tag = if pass { "PASS" } else { "FAIL" };
        println!(
            "{tag} criterion {id}: {name} | {} | {:.1}s (budget {}s)",
            v.detail,
            took.as_secs_f64(),
            budget.as_secs()
        );
        if !pass && !KNOWN_FAILING.contains(&id) {
            unexpected.push(id);
        }
    }
    if !unexpected.is_empty() {
        println!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
