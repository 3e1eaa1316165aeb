//! One function per subcommand. Each returns the run directory it wrote.

use std::path::{Path, PathBuf};

use fairshift::data::{
    load_csv, preprocess_communities, preprocess_compas, split, Dataset, RawTable, Schema, Task, TaskCollection,
    COMMUNITIES_COLUMNS,
};
use fairshift::fairmaml::{
    evaluate, finetune, finetune_split, gamma_sweep, trainers, write_sweep_csv, IterationLog, MetaConfig, SweepRow,
    TaskSampler,
};
use fairshift::metrics::{EvalReport, FairnessNotion};
use fairshift::model::{Model, Standardizer};
use fairshift::nn::Batch;
use fairshift::seed;
use fairshift::shiftwarn::{draw_warning_rows, WarningTrainingSet};
use fairshift::slim;
use fairshift::synthetic::{make_biased_finetune_set, sample_task_spec, sample_training_points};
use serde::{Deserialize, Serialize};

use crate::config::*;
use crate::error::{CliError, CliResult};
use crate::rundir::{Inputs, RunDir};

pub const REPORT_VERSION: u32 = 1;
const STREAM_HOLDOUT_TASKS: u64 = 0x484F_4C44;

/// Locations shared by all commands.
#[derive(Debug, Clone)]
pub struct Env {
    pub out: PathBuf,
    pub data_dir: PathBuf,
}

impl Env {
    fn data_path(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.data_dir.join(p)
        }
    }
}

struct Loaded {
    dataset: Dataset,
    /// Fixed fine-tuning rows shipped with the data (biased synthetic task).
    support: Option<Dataset>,
}

fn load_communities(env: &Env, path: &Path, inputs: &mut Inputs) -> CliResult<TaskCollection> {
    let actual = env.data_path(path);
    inputs.record(path, &actual)?;
    let raw = RawTable::load_headerless(&actual, &COMMUNITIES_COLUMNS)?;
    Ok(preprocess_communities(&raw)?)
}

fn load_data(env: &Env, spec: &DataSpec, seed: u64, inputs: &mut Inputs) -> CliResult<Loaded> {
    let dataset = match spec {
        DataSpec::Compas { path } => {
            let actual = env.data_path(path);
            inputs.record(path, &actual)?;
            preprocess_compas(&RawTable::load(&actual)?)?
        }
        DataSpec::Csv { path, schema } => {
            let (actual, schema_actual) = (env.data_path(path), env.data_path(schema));
            inputs.record(path, &actual)?;
            inputs.record(schema, &schema_actual)?;
            load_csv(&actual, &Schema::load(&schema_actual)?)?
        }
        DataSpec::Communities { path, task } => {
            let tc = load_communities(env, path, inputs)?;
            let found = match task {
                TaskRef::Id(id) => tc.get(id).cloned(),
                TaskRef::Holdout { n, index } => {
                    let (_, held) = tc.hold_out(*n, seed)?;
                    held.tasks().get(*index).cloned()
                }
            };
            found
                .ok_or_else(|| CliError::config(format!("no communities task {task:?}")))?
                .dataset
        }
        DataSpec::SyntheticBiased { eval_size } => {
            let set = make_biased_finetune_set(seed, *eval_size)?;
            return Ok(Loaded {
                dataset: set.evaluation,
                support: Some(set.support),
            });
        }
    };
    Ok(Loaded { dataset, support: None })
}

/// (rows for fitting, rows selected) for a selection rule.
fn partition(ds: &Dataset, select: &Select, seed: u64) -> CliResult<(Option<Dataset>, Dataset)> {
    Ok(match select {
        Select::All => (None, ds.clone()),
        Select::Holdout { fraction } => {
            let (train, test) = split(ds, *fraction, seed)?;
            (Some(train), test)
        }
        Select::FinetuneRest { k } => {
            let (support, rest) = finetune_split(ds, *k, seed)?;
            (Some(support), rest)
        }
    })
}

fn load_model(path: &Path, inputs: &mut Inputs) -> CliResult<Model> {
    inputs.record(path, path)?;
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::runtime(format!("cannot read model {}: {e}", path.display())))?;
    Ok(Model::from_json(&text)?)
}

fn net_batch(model: &Model, ds: &Dataset) -> CliResult<Batch> {
    model.check_columns(ds)?;
    Ok(Batch::new(model.prepare(ds.features()), ds.labels().to_vec(), ds.sensitive().to_vec())?)
}

fn meta_with_seed(meta: &MetaConfig, seed: u64) -> MetaConfig {
    MetaConfig { seed, ..meta.clone() }
}

fn check_fit(cfg: &FitConfig) -> CliResult<()> {
    trainers().get(&cfg.trainer)?;
    cfg.meta.validate()?;
    Ok(())
}

/// Trains a model on one dataset treated as a single task.
fn fit_model(train: &Dataset, cfg: &FitConfig, seed: u64) -> CliResult<(Model, Vec<IterationLog>)> {
    let standardizer = cfg.standardize.then(|| Standardizer::fit(train.features()));
    let net = match &standardizer {
        Some(s) => s.apply(train)?,
        None => train.clone(),
    };
    let sampler = TaskSampler::collection(TaskCollection::new(vec![Task {
        id: "data".into(),
        dataset: net,
    }])?)?;
    let trained = trainers().get(&cfg.trainer)?.train(&sampler, &meta_with_seed(&cfg.meta, seed))?;
    let model = Model::new(train.column_names(), standardizer, trained.params)?;
    Ok((model, trained.log))
}

fn write_log(run: &mut RunDir, log: &[IterationLog]) -> CliResult<()> {
    let mut text = String::from("iteration,mean_loss,empty_subgroups,query_with_replacement\n");
    for l in log {
        text.push_str(&format!(
            "{},{},{},{}\n",
            l.iteration, l.mean_loss, l.empty_subgroups, l.query_with_replacement
        ));
    }
    run.write_text("train_log.csv", &text)
}

fn write_model(run: &mut RunDir, name: &str, model: &Model) -> CliResult<()> {
    run.write_text(name, &(model.to_json()? + "\n"))
}

/// Versioned wrapper of an [`EvalReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalFile {
    pub format: String,
    pub version: u32,
    pub rows: usize,
    pub report: EvalReport,
}

impl EvalFile {
    fn new(rows: usize, report: EvalReport) -> Self {
        EvalFile {
            format: "fairshift-eval-report".into(),
            version: REPORT_VERSION,
            rows,
            report,
        }
    }
}

fn evaluate_model(model: &Model, ds: &Dataset) -> CliResult<EvalReport> {
    model.check_columns(ds)?;
    Ok(evaluate(model, ds)?)
}

pub fn run_fit(env: &Env, cfg: &FitCommand) -> CliResult<PathBuf> {
    check_fit(&cfg.fit)?;
    if matches!(cfg.select, Select::FinetuneRest { .. }) {
        return Err(CliError::config("fit supports select \"all\" or \"holdout\""));
    }
    let mut inputs = Inputs::default();
    let loaded = load_data(env, &cfg.data, cfg.seed, &mut inputs)?;
    let (train, test) = partition(&loaded.dataset, &cfg.select, cfg.seed)?;
    let train = train.unwrap_or_else(|| test.clone());
    let mut run = RunDir::create(&env.out, "fit", cfg.seed, cfg, inputs)?;
    let (model, log) = fit_model(&train, &cfg.fit, cfg.seed)?;
    write_model(&mut run, "model.json", &model)?;
    write_log(&mut run, &log)?;
    run.write_json("report.json", &EvalFile::new(test.n_rows(), evaluate_model(&model, &test)?))?;
    run.finish()
}

struct Tasks {
    sampler: TaskSampler,
    holdout: TaskCollection,
    columns: Vec<String>,
}

fn build_tasks(env: &Env, spec: &TaskSourceSpec, seed: u64, inputs: &mut Inputs) -> CliResult<Tasks> {
    match spec {
        TaskSourceSpec::Synthetic {
            pool_size,
            holdout,
            holdout_rows,
        } => {
            let held = (0..*holdout)
                .map(|i| {
                    let spec = sample_task_spec(seed::derive2(seed, STREAM_HOLDOUT_TASKS, i as u64));
                    Ok(Task {
                        id: format!("synthetic-{i}"),
                        dataset: sample_training_points(&spec, *holdout_rows)?,
                    })
                })
                .collect::<CliResult<Vec<_>>>()?;
            Ok(Tasks {
                sampler: TaskSampler::synthetic(*pool_size, seed)?,
                holdout: TaskCollection::new(held)?,
                columns: vec!["x1".into(), "x2".into()],
            })
        }
        TaskSourceSpec::Communities { path, holdout } => {
            let tc = load_communities(env, path, inputs)?;
            let (train, held) = if *holdout > 0 {
                tc.hold_out(*holdout, seed)?
            } else {
                (tc, TaskCollection::new(Vec::new())?)
            };
            let columns = train.tasks()[0].dataset.column_names();
            Ok(Tasks {
                sampler: TaskSampler::collection(train)?,
                holdout: held,
                columns,
            })
        }
    }
}

pub fn run_train(env: &Env, cfg: &TrainCommand) -> CliResult<PathBuf> {
    let trainer = trainers().get(&cfg.trainer)?;
    cfg.meta.validate()?;
    let mut inputs = Inputs::default();
    let tasks = build_tasks(env, &cfg.tasks, cfg.seed, &mut inputs)?;
    let mut run = RunDir::create(&env.out, &cfg.command, cfg.seed, cfg, inputs)?;
    let trained = trainer.train(&tasks.sampler, &meta_with_seed(&cfg.meta, cfg.seed))?;
    let model = Model::new(tasks.columns, None, trained.params)?;
    write_model(&mut run, "model.json", &model)?;
    write_log(&mut run, &trained.log)?;
    if !tasks.holdout.is_empty() {
        let ids: Vec<&str> = tasks.holdout.tasks().iter().map(|t| t.id.as_str()).collect();
        run.write_json("holdout.json", &ids)?;
    }
    run.finish()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FinetuneReport {
    pub format: String,
    pub version: u32,
    pub support_rows: usize,
    pub eval_rows: usize,
    pub before: EvalReport,
    pub after: EvalReport,
}

fn grid_csv(grid: &GridSpec, before: &Model, after: &Model) -> CliResult<String> {
    if grid.steps < 2 || grid.max <= grid.min {
        return Err(CliError::config("grid needs steps ≥ 2 and max > min"));
    }
    let n = grid.steps;
    let axis: Vec<f64> = (0..n)
        .map(|i| grid.min + (grid.max - grid.min) * i as f64 / (n - 1) as f64)
        .collect();
    let x = ndarray::Array2::from_shape_fn((n * n, 2), |(r, c)| if c == 0 { axis[r / n] } else { axis[r % n] });
    let (pb, pa) = (before.probabilities(&x)?, after.probabilities(&x)?);
    let mut text = format!("{},{},p_before,p_after\n", before.columns[0], before.columns[1]);
    for r in 0..n * n {
        text.push_str(&format!("{},{},{},{}\n", x[[r, 0]], x[[r, 1]], pb[[r, 1]], pa[[r, 1]]));
    }
    Ok(text)
}

pub fn run_finetune(env: &Env, cfg: &FinetuneCommand) -> CliResult<PathBuf> {
    cfg.finetune.validate()?;
    cfg.spec.validate()?;
    let mut inputs = Inputs::default();
    let model = load_model(&cfg.model, &mut inputs)?;
    let loaded = load_data(env, &cfg.data, cfg.seed, &mut inputs)?;
    let (support, eval) = match loaded.support {
        Some(s) => (s, loaded.dataset),
        None => finetune_split(&loaded.dataset, cfg.finetune.k, cfg.seed)?,
    };
    let mut run = RunDir::create(&env.out, "finetune", cfg.seed, cfg, inputs)?;
    let params = finetune(
        &model.params,
        &net_batch(&model, &support)?,
        cfg.finetune.steps,
        cfg.finetune.lr,
        &cfg.spec,
    )?;
    let tuned = Model { params, ..model.clone() };
    write_model(&mut run, "model.json", &tuned)?;
    let report = FinetuneReport {
        format: "fairshift-finetune-report".into(),
        version: REPORT_VERSION,
        support_rows: support.n_rows(),
        eval_rows: eval.n_rows(),
        before: evaluate_model(&model, &eval)?,
        after: evaluate_model(&tuned, &eval)?,
    };
    run.write_json("report.json", &report)?;
    if let Some(grid) = &cfg.grid {
        if model.columns.len() == 2 {
            run.write_text("grid.csv", &grid_csv(grid, &model, &tuned)?)?;
        }
    }
    run.finish()
}

pub fn run_eval(env: &Env, cfg: &EvalCommand) -> CliResult<PathBuf> {
    let mut inputs = Inputs::default();
    let model = load_model(&cfg.model, &mut inputs)?;
    let loaded = load_data(env, &cfg.data, cfg.seed, &mut inputs)?;
    let (_, chosen) = partition(&loaded.dataset, &cfg.select, cfg.seed)?;
    let mut run = RunDir::create(&env.out, "eval", cfg.seed, cfg, inputs)?;
    run.write_json("report.json", &EvalFile::new(chosen.n_rows(), evaluate_model(&model, &chosen)?))?;
    run.finish()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GammaSummary {
    pub gamma: f64,
    pub rows: usize,
    pub mean_accuracy: f64,
    pub mean_dp_ratio: Option<f64>,
    pub mean_eop_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSummary {
    pub format: String,
    pub version: u32,
    pub trainer: String,
    pub gammas: Vec<GammaSummary>,
    /// Spearman correlation between gamma and mean dp_ratio.
    pub spearman_dp: Option<f64>,
    pub spearman_eop: Option<f64>,
}

fn mean_of(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Average ranks (1-based, ties share their mean rank).
fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation; `None` for fewer than two points or a
/// constant series.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let (mut c, mut vx, mut vy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        c += (a - mx) * (b - my);
        vx += (a - mx) * (a - mx);
        vy += (b - my) * (b - my);
    }
    (vx > 0.0 && vy > 0.0).then(|| c / (vx * vy).sqrt())
}

pub fn summarize_sweep(trainer: &str, gammas: &[f64], rows: &[SweepRow]) -> SweepSummary {
    let per: Vec<GammaSummary> = gammas
        .iter()
        .map(|&g| {
            let r: Vec<&SweepRow> = rows.iter().filter(|r| r.gamma == g).collect();
            GammaSummary {
                gamma: g,
                rows: r.len(),
                mean_accuracy: r.iter().map(|r| r.accuracy).sum::<f64>() / r.len().max(1) as f64,
                mean_dp_ratio: mean_of(r.iter().map(|r| r.dp_ratio)),
                mean_eop_ratio: mean_of(r.iter().map(|r| r.eop_ratio)),
            }
        })
        .collect();
    let corr = |f: fn(&GammaSummary) -> Option<f64>| {
        let pts: Vec<(f64, f64)> = per.iter().filter_map(|s| f(s).map(|v| (s.gamma, v))).collect();
        let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
        spearman(&x, &y)
    };
    SweepSummary {
        format: "fairshift-sweep-summary".into(),
        version: REPORT_VERSION,
        trainer: trainer.into(),
        spearman_dp: corr(|s| s.mean_dp_ratio),
        spearman_eop: corr(|s| s.mean_eop_ratio),
        gammas: per,
    }
}

fn gamma_label(g: f64) -> String {
    format!("{g}").replace('.', "_")
}

pub fn run_sweep(env: &Env, cfg: &SweepCommand) -> CliResult<PathBuf> {
    let trainer = trainers().get(&cfg.trainer)?;
    cfg.meta.validate()?;
    cfg.finetune.validate()?;
    if cfg.gammas.is_empty() || cfg.repeats == 0 {
        return Err(CliError::config("sweep needs at least one gamma and repeats ≥ 1"));
    }
    let mut inputs = Inputs::default();
    let tasks = build_tasks(env, &cfg.tasks, cfg.seed, &mut inputs)?;
    if tasks.holdout.is_empty() {
        return Err(CliError::config("sweep needs hold-out tasks (tasks.holdout ≥ 1)"));
    }
    let mut run = RunDir::create(&env.out, "sweep", cfg.seed, cfg, inputs)?;
    let base = meta_with_seed(&cfg.meta, cfg.seed);
    let (rows, cells) = gamma_sweep(
        trainer,
        &tasks.sampler,
        &base,
        &cfg.gammas,
        &tasks.holdout,
        &cfg.finetune,
        cfg.repeats,
    )?;
    write_sweep_csv(&rows, &run.artifact("results.csv")?)?;
    for c in &cells {
        let model = Model::new(tasks.columns.clone(), None, c.params.clone())?;
        let name = format!("models/gamma-{}-repeat-{}.json", gamma_label(c.gamma), c.repeat);
        write_model(&mut run, &name, &model)?;
    }
    run.write_json("summary.json", &summarize_sweep(&cfg.trainer, &cfg.gammas, &rows))?;
    run.finish()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WarnReport {
    pub format: String,
    pub version: u32,
    pub notion: FairnessNotion,
    pub dataset_rows: usize,
    pub n_shifts: usize,
    pub fair: usize,
    pub unfair: usize,
    pub attempts: usize,
    pub undefined: usize,
    pub warning_train_rows: usize,
    pub warning_test_rows: usize,
    pub warning_accuracy: f64,
    pub tpr: Option<f64>,
    pub tnr: Option<f64>,
    pub card_terms: usize,
    /// The model on the unshifted rows.
    pub model: EvalReport,
}

pub fn run_warn(env: &Env, cfg: &WarnCommand) -> CliResult<PathBuf> {
    cfg.notion.validate()?;
    cfg.shift.validate()?;
    cfg.slim.validate()?;
    if let ModelSource::Fit(f) = &cfg.model {
        check_fit(f)?;
    }
    if cfg.n_shifts < 2 {
        return Err(CliError::config(format!("n_shifts must be ≥ 2, got {}", cfg.n_shifts)));
    }
    if !(cfg.test_fraction > 0.0 && cfg.test_fraction < 1.0) {
        return Err(CliError::config("test_fraction must lie in (0, 1)"));
    }
    let mut inputs = Inputs::default();
    let loaded = load_data(env, &cfg.data, cfg.seed, &mut inputs)?;
    let (rest, chosen) = partition(&loaded.dataset, &cfg.select, cfg.seed)?;
    let path_model = match &cfg.model {
        ModelSource::Path(p) => Some(load_model(p, &mut inputs)?),
        ModelSource::Fit(_) => None,
    };
    let (model, fit_log) = match (&cfg.model, path_model) {
        (_, Some(m)) => (m, None),
        (ModelSource::Fit(f), None) => {
            let (m, log) = fit_model(rest.as_ref().unwrap_or(&chosen), f, cfg.seed)?;
            (m, Some(log))
        }
        (ModelSource::Path(_), None) => unreachable!("path models are loaded above"),
    };
    let model_report = evaluate_model(&model, &chosen)?;
    let (set, stats) = draw_warning_rows(&model, &chosen, &cfg.notion, cfg.n_shifts, &cfg.shift, cfg.seed)?;
    set.require_both_outcomes()?;

    let mut run = RunDir::create(&env.out, "warn", cfg.seed, cfg, inputs)?;
    if let Some(log) = fit_log {
        write_model(&mut run, "model.json", &model)?;
        write_log(&mut run, &log)?;
    }
    set.write_csv(&run.artifact("warning_set.csv")?)?;
    let (train, test) = set.split(cfg.test_fraction, cfg.seed)?;
    test.write_csv(&run.artifact("warning_test.csv")?)?;
    let mut card = slim::fit(&train, &cfg.slim, cfg.seed)?;
    let quality = card.evaluate(&test)?;
    card.metadata.notion = Some(cfg.notion.kind.clone());
    card.record_quality(&quality);
    run.write_text("scorecard.json", &(card.to_json()? + "\n"))?;
    run.write_text("scorecard.txt", &card.render())?;
    let report = WarnReport {
        format: "fairshift-warn-report".into(),
        version: REPORT_VERSION,
        notion: cfg.notion.clone(),
        dataset_rows: chosen.n_rows(),
        n_shifts: cfg.n_shifts,
        fair: set.fair_count(),
        unfair: set.unfair_count(),
        attempts: stats.attempts,
        undefined: stats.undefined,
        warning_train_rows: train.len(),
        warning_test_rows: test.len(),
        warning_accuracy: quality.accuracy,
        tpr: quality.tpr,
        tnr: quality.tnr,
        card_terms: card.terms.len(),
        model: model_report,
    };
    run.write_json("report.json", &report)?;
    run.finish()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WarningScore {
    pub format: String,
    pub version: u32,
    pub rows: usize,
    pub accuracy: f64,
    pub tpr: Option<f64>,
    pub tnr: Option<f64>,
}

fn read_predictions(path: &Path) -> CliResult<Vec<bool>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
    let col = rdr
        .headers()
        .map_err(|e| CliError::runtime(e.to_string()))?
        .iter()
        .position(|h| h.trim() == "unfair")
        .ok_or_else(|| CliError::runtime(format!("{}: no 'unfair' column", path.display())))?;
    rdr.records()
        .enumerate()
        .map(|(i, r)| {
            let r = r.map_err(|e| CliError::runtime(e.to_string()))?;
            match r[col].trim() {
                "0" => Ok(false),
                "1" => Ok(true),
                v => Err(CliError::runtime(format!("row {}: prediction {v:?} is not 0/1", i + 1))),
            }
        })
        .collect()
}

pub fn run_score_warnings(env: &Env, cfg: &ScoreWarningsCommand) -> CliResult<PathBuf> {
    let mut inputs = Inputs::default();
    inputs.record(&cfg.warning_set, &cfg.warning_set)?;
    inputs.record(&cfg.predictions, &cfg.predictions)?;
    let set = WarningTrainingSet::read_csv(&cfg.warning_set)?;
    let preds = read_predictions(&cfg.predictions)?;
    if preds.len() != set.len() {
        return Err(CliError::runtime(format!(
            "{} predictions for {} warning rows",
            preds.len(),
            set.len()
        )));
    }
    let mut run = RunDir::create(&env.out, "score-warnings", cfg.seed, cfg, inputs)?;
    let rate = |want: bool| {
        let rows: Vec<usize> = (0..set.len()).filter(|&i| set.unfair[i] == want).collect();
        (!rows.is_empty())
            .then(|| rows.iter().filter(|&&i| preds[i] == want).count() as f64 / rows.len() as f64)
    };
    let correct = preds.iter().zip(&set.unfair).filter(|(p, y)| p == y).count();
    run.write_json(
        "report.json",
        &WarningScore {
            format: "fairshift-warning-score".into(),
            version: REPORT_VERSION,
            rows: set.len(),
            accuracy: correct as f64 / set.len().max(1) as f64,
            tpr: rate(true),
            tnr: rate(false),
        },
    )?;
    run.finish()
}
