//! Fair-MAML meta-training, the pre-trained baseline, K-shot fine-tuning,
//! evaluation and γ sweeps.

mod sampler;

use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, TaskCollection};
use crate::error::{Error, Result};
use crate::metrics::{EvalReport, Predictor};
use crate::nn::{
    adam_step, grad, init_mlp, meta_grad, mlp_shapes, predict, sgd_step, task_loss, AdamState, Batch, ParamSet,
    TaskLossSpec,
};
use crate::registry::Registry;
use crate::seed;

pub use sampler::{finetune_split, Episode, TaskSampler, TaskSource};

const STREAM_INIT: u64 = 0x494E_4954;
const STREAM_SWEEP: u64 = 0x5357_4550;

fn default_hidden() -> Vec<usize> {
    vec![20, 20]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetaConfig {
    /// Total support rows per task (and query rows).
    #[serde(rename = "K")]
    pub k: usize,
    pub meta_batch_size: usize,
    pub meta_iterations: usize,
    /// Inner (adaptation) step size; the learning rate of the baseline.
    pub alpha: f64,
    /// Adam learning rate of the meta-update.
    pub beta: f64,
    pub spec: TaskLossSpec,
    #[serde(default)]
    pub first_order: bool,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
}

impl MetaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.meta_batch_size == 0 {
            return Err(Error::Config("K and meta_batch_size must be ≥ 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite() && self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::Config(format!(
                "alpha ({}) and beta ({}) must be finite and > 0",
                self.alpha, self.beta
            )));
        }
        if self.hidden.contains(&0) {
            return Err(Error::Config("hidden layer widths must be ≥ 1".into()));
        }
        self.spec.validate()
    }

    pub fn init(&self, input_width: usize) -> Result<ParamSet> {
        init_mlp(&mlp_shapes(input_width, &self.hidden), seed::derive(self.seed, STREAM_INIT))
    }

    fn episode_seed(&self, iteration: usize, slot: usize) -> u64 {
        seed::derive2(self.seed, iteration as u64, slot as u64)
    }
}

/// Per-iteration training statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    pub iteration: usize,
    /// Mean query loss over the meta-batch (training loss for the baseline).
    pub mean_loss: f64,
    /// Episodes whose regularizer subgroup was empty.
    pub empty_subgroups: usize,
    /// Episodes whose query was drawn with replacement.
    pub query_with_replacement: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trained {
    pub params: ParamSet,
    pub log: Vec<IterationLog>,
}

fn check_loss(loss: f64, iteration: usize, task: &str) -> Result<()> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFiniteLoss {
            iteration,
            task: task.to_string(),
        })
    }
}

/// Algorithm-2 style training from `init`: per iteration, the meta-gradients
/// of a batch of episodes are summed in episode order and applied with Adam.
pub fn meta_train_from(init: ParamSet, sampler: &TaskSampler, config: &MetaConfig) -> Result<Trained> {
    config.validate()?;
    let mut params = init;
    let mut adam = AdamState::new(params.len());
    let mut log = Vec::with_capacity(config.meta_iterations);
    for it in 0..config.meta_iterations {
        let results: Vec<Result<(Episode, f64, bool, Vec<f64>)>> = (0..config.meta_batch_size)
            .into_par_iter()
            .map(|slot| {
                let ep = sampler.draw(&config.spec, config.k, config.episode_seed(it, slot))?;
                let (loss, g) = meta_grad(
                    &params,
                    &ep.support,
                    &ep.query,
                    &config.spec,
                    config.alpha,
                    config.first_order,
                )?;
                Ok((ep, loss.total, loss.empty_subgroup, g))
            })
            .collect();
        let mut total = vec![0.0; params.len()];
        let mut entry = IterationLog {
            iteration: it,
            mean_loss: 0.0,
            empty_subgroups: 0,
            query_with_replacement: 0,
        };
        for r in results {
            let (ep, loss, empty, g) = r?;
            check_loss(loss, it, &ep.task_id)?;
            for (t, gi) in total.iter_mut().zip(&g) {
                *t += gi;
            }
            entry.mean_loss += loss / config.meta_batch_size as f64;
            entry.empty_subgroups += usize::from(empty);
            entry.query_with_replacement += usize::from(ep.query_with_replacement);
        }
        adam_step(&mut adam, &mut params, &total, config.beta)?;
        log.push(entry);
    }
    Ok(Trained { params, log })
}

pub fn meta_train(sampler: &TaskSampler, config: &MetaConfig) -> Result<ParamSet> {
    let init = config.init(sampler.input_width())?;
    meta_train_from(init, sampler, config).map(|t| t.params)
}

fn concat(a: &Batch, b: &Batch) -> Batch {
    let x = ndarray::concatenate(ndarray::Axis(0), &[a.x.view(), b.x.view()]).expect("equal widths");
    Batch {
        x,
        y: a.y.iter().chain(&b.y).copied().collect(),
        a: a.a.iter().chain(&b.a).copied().collect(),
    }
}

/// Conventional training on the same episodes: each episode's 2K rows give
/// one plain gradient step of size alpha, applied in episode order.
pub fn pretrain_from(init: ParamSet, sampler: &TaskSampler, config: &MetaConfig) -> Result<Trained> {
    config.validate()?;
    let mut params = init;
    let mut log = Vec::with_capacity(config.meta_iterations);
    for it in 0..config.meta_iterations {
        let mut entry = IterationLog {
            iteration: it,
            mean_loss: 0.0,
            empty_subgroups: 0,
            query_with_replacement: 0,
        };
        for slot in 0..config.meta_batch_size {
            let ep = sampler.draw(&config.spec, config.k, config.episode_seed(it, slot))?;
            let batch = concat(&ep.support, &ep.query);
            let (loss, g) = crate::nn::loss_and_grad(&params, &batch, &config.spec)?;
            check_loss(loss.total, it, &ep.task_id)?;
            params = sgd_step(&params, &g, config.alpha)?;
            entry.mean_loss += loss.total / config.meta_batch_size as f64;
            entry.empty_subgroups += usize::from(loss.empty_subgroup);
            entry.query_with_replacement += usize::from(ep.query_with_replacement);
        }
        log.push(entry);
    }
    Ok(Trained { params, log })
}

pub fn pretrain_baseline(sampler: &TaskSampler, config: &MetaConfig) -> Result<ParamSet> {
    let init = config.init(sampler.input_width())?;
    pretrain_from(init, sampler, config).map(|t| t.params)
}

/// `steps` plain gradient steps on the support batch. The input is untouched.
pub fn finetune(params: &ParamSet, support: &Batch, steps: usize, lr: f64, spec: &TaskLossSpec) -> Result<ParamSet> {
    support.validate()?;
    let mut p = params.clone();
    for step in 0..steps {
        let loss = task_loss(&p, support, spec)?;
        check_loss(loss.total, step, "finetune")?;
        let g = grad(&p, support, spec)?;
        p = sgd_step(&p, &g, lr)?;
    }
    Ok(p)
}

/// Accuracy and fairness ratios of hard predictions (P(1) ≥ 0.5 ↦ 1).
pub fn evaluate(model: &dyn Predictor, dataset: &Dataset) -> Result<EvalReport> {
    let preds = model.predict(dataset.features());
    EvalReport::from_predictions(&preds, dataset.sensitive(), dataset.labels())
}

/// `evaluate` for bare network parameters on network-space features.
pub fn evaluate_params(params: &ParamSet, dataset: &Dataset) -> Result<EvalReport> {
    let preds = predict(params, dataset.features())?;
    EvalReport::from_predictions(&preds, dataset.sensitive(), dataset.labels())
}

/// A named way of producing a model from a task distribution.
pub trait Trainer: Sync {
    fn name(&self) -> &'static str;
    fn train(&self, sampler: &TaskSampler, config: &MetaConfig) -> Result<Trained>;
}

pub struct FairMaml;
pub struct FirstOrderMaml;
pub struct Pretrain;

impl Trainer for FairMaml {
    fn name(&self) -> &'static str {
        "fair-maml"
    }
    fn train(&self, sampler: &TaskSampler, config: &MetaConfig) -> Result<Trained> {
        meta_train_from(config.init(sampler.input_width())?, sampler, config)
    }
}

impl Trainer for FirstOrderMaml {
    fn name(&self) -> &'static str {
        "first-order"
    }
    fn train(&self, sampler: &TaskSampler, config: &MetaConfig) -> Result<Trained> {
        let config = MetaConfig {
            first_order: true,
            ..config.clone()
        };
        meta_train_from(config.init(sampler.input_width())?, sampler, &config)
    }
}

impl Trainer for Pretrain {
    fn name(&self) -> &'static str {
        "pretrain"
    }
    fn train(&self, sampler: &TaskSampler, config: &MetaConfig) -> Result<Trained> {
        pretrain_from(config.init(sampler.input_width())?, sampler, config)
    }
}

pub fn trainers() -> &'static Registry<dyn Trainer> {
    static REG: OnceLock<Registry<dyn Trainer>> = OnceLock::new();
    REG.get_or_init(|| {
        Registry::<dyn Trainer>::new("trainer")
            .with("fair-maml", &FairMaml)
            .with("first-order", &FirstOrderMaml)
            .with("pretrain", &Pretrain)
    })
}

/// Fine-tuning protocol applied to each hold-out task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FinetuneConfig {
    #[serde(rename = "K")]
    pub k: usize,
    pub steps: usize,
    pub lr: f64,
}

impl FinetuneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("fine-tuning K must be ≥ 1".into()));
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(Error::Config(format!("fine-tuning lr {} must be ≥ 0", self.lr)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub gamma: f64,
    pub repeat: usize,
    pub task_id: String,
    pub accuracy: f64,
    pub dp_ratio: Option<f64>,
    pub eop_ratio: Option<f64>,
}

/// Models trained during a sweep, one per (gamma, repeat) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub gamma: f64,
    pub repeat: usize,
    pub params: ParamSet,
}

/// Fine-tunes `params` on `finetune.k` random rows of every hold-out task
/// and evaluates on the rest of that task.
pub fn holdout_rows(
    params: &ParamSet,
    holdout: &TaskCollection,
    spec: &TaskLossSpec,
    finetune: &FinetuneConfig,
    gamma: f64,
    repeat: usize,
    seed: u64,
) -> Result<Vec<SweepRow>> {
    holdout
        .tasks()
        .iter()
        .enumerate()
        .map(|(ti, task)| {
            let (support, rest) = finetune_split(&task.dataset, finetune.k, seed::derive(seed, ti as u64))?;
            let tuned = self::finetune(params, &Batch::from_dataset(&support), finetune.steps, finetune.lr, spec)?;
            let report = evaluate_params(&tuned, &rest)?;
            Ok(SweepRow {
                gamma,
                repeat,
                task_id: task.id.clone(),
                accuracy: report.accuracy,
                dp_ratio: report.dp_ratio,
                eop_ratio: report.eop_ratio,
            })
        })
        .collect()
}

/// Trains one model per (gamma, repeat) with `trainer` and evaluates every
/// hold-out task after fine-tuning. Repeat r uses the same seed for every
/// gamma. Rows come out gamma-major, then repeat, then task.
pub fn gamma_sweep(
    trainer: &dyn Trainer,
    sampler: &TaskSampler,
    base: &MetaConfig,
    gammas: &[f64],
    holdout: &TaskCollection,
    finetune: &FinetuneConfig,
    repeats: usize,
) -> Result<(Vec<SweepRow>, Vec<SweepCell>)> {
    if gammas.is_empty() || holdout.is_empty() || repeats == 0 {
        return Err(Error::Config("sweep needs gammas, hold-out tasks and repeats ≥ 1".into()));
    }
    finetune.validate()?;
    for t in holdout.tasks() {
        if t.dataset.n_rows() < finetune.k + 1 {
            return Err(Error::Config(format!(
                "hold-out task {} has {} rows, need at least {}",
                t.id,
                t.dataset.n_rows(),
                finetune.k + 1
            )));
        }
    }
    let cells: Vec<(f64, usize)> = gammas
        .iter()
        .flat_map(|&g| (0..repeats).map(move |r| (g, r)))
        .collect();
    let results: Vec<Result<(Vec<SweepRow>, SweepCell)>> = cells
        .par_iter()
        .map(|&(gamma, repeat)| {
            let cell_seed = seed::derive2(base.seed, STREAM_SWEEP, repeat as u64);
            let config = MetaConfig {
                spec: TaskLossSpec {
                    gamma,
                    ..base.spec.clone()
                },
                seed: cell_seed,
                ..base.clone()
            };
            let trained = trainer.train(sampler, &config)?;
            let rows = holdout_rows(&trained.params, holdout, &config.spec, finetune, gamma, repeat, cell_seed)?;
            Ok((
                rows,
                SweepCell {
                    gamma,
                    repeat,
                    params: trained.params,
                },
            ))
        })
        .collect();
    let (mut rows, mut models) = (Vec::new(), Vec::new());
    for r in results {
        let (r, m) = r?;
        rows.extend(r);
        models.push(m);
    }
    Ok((rows, models))
}

/// Writes sweep rows as CSV; missing ratios are empty cells.
pub fn write_sweep_csv(rows: &[SweepRow], path: &std::path::Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["gamma", "repeat", "task_id", "accuracy", "dp_ratio", "eop_ratio"])?;
    let opt = |v: Option<f64>| v.map_or_else(String::new, |v| v.to_string());
    for r in rows {
        w.write_record([
            r.gamma.to_string(),
            r.repeat.to_string(),
            r.task_id.clone(),
            r.accuracy.to_string(),
            opt(r.dp_ratio),
            opt(r.eop_ratio),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Outcome of the biased fine-tuning protocol for one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasedTrial {
    pub seed: u64,
    pub report: EvalReport,
}

/// Fine-tunes on the five protected positives of the biased synthetic task
/// and evaluates on its evaluation set.
pub fn biased_finetune_trial(
    params: &ParamSet,
    finetune: &FinetuneConfig,
    spec: &TaskLossSpec,
    eval_size: usize,
    seed: u64,
) -> Result<BiasedTrial> {
    let set = crate::synthetic::make_biased_finetune_set(seed, eval_size)?;
    let tuned = self::finetune(params, &Batch::from_dataset(&set.support), finetune.steps, finetune.lr, spec)?;
    Ok(BiasedTrial {
        seed,
        report: evaluate_params(&tuned, &set.evaluation)?,
    })
}
