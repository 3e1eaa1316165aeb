//! K-shot support/query episodes drawn from a task distribution.

use rand::seq::index::sample;
use rand::Rng;

use crate::data::{Dataset, TaskCollection};
use crate::error::{Error, Result};
use crate::nn::{regularizers, Batch, TaskLossSpec};
use crate::seed;
use crate::synthetic::{sample_task_spec, sample_training_points, SyntheticTaskSpec};

const STREAM_POOL: u64 = 0x504F_4F4C;

/// One task draw: K support rows for adaptation and K query rows for the
/// meta-update.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub task_id: String,
    pub support: Batch,
    pub query: Batch,
    /// The task had fewer than 2K rows, so the query was drawn with
    /// replacement from the rows outside the support.
    pub query_with_replacement: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TaskSource {
    /// A fixed pool of synthetic task specifications; every draw samples
    /// fresh points from the chosen task.
    Synthetic(Vec<SyntheticTaskSpec>),
    Collection(TaskCollection),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskSampler {
    source: TaskSource,
}

impl TaskSampler {
    /// A pool of `pool_size` cached synthetic tasks.
    pub fn synthetic(pool_size: usize, seed: u64) -> Result<Self> {
        if pool_size == 0 {
            return Err(Error::Config("synthetic task pool must be non-empty".into()));
        }
        let pool = (0..pool_size as u64)
            .map(|i| sample_task_spec(seed::derive2(seed, STREAM_POOL, i)))
            .collect();
        Ok(TaskSampler {
            source: TaskSource::Synthetic(pool),
        })
    }

    pub fn collection(tasks: TaskCollection) -> Result<Self> {
        if tasks.is_empty() {
            return Err(Error::Config("task collection is empty".into()));
        }
        Ok(TaskSampler {
            source: TaskSource::Collection(tasks),
        })
    }

    pub fn source(&self) -> &TaskSource {
        &self.source
    }

    pub fn n_tasks(&self) -> usize {
        match &self.source {
            TaskSource::Synthetic(p) => p.len(),
            TaskSource::Collection(c) => c.len(),
        }
    }

    pub fn input_width(&self) -> usize {
        match &self.source {
            TaskSource::Synthetic(_) => 2,
            TaskSource::Collection(c) => c.tasks()[0].dataset.n_cols(),
        }
    }

    /// Draws an episode; the result depends only on `seed`.
    pub fn draw(&self, spec: &TaskLossSpec, k: usize, seed: u64) -> Result<Episode> {
        if k == 0 {
            return Err(Error::Config("K must be ≥ 1".into()));
        }
        let mut rng = seed::rng(seed);
        match &self.source {
            TaskSource::Synthetic(pool) => {
                let i = rng.random_range(0..pool.len());
                let task = SyntheticTaskSpec {
                    seed: rng.random(),
                    ..pool[i]
                };
                let ds = sample_training_points(&task, 2 * k)?;
                let all = Batch::from_dataset(&ds);
                let support: Vec<usize> = (0..k).collect();
                let query: Vec<usize> = (k..2 * k).collect();
                Ok(Episode {
                    task_id: format!("synthetic-{i}"),
                    support: all.select(&support),
                    query: all.select(&query),
                    query_with_replacement: false,
                })
            }
            TaskSource::Collection(c) => {
                let t = &c.tasks()[rng.random_range(0..c.len())];
                draw_from_dataset(&t.id, &t.dataset, spec, k, &mut rng)
            }
        }
    }
}

/// Rows of `pool` in the regularizer's subgroup.
fn subgroup_rows(ds: &Dataset, spec: &TaskLossSpec, pool: &[usize]) -> Option<Vec<usize>> {
    if spec.gamma == 0.0 {
        return None;
    }
    let reg = regularizers().get(&spec.regularizer).ok()?;
    let (y, a) = (ds.labels(), ds.sensitive());
    let rows: Vec<usize> = pool
        .iter()
        .copied()
        .filter(|&i| reg.includes(y[i], a[i]) == Some(true))
        .collect();
    Some(rows)
}

/// If the active regularizer's subgroup is missing from `chosen`, swaps the
/// last chosen row for a random subgroup row of `pool` not already chosen.
fn stratify<R: Rng + ?Sized>(
    ds: &Dataset,
    spec: &TaskLossSpec,
    chosen: &mut [usize],
    pool: &[usize],
    rng: &mut R,
) {
    let Some(present) = subgroup_rows(ds, spec, chosen) else {
        return;
    };
    if !present.is_empty() || chosen.is_empty() {
        return;
    }
    let candidates: Vec<usize> = subgroup_rows(ds, spec, pool)
        .unwrap_or_default()
        .into_iter()
        .filter(|i| !chosen.contains(i))
        .collect();
    if let Some(&pick) = candidates.get(rng.random_range(0..candidates.len().max(1))) {
        let last = chosen.len() - 1;
        chosen[last] = pick;
    }
}

fn draw_from_dataset<R: Rng + ?Sized>(
    id: &str,
    ds: &Dataset,
    spec: &TaskLossSpec,
    k: usize,
    rng: &mut R,
) -> Result<Episode> {
    let n = ds.n_rows();
    if n < k + 1 {
        return Err(Error::Config(format!(
            "task {id} has {n} rows, fewer than K + 1 = {}",
            k + 1
        )));
    }
    let all_rows: Vec<usize> = (0..n).collect();
    let mut support: Vec<usize> = sample(rng, n, k).into_vec();
    stratify(ds, spec, &mut support, &all_rows, rng);

    let mut in_support = vec![false; n];
    for &i in &support {
        in_support[i] = true;
    }
    let rest: Vec<usize> = all_rows.into_iter().filter(|&i| !in_support[i]).collect();
    let with_replacement = rest.len() < k;
    let query: Vec<usize> = if with_replacement {
        (0..k).map(|_| rest[rng.random_range(0..rest.len())]).collect()
    } else {
        let mut q: Vec<usize> = sample(rng, rest.len(), k).into_iter().map(|j| rest[j]).collect();
        stratify(ds, spec, &mut q, &rest, rng);
        q
    };
    let all = Batch::from_dataset(ds);
    Ok(Episode {
        task_id: id.to_string(),
        support: all.select(&support),
        query: all.select(&query),
        query_with_replacement: with_replacement,
    })
}

/// Support / evaluation partition of a hold-out task: `k` random rows for
/// fine-tuning, the remainder for evaluation (original order).
pub fn finetune_split(ds: &Dataset, k: usize, seed: u64) -> Result<(Dataset, Dataset)> {
    if ds.n_rows() < k + 1 {
        return Err(Error::Config(format!(
            "hold-out task has {} rows, need at least K + 1 = {}",
            ds.n_rows(),
            k + 1
        )));
    }
    let mut rng = seed::rng(seed);
    let mut support = sample(&mut rng, ds.n_rows(), k).into_vec();
    support.sort_unstable();
    let rest: Vec<usize> = (0..ds.n_rows()).filter(|i| support.binary_search(i).is_err()).collect();
    Ok((ds.select_rows(&support)?, ds.select_rows(&rest)?))
}
