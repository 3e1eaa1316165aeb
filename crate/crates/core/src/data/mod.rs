//! Tabular datasets with a binary label and a binary sensitive attribute.
//!
//! Label 1 is the positive (beneficial) outcome. Sensitive value 0 marks the
//! protected group.

mod communities;
mod compas;
mod raw;
mod split;

use std::collections::HashSet;
use std::path::Path;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use communities::{preprocess_communities, COMMUNITIES_COLUMNS};
pub use compas::{preprocess_compas, COMPAS_FEATURES};
pub use raw::{load_csv, ColumnRole, RawTable, Schema};
pub use split::{split, split_indices};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Numeric,
    Binary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnMeta {
    pub name: String,
    pub kind: ColumnKind,
    pub mean: f64,
    pub std_dev: f64,
}

/// Feature matrix plus labels, sensitive attribute and per-column metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Array2<f64>,
    labels: Vec<u8>,
    sensitive: Vec<u8>,
    columns: Vec<ColumnMeta>,
}

/// Population mean and standard deviation.
pub fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let (n, sum) = values.clone().fold((0usize, 0.0), |(n, s), v| (n + 1, s + v));
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = sum / n as f64;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    (mean, var.max(0.0).sqrt())
}

impl Dataset {
    /// Builds a dataset, inferring each column's kind from its values.
    pub fn new(
        features: Array2<f64>,
        labels: Vec<u8>,
        sensitive: Vec<u8>,
        names: Vec<String>,
    ) -> Result<Self> {
        let kinds = features
            .axis_iter(Axis(1))
            .map(|col| {
                if col.iter().all(|&v| v == 0.0 || v == 1.0) {
                    ColumnKind::Binary
                } else {
                    ColumnKind::Numeric
                }
            })
            .collect();
        Self::with_kinds(features, labels, sensitive, names, kinds)
    }

    /// Builds a dataset with explicitly declared column kinds.
    pub fn with_kinds(
        features: Array2<f64>,
        labels: Vec<u8>,
        sensitive: Vec<u8>,
        names: Vec<String>,
        kinds: Vec<ColumnKind>,
    ) -> Result<Self> {
        if names.len() != features.ncols() || kinds.len() != features.ncols() {
            return Err(Error::Shape(format!(
                "{} names / {} kinds for {} feature columns",
                names.len(),
                kinds.len(),
                features.ncols()
            )));
        }
        let columns = names
            .into_iter()
            .zip(kinds)
            .map(|(name, kind)| ColumnMeta {
                name,
                kind,
                mean: 0.0,
                std_dev: 0.0,
            })
            .collect();
        let mut ds = Dataset {
            features,
            labels,
            sensitive,
            columns,
        };
        ds.recompute_meta();
        ds.validate()?;
        Ok(ds)
    }

    fn recompute_meta(&mut self) {
        for (j, meta) in self.columns.iter_mut().enumerate() {
            let col = self.features.column(j);
            let (mean, std_dev) = mean_std(col.iter().copied());
            meta.mean = mean;
            meta.std_dev = std_dev;
        }
    }

    /// Checks every structural invariant. Used by all constructors and tests.
    pub fn validate(&self) -> Result<()> {
        let n = self.features.nrows();
        if n == 0 {
            return Err(Error::Empty);
        }
        if self.labels.len() != n || self.sensitive.len() != n {
            return Err(Error::InvalidDataset(format!(
                "row counts differ: features {n}, labels {}, sensitive {}",
                self.labels.len(),
                self.sensitive.len()
            )));
        }
        if let Some((row, &v)) = self.labels.iter().enumerate().find(|(_, &v)| v > 1) {
            return Err(Error::NonBinary {
                what: "label",
                row,
                value: v as f64,
            });
        }
        if let Some((row, &v)) = self.sensitive.iter().enumerate().find(|(_, &v)| v > 1) {
            return Err(Error::NonBinary {
                what: "sensitive",
                row,
                value: v as f64,
            });
        }
        let mut seen = HashSet::new();
        for (j, meta) in self.columns.iter().enumerate() {
            if !seen.insert(meta.name.as_str()) {
                return Err(Error::InvalidDataset(format!(
                    "duplicate column '{}'",
                    meta.name
                )));
            }
            let col = self.features.column(j);
            if let Some((row, &v)) = col.iter().enumerate().find(|(_, v)| !v.is_finite()) {
                return Err(Error::InvalidDataset(format!(
                    "non-finite value {v} in '{}' at row {row}",
                    meta.name
                )));
            }
            if meta.kind == ColumnKind::Binary {
                if let Some((row, &v)) =
                    col.iter().enumerate().find(|(_, &v)| v != 0.0 && v != 1.0)
                {
                    return Err(Error::NonBinary {
                        what: "binary column value",
                        row,
                        value: v,
                    });
                }
            }
            let (mean, sd) = mean_std(col.iter().copied());
            let tol = 1e-9 * (1.0 + mean.abs().max(sd));
            if (mean - meta.mean).abs() > tol || (sd - meta.std_dev).abs() > tol || meta.std_dev < 0.0
            {
                return Err(Error::InvalidDataset(format!(
                    "stale metadata for '{}'",
                    meta.name
                )));
            }
        }
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn sensitive(&self) -> &[u8] {
        &self.sensitive
    }

    pub fn columns(&self) -> &[ColumnMeta] {
        &self.columns
    }

    pub fn column_names(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.name.clone()).collect()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn kinds(&self) -> Vec<ColumnKind> {
        self.columns.iter().map(|c| c.kind).collect()
    }

    /// New dataset made of the given rows (in the given order), with
    /// metadata recomputed and kinds preserved.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Dataset> {
        let features = self.features.select(Axis(0), rows);
        let labels = rows.iter().map(|&i| self.labels[i]).collect();
        let sensitive = rows.iter().map(|&i| self.sensitive[i]).collect();
        Dataset::with_kinds(
            features,
            labels,
            sensitive,
            self.column_names(),
            self.kinds(),
        )
    }

    /// Same rows with replaced feature values, labels and sensitive values.
    pub fn with_values(
        &self,
        features: Array2<f64>,
        labels: Vec<u8>,
        sensitive: Vec<u8>,
    ) -> Result<Dataset> {
        Dataset::with_kinds(features, labels, sensitive, self.column_names(), self.kinds())
    }

    /// Writes the dataset as CSV (features, then `label`, then `sensitive`)
    /// plus a JSON schema next to it that `load_csv` accepts.
    pub fn write_csv(&self, csv_path: &Path, schema_path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(csv_path)?;
        let mut header = self.column_names();
        header.push("label".into());
        header.push("sensitive".into());
        w.write_record(&header)?;
        for i in 0..self.n_rows() {
            let mut rec: Vec<String> = self.features.row(i).iter().map(|v| v.to_string()).collect();
            rec.push(self.labels[i].to_string());
            rec.push(self.sensitive[i].to_string());
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(csv_path, e))?;
        let schema = Schema::from_roles(
            self.column_names()
                .into_iter()
                .map(|n| (n, ColumnRole::Feature))
                .chain([
                    ("label".to_string(), ColumnRole::Label),
                    ("sensitive".to_string(), ColumnRole::Sensitive),
                ]),
        );
        schema.write(schema_path)
    }
}

/// One named task of a meta-learning problem.
#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub id: String,
    pub dataset: Dataset,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TaskCollection {
    tasks: Vec<Task>,
}

impl TaskCollection {
    pub fn new(tasks: Vec<Task>) -> Result<Self> {
        let mut seen = HashSet::new();
        for t in &tasks {
            if !seen.insert(t.id.as_str()) {
                return Err(Error::InvalidDataset(format!("duplicate task id '{}'", t.id)));
            }
            t.dataset.validate()?;
        }
        if let Some(first) = tasks.first() {
            let names = first.dataset.column_names();
            if let Some(t) = tasks.iter().find(|t| t.dataset.column_names() != names) {
                return Err(Error::InvalidDataset(format!(
                    "task '{}' has a different column set",
                    t.id
                )));
            }
        }
        Ok(TaskCollection { tasks })
    }

    pub fn tasks(&self) -> &[Task] {
        &self.tasks
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Task> {
        self.tasks.iter().find(|t| t.id == id)
    }

    pub fn into_tasks(self) -> Vec<Task> {
        self.tasks
    }

    /// Partitions tasks into (kept, held out) by a seeded draw of `n_holdout` ids.
    pub fn hold_out(&self, n_holdout: usize, seed: u64) -> Result<(TaskCollection, TaskCollection)> {
        use rand::seq::SliceRandom;
        if n_holdout == 0 || n_holdout >= self.len() {
            return Err(Error::Config(format!(
                "cannot hold out {n_holdout} of {} tasks",
                self.len()
            )));
        }
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut crate::seed::rng(seed));
        let held: HashSet<usize> = idx[..n_holdout].iter().copied().collect();
        let (mut keep, mut out) = (Vec::new(), Vec::new());
        for (i, t) in self.tasks.iter().enumerate() {
            if held.contains(&i) {
                out.push(t.clone());
            } else {
                keep.push(t.clone());
            }
        }
        Ok((TaskCollection { tasks: keep }, TaskCollection { tasks: out }))
    }
}
