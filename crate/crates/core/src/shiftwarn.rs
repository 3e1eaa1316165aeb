//! Mean-shift perturbations of a test set and the loop that labels each
//! shifted copy fair or unfair under a fairness oracle.
//!
//! Numeric columns are shifted additively in native units. Binary columns
//! get a new proportion and are resampled i.i.d. Bernoulli.

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{ColumnKind, ColumnMeta, Dataset};
use crate::error::{Error, Result};
use crate::metrics::{fairness_oracle, FairnessNotion, OracleOutcome, Predictor};
use crate::seed;
use crate::slim::Scorecard;

/// Pseudo-column names used when labels / sensitive values are shifted.
pub const LABEL_COLUMN: &str = "@label";
pub const SENSITIVE_COLUMN: &str = "@sensitive";

const STREAM_SHIFT: u64 = 1;
const STREAM_APPLY: u64 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShiftConfig {
    /// Standard deviation of the new proportion of a binary column.
    #[serde(default = "default_spread")]
    pub binary_spread: f64,
    /// Also shift the label and sensitive proportions.
    #[serde(default)]
    pub shift_label_sensitive: bool,
    /// Columns with a smaller standard deviation are not shifted.
    #[serde(default = "default_min_std")]
    pub min_std: f64,
}

fn default_spread() -> f64 {
    1.0
}

fn default_min_std() -> f64 {
    1e-6
}

impl Default for ShiftConfig {
    fn default() -> Self {
        ShiftConfig {
            binary_spread: default_spread(),
            shift_label_sensitive: false,
            min_std: default_min_std(),
        }
    }
}

impl ShiftConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.binary_spread.is_finite() && self.binary_spread >= 0.0) {
            return Err(Error::Config(format!("binary_spread {} must be ≥ 0", self.binary_spread)));
        }
        if !(self.min_std.is_finite() && self.min_std >= 0.0) {
            return Err(Error::Config(format!("min_std {} must be ≥ 0", self.min_std)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftEntry {
    pub column: String,
    pub delta: f64,
}

/// One mean shift per shiftable column, in column order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ShiftVector {
    pub entries: Vec<ShiftEntry>,
}

impl ShiftVector {
    pub fn from_pairs<S: Into<String>>(pairs: impl IntoIterator<Item = (S, f64)>) -> Self {
        ShiftVector {
            entries: pairs
                .into_iter()
                .map(|(c, d)| ShiftEntry {
                    column: c.into(),
                    delta: d,
                })
                .collect(),
        }
    }

    pub fn zero(columns: &[String]) -> Self {
        Self::from_pairs(columns.iter().map(|c| (c.clone(), 0.0)))
    }

    pub fn get(&self, column: &str) -> Option<f64> {
        self.entries.iter().find(|e| e.column == column).map(|e| e.delta)
    }

    pub fn columns(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.column.clone()).collect()
    }

    pub fn deltas(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.delta).collect()
    }
}

/// The columns a shift touches, with their statistics on the unshifted data.
pub fn shiftable_columns(dataset: &Dataset, config: &ShiftConfig) -> Vec<ColumnMeta> {
    let mut cols: Vec<ColumnMeta> = dataset
        .columns()
        .iter()
        .filter(|c| c.std_dev >= config.min_std && c.std_dev > 0.0)
        .cloned()
        .collect();
    if config.shift_label_sensitive {
        for (name, values) in [(LABEL_COLUMN, dataset.labels()), (SENSITIVE_COLUMN, dataset.sensitive())] {
            let (mean, std_dev) = crate::data::mean_std(values.iter().map(|&v| f64::from(v)));
            cols.push(ColumnMeta {
                name: name.into(),
                kind: ColumnKind::Binary,
                mean,
                std_dev,
            });
        }
    }
    cols
}

fn draw_delta<R: Rng + ?Sized>(meta: &ColumnMeta, config: &ShiftConfig, rng: &mut R) -> f64 {
    match meta.kind {
        ColumnKind::Numeric => {
            if meta.std_dev == 0.0 {
                return 0.0;
            }
            Normal::new(0.0, meta.std_dev).expect("finite std").sample(rng)
        }
        ColumnKind::Binary => {
            let p = meta.mean;
            let z: f64 = rand_distr::StandardNormal.sample(rng);
            (p + config.binary_spread * z).clamp(0.0, 1.0) - p
        }
    }
}

/// Draws a random mean shift: N(0, σ) for numeric columns, and for binary
/// columns a new proportion N(p, spread) clipped to [0, 1], stored as p' − p.
pub fn sample_shift_vector(dataset: &Dataset, config: &ShiftConfig, seed: u64) -> ShiftVector {
    let mut rng = seed::rng_for(seed, STREAM_SHIFT);
    let cols = shiftable_columns(dataset, config);
    ShiftVector::from_pairs(
        cols.iter()
            .map(|c| (c.name.clone(), draw_delta(c, config, &mut rng)))
            .collect::<Vec<_>>(),
    )
}

fn resample_bernoulli<R: Rng + ?Sized>(n: usize, p: f64, rng: &mut R) -> impl Iterator<Item = u8> + '_ {
    (0..n).map(move |_| u8::from(rng.random::<f64>() < p))
}

/// Applies a shift: adds `delta` to numeric columns and resamples binary
/// columns as Bernoulli(p + delta). Row count, order and unshifted columns
/// are preserved.
pub fn apply_shift(dataset: &Dataset, shift: &ShiftVector, seed: u64) -> Result<Dataset> {
    let mut rng = seed::rng_for(seed, STREAM_APPLY);
    let mut features = dataset.features().clone();
    let mut labels = dataset.labels().to_vec();
    let mut sensitive = dataset.sensitive().to_vec();
    let n = dataset.n_rows();
    for entry in &shift.entries {
        if !entry.delta.is_finite() {
            return Err(Error::Config(format!("non-finite shift for {}", entry.column)));
        }
        let target = match entry.column.as_str() {
            LABEL_COLUMN => Some(&mut labels),
            SENSITIVE_COLUMN => Some(&mut sensitive),
            _ => None,
        };
        if let Some(values) = target {
            let p = values.iter().map(|&v| f64::from(v)).sum::<f64>() / n as f64;
            let p = (p + entry.delta).clamp(0.0, 1.0);
            *values = resample_bernoulli(n, p, &mut rng).collect();
            continue;
        }
        let j = dataset
            .column_index(&entry.column)
            .ok_or_else(|| Error::UnknownShiftColumn(entry.column.clone()))?;
        let meta = &dataset.columns()[j];
        match meta.kind {
            ColumnKind::Numeric => features.column_mut(j).mapv_inplace(|v| v + entry.delta),
            ColumnKind::Binary => {
                let p = (meta.mean + entry.delta).clamp(0.0, 1.0);
                for (dst, v) in features.column_mut(j).iter_mut().zip(resample_bernoulli(n, p, &mut rng)) {
                    *dst = f64::from(v);
                }
            }
        }
    }
    dataset.with_values(features, labels, sensitive)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Warning {
    Unfair,
    /// The card does not predict unfairness. This is not a fairness guarantee.
    NoWarning,
}

/// Unfair iff the card's integer score is below its threshold.
pub fn predict_warning(card: &Scorecard, shift: &ShiftVector) -> Result<Warning> {
    let s = card.score(shift)?;
    Ok(if s < card.threshold {
        Warning::Unfair
    } else {
        Warning::NoWarning
    })
}

/// Labelled shifts: the training data of a warning scorecard.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarningTrainingSet {
    /// Shifted columns with their unshifted statistics.
    pub columns: Vec<ColumnMeta>,
    /// One delta row per shift, in `columns` order.
    pub deltas: Vec<Vec<f64>>,
    /// true = unfair.
    pub unfair: Vec<bool>,
}

impl WarningTrainingSet {
    pub fn new(columns: Vec<ColumnMeta>, deltas: Vec<Vec<f64>>, unfair: Vec<bool>) -> Result<Self> {
        if deltas.len() != unfair.len() {
            return Err(Error::Shape("deltas and outcomes differ in length".into()));
        }
        if let Some(r) = deltas.iter().find(|r| r.len() != columns.len()) {
            return Err(Error::Shape(format!(
                "shift row of width {} for {} columns",
                r.len(),
                columns.len()
            )));
        }
        Ok(WarningTrainingSet {
            columns,
            deltas,
            unfair,
        })
    }

    pub fn len(&self) -> usize {
        self.unfair.len()
    }

    pub fn is_empty(&self) -> bool {
        self.unfair.is_empty()
    }

    pub fn column_names(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.name.clone()).collect()
    }

    pub fn unfair_count(&self) -> usize {
        self.unfair.iter().filter(|&&u| u).count()
    }

    pub fn fair_count(&self) -> usize {
        self.len() - self.unfair_count()
    }

    pub fn shift(&self, row: usize) -> ShiftVector {
        ShiftVector::from_pairs(self.columns.iter().map(|c| c.name.clone()).zip(self.deltas[row].iter().copied()))
    }

    /// Errors unless both outcomes occur.
    pub fn require_both_outcomes(&self) -> Result<()> {
        match (self.fair_count(), self.unfair_count()) {
            (0, _) => Err(Error::SingleOutcome("unfair")),
            (_, 0) => Err(Error::SingleOutcome("fair")),
            _ => Ok(()),
        }
    }

    pub fn select(&self, rows: &[usize]) -> WarningTrainingSet {
        WarningTrainingSet {
            columns: self.columns.clone(),
            deltas: rows.iter().map(|&i| self.deltas[i].clone()).collect(),
            unfair: rows.iter().map(|&i| self.unfair[i]).collect(),
        }
    }

    /// Disjoint (train, test) partition; the test part gets `fraction` of rows.
    pub fn split(&self, fraction: f64, seed: u64) -> Result<(WarningTrainingSet, WarningTrainingSet)> {
        let (rest, test) = crate::data::split_indices(self.len(), fraction, seed)?;
        Ok((self.select(&rest), self.select(&test)))
    }

    /// CSV with one column per delta plus `outcome` (0 = fair, 1 = unfair).
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = self.column_names();
        header.push("outcome".into());
        w.write_record(&header)?;
        for (row, &u) in self.deltas.iter().zip(&self.unfair) {
            let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            rec.push(u8::from(u).to_string());
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Reads a CSV written by `write_csv`. Column statistics are not stored
    /// in the file and come back as zero.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path).map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => Error::io(path, std::io::Error::other(e.to_string())),
            _ => Error::Csv(e),
        })?;
        let headers: Vec<String> = r.headers()?.iter().map(String::from).collect();
        let Some((last, names)) = headers.split_last() else {
            return Err(Error::Empty);
        };
        if last != "outcome" {
            return Err(Error::MissingColumn("outcome".into()));
        }
        let columns = names
            .iter()
            .map(|n| ColumnMeta {
                name: n.clone(),
                kind: ColumnKind::Numeric,
                mean: 0.0,
                std_dev: 0.0,
            })
            .collect();
        let (mut deltas, mut unfair) = (Vec::new(), Vec::new());
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            let parse = |j: usize| -> Result<f64> {
                rec[j].trim().parse::<f64>().map_err(|_| Error::Parse {
                    row: i + 1,
                    column: headers[j].clone(),
                    value: rec[j].to_string(),
                })
            };
            deltas.push((0..names.len()).map(parse).collect::<Result<Vec<_>>>()?);
            unfair.push(match parse(names.len())? {
                v if v == 0.0 => false,
                v if v == 1.0 => true,
                v => {
                    return Err(Error::NonBinary {
                        what: "outcome",
                        row: i + 1,
                        value: v,
                    })
                }
            });
        }
        Self::new(columns, deltas, unfair)
    }
}

/// Bookkeeping of a warning-set build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DrawStats {
    pub attempts: usize,
    pub undefined: usize,
}

/// Oracle outcome of the shifted copy produced by attempt `index`.
fn attempt(
    model: &dyn Predictor,
    dataset: &Dataset,
    notion: &FairnessNotion,
    config: &ShiftConfig,
    seed: u64,
    index: usize,
) -> Result<(ShiftVector, OracleOutcome)> {
    let s = seed::derive(seed, index as u64);
    let shift = sample_shift_vector(dataset, config, s);
    let shifted = apply_shift(dataset, &shift, s)?;
    let outcome = fairness_oracle(model, &shifted, notion)?;
    Ok((shift, outcome))
}

/// Draws shifts until `n_shifts` of them have a defined oracle outcome.
/// Attempts are evaluated in parallel but kept in attempt order, so the
/// result depends only on `seed`. Does not check outcome diversity.
pub fn draw_warning_rows(
    model: &dyn Predictor,
    dataset: &Dataset,
    notion: &FairnessNotion,
    n_shifts: usize,
    config: &ShiftConfig,
    seed: u64,
) -> Result<(WarningTrainingSet, DrawStats)> {
    notion.validate()?;
    config.validate()?;
    let columns = shiftable_columns(dataset, config);
    let cap = n_shifts.saturating_mul(10);
    let (mut deltas, mut unfair) = (Vec::with_capacity(n_shifts), Vec::with_capacity(n_shifts));
    let mut next = 0usize;
    let mut undefined = 0usize;
    while deltas.len() < n_shifts {
        if next >= cap {
            return Err(Error::AttemptCap(format!(
                "{cap} attempts yielded only {} defined outcomes",
                deltas.len()
            )));
        }
        let want = (n_shifts - deltas.len()).min(cap - next);
        let results: Vec<Result<(ShiftVector, OracleOutcome)>> = (next..next + want)
            .into_par_iter()
            .map(|i| attempt(model, dataset, notion, config, seed, i))
            .collect();
        next += want;
        for r in results {
            let (shift, outcome) = r?;
            match outcome {
                OracleOutcome::Undefined => undefined += 1,
                o if deltas.len() < n_shifts => {
                    deltas.push(shift.deltas());
                    unfair.push(o == OracleOutcome::Unfair);
                }
                _ => {}
            }
        }
    }
    let set = WarningTrainingSet::new(columns, deltas, unfair)?;
    Ok((set, DrawStats { attempts: next, undefined }))
}

/// Draws `n_shifts` labelled shifts and requires both outcomes to occur.
pub fn build_warning_set(
    model: &dyn Predictor,
    dataset: &Dataset,
    notion: &FairnessNotion,
    n_shifts: usize,
    config: &ShiftConfig,
    seed: u64,
) -> Result<WarningTrainingSet> {
    if n_shifts < 2 {
        return Err(Error::Config(format!("n_shifts must be ≥ 2, got {n_shifts}")));
    }
    let (set, _) = draw_warning_rows(model, dataset, notion, n_shifts, config, seed)?;
    set.require_both_outcomes()?;
    Ok(set)
}
