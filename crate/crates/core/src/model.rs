//! A trained classifier bundled with its input standardization.

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::data::{ColumnKind, Dataset};
use crate::error::{Error, Result};
use crate::metrics::Predictor;
use crate::nn::{forward, ParamSet};

pub const MODEL_FORMAT: &str = "fairshift-model";
pub const MODEL_VERSION: u32 = 1;

/// Per-column affine map `(x - mean) / scale` fitted on training features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    /// Columns with (near) zero spread keep scale 1.
    pub fn fit(x: &Array2<f64>) -> Self {
        let n = x.nrows().max(1) as f64;
        let mean: Vec<f64> = x.axis_iter(Axis(1)).map(|c| c.sum() / n).collect();
        let scale = x
            .axis_iter(Axis(1))
            .zip(&mean)
            .map(|(c, m)| {
                let sd = (c.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Standardizer { mean, scale }
    }

    pub fn transform(&self, x: &Array2<f64>) -> Array2<f64> {
        let mean = Array1::from(self.mean.clone());
        let scale = Array1::from(self.scale.clone());
        (x - &mean) / &scale
    }

    /// Standardized copy of a dataset; every column becomes numeric.
    pub fn apply(&self, dataset: &Dataset) -> Result<Dataset> {
        Dataset::with_kinds(
            self.transform(dataset.features()),
            dataset.labels().to_vec(),
            dataset.sensitive().to_vec(),
            dataset.column_names(),
            vec![ColumnKind::Numeric; dataset.n_cols()],
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Model {
    pub format: String,
    pub version: u32,
    pub columns: Vec<String>,
    pub standardizer: Option<Standardizer>,
    pub params: ParamSet,
}

impl Model {
    pub fn new(columns: Vec<String>, standardizer: Option<Standardizer>, params: ParamSet) -> Result<Self> {
        let m = Model {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            columns,
            standardizer,
            params,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.format != MODEL_FORMAT || self.version != MODEL_VERSION {
            return Err(Error::Schema(format!(
                "expected {MODEL_FORMAT} v{MODEL_VERSION}, found {} v{}",
                self.format, self.version
            )));
        }
        ParamSet::new(self.params.shapes().to_vec(), self.params.values().to_vec())?;
        let w = self.params.input_width();
        let std_ok = self
            .standardizer
            .as_ref()
            .is_none_or(|s| s.mean.len() == w && s.scale.len() == w);
        if self.columns.len() != w || !std_ok {
            return Err(Error::Shape(format!(
                "model has {} columns for input width {w}",
                self.columns.len()
            )));
        }
        Ok(())
    }

    /// Network input for raw feature rows.
    pub fn prepare(&self, x: &Array2<f64>) -> Array2<f64> {
        match &self.standardizer {
            Some(s) => s.transform(x),
            None => x.clone(),
        }
    }

    pub fn probabilities(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        forward(&self.params, &self.prepare(x))
    }

    /// Checks that the dataset carries the model's columns in order.
    pub fn check_columns(&self, dataset: &Dataset) -> Result<()> {
        if dataset.column_names() != self.columns {
            return Err(Error::Schema(format!(
                "dataset columns {:?} differ from model columns {:?}",
                dataset.column_names(),
                self.columns
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: Model = serde_json::from_str(text)?;
        m.validate()?;
        Ok(m)
    }
}

impl Predictor for Model {
    /// 1 iff P(class 1) ≥ 0.5.
    fn predict(&self, features: &Array2<f64>) -> Vec<u8> {
        let p = self
            .probabilities(features)
            .expect("feature width checked against the model");
        p.column(1).iter().map(|&v| u8::from(v >= 0.5)).collect()
    }
}
