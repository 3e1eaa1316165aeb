use std::fs::File;
use std::io::Read;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};

/// Untyped CSV table. Column lookup returns the first occurrence of a
/// header, since some public releases repeat column names.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl RawTable {
    pub fn from_reader<R: Read>(reader: R, has_header: bool) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(has_header)
            .flexible(false)
            .from_reader(reader);
        let headers = if has_header {
            rdr.headers()?.iter().map(|h| h.trim().to_string()).collect()
        } else {
            Vec::new()
        };
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            rows.push(rec.iter().map(|c| c.trim().to_string()).collect());
        }
        Ok(RawTable { headers, rows })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(f, true)
    }

    /// Loads a header-less file and attaches the given column names.
    pub fn load_headerless(path: &Path, names: &[&str]) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut t = Self::from_reader(f, false)?;
        if let Some(r) = t.rows.first() {
            if r.len() != names.len() {
                return Err(Error::Schema(format!(
                    "file has {} columns, expected {}",
                    r.len(),
                    names.len()
                )));
            }
        }
        t.headers = names.iter().map(|s| s.to_string()).collect();
        Ok(t)
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }

    pub fn require(&self, name: &str) -> Result<usize> {
        self.column(name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnRole {
    Feature,
    Label,
    Sensitive,
    Drop,
}

/// Column name → role. Columns of the file not named here are dropped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Schema {
    roles: std::collections::BTreeMap<String, ColumnRole>,
}

impl Schema {
    pub fn from_roles(roles: impl IntoIterator<Item = (String, ColumnRole)>) -> Self {
        Schema {
            roles: roles.into_iter().collect(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn role(&self, column: &str) -> ColumnRole {
        self.roles.get(column).copied().unwrap_or(ColumnRole::Drop)
    }

    fn single(&self, role: ColumnRole) -> Result<&str> {
        let found: Vec<&str> = self
            .roles
            .iter()
            .filter(|(_, &r)| r == role)
            .map(|(n, _)| n.as_str())
            .collect();
        match found.as_slice() {
            [one] => Ok(one),
            _ => Err(Error::Schema(format!(
                "exactly one {role:?} column required, found {}",
                found.len()
            ))),
        }
    }
}

fn parse_cell(table: &RawTable, row: usize, col: usize) -> Result<f64> {
    let s = &table.rows[row][col];
    s.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::Parse {
            row: row + 1,
            column: table.headers[col].clone(),
            value: s.clone(),
        })
}

fn parse_binary(table: &RawTable, row: usize, col: usize, what: &'static str) -> Result<u8> {
    let v = parse_cell(table, row, col)?;
    if v == 0.0 || v == 1.0 {
        Ok(v as u8)
    } else {
        Err(Error::NonBinary {
            what,
            row: row + 1,
            value: v,
        })
    }
}

/// Builds a dataset from a raw table according to a schema.
pub fn dataset_from_table(table: &RawTable, schema: &Schema) -> Result<Dataset> {
    let label_name = schema.single(ColumnRole::Label)?;
    let sens_name = schema.single(ColumnRole::Sensitive)?;
    for (name, role) in &schema.roles {
        if *role != ColumnRole::Drop {
            table.require(name)?;
        }
    }
    let label_col = table.require(label_name)?;
    let sens_col = table.require(sens_name)?;
    // Feature order follows the file's header order.
    let mut feature_cols = Vec::new();
    for (j, h) in table.headers.iter().enumerate() {
        if schema.role(h) == ColumnRole::Feature && table.column(h) == Some(j) {
            feature_cols.push(j);
        }
    }
    let n = table.n_rows();
    if n == 0 {
        return Err(Error::Empty);
    }
    let mut features = Array2::zeros((n, feature_cols.len()));
    let mut labels = Vec::with_capacity(n);
    let mut sensitive = Vec::with_capacity(n);
    for i in 0..n {
        for (k, &j) in feature_cols.iter().enumerate() {
            features[[i, k]] = parse_cell(table, i, j)?;
        }
        labels.push(parse_binary(table, i, label_col, "label")?);
        sensitive.push(parse_binary(table, i, sens_col, "sensitive")?);
    }
    let names = feature_cols
        .iter()
        .map(|&j| table.headers[j].clone())
        .collect();
    Dataset::new(features, labels, sensitive, names)
}

/// Loads a CSV file (header row, comma separated) using a column-role schema.
pub fn load_csv(path: &Path, schema: &Schema) -> Result<Dataset> {
    let table = RawTable::load(path)?;
    dataset_from_table(&table, schema)
}
