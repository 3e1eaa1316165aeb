//! ProPublica COMPAS two-year recidivism recipe.

use chrono::NaiveDate;
use ndarray::Array2;

use super::{ColumnKind, Dataset, RawTable};
use crate::error::{Error, Result};

/// Feature columns emitted by [`preprocess_compas`], in order.
pub const COMPAS_FEATURES: [&str; 8] = [
    "age",
    "priors_count",
    "juv_fel_count",
    "juv_misd_count",
    "juv_other_count",
    "length_of_stay",
    "sex_male",
    "charge_degree_felony",
];

const REQUIRED: [&str; 14] = [
    "age",
    "priors_count",
    "juv_fel_count",
    "juv_misd_count",
    "juv_other_count",
    "c_jail_in",
    "c_jail_out",
    "sex",
    "c_charge_degree",
    "race",
    "days_b_screening_arrest",
    "is_recid",
    "score_text",
    "two_year_recid",
];

fn num(s: &str, row: usize, column: &str) -> Result<f64> {
    s.parse::<f64>().map_err(|_| Error::Parse {
        row: row + 1,
        column: column.to_string(),
        value: s.to_string(),
    })
}

fn date(s: &str) -> Option<NaiveDate> {
    NaiveDate::parse_from_str(s.get(..10)?, "%Y-%m-%d").ok()
}

/// Applies the standard ProPublica filters and encodings.
///
/// Rows are kept when `|days_b_screening_arrest| <= 30`, `is_recid != -1`,
/// the charge degree is not ordinary traffic (`O`) and a score exists.
/// Label 1 means *not* rearrested within two years; sensitive 0 means the
/// defendant is African-American. `length_of_stay` is whole days between
/// jail entry and exit (0 when either date is missing).
pub fn preprocess_compas(raw: &RawTable) -> Result<Dataset> {
    let mut idx = std::collections::HashMap::new();
    for name in REQUIRED {
        idx.insert(name, raw.require(name)?);
    }
    let col = |row: &Vec<String>, name: &str| -> String { row[idx[name]].clone() };

    let mut values: Vec<f64> = Vec::new();
    let mut labels = Vec::new();
    let mut sensitive = Vec::new();
    for (i, row) in raw.rows.iter().enumerate() {
        let days = col(row, "days_b_screening_arrest");
        let Ok(days) = days.parse::<f64>() else {
            continue;
        };
        if days.abs() > 30.0 {
            continue;
        }
        if num(&col(row, "is_recid"), i, "is_recid")? == -1.0 {
            continue;
        }
        let degree = col(row, "c_charge_degree");
        if degree == "O" {
            continue;
        }
        if col(row, "score_text") == "N/A" {
            continue;
        }
        for name in &COMPAS_FEATURES[..5] {
            values.push(num(&col(row, name), i, name)?);
        }
        let stay = match (date(&col(row, "c_jail_in")), date(&col(row, "c_jail_out"))) {
            (Some(a), Some(b)) => (b - a).num_days() as f64,
            _ => 0.0,
        };
        values.push(stay);
        values.push(f64::from(u8::from(col(row, "sex") == "Male")));
        values.push(f64::from(u8::from(degree == "F")));
        let recid = num(&col(row, "two_year_recid"), i, "two_year_recid")?;
        if recid != 0.0 && recid != 1.0 {
            return Err(Error::NonBinary {
                what: "two_year_recid",
                row: i + 1,
                value: recid,
            });
        }
        labels.push(1 - recid as u8);
        sensitive.push(u8::from(col(row, "race") != "African-American"));
    }
    let n = labels.len();
    if n == 0 {
        return Err(Error::Empty);
    }
    let features = Array2::from_shape_vec((n, COMPAS_FEATURES.len()), values)
        .map_err(|e| Error::Shape(e.to_string()))?;
    let mut kinds = vec![ColumnKind::Numeric; 6];
    kinds.extend([ColumnKind::Binary, ColumnKind::Binary]);
    Dataset::with_kinds(
        features,
        labels,
        sensitive,
        COMPAS_FEATURES.iter().map(|s| s.to_string()).collect(),
        kinds,
    )
}
