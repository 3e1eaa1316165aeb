//! UCI Communities & Crime recipe: one task per state.

use std::collections::HashMap;

use ndarray::Array2;

use super::{ColumnKind, Dataset, RawTable, Task, TaskCollection};
use crate::error::{Error, Result};

/// Attribute names of the header-less UCI `communities.data` release.
pub const COMMUNITIES_COLUMNS: [&str; 128] = [
    "state", "county", "community", "communityname", "fold", "population",
    "householdsize", "racepctblack", "racePctWhite", "racePctAsian", "racePctHisp",
    "agePct12t21", "agePct12t29", "agePct16t24", "agePct65up", "numbUrban", "pctUrban",
    "medIncome", "pctWWage", "pctWFarmSelf", "pctWInvInc", "pctWSocSec", "pctWPubAsst",
    "pctWRetire", "medFamInc", "perCapInc", "whitePerCap", "blackPerCap", "indianPerCap",
    "AsianPerCap", "OtherPerCap", "HispPerCap", "NumUnderPov", "PctPopUnderPov",
    "PctLess9thGrade", "PctNotHSGrad", "PctBSorMore", "PctUnemployed", "PctEmploy",
    "PctEmplManu", "PctEmplProfServ", "PctOccupManu", "PctOccupMgmtProf", "MalePctDivorce",
    "MalePctNevMarr", "FemalePctDiv", "TotalPctDiv", "PersPerFam", "PctFam2Par",
    "PctKids2Par", "PctYoungKids2Par", "PctTeen2Par", "PctWorkMomYoungKids", "PctWorkMom",
    "NumIlleg", "PctIlleg", "NumImmig", "PctImmigRecent", "PctImmigRec5", "PctImmigRec8",
    "PctImmigRec10", "PctRecentImmig", "PctRecImmig5", "PctRecImmig8", "PctRecImmig10",
    "PctSpeakEnglOnly", "PctNotSpeakEnglWell", "PctLargHouseFam", "PctLargHouseOccup",
    "PersPerOccupHous", "PersPerOwnOccHous", "PersPerRentOccHous", "PctPersOwnOccup",
    "PctPersDenseHous", "PctHousLess3BR", "MedNumBR", "HousVacant", "PctHousOccup",
    "PctHousOwnOcc", "PctVacantBoarded", "PctVacMore6Mos", "MedYrHousBuilt",
    "PctHousNoPhone", "PctWOFullPlumb", "OwnOccLowQuart", "OwnOccMedVal", "OwnOccHiQuart",
    "RentLowQ", "RentMedian", "RentHighQ", "MedRent", "MedRentPctHousInc",
    "MedOwnCostPctInc", "MedOwnCostPctIncNoMtg", "NumInShelters", "NumStreet",
    "PctForeignBorn", "PctBornSameState", "PctSameHouse85", "PctSameCity85",
    "PctSameState85", "LemasSwornFT", "LemasSwFTPerPop", "LemasSwFTFieldOps",
    "LemasSwFTFieldPerPop", "LemasTotalReq", "LemasTotReqPerPop", "PolicReqPerOffic",
    "PolicPerPop", "RacialMatchCommPol", "PctPolicWhite", "PctPolicBlack", "PctPolicHisp",
    "PctPolicAsian", "PctPolicMinor", "OfficAssgnDrugUnits", "NumKindsDrugsSeiz",
    "PolicAveOTWorked", "LandArea", "PopDens", "PctUsePubTrans", "PolicCars",
    "PolicOperBudg", "LemasPctPolicOnPatr", "LemasGangUnitDeploy", "LemasPctOfficDrugUn",
    "PolicBudgPerPop", "ViolentCrimesPerPop",
];

/// Racial percentage-makeup columns; the first is the Black population share.
const RACE_COLUMNS: [&str; 4] = ["racepctblack", "racePctWhite", "racePctAsian", "racePctHisp"];

/// Violent-crime target, normalized and unnormalized releases respectively.
const CRIME_COLUMNS: [&str; 2] = ["ViolentCrimesPerPop", "violentPerPop"];

/// Identifiers and every crime outcome column (the unnormalized release
/// ships 18 of them); none of these may become a feature.
const EXCLUDED: [&str; 26] = [
    "state", "county", "community", "communityname", "fold", "countyCode",
    "communityCode", "murders", "murdPerPop", "rapes", "rapesPerPop", "robberies",
    "robbbPerPop", "assaults", "assaultPerPop", "burglaries", "burglPerPop", "larcenies",
    "larcPerPop", "autoTheft", "autoTheftPerPop", "arsons", "arsonsPerPop",
    "ViolentCrimesPerPop", "violentPerPop", "nonViolPerPop",
];

pub const MIN_COMMUNITIES: usize = 20;
const MAX_MISSING_FRACTION: f64 = 0.10;

fn is_missing(s: &str) -> bool {
    s.is_empty() || s == "?"
}

fn parse(raw: &RawTable, row: usize, col: usize) -> Result<Option<f64>> {
    let s = &raw.rows[row][col];
    if is_missing(s) {
        return Ok(None);
    }
    s.parse::<f64>().map(Some).map_err(|_| Error::Parse {
        row: row + 1,
        column: raw.headers[col].clone(),
        value: s.clone(),
    })
}

/// Median with the usual mean-of-middle-pair rule for even counts.
fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Protected (0) iff the Black share ranks first or second among the racial
/// makeup columns, i.e. at most one other group is strictly larger.
pub(crate) fn sensitive_from_race(black: f64, others: &[f64]) -> u8 {
    let larger = others.iter().filter(|&&o| o > black).count();
    u8::from(larger > 1)
}

/// Builds one task per state with at least 20 communities.
///
/// Label 1 = violent crime rate at or below the state median. Feature
/// columns missing in more than 10% of retained communities are dropped;
/// remaining gaps are imputed with the per-task column mean. The racial
/// makeup columns define the sensitive attribute and are not features.
pub fn preprocess_communities(raw: &RawTable) -> Result<TaskCollection> {
    let state_col = raw.require("state")?;
    let crime_col = CRIME_COLUMNS
        .iter()
        .find_map(|c| raw.column(c))
        .ok_or_else(|| Error::MissingColumn(CRIME_COLUMNS.join(" or ")))?;
    let race_cols = RACE_COLUMNS
        .iter()
        .map(|c| raw.require(c))
        .collect::<Result<Vec<_>>>()?;

    // Rows with a usable crime target and racial makeup, grouped by state in
    // order of first appearance.
    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, Vec<usize>> = HashMap::new();
    for i in 0..raw.n_rows() {
        if parse(raw, i, crime_col)?.is_none() {
            continue;
        }
        let mut race_ok = true;
        for &c in &race_cols {
            race_ok &= parse(raw, i, c)?.is_some();
        }
        if !race_ok {
            continue;
        }
        let state = raw.rows[i][state_col].clone();
        groups
            .entry(state.clone())
            .or_insert_with(|| {
                order.push(state);
                Vec::new()
            })
            .push(i);
    }
    order.retain(|s| groups[s].len() >= MIN_COMMUNITIES);
    let retained: Vec<usize> = order.iter().flat_map(|s| groups[s].iter().copied()).collect();
    if retained.is_empty() {
        return Err(Error::Empty);
    }

    let mut feature_cols = Vec::new();
    for (j, h) in raw.headers.iter().enumerate() {
        if EXCLUDED.contains(&h.as_str()) || RACE_COLUMNS.contains(&h.as_str()) {
            continue;
        }
        if raw.column(h) != Some(j) {
            continue;
        }
        let mut missing = 0usize;
        for &i in &retained {
            if parse(raw, i, j)?.is_none() {
                missing += 1;
            }
        }
        if (missing as f64) / (retained.len() as f64) <= MAX_MISSING_FRACTION {
            feature_cols.push(j);
        }
    }
    let names: Vec<String> = feature_cols.iter().map(|&j| raw.headers[j].clone()).collect();

    // Column kinds are decided over all retained rows so every task shares them.
    let mut kinds = Vec::with_capacity(feature_cols.len());
    for &j in &feature_cols {
        let mut binary = true;
        for &i in &retained {
            if let Some(v) = parse(raw, i, j)? {
                binary &= v == 0.0 || v == 1.0;
            }
        }
        kinds.push(if binary { ColumnKind::Binary } else { ColumnKind::Numeric });
    }

    let mut tasks = Vec::with_capacity(order.len());
    for state in &order {
        let rows = &groups[state];
        let n = rows.len();
        let mut features = Array2::<f64>::zeros((n, feature_cols.len()));
        for (k, &j) in feature_cols.iter().enumerate() {
            let mut present = Vec::with_capacity(n);
            let mut cells = Vec::with_capacity(n);
            for &i in rows {
                let v = parse(raw, i, j)?;
                if let Some(v) = v {
                    present.push(v);
                }
                cells.push(v);
            }
            let fill = if present.is_empty() {
                0.0
            } else {
                let m = present.iter().sum::<f64>() / present.len() as f64;
                if kinds[k] == ColumnKind::Binary {
                    m.round()
                } else {
                    m
                }
            };
            for (r, v) in cells.into_iter().enumerate() {
                features[[r, k]] = v.unwrap_or(fill);
            }
        }
        let crime: Vec<f64> = rows
            .iter()
            .map(|&i| parse(raw, i, crime_col).map(|v| v.unwrap_or(f64::NAN)))
            .collect::<Result<_>>()?;
        let med = median(&crime);
        let labels = crime.iter().map(|&c| u8::from(c <= med)).collect();
        let mut sensitive = Vec::with_capacity(n);
        for &i in rows {
            let mut shares = Vec::with_capacity(4);
            for &c in &race_cols {
                shares.push(parse(raw, i, c)?.unwrap_or(0.0));
            }
            sensitive.push(sensitive_from_race(shares[0], &shares[1..]));
        }
        let dataset = Dataset::with_kinds(features, labels, sensitive, names.clone(), kinds.clone())?;
        tasks.push(Task {
            id: format!("state-{state}"),
            dataset,
        });
    }
    TaskCollection::new(tasks)
}
