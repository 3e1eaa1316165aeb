//! Group-fairness ratios and the thresholded fairness oracle.
//!
//! Every ratio is protected-group rate over unprotected-group rate, so
//! values above 1 favour the protected group. A zero denominator yields 1
//! when the numerator is also 0 and the configured cap otherwise.

use std::sync::OnceLock;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::registry::Registry;

pub const DEFAULT_RATIO_CAP: f64 = 1e6;

/// Anything that maps feature rows to hard {0,1} predictions.
pub trait Predictor: Sync {
    fn predict(&self, features: &Array2<f64>) -> Vec<u8>;
}

impl<F> Predictor for F
where
    F: Fn(&Array2<f64>) -> Vec<u8> + Sync,
{
    fn predict(&self, features: &Array2<f64>) -> Vec<u8> {
        self(features)
    }
}

pub fn guarded_ratio(numerator: f64, denominator: f64, cap: f64) -> f64 {
    if denominator == 0.0 {
        if numerator == 0.0 {
            1.0
        } else {
            cap
        }
    } else {
        (numerator / denominator).min(cap)
    }
}

fn check_lengths(preds: &[u8], sensitive: &[u8], labels: Option<&[u8]>) -> Result<()> {
    let ok = preds.len() == sensitive.len() && labels.is_none_or(|l| l.len() == preds.len());
    if ok {
        Ok(())
    } else {
        Err(Error::Shape("prediction, sensitive and label lengths differ".into()))
    }
}

/// P(Ŷ=1 | rows matching `keep`), or `None` if no row matches.
fn rate(preds: &[u8], keep: impl Fn(usize) -> bool) -> Option<f64> {
    let (mut n, mut pos) = (0usize, 0usize);
    for (i, &p) in preds.iter().enumerate() {
        if keep(i) {
            n += 1;
            pos += usize::from(p == 1);
        }
    }
    (n > 0).then(|| pos as f64 / n as f64)
}

/// The six conditional positive-prediction rates.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GroupRates {
    /// P(Ŷ=1|A=0)
    pub rate_a0: Option<f64>,
    /// P(Ŷ=1|A=1)
    pub rate_a1: Option<f64>,
    /// P(Ŷ=1|A=0,Y=1)
    pub rate_a0_y1: Option<f64>,
    /// P(Ŷ=1|A=1,Y=1)
    pub rate_a1_y1: Option<f64>,
    /// P(Ŷ=1|A=0,Y=0)
    pub rate_a0_y0: Option<f64>,
    /// P(Ŷ=1|A=1,Y=0)
    pub rate_a1_y0: Option<f64>,
}

impl GroupRates {
    pub fn compute(preds: &[u8], sensitive: &[u8], labels: &[u8]) -> Result<Self> {
        check_lengths(preds, sensitive, Some(labels))?;
        let g = |a: u8| rate(preds, |i| sensitive[i] == a);
        let gy = |a: u8, y: u8| rate(preds, |i| sensitive[i] == a && labels[i] == y);
        Ok(GroupRates {
            rate_a0: g(0),
            rate_a1: g(1),
            rate_a0_y1: gy(0, 1),
            rate_a1_y1: gy(1, 1),
            rate_a0_y0: gy(0, 0),
            rate_a1_y0: gy(1, 0),
        })
    }
}

fn pair(num: Option<f64>, den: Option<f64>, what: &str, cap: f64) -> Result<f64> {
    match (num, den) {
        (Some(n), Some(d)) => Ok(guarded_ratio(n, d, cap)),
        _ => Err(Error::EmptySubgroup(what.to_string())),
    }
}

pub fn demographic_parity_ratio_capped(preds: &[u8], sensitive: &[u8], cap: f64) -> Result<f64> {
    check_lengths(preds, sensitive, None)?;
    let r0 = rate(preds, |i| sensitive[i] == 0);
    let r1 = rate(preds, |i| sensitive[i] == 1);
    pair(r0, r1, "a sensitive group is absent", cap)
}

/// P(Ŷ=1|A=0) / P(Ŷ=1|A=1).
pub fn demographic_parity_ratio(preds: &[u8], sensitive: &[u8]) -> Result<f64> {
    demographic_parity_ratio_capped(preds, sensitive, DEFAULT_RATIO_CAP)
}

/// P(Ŷ=1|A=0,Y=1) / P(Ŷ=1|A=1,Y=1).
pub fn equal_opportunity_ratio(preds: &[u8], sensitive: &[u8], labels: &[u8]) -> Result<f64> {
    let r = GroupRates::compute(preds, sensitive, labels)?;
    pair(r.rate_a0_y1, r.rate_a1_y1, "no positive-label rows in a sensitive group", DEFAULT_RATIO_CAP)
}

/// The y=1 and y=0 equalized-odds ratios.
pub fn equalized_odds_ratios(preds: &[u8], sensitive: &[u8], labels: &[u8]) -> Result<(f64, f64)> {
    let r = GroupRates::compute(preds, sensitive, labels)?;
    let tpr = pair(r.rate_a0_y1, r.rate_a1_y1, "empty (A,Y=1) cell", DEFAULT_RATIO_CAP)?;
    let fpr = pair(r.rate_a0_y0, r.rate_a1_y0, "empty (A,Y=0) cell", DEFAULT_RATIO_CAP)?;
    Ok((tpr, fpr))
}

/// Maps `r` to `min(r, 1/r)`; used only when a notion asks for symmetric ratios.
pub fn symmetrize(r: f64) -> f64 {
    if r > 1.0 {
        1.0 / r
    } else {
        r
    }
}

/// A group-fairness measure: one or more ratios, all of which must clear the
/// threshold for the data to count as fair.
pub trait FairnessMeasure: Sync {
    fn name(&self) -> &'static str;
    /// Header used when rendering scorecards, e.g. "DEMOGRAPHIC PARITY".
    fn title(&self) -> &'static str;
    fn ratios(&self, preds: &[u8], sensitive: &[u8], labels: &[u8]) -> Result<Vec<f64>>;
}

pub struct DemographicParity;
pub struct EqualOpportunity;
pub struct EqualizedOdds;

impl FairnessMeasure for DemographicParity {
    fn name(&self) -> &'static str {
        "demographic_parity"
    }
    fn title(&self) -> &'static str {
        "DEMOGRAPHIC PARITY"
    }
    fn ratios(&self, preds: &[u8], sensitive: &[u8], _labels: &[u8]) -> Result<Vec<f64>> {
        Ok(vec![demographic_parity_ratio(preds, sensitive)?])
    }
}

impl FairnessMeasure for EqualOpportunity {
    fn name(&self) -> &'static str {
        "equal_opportunity"
    }
    fn title(&self) -> &'static str {
        "EQUAL OPPORTUNITY"
    }
    fn ratios(&self, preds: &[u8], sensitive: &[u8], labels: &[u8]) -> Result<Vec<f64>> {
        Ok(vec![equal_opportunity_ratio(preds, sensitive, labels)?])
    }
}

impl FairnessMeasure for EqualizedOdds {
    fn name(&self) -> &'static str {
        "equalized_odds"
    }
    fn title(&self) -> &'static str {
        "EQUALIZED ODDS"
    }
    fn ratios(&self, preds: &[u8], sensitive: &[u8], labels: &[u8]) -> Result<Vec<f64>> {
        let (t, f) = equalized_odds_ratios(preds, sensitive, labels)?;
        Ok(vec![t, f])
    }
}

pub fn measures() -> &'static Registry<dyn FairnessMeasure> {
    static REG: OnceLock<Registry<dyn FairnessMeasure>> = OnceLock::new();
    REG.get_or_init(|| {
        Registry::<dyn FairnessMeasure>::new("fairness measure")
            .with("demographic_parity", &DemographicParity)
            .with("equal_opportunity", &EqualOpportunity)
            .with("equalized_odds", &EqualizedOdds)
    })
}

/// A fairness measure plus the threshold its ratios must reach.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FairnessNotion {
    pub kind: String,
    pub threshold: f64,
    #[serde(default)]
    pub symmetric: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleOutcome {
    Fair,
    Unfair,
    /// A subgroup required by the notion is empty.
    Undefined,
}

impl FairnessNotion {
    pub fn new(kind: &str, threshold: f64) -> Result<Self> {
        let n = FairnessNotion {
            kind: kind.to_string(),
            threshold,
            symmetric: false,
        };
        n.validate()?;
        Ok(n)
    }

    pub fn demographic_parity(threshold: f64) -> Self {
        Self::new("demographic_parity", threshold).expect("valid threshold")
    }

    pub fn equal_opportunity(threshold: f64) -> Self {
        Self::new("equal_opportunity", threshold).expect("valid threshold")
    }

    pub fn validate(&self) -> Result<()> {
        measures().get(&self.kind)?;
        if !(self.threshold > 0.0 && self.threshold <= 1.0) {
            return Err(Error::Config(format!(
                "fairness threshold {} outside (0, 1]",
                self.threshold
            )));
        }
        Ok(())
    }

    pub fn measure(&self) -> Result<&'static dyn FairnessMeasure> {
        measures().get(&self.kind)
    }

    /// Fair iff every ratio of the measure is at least the threshold.
    pub fn judge(&self, preds: &[u8], sensitive: &[u8], labels: &[u8]) -> Result<OracleOutcome> {
        let measure = self.measure()?;
        match measure.ratios(preds, sensitive, labels) {
            Ok(ratios) => {
                let fair = ratios.iter().all(|&r| {
                    let r = if self.symmetric { symmetrize(r) } else { r };
                    r >= self.threshold
                });
                Ok(if fair {
                    OracleOutcome::Fair
                } else {
                    OracleOutcome::Unfair
                })
            }
            Err(Error::EmptySubgroup(_)) => Ok(OracleOutcome::Undefined),
            Err(e) => Err(e),
        }
    }
}

/// Whether `model` acts fairly on `dataset` under `notion`.
pub fn fairness_oracle(
    model: &dyn Predictor,
    dataset: &Dataset,
    notion: &FairnessNotion,
) -> Result<OracleOutcome> {
    let preds = model.predict(dataset.features());
    notion.judge(&preds, dataset.sensitive(), dataset.labels())
}

/// Accuracy and every fairness ratio of a set of predictions. Ratios whose
/// subgroups are empty are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub dp_ratio: Option<f64>,
    pub eop_ratio: Option<f64>,
    pub eodds_ratios: Option<(f64, f64)>,
    #[serde(flatten)]
    pub group_rates: GroupRates,
}

impl EvalReport {
    pub fn from_predictions(preds: &[u8], sensitive: &[u8], labels: &[u8]) -> Result<Self> {
        let group_rates = GroupRates::compute(preds, sensitive, labels)?;
        if preds.is_empty() {
            return Err(Error::Empty);
        }
        let correct = preds.iter().zip(labels).filter(|(p, y)| p == y).count();
        Ok(EvalReport {
            accuracy: correct as f64 / preds.len() as f64,
            dp_ratio: demographic_parity_ratio(preds, sensitive).ok(),
            eop_ratio: equal_opportunity_ratio(preds, sensitive, labels).ok(),
            eodds_ratios: equalized_odds_ratios(preds, sensitive, labels).ok(),
            group_rates,
        })
    }
}
