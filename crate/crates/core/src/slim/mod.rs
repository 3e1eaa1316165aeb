//! Sparse integer scorecards predicting when a shift makes a model unfair.
//!
//! A card scores a shift as Σ coef · round(delta / unit_scale) and warns
//! (predicts unfair) iff the score is below its integer threshold. Fitting
//! minimizes 0-1 loss / n + C · (nonzero coefficients) + ε · Σ|coef|.

mod solver;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::shiftwarn::{ShiftVector, WarningTrainingSet};

pub use solver::{solvers, IntegerProblem, Solution, Solver, SOLVER_AUTO, SOLVER_EXHAUSTIVE, SOLVER_HEURISTIC};

pub const SCORECARD_FORMAT: &str = "fairshift-scorecard";
pub const SCORECARD_VERSION: u32 = 1;
/// Candidate units for a column, tried from coarsest to finest.
pub const UNIT_SCALES: [f64; 3] = [1.0, 0.1, 0.01];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlimConfig {
    /// Penalty per nonzero coefficient.
    #[serde(rename = "C")]
    pub c: f64,
    /// Penalty per unit of coefficient magnitude.
    pub epsilon: f64,
    pub coeff_bound: i64,
    pub intercept_bound: i64,
    /// Columns kept after screening in the heuristic solver.
    #[serde(default = "default_screen")]
    pub screen_top: usize,
    #[serde(default = "default_solver")]
    pub solver: String,
}

fn default_screen() -> usize {
    4
}

fn default_solver() -> String {
    SOLVER_AUTO.into()
}

impl Default for SlimConfig {
    fn default() -> Self {
        SlimConfig {
            c: 1e-3,
            epsilon: 1e-3,
            coeff_bound: 25,
            intercept_bound: 500,
            screen_top: default_screen(),
            solver: default_solver(),
        }
    }
}

impl SlimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c.is_finite() && self.c >= 0.0 && self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return Err(Error::Config("C and epsilon must be finite and ≥ 0".into()));
        }
        if self.coeff_bound < 1 || self.intercept_bound < 1 {
            return Err(Error::Config("coefficient and intercept bounds must be ≥ 1".into()));
        }
        if self.screen_top < 1 {
            return Err(Error::Config("screen_top must be ≥ 1".into()));
        }
        solvers().get(&self.solver)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreTerm {
    pub column: String,
    pub coef: i64,
    /// Points are awarded per `unit_scale` native units.
    pub unit_scale: f64,
    /// Unshifted column mean and standard deviation, for display.
    #[serde(default)]
    pub column_mean: f64,
    #[serde(default)]
    pub column_std: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CardMetadata {
    pub notion: Option<String>,
    pub warning_accuracy: Option<f64>,
    pub tpr: Option<f64>,
    pub tnr: Option<f64>,
    /// Training objective of the fitted card.
    pub objective: Option<f64>,
    pub solver: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scorecard {
    pub format: String,
    pub version: u32,
    pub terms: Vec<ScoreTerm>,
    pub threshold: i64,
    pub metadata: CardMetadata,
}

/// Rounds half away from zero.
pub fn round_points(delta: f64, unit_scale: f64) -> i64 {
    (delta / unit_scale).round() as i64
}

/// Held-out quality of a card.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WarningQuality {
    pub accuracy: f64,
    pub tpr: Option<f64>,
    pub tnr: Option<f64>,
}

impl Scorecard {
    pub fn new(terms: Vec<ScoreTerm>, threshold: i64) -> Result<Self> {
        let card = Scorecard {
            format: SCORECARD_FORMAT.into(),
            version: SCORECARD_VERSION,
            terms,
            threshold,
            metadata: CardMetadata::default(),
        };
        card.validate()?;
        Ok(card)
    }

    /// Card with unit scales of 1 and no statistics, e.g. for hand-built cards.
    pub fn from_coefficients<S: Into<String>>(
        coefs: impl IntoIterator<Item = (S, i64)>,
        threshold: i64,
    ) -> Result<Self> {
        let terms = coefs
            .into_iter()
            .map(|(c, coef)| ScoreTerm {
                column: c.into(),
                coef,
                unit_scale: 1.0,
                column_mean: 0.0,
                column_std: 0.0,
            })
            .collect();
        Self::new(terms, threshold)
    }

    pub fn validate(&self) -> Result<()> {
        if self.format != SCORECARD_FORMAT || self.version != SCORECARD_VERSION {
            return Err(Error::Schema(format!(
                "expected {SCORECARD_FORMAT} v{SCORECARD_VERSION}, found {} v{}",
                self.format, self.version
            )));
        }
        for t in &self.terms {
            if t.coef == 0 {
                return Err(Error::Config(format!("zero coefficient retained for {}", t.column)));
            }
            if !(t.unit_scale.is_finite() && t.unit_scale > 0.0) {
                return Err(Error::Config(format!("bad unit scale for {}", t.column)));
            }
        }
        Ok(())
    }

    fn delta(shift: &ShiftVector, column: &str) -> Result<f64> {
        shift
            .get(column)
            .ok_or_else(|| Error::MissingColumn(column.to_string()))
    }

    /// Integer points of a shift.
    pub fn score(&self, shift: &ShiftVector) -> Result<i64> {
        self.terms.iter().try_fold(0i64, |acc, t| {
            Ok(acc + t.coef * round_points(Self::delta(shift, &t.column)?, t.unit_scale))
        })
    }

    /// Score without per-term rounding.
    pub fn exact_score(&self, shift: &ShiftVector) -> Result<f64> {
        self.terms.iter().try_fold(0.0, |acc, t| {
            Ok(acc + t.coef as f64 * Self::delta(shift, &t.column)? / t.unit_scale)
        })
    }

    pub fn warns(&self, shift: &ShiftVector) -> Result<bool> {
        Ok(self.score(shift)? < self.threshold)
    }

    pub fn l0(&self) -> usize {
        self.terms.len()
    }

    pub fn l1(&self) -> i64 {
        self.terms.iter().map(|t| t.coef.abs()).sum()
    }

    /// Fitting objective of this card on `data`.
    pub fn objective(&self, data: &WarningTrainingSet, config: &SlimConfig) -> Result<f64> {
        let errors = self.errors(data)?;
        Ok(errors as f64 / data.len().max(1) as f64
            + config.c * self.l0() as f64
            + config.epsilon * self.l1() as f64)
    }

    fn errors(&self, data: &WarningTrainingSet) -> Result<usize> {
        let mut errors = 0;
        for i in 0..data.len() {
            if self.warns(&data.shift(i))? != data.unfair[i] {
                errors += 1;
            }
        }
        Ok(errors)
    }

    /// Accuracy, TPR (unfair rows warned) and TNR (fair rows not warned).
    pub fn evaluate(&self, data: &WarningTrainingSet) -> Result<WarningQuality> {
        let (mut tp, mut tn, mut pos, mut neg) = (0usize, 0usize, 0usize, 0usize);
        for i in 0..data.len() {
            let w = self.warns(&data.shift(i))?;
            if data.unfair[i] {
                pos += 1;
                tp += usize::from(w);
            } else {
                neg += 1;
                tn += usize::from(!w);
            }
        }
        if data.is_empty() {
            return Err(Error::Empty);
        }
        let frac = |a: usize, b: usize| (b > 0).then(|| a as f64 / b as f64);
        Ok(WarningQuality {
            accuracy: (tp + tn) as f64 / data.len() as f64,
            tpr: frac(tp, pos),
            tnr: frac(tn, neg),
        })
    }

    /// Stores held-out quality in the metadata.
    pub fn record_quality(&mut self, q: &WarningQuality) {
        self.metadata.warning_accuracy = Some(q.accuracy);
        self.metadata.tpr = q.tpr;
        self.metadata.tnr = q.tnr;
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let card: Scorecard = serde_json::from_str(text)?;
        card.validate()?;
        Ok(card)
    }

    /// Points table: header, one row per term ordered by |coef|·σ, footer.
    pub fn render(&self) -> String {
        let title = self
            .metadata
            .notion
            .as_deref()
            .unwrap_or("unfairness")
            .replace('_', " ")
            .to_uppercase();
        let mut out = format!("Predict UNFAIR {title} if SCORE < {}\n", self.threshold);
        let mut terms: Vec<&ScoreTerm> = self.terms.iter().collect();
        terms.sort_by(|a, b| {
            let wa = a.coef.abs() as f64 * a.column_std;
            let wb = b.coef.abs() as f64 * b.column_std;
            wb.total_cmp(&wa).then_with(|| a.column.cmp(&b.column))
        });
        if !terms.is_empty() {
            let width = terms.iter().map(|t| t.column.len()).max().unwrap_or(0).max(7);
            out.push_str(&format!("{:<width$}  {:>10}  {}\n", "feature", "mean", "points"));
            for t in terms {
                out.push_str(&format!(
                    "{:<width$}  {:>10}  {:+} per {} unit{}\n",
                    t.column,
                    format!("{:.3}", t.column_mean),
                    t.coef,
                    t.unit_scale,
                    if t.unit_scale == 1.0 { "" } else { "s" }
                ));
            }
            out.push_str("ADD POINTS FROM ROWS FOR EACH SHIFT\n");
        }
        let pct = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |v| format!("{:.1}%", 100.0 * v));
        out.push_str(&format!(
            "Warning accuracy: {}  TPR: {}  TNR: {}\n",
            pct(self.metadata.warning_accuracy),
            pct(self.metadata.tpr),
            pct(self.metadata.tnr)
        ));
        out
    }
}

/// Per-column unit: the coarsest of 1, 0.1, 0.01 not exceeding half the
/// spread of the observed deltas.
pub fn choose_unit_scale(deltas: impl Iterator<Item = f64> + Clone) -> f64 {
    let (_, sd) = crate::data::mean_std(deltas);
    UNIT_SCALES
        .iter()
        .copied()
        .find(|&u| u <= sd / 2.0)
        .unwrap_or(UNIT_SCALES[UNIT_SCALES.len() - 1])
}

/// Integer design matrix of a warning set under the given unit scales.
pub fn integer_problem(data: &WarningTrainingSet, units: &[f64]) -> IntegerProblem {
    let rows = data
        .deltas
        .iter()
        .map(|r| r.iter().zip(units).map(|(&d, &u)| round_points(d, u)).collect())
        .collect();
    IntegerProblem::new(rows, data.unfair.clone())
}

/// Fits a card to a warning set.
pub fn fit(data: &WarningTrainingSet, config: &SlimConfig, seed: u64) -> Result<Scorecard> {
    config.validate()?;
    data.require_both_outcomes()?;
    if data.len() < 10 {
        return Err(Error::Config(format!("need ≥ 10 warning rows, got {}", data.len())));
    }
    let units: Vec<f64> = (0..data.columns.len())
        .map(|j| choose_unit_scale(data.deltas.iter().map(move |r| r[j])))
        .collect();
    let problem = integer_problem(data, &units);
    let solver = solvers().get(&config.solver)?;
    let sol = solver.solve(&problem, config, seed)?;
    let terms = sol
        .coefs
        .iter()
        .enumerate()
        .filter(|(_, &c)| c != 0)
        .map(|(j, &c)| ScoreTerm {
            column: data.columns[j].name.clone(),
            coef: c,
            unit_scale: units[j],
            column_mean: data.columns[j].mean,
            column_std: data.columns[j].std_dev,
        })
        .collect();
    let mut card = Scorecard::new(terms, sol.threshold)?;
    card.metadata.objective = Some(sol.objective);
    card.metadata.solver = Some(sol.solver.to_string());
    Ok(card)
}
