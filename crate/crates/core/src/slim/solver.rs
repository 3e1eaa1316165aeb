//! Integer solvers for the scorecard objective.

use std::cmp::Ordering;
use std::sync::OnceLock;

use rand::Rng;
use rayon::prelude::*;

use super::SlimConfig;
use crate::error::{Error, Result};
use crate::registry::Registry;
use crate::seed;

pub const SOLVER_EXHAUSTIVE: &str = "exhaustive";
pub const SOLVER_HEURISTIC: &str = "heuristic";
pub const SOLVER_AUTO: &str = "auto";

/// Largest instance the exhaustive solver accepts.
pub const EXHAUSTIVE_MAX_COLUMNS: usize = 3;
pub const EXHAUSTIVE_MAX_BOUND: i64 = 10;

const FIT_ITERATIONS: usize = 600;
const FIT_L1: f64 = 1e-3;
const RANDOM_STARTS: usize = 8;
const MAX_SEARCH_ROUNDS: usize = 200;

/// Integer-valued design matrix with warning targets (true = unfair).
#[derive(Debug, Clone, PartialEq)]
pub struct IntegerProblem {
    rows: Vec<Vec<i64>>,
    unfair: Vec<bool>,
    width: usize,
}

impl IntegerProblem {
    pub fn new(rows: Vec<Vec<i64>>, unfair: Vec<bool>) -> Self {
        let width = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == width), "ragged integer problem");
        assert_eq!(rows.len(), unfair.len());
        IntegerProblem { rows, unfair, width }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn scores(&self, coefs: &[i64]) -> Vec<i64> {
        self.rows
            .iter()
            .map(|r| r.iter().zip(coefs).map(|(z, c)| z * c).sum())
            .collect()
    }

    /// Columns that are not constant zero.
    fn informative(&self) -> Vec<usize> {
        (0..self.width)
            .filter(|&j| self.rows.iter().any(|r| r[j] != 0))
            .collect()
    }

    /// Objective of a fixed (coefs, threshold).
    pub fn objective(&self, coefs: &[i64], threshold: i64, config: &SlimConfig) -> f64 {
        let errors = self
            .scores(coefs)
            .iter()
            .zip(&self.unfair)
            .filter(|(&s, &u)| (s < threshold) != u)
            .count();
        penalized(errors, self.len(), coefs, config)
    }
}

fn penalized(errors: usize, n: usize, coefs: &[i64], config: &SlimConfig) -> f64 {
    let l0 = coefs.iter().filter(|&&c| c != 0).count();
    let l1: i64 = coefs.iter().map(|c| c.abs()).sum();
    errors as f64 / n.max(1) as f64 + config.c * l0 as f64 + config.epsilon * l1 as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub coefs: Vec<i64>,
    pub threshold: i64,
    pub errors: usize,
    pub objective: f64,
    pub solver: &'static str,
}

impl Solution {
    fn l0(&self) -> usize {
        self.coefs.iter().filter(|&&c| c != 0).count()
    }

    fn l1(&self) -> i64 {
        self.coefs.iter().map(|c| c.abs()).sum()
    }

    /// Total order: objective, ℓ0, ℓ1, coefficients, |threshold|, threshold.
    fn rank(&self, other: &Self) -> Ordering {
        self.objective
            .total_cmp(&other.objective)
            .then(self.l0().cmp(&other.l0()))
            .then(self.l1().cmp(&other.l1()))
            .then_with(|| self.coefs.cmp(&other.coefs))
            .then(self.threshold.abs().cmp(&other.threshold.abs()))
            .then(self.threshold.cmp(&other.threshold))
    }
}

fn pick(a: Solution, b: Solution) -> Solution {
    if b.rank(&a) == Ordering::Less {
        b
    } else {
        a
    }
}

/// Best threshold in [−bound, bound] for fixed scores: fewest errors, then
/// smallest |t|, then smallest t. Returns (threshold, errors).
pub(crate) fn best_threshold(scores: &[i64], unfair: &[bool], bound: i64) -> (i64, usize) {
    let mut pairs: Vec<(i64, bool)> = scores.iter().copied().zip(unfair.iter().copied()).collect();
    pairs.sort_unstable();
    let total_unfair = unfair.iter().filter(|&&u| u).count();
    // errors for t in an interval where `fair_below` fair rows and
    // `unfair_below` unfair rows score below t
    let mut best: Option<(usize, i64)> = None;
    let mut consider = |lo: i64, hi: i64, errors: usize| {
        let (lo, hi) = (lo.max(-bound), hi.min(bound));
        if lo > hi {
            return;
        }
        let t = 0i64.clamp(lo, hi);
        let better = match best {
            None => true,
            Some((e, bt)) => {
                errors < e || (errors == e && (t.abs(), t) < (bt.abs(), bt))
            }
        };
        if better {
            best = Some((errors, t));
        }
    };
    let (mut fair_below, mut unfair_below) = (0usize, 0usize);
    let mut lo = i64::MIN;
    let mut i = 0;
    while i < pairs.len() {
        let v = pairs[i].0;
        // t ∈ [lo, v]: rows with score ≥ v are not below t
        consider(lo, v, fair_below + (total_unfair - unfair_below));
        while i < pairs.len() && pairs[i].0 == v {
            if pairs[i].1 {
                unfair_below += 1;
            } else {
                fair_below += 1;
            }
            i += 1;
        }
        lo = v.saturating_add(1);
    }
    consider(lo, i64::MAX, fair_below + (total_unfair - unfair_below));
    let (errors, t) = best.expect("the interval family covers [−bound, bound]");
    (t, errors)
}

fn evaluate(p: &IntegerProblem, coefs: Vec<i64>, config: &SlimConfig, solver: &'static str) -> Solution {
    let scores = p.scores(&coefs);
    solution_from_scores(p, coefs, &scores, config, solver)
}

fn solution_from_scores(
    p: &IntegerProblem,
    coefs: Vec<i64>,
    scores: &[i64],
    config: &SlimConfig,
    solver: &'static str,
) -> Solution {
    let (threshold, errors) = best_threshold(scores, &p.unfair, config.intercept_bound);
    let objective = penalized(errors, p.len(), &coefs, config);
    Solution {
        coefs,
        threshold,
        errors,
        objective,
        solver,
    }
}

pub trait Solver: Sync {
    fn name(&self) -> &'static str;
    fn solve(&self, problem: &IntegerProblem, config: &SlimConfig, seed: u64) -> Result<Solution>;
}

fn check(problem: &IntegerProblem) -> Result<()> {
    let unfair = problem.unfair.iter().filter(|&&u| u).count();
    if unfair == 0 {
        return Err(Error::SingleOutcome("fair"));
    }
    if unfair == problem.len() {
        return Err(Error::SingleOutcome("unfair"));
    }
    if problem.width() == 0 {
        return Err(Error::NoFeatures);
    }
    Ok(())
}

/// Enumerates every coefficient vector in [−bound, bound]^d.
pub struct Exhaustive;

impl Solver for Exhaustive {
    fn name(&self) -> &'static str {
        SOLVER_EXHAUSTIVE
    }

    fn solve(&self, problem: &IntegerProblem, config: &SlimConfig, _seed: u64) -> Result<Solution> {
        check(problem)?;
        let d = problem.width();
        let b = config.coeff_bound;
        if d > EXHAUSTIVE_MAX_COLUMNS || b > EXHAUSTIVE_MAX_BOUND {
            return Err(Error::Config(format!(
                "exhaustive search limited to {EXHAUSTIVE_MAX_COLUMNS} columns and bound {EXHAUSTIVE_MAX_BOUND}, got {d} and {b}"
            )));
        }
        let side = (2 * b + 1) as usize;
        let total = side.pow(d as u32);
        let decode = |mut k: usize| -> Vec<i64> {
            let mut c = vec![0i64; d];
            for slot in c.iter_mut().rev() {
                *slot = (k % side) as i64 - b;
                k /= side;
            }
            c
        };
        let best = (0..total)
            .into_par_iter()
            .map(|k| evaluate(problem, decode(k), config, SOLVER_EXHAUSTIVE))
            .reduce_with(pick)
            .expect("at least one candidate");
        Ok(best)
    }
}

/// Real-valued fit, screening, scaled rounding and coordinate search.
pub struct Heuristic;

/// L1-penalized hinge-loss separator on standardized columns, fitted by
/// averaged subgradient descent. Returns weights per original integer unit.
fn linear_direction(p: &IntegerProblem, cols: &[usize]) -> Vec<f64> {
    let n = p.len() as f64;
    let scale: Vec<f64> = cols
        .iter()
        .map(|&j| {
            let (_, sd) = crate::data::mean_std(p.rows.iter().map(|r| r[j] as f64));
            if sd > 0.0 {
                sd
            } else {
                1.0
            }
        })
        .collect();
    let x: Vec<Vec<f64>> = p
        .rows
        .iter()
        .map(|r| cols.iter().zip(&scale).map(|(&j, s)| r[j] as f64 / s).collect())
        .collect();
    // +1 = fair (score at or above threshold), −1 = unfair
    let y: Vec<f64> = p.unfair.iter().map(|&u| if u { -1.0 } else { 1.0 }).collect();
    let k = cols.len();
    let (mut w, mut b) = (vec![0.0; k], 0.0);
    let (mut w_avg, mut count) = (vec![0.0; k], 0.0);
    for t in 0..FIT_ITERATIONS {
        let mut gw = vec![0.0; k];
        let mut gb = 0.0;
        for (xi, &yi) in x.iter().zip(&y) {
            let f: f64 = xi.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() - b;
            if yi * f < 1.0 {
                for (g, a) in gw.iter_mut().zip(xi) {
                    *g -= yi * a / n;
                }
                gb += yi / n;
            }
        }
        for (g, wj) in gw.iter_mut().zip(&w) {
            *g += FIT_L1 * wj.signum();
        }
        let eta = 0.5 / ((t + 1) as f64).sqrt();
        for (wj, g) in w.iter_mut().zip(&gw) {
            *wj -= eta * g;
        }
        b -= eta * gb;
        if t >= FIT_ITERATIONS / 2 {
            for (a, wj) in w_avg.iter_mut().zip(&w) {
                *a += wj;
            }
            count += 1.0;
        }
    }
    w_avg.iter().zip(&scale).map(|(a, s)| a / count / s).collect()
}

/// Greedy coordinate search: repeatedly applies the best single-coordinate
/// change (any value in the bound) over `cols` until none improves.
fn coordinate_search(p: &IntegerProblem, start: Solution, cols: &[usize], config: &SlimConfig) -> Solution {
    let b = config.coeff_bound;
    let mut cur = start;
    let mut scores = p.scores(&cur.coefs);
    for _ in 0..MAX_SEARCH_ROUNDS {
        let mut best: Option<(Solution, Vec<i64>)> = None;
        for &j in cols {
            let old = cur.coefs[j];
            for v in -b..=b {
                if v == old {
                    continue;
                }
                let step = v - old;
                let cand_scores: Vec<i64> = scores
                    .iter()
                    .zip(&p.rows)
                    .map(|(s, r)| s + step * r[j])
                    .collect();
                let mut coefs = cur.coefs.clone();
                coefs[j] = v;
                let cand = solution_from_scores(p, coefs, &cand_scores, config, SOLVER_HEURISTIC);
                let improves = match &best {
                    None => cand.rank(&cur) == Ordering::Less,
                    Some((bs, _)) => cand.rank(bs) == Ordering::Less,
                };
                if improves {
                    best = Some((cand, cand_scores));
                }
            }
        }
        match best {
            Some((s, sc)) => {
                cur = s;
                scores = sc;
            }
            None => break,
        }
    }
    cur
}

impl Solver for Heuristic {
    fn name(&self) -> &'static str {
        SOLVER_HEURISTIC
    }

    fn solve(&self, problem: &IntegerProblem, config: &SlimConfig, seed: u64) -> Result<Solution> {
        check(problem)?;
        let d = problem.width();
        let b = config.coeff_bound;
        let informative = problem.informative();
        let direction = linear_direction(problem, &informative);

        // screen by |weight| · σ, i.e. the weight on the standardized column
        let mut ranked: Vec<(usize, f64, f64)> = informative
            .iter()
            .zip(&direction)
            .map(|(&j, &w)| {
                let (_, sd) = crate::data::mean_std(problem.rows.iter().map(|r| r[j] as f64));
                (j, w, w.abs() * sd)
            })
            .filter(|&(_, w, _)| w != 0.0)
            .collect();
        ranked.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)));
        ranked.truncate(config.screen_top);
        if ranked.is_empty() {
            return Err(Error::NoFeatures);
        }
        let mut screened: Vec<usize> = ranked.iter().map(|r| r.0).collect();
        screened.sort_unstable();

        // scaled roundings of the real-valued direction
        let max_w = ranked.iter().map(|r| r.1.abs()).fold(0.0, f64::max);
        let mut best = evaluate(problem, vec![0; d], config, SOLVER_HEURISTIC);
        for k in 1..=b {
            let mut coefs = vec![0i64; d];
            for &(j, w, _) in &ranked {
                coefs[j] = ((k as f64 * w / max_w).round() as i64).clamp(-b, b);
            }
            best = pick(best, evaluate(problem, coefs, config, SOLVER_HEURISTIC));
        }

        let mut starts = vec![best];
        let mut rng = seed::rng(seed);
        for _ in 0..RANDOM_STARTS {
            let mut coefs = vec![0i64; d];
            for &j in &screened {
                coefs[j] = rng.random_range(-b..=b);
            }
            starts.push(evaluate(problem, coefs, config, SOLVER_HEURISTIC));
        }
        let searched = starts
            .into_par_iter()
            .map(|s| coordinate_search(problem, s, &screened, config))
            .reduce_with(pick)
            .expect("at least one start");
        // final polish over every column so no single change helps
        let all: Vec<usize> = (0..d).collect();
        Ok(coordinate_search(problem, searched, &all, config))
    }
}

pub struct Auto;

impl Solver for Auto {
    fn name(&self) -> &'static str {
        SOLVER_AUTO
    }

    fn solve(&self, problem: &IntegerProblem, config: &SlimConfig, seed: u64) -> Result<Solution> {
        if problem.width() <= EXHAUSTIVE_MAX_COLUMNS && config.coeff_bound <= EXHAUSTIVE_MAX_BOUND {
            Exhaustive.solve(problem, config, seed)
        } else {
            Heuristic.solve(problem, config, seed)
        }
    }
}

pub fn solvers() -> &'static Registry<dyn Solver> {
    static REG: OnceLock<Registry<dyn Solver>> = OnceLock::new();
    REG.get_or_init(|| {
        Registry::<dyn Solver>::new("scorecard solver")
            .with(SOLVER_AUTO, &Auto)
            .with(SOLVER_EXHAUSTIVE, &Exhaustive)
            .with(SOLVER_HEURISTIC, &Heuristic)
    })
}
