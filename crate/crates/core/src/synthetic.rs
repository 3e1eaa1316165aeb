//! Two-Gaussian synthetic task family with a rotation-controlled sensitive
//! attribute.
//!
//! Distribution (1) is N([2,2], [[5,1],[1,5]]) and distribution (2) is
//! N([-2,-2], [[10,1],[1,3]]). Training tasks label points by a line through
//! the origin; the biased fine-tuning task labels points by which
//! distribution produced them. `phi` is an angle in radians.

use ndarray::Array2;
use rand::{Rng, RngCore};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{ColumnKind, Dataset};
use crate::error::{Error, Result};
use crate::seed;

pub const PHI_CHOICES: [f64; 4] = [2.0, 4.0, 8.0, 16.0];
pub const SLOPE_RANGE: (f64, f64) = (-5.0, 5.0);
pub const BIASED_PHI: f64 = 4.0;
pub const BIASED_SUPPORT_SIZE: usize = 5;
const MAX_REJECTION_ATTEMPTS: usize = 1_000_000;

/// A bivariate normal with a precomputed Cholesky factor and inverse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gaussian2 {
    pub mean: [f64; 2],
    pub cov: [[f64; 2]; 2],
}

pub const DIST_POSITIVE: Gaussian2 = Gaussian2 {
    mean: [2.0, 2.0],
    cov: [[5.0, 1.0], [1.0, 5.0]],
};

pub const DIST_NEGATIVE: Gaussian2 = Gaussian2 {
    mean: [-2.0, -2.0],
    cov: [[10.0, 1.0], [1.0, 3.0]],
};

impl Gaussian2 {
    pub fn density(&self, x: [f64; 2]) -> f64 {
        let [[a, b], [_, d]] = self.cov;
        let det = a * d - b * b;
        let dx = [x[0] - self.mean[0], x[1] - self.mean[1]];
        // (dx)^T Σ^{-1} (dx) with Σ^{-1} = [[d, -b], [-b, a]] / det
        let q = (d * dx[0] * dx[0] - 2.0 * b * dx[0] * dx[1] + a * dx[1] * dx[1]) / det;
        (-0.5 * q).exp() / (2.0 * std::f64::consts::PI * det.sqrt())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> [f64; 2] {
        let [[a, b], [_, d]] = self.cov;
        let l11 = a.sqrt();
        let l21 = b / l11;
        let l22 = (d - l21 * l21).sqrt();
        let z1: f64 = StandardNormal.sample(rng);
        let z2: f64 = StandardNormal.sample(rng);
        [self.mean[0] + l11 * z1, self.mean[1] + l21 * z1 + l22 * z2]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTaskSpec {
    pub slope: f64,
    pub phi: f64,
    pub seed: u64,
}

impl SyntheticTaskSpec {
    pub fn validate(&self) -> Result<()> {
        if !(SLOPE_RANGE.0..=SLOPE_RANGE.1).contains(&self.slope) {
            return Err(Error::Config(format!("slope {} outside [-5, 5]", self.slope)));
        }
        if !PHI_CHOICES.contains(&self.phi) {
            return Err(Error::Config(format!("phi {} not in {{2, 4, 8, 16}}", self.phi)));
        }
        Ok(())
    }

    /// Label rule: 1 iff the point lies strictly above the line.
    pub fn label(&self, x: [f64; 2]) -> u8 {
        u8::from(x[1] > self.slope * x[0])
    }
}

pub fn sample_task_spec(seed: u64) -> SyntheticTaskSpec {
    let mut rng = seed::rng_for(seed, 0x5350_4543);
    let slope = rng.random_range(SLOPE_RANGE.0..=SLOPE_RANGE.1);
    let phi = PHI_CHOICES[rng.random_range(0..PHI_CHOICES.len())];
    SyntheticTaskSpec { slope, phi, seed }
}

/// Rotates `x` by `phi`: x' = [[cos φ, −sin φ], [sin φ, cos φ]] x.
pub fn rotate(x: [f64; 2], phi: f64) -> [f64; 2] {
    let (s, c) = phi.sin_cos();
    [c * x[0] - s * x[1], s * x[0] + c * x[1]]
}

/// P(a = 0 | x) = p(x'|y=1) / (p(x'|y=1) + p(x'|y=0)), x' = rotate(x, φ).
/// Returns 0.5 (and logs a warning) when both densities underflow.
pub fn protected_probability(x: [f64; 2], phi: f64) -> f64 {
    let xr = rotate(x, phi);
    let p1 = DIST_POSITIVE.density(xr);
    let p0 = DIST_NEGATIVE.density(xr);
    if p1 + p0 == 0.0 {
        log::warn!("both class densities underflow at {x:?}; using P(a=0)=0.5");
        return 0.5;
    }
    p1 / (p1 + p0)
}

/// Sensitive values from per-row uniform draws `u`: a = 0 iff u < P(a=0|x).
pub fn sensitive_from_uniforms(points: &[[f64; 2]], uniforms: &[f64], phi: f64) -> Vec<u8> {
    points
        .iter()
        .zip(uniforms)
        .map(|(&x, &u)| u8::from(u >= protected_probability(x, phi)))
        .collect()
}

/// Draws a sensitive attribute for every point. The labels are accepted for
/// interface symmetry; the rule depends on the point and `phi` only.
pub fn assign_sensitive<R: RngCore + ?Sized>(
    points: &[[f64; 2]],
    _labels: &[u8],
    phi: f64,
    rng: &mut R,
) -> Result<Vec<u8>> {
    if !(phi > 0.0) {
        return Err(Error::Config(format!("phi must be positive, got {phi}")));
    }
    let uniforms: Vec<f64> = (0..points.len()).map(|_| rng.random::<f64>()).collect();
    Ok(sensitive_from_uniforms(points, &uniforms, phi))
}

fn to_dataset(points: &[[f64; 2]], labels: Vec<u8>, sensitive: Vec<u8>) -> Result<Dataset> {
    let n = points.len();
    let flat: Vec<f64> = points.iter().flat_map(|p| p.iter().copied()).collect();
    let features = Array2::from_shape_vec((n, 2), flat).map_err(|e| Error::Shape(e.to_string()))?;
    Dataset::with_kinds(
        features,
        labels,
        sensitive,
        vec!["x1".into(), "x2".into()],
        vec![ColumnKind::Numeric; 2],
    )
}

/// Draws `n` points from the equal mixture of both distributions.
pub fn sample_mixture<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<[f64; 2]> {
    (0..n)
        .map(|_| {
            if rng.random::<bool>() {
                DIST_POSITIVE.sample(rng)
            } else {
                DIST_NEGATIVE.sample(rng)
            }
        })
        .collect()
}

/// A training task: mixture points labelled by the task's line.
pub fn sample_training_points(spec: &SyntheticTaskSpec, n: usize) -> Result<Dataset> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::Empty);
    }
    let mut rng = seed::rng_for(spec.seed, 0x504F_494E);
    let points = sample_mixture(n, &mut rng);
    let labels: Vec<u8> = points.iter().map(|&x| spec.label(x)).collect();
    let sensitive = assign_sensitive(&points, &labels, spec.phi, &mut rng)?;
    to_dataset(&points, labels, sensitive)
}

/// Support and evaluation sets of the biased fine-tuning task.
#[derive(Debug, Clone, PartialEq)]
pub struct BiasedFinetuneSet {
    /// Five protected, positive-outcome points from distribution (1).
    pub support: Dataset,
    /// Points from both distributions, labelled 1 iff from distribution (1).
    pub evaluation: Dataset,
}

pub fn make_biased_finetune_set(seed: u64, eval_size: usize) -> Result<BiasedFinetuneSet> {
    if eval_size == 0 {
        return Err(Error::Empty);
    }
    let mut rng = seed::rng_for(seed, 0x4249_4153);
    let mut support = Vec::with_capacity(BIASED_SUPPORT_SIZE);
    let mut attempts = 0usize;
    while support.len() < BIASED_SUPPORT_SIZE {
        if attempts >= MAX_REJECTION_ATTEMPTS {
            return Err(Error::AttemptCap(format!(
                "rejection sampling of protected positives exceeded {MAX_REJECTION_ATTEMPTS} attempts"
            )));
        }
        attempts += 1;
        let x = DIST_POSITIVE.sample(&mut rng);
        if rng.random::<f64>() < protected_probability(x, BIASED_PHI) {
            support.push(x);
        }
    }
    let support = to_dataset(
        &support,
        vec![1; BIASED_SUPPORT_SIZE],
        vec![0; BIASED_SUPPORT_SIZE],
    )?;

    let mut rng = seed::rng_for(seed, 0x4556_414C);
    let mut points = Vec::with_capacity(eval_size);
    let mut labels = Vec::with_capacity(eval_size);
    for _ in 0..eval_size {
        let positive = rng.random::<bool>();
        let dist = if positive { DIST_POSITIVE } else { DIST_NEGATIVE };
        points.push(dist.sample(&mut rng));
        labels.push(u8::from(positive));
    }
    let sensitive = assign_sensitive(&points, &labels, BIASED_PHI, &mut rng)?;
    let evaluation = to_dataset(&points, labels, sensitive)?;
    Ok(BiasedFinetuneSet {
        support,
        evaluation,
    })
}
