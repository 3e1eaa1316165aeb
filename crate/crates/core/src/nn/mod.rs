//! MLP classifier with softmax output, cross-entropy loss and the
//! demographic-parity / equal-opportunity regularizers, differentiable to
//! second order.

mod optim;
mod params;
pub mod tape;

use std::sync::OnceLock;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::registry::Registry;
use tape::{Tape, Var};

pub use optim::{adam_step, sgd_step, AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use params::{init_mlp, mlp_shapes, param_count, ParamSet, PARAMS_FORMAT, PARAMS_VERSION};

/// Probabilities are clamped to [PROB_FLOOR, 1 − PROB_FLOOR] before the log.
pub const PROB_FLOOR: f64 = 1e-12;

/// K labelled rows with their sensitive values.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub x: Array2<f64>,
    pub y: Vec<u8>,
    pub a: Vec<u8>,
}

impl Batch {
    pub fn new(x: Array2<f64>, y: Vec<u8>, a: Vec<u8>) -> Result<Self> {
        let b = Batch { x, y, a };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.x.nrows();
        if n == 0 {
            return Err(Error::Empty);
        }
        if self.y.len() != n || self.a.len() != n {
            return Err(Error::Shape(format!(
                "batch rows: x {n}, y {}, a {}",
                self.y.len(),
                self.a.len()
            )));
        }
        if self.y.iter().chain(&self.a).any(|&v| v > 1) {
            return Err(Error::InvalidDataset("batch labels/sensitive must be binary".into()));
        }
        Ok(())
    }

    pub fn from_dataset(ds: &Dataset) -> Self {
        Batch {
            x: ds.features().clone(),
            y: ds.labels().to_vec(),
            a: ds.sensitive().to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }

    pub fn select(&self, rows: &[usize]) -> Batch {
        Batch {
            x: self.x.select(Axis(0), rows),
            y: rows.iter().map(|&i| self.y[i]).collect(),
            a: rows.iter().map(|&i| self.a[i]).collect(),
        }
    }
}

/// A fairness regularizer of the form 1 − mean P(Ŷ=1) over a subgroup.
pub trait Regularizer: Sync {
    fn name(&self) -> &'static str;
    /// Whether a row with label `y` and sensitive value `a` is averaged.
    /// `None` means the regularizer is identically zero.
    fn includes(&self, y: u8, a: u8) -> Option<bool>;
}

pub struct NoRegularizer;
/// 1 − mean P(Ŷ=1) over protected rows.
pub struct DemographicParityReg;
/// 1 − mean P(Ŷ=1) over protected rows with a positive label.
pub struct EqualOpportunityReg;

impl Regularizer for NoRegularizer {
    fn name(&self) -> &'static str {
        "none"
    }
    fn includes(&self, _y: u8, _a: u8) -> Option<bool> {
        None
    }
}

impl Regularizer for DemographicParityReg {
    fn name(&self) -> &'static str {
        "dp"
    }
    fn includes(&self, _y: u8, a: u8) -> Option<bool> {
        Some(a == 0)
    }
}

impl Regularizer for EqualOpportunityReg {
    fn name(&self) -> &'static str {
        "eop"
    }
    fn includes(&self, y: u8, a: u8) -> Option<bool> {
        Some(a == 0 && y == 1)
    }
}

pub fn regularizers() -> &'static Registry<dyn Regularizer> {
    static REG: OnceLock<Registry<dyn Regularizer>> = OnceLock::new();
    REG.get_or_init(|| {
        Registry::<dyn Regularizer>::new("regularizer")
            .with("none", &NoRegularizer)
            .with("dp", &DemographicParityReg)
            .with("eop", &EqualOpportunityReg)
    })
}

/// Loss = cross-entropy + gamma · regularizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskLossSpec {
    #[serde(default = "default_regularizer")]
    pub regularizer: String,
    #[serde(default)]
    pub gamma: f64,
}

fn default_regularizer() -> String {
    "none".into()
}

impl Default for TaskLossSpec {
    fn default() -> Self {
        TaskLossSpec {
            regularizer: default_regularizer(),
            gamma: 0.0,
        }
    }
}

impl TaskLossSpec {
    pub fn new(regularizer: &str, gamma: f64) -> Result<Self> {
        let s = TaskLossSpec {
            regularizer: regularizer.into(),
            gamma,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        regularizers().get(&self.regularizer)?;
        if !self.gamma.is_finite() || self.gamma < 0.0 {
            return Err(Error::Config(format!("gamma must be finite and ≥ 0, got {}", self.gamma)));
        }
        Ok(())
    }

    /// Row weights (1/|subgroup| on subgroup rows) for the active
    /// regularizer; `Ok(None)` when the term is zero or the subgroup is empty.
    fn weights(&self, batch: &Batch) -> Result<(Option<Vec<f64>>, bool)> {
        let reg = regularizers().get(&self.regularizer)?;
        if self.gamma == 0.0 {
            return Ok((None, false));
        }
        let mask: Vec<bool> = match batch
            .y
            .iter()
            .zip(&batch.a)
            .map(|(&y, &a)| reg.includes(y, a))
            .collect::<Option<Vec<bool>>>()
        {
            Some(m) => m,
            None => return Ok((None, false)),
        };
        let count = mask.iter().filter(|&&m| m).count();
        if count == 0 {
            return Ok((None, true));
        }
        let w = mask
            .iter()
            .map(|&m| if m { 1.0 / count as f64 } else { 0.0 })
            .collect();
        Ok((Some(w), false))
    }
}

/// Value of the task loss and its parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaskLoss {
    pub total: f64,
    pub cross_entropy: f64,
    /// Regularizer value; `None` when inactive (gamma 0 or no regularizer)
    /// or when its subgroup is empty.
    pub regularizer: Option<f64>,
    /// Set when the regularizer's subgroup was absent from the batch.
    pub empty_subgroup: bool,
}

fn check_input(params: &ParamSet, x: &Array2<f64>) -> Result<()> {
    if x.ncols() != params.input_width() {
        return Err(Error::Shape(format!(
            "input width {} but the network expects {}",
            x.ncols(),
            params.input_width()
        )));
    }
    Ok(())
}

/// Class probabilities (rows sum to 1; column 1 is P(class 1)).
pub fn forward(params: &ParamSet, x: &Array2<f64>) -> Result<Array2<f64>> {
    check_input(params, x)?;
    let layers = params.layers();
    let last = layers.len() - 1;
    let mut h = x.to_owned();
    for (k, (w, b)) in layers.iter().enumerate() {
        h = h.dot(w) + b;
        if k < last {
            h.mapv_inplace(|v| if v > 0.0 { v } else { 0.0 });
        }
    }
    for mut row in h.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - max).exp());
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
    }
    Ok(h)
}

/// Hard predictions: 1 iff P(class 1) ≥ 0.5.
pub fn predict(params: &ParamSet, x: &Array2<f64>) -> Result<Vec<u8>> {
    let p = forward(params, x)?;
    Ok(p.column(1).iter().map(|&v| u8::from(v >= 0.5)).collect())
}

fn leaf_params(tape: &mut Tape, params: &ParamSet) -> Vec<Var> {
    params
        .layer_matrices()
        .into_iter()
        .flat_map(|(w, b)| [w, b])
        .map(|m| tape.param(m))
        .collect()
}

/// Records the loss graph for `layers` = [W0, b0, W1, b1, ...].
fn record_loss(
    tape: &mut Tape,
    layers: &[Var],
    batch: &Batch,
    spec: &TaskLossSpec,
) -> Result<(Var, Var, Option<Var>, bool)> {
    batch.validate()?;
    let n = batch.len();
    let x = tape.constant(batch.x.clone());
    let n_layers = layers.len() / 2;
    let mut h = x;
    for k in 0..n_layers {
        let z = tape.matmul(h, layers[2 * k]);
        let b = tape.broadcast_row(layers[2 * k + 1], n);
        h = tape.add(z, b);
        if k + 1 < n_layers {
            h = tape.relu(h);
        }
    }
    let probs = tape.softmax_rows(h);

    let mut onehot = Array2::zeros((n, 2));
    for (i, &y) in batch.y.iter().enumerate() {
        onehot[[i, y as usize]] = 1.0;
    }
    let onehot = tape.constant(onehot);
    let clamped = tape.clamp(probs, PROB_FLOOR, 1.0 - PROB_FLOOR);
    let picked = tape.mul(clamped, onehot);
    let picked = tape.sum_cols(picked);
    let logp = tape.log(picked);
    let total_logp = tape.sum_all(logp);
    let ce = tape.scale(total_logp, -1.0 / n as f64);

    let (weights, empty) = spec.weights(batch)?;
    let Some(weights) = weights else {
        return Ok((ce, ce, None, empty));
    };
    let e1 = tape.constant(ndarray::array![[0.0], [1.0]]);
    let p1 = tape.matmul(probs, e1);
    let w = tape.constant(Array2::from_shape_vec((1, n), weights).expect("weight row"));
    let mean_p1 = tape.matmul(w, p1);
    let one = tape.constant(Array2::ones((1, 1)));
    let reg = tape.sub(one, mean_p1);
    let weighted = tape.scale(reg, spec.gamma);
    let total = tape.add(ce, weighted);
    Ok((total, ce, Some(reg), false))
}

fn flatten(tape: &Tape, grads: &[Var]) -> Vec<f64> {
    grads
        .iter()
        .flat_map(|&g| tape.value(g).iter().copied().collect::<Vec<_>>())
        .collect()
}

fn loss_parts(tape: &Tape, total: Var, ce: Var, reg: Option<Var>, empty: bool) -> TaskLoss {
    TaskLoss {
        total: tape.scalar(total),
        cross_entropy: tape.scalar(ce),
        regularizer: reg.map(|r| tape.scalar(r)),
        empty_subgroup: empty,
    }
}

pub fn task_loss(params: &ParamSet, batch: &Batch, spec: &TaskLossSpec) -> Result<TaskLoss> {
    check_input(params, &batch.x)?;
    let mut tape = Tape::new();
    let layers = leaf_params(&mut tape, params);
    let (total, ce, reg, empty) = record_loss(&mut tape, &layers, batch, spec)?;
    Ok(loss_parts(&tape, total, ce, reg, empty))
}

/// Task loss and its exact gradient (same layout as the parameters).
pub fn loss_and_grad(
    params: &ParamSet,
    batch: &Batch,
    spec: &TaskLossSpec,
) -> Result<(TaskLoss, Vec<f64>)> {
    check_input(params, &batch.x)?;
    let mut tape = Tape::new();
    let layers = leaf_params(&mut tape, params);
    let (total, ce, reg, empty) = record_loss(&mut tape, &layers, batch, spec)?;
    let grads = tape.backward(total, &layers);
    Ok((loss_parts(&tape, total, ce, reg, empty), flatten(&tape, &grads)))
}

pub fn grad(params: &ParamSet, batch: &Batch, spec: &TaskLossSpec) -> Result<Vec<f64>> {
    loss_and_grad(params, batch, spec).map(|(_, g)| g)
}

/// One inner gradient-descent step: θ' = θ − α·∇L_support(θ).
pub fn adapt(params: &ParamSet, support: &Batch, spec: &TaskLossSpec, alpha: f64) -> Result<ParamSet> {
    let g = grad(params, support, spec)?;
    sgd_step(params, &g, alpha)
}

/// Gradient of the query loss at the adapted parameters with respect to the
/// pre-adaptation parameters, differentiating through the inner step
/// (including its Hessian term). With `first_order`, the Jacobian of the
/// inner step is replaced by the identity.
pub fn meta_grad(
    params: &ParamSet,
    support: &Batch,
    query: &Batch,
    spec: &TaskLossSpec,
    alpha: f64,
    first_order: bool,
) -> Result<(TaskLoss, Vec<f64>)> {
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(Error::Config(format!("alpha must be finite and ≥ 0, got {alpha}")));
    }
    check_input(params, &support.x)?;
    check_input(params, &query.x)?;
    if first_order {
        let adapted = adapt(params, support, spec, alpha)?;
        return loss_and_grad(&adapted, query, spec);
    }
    let mut tape = Tape::new();
    let layers = leaf_params(&mut tape, params);
    let (support_loss, ..) = record_loss(&mut tape, &layers, support, spec)?;
    let inner = tape.backward(support_loss, &layers);
    let adapted: Vec<Var> = layers
        .iter()
        .zip(&inner)
        .map(|(&p, &g)| {
            let step = tape.scale(g, alpha);
            tape.sub(p, step)
        })
        .collect();
    let (total, ce, reg, empty) = record_loss(&mut tape, &adapted, query, spec)?;
    let outer = tape.backward(total, &layers);
    Ok((loss_parts(&tape, total, ce, reg, empty), flatten(&tape, &outer)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn batch() -> Batch {
        Batch::new(
            array![[0.5, -1.0], [1.5, 0.3], [-0.7, 0.8], [0.2, 0.2], [-1.1, -0.4]],
            vec![1, 0, 1, 1, 0],
            vec![0, 0, 1, 0, 1],
        )
        .unwrap()
    }

    #[test]
    fn zero_params_give_half() {
        let p = ParamSet::zeros(mlp_shapes(2, &[4])).unwrap();
        let probs = forward(&p, &batch().x).unwrap();
        assert!(probs.iter().all(|&v| v == 0.5));
    }

    #[test]
    fn rows_sum_to_one() {
        let p = init_mlp(&mlp_shapes(2, &[4, 4]), 5).unwrap();
        let x = array![[100.0, -50.0], [0.0, 0.0], [3.0, 1e3]];
        for row in forward(&p, &x).unwrap().rows() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn common_logit_offset_is_invisible() {
        // Adding the same constant to both output biases shifts both logits.
        let p = init_mlp(&mlp_shapes(2, &[4]), 6).unwrap();
        let mut v = p.values().to_vec();
        let n = v.len();
        v[n - 1] += 3.0;
        v[n - 2] += 3.0;
        let q = p.with_values(v).unwrap();
        let a = forward(&p, &batch().x).unwrap();
        let b = forward(&q, &batch().x).unwrap();
        assert!((a - b).iter().all(|d| d.abs() < 1e-12));
    }

    #[test]
    fn shape_mismatch() {
        let p = init_mlp(&mlp_shapes(3, &[4]), 6).unwrap();
        assert!(matches!(forward(&p, &batch().x), Err(Error::Shape(_))));
    }

    #[test]
    fn gamma_zero_is_plain_cross_entropy() {
        let p = init_mlp(&mlp_shapes(2, &[4]), 7).unwrap();
        let plain = task_loss(&p, &batch(), &TaskLossSpec::default()).unwrap();
        let dp0 = task_loss(&p, &batch(), &TaskLossSpec::new("dp", 0.0).unwrap()).unwrap();
        assert_eq!(plain.total, dp0.total);
        assert_eq!(plain.total, plain.cross_entropy);
    }

    #[test]
    fn empty_subgroup_flags_and_contributes_zero() {
        let p = init_mlp(&mlp_shapes(2, &[4]), 7).unwrap();
        let mut b = batch();
        b.a = vec![1; 5];
        let l = task_loss(&p, &b, &TaskLossSpec::new("dp", 2.0).unwrap()).unwrap();
        assert!(l.empty_subgroup);
        assert_eq!(l.regularizer, None);
        assert_eq!(l.total, l.cross_entropy);
    }

    #[test]
    fn unknown_regularizer_and_negative_gamma() {
        assert!(TaskLossSpec::new("xyz", 1.0).is_err());
        assert!(TaskLossSpec::new("dp", -1.0).is_err());
    }
}
