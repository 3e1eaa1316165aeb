use serde::{Deserialize, Serialize};

use super::ParamSet;
use crate::error::{Error, Result};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

fn check_finite(gradient: &[f64]) -> Result<()> {
    match gradient.iter().position(|g| !g.is_finite()) {
        Some(i) => Err(Error::NonFiniteGradient(i)),
        None => Ok(()),
    }
}

/// Adam moment estimates; owned by a single training loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        AdamState {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }
}

/// One bias-corrected Adam update, in place.
pub fn adam_step(
    state: &mut AdamState,
    params: &mut ParamSet,
    gradient: &[f64],
    learning_rate: f64,
) -> Result<()> {
    if gradient.len() != params.len() || state.m.len() != params.len() {
        return Err(Error::Shape(format!(
            "gradient {} / state {} / params {}",
            gradient.len(),
            state.m.len(),
            params.len()
        )));
    }
    check_finite(gradient)?;
    state.t += 1;
    let bc1 = 1.0 - ADAM_BETA1.powi(state.t as i32);
    let bc2 = 1.0 - ADAM_BETA2.powi(state.t as i32);
    for (((p, &g), m), v) in params
        .values_mut()
        .iter_mut()
        .zip(gradient)
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
        *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *p -= learning_rate * m_hat / (v_hat.sqrt() + ADAM_EPS);
    }
    Ok(())
}

/// Plain gradient descent: θ − lr·g.
pub fn sgd_step(params: &ParamSet, gradient: &[f64], learning_rate: f64) -> Result<ParamSet> {
    if gradient.len() != params.len() {
        return Err(Error::Shape(format!(
            "gradient {} / params {}",
            gradient.len(),
            params.len()
        )));
    }
    check_finite(gradient)?;
    let values = params
        .values()
        .iter()
        .zip(gradient)
        .map(|(p, g)| p - learning_rate * g)
        .collect();
    params.with_values(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{init_mlp, mlp_shapes};

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut p = init_mlp(&mlp_shapes(2, &[3]), 1).unwrap();
        let orig = p.clone();
        let mut s = AdamState::new(p.len());
        let zeros = vec![0.0; p.len()];
        for _ in 0..50 {
            adam_step(&mut s, &mut p, &zeros, 0.1).unwrap();
        }
        assert_eq!(p, orig);
    }

    /// Independent scalar Adam written directly from the update equations.
    fn reference_adam(theta: f64, grads: &[f64], lr: f64) -> f64 {
        let (mut th, mut m, mut v) = (theta, 0.0f64, 0.0f64);
        for (t, &g) in grads.iter().enumerate() {
            let t = (t + 1) as i32;
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            th -= lr * (m / (1.0 - 0.9f64.powi(t))) / ((v / (1.0 - 0.999f64.powi(t))).sqrt() + 1e-8);
        }
        th
    }

    #[test]
    fn matches_scalar_reference() {
        let mut p = init_mlp(&mlp_shapes(1, &[1]), 2).unwrap();
        let start = p.values().to_vec();
        let mut s = AdamState::new(p.len());
        let seq: Vec<Vec<f64>> = (0..5)
            .map(|k| (0..p.len()).map(|i| ((i + 1) as f64 * 0.37 - k as f64 * 0.11).sin()).collect())
            .collect();
        for g in &seq {
            adam_step(&mut s, &mut p, g, 0.01).unwrap();
        }
        for i in 0..p.len() {
            let gi: Vec<f64> = seq.iter().map(|g| g[i]).collect();
            let expect = reference_adam(start[i], &gi, 0.01);
            assert!((p.values()[i] - expect).abs() < 1e-14);
        }
        // The first step moves each coordinate by about lr·sign(g).
        let mut p = init_mlp(&mlp_shapes(1, &[1]), 2).unwrap();
        let before = p.values().to_vec();
        let mut s = AdamState::new(p.len());
        adam_step(&mut s, &mut p, &seq[0], 0.01).unwrap();
        for i in 0..p.len() {
            let g = seq[0][i];
            let expect = -0.01 * g / (g.abs() + 1e-8);
            assert!((p.values()[i] - before[i] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn non_finite_gradient_named() {
        let mut p = init_mlp(&mlp_shapes(1, &[1]), 2).unwrap();
        let mut s = AdamState::new(p.len());
        let mut g = vec![0.0; p.len()];
        g[3] = f64::NAN;
        assert!(matches!(adam_step(&mut s, &mut p, &g, 0.1), Err(Error::NonFiniteGradient(3))));
        assert!(matches!(sgd_step(&p, &g, 0.1), Err(Error::NonFiniteGradient(3))));
    }
}
