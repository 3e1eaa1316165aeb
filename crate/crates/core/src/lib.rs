//! Fair few-shot learning and fairness warnings.
//!
//! * [`nn`]: MLP, losses, fairness regularizers and second-order autodiff.
//! * [`fairmaml`]: meta-training, pre-trained baseline, fine-tuning, sweeps.
//! * [`shiftwarn`] and [`slim`]: mean-shift perturbations, the fairness
//!   oracle loop and sparse integer scorecards predicting unfairness.
//! * [`data`], [`synthetic`]: dataset recipes and the synthetic task family.

pub mod data;
pub mod error;
pub mod fairmaml;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod registry;
pub mod seed;
pub mod shiftwarn;
pub mod slim;
pub mod synthetic;

pub use error::{Error, Result};
