//! Trainable setup-function families: feed-forward networks, a single
//! recurrent cell, and Gaussian processes.
//!
//! Models are immutable after construction or fit; evaluation is pure. Each
//! family serializes to structured text (JSON) with full-precision floats so
//! round trips are exact.

mod fnn;
mod gp;
mod rnn;

pub use fnn::{FnnGradient, FnnModel};
pub use gp::{gp_log_marginal_likelihood, kernel_se, GpModel};
pub use rnn::{RnnCell, RnnGradient};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numkit::NumError;

#[derive(Debug, Clone, Error)]
pub enum SurrogateError {
    #[error(transparent)]
    Num(#[from] NumError),
    #[error("non-finite value produced during evaluation")]
    NonFiniteState,
    #[error("dimension mismatch: {context}")]
    DimensionMismatch { context: String },
    #[error("at least one training sample required")]
    EmptyTrainingSet,
    #[error("serialization failed: {0}")]
    Serialization(String),
}

/// Elementwise activation functions available to network layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Relu,
    Linear,
    Sigmoid,
}

impl Activation {
    #[inline]
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Tanh => v.tanh(),
            Activation::Relu => v.max(0.0),
            Activation::Linear => v,
            Activation::Sigmoid => 1.0 / (1.0 + (-v).exp()),
        }
    }

    /// Derivative at pre-activation `v`.
    #[inline]
    pub fn derivative(self, v: f64) -> f64 {
        match self {
            Activation::Tanh => {
                let t = v.tanh();
                1.0 - t * t
            }
            Activation::Relu => {
                if v > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Linear => 1.0,
            Activation::Sigmoid => {
                let s = 1.0 / (1.0 + (-v).exp());
                s * (1.0 - s)
            }
        }
    }
}

/// Numerically stable normalized exponential.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let exps: Vec<f64> = logits.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|&e| e / sum).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_sums_to_one() {
        let p = softmax(&[1.0, 2.0, -3.0, 700.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn activation_derivatives_match_finite_differences() {
        let h = 1e-6;
        for act in [
            Activation::Tanh,
            Activation::Linear,
            Activation::Sigmoid,
            Activation::Relu,
        ] {
            for &v in &[-1.3, -0.2, 0.4, 2.0] {
                let fd = (act.apply(v + h) - act.apply(v - h)) / (2.0 * h);
                assert!((act.derivative(v) - fd).abs() < 1e-6, "{act:?} at {v}");
            }
        }
    }
}
