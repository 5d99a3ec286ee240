//! Numerical substrate: dense linear algebra, numerical differentiation, and
//! small-scale constrained optimization.
//!
//! Everything here is pure given its inputs; there is no internal shared
//! mutable state, so calls on disjoint data are safe to run concurrently.

mod matrix;
mod optim;

pub(crate) use matrix::solve_linear;
pub use matrix::{cholesky_solve, Cholesky, DenseMatrix};
pub use optim::{
    finite_diff_gradient, minimize_box, minimize_box_with_grad, solve_penalty_nlp, MinimizeResult,
    OptimizerConfig, PenaltyResult,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Componentwise box `[lower, upper]`; entries may be ±∞.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxBounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoxBounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        assert_eq!(lower.len(), upper.len(), "bound lengths must match");
        BoxBounds { lower, upper }
    }

    pub fn unbounded(dim: usize) -> Self {
        BoxBounds {
            lower: vec![f64::NEG_INFINITY; dim],
            upper: vec![f64::INFINITY; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, point: &[f64]) -> bool {
        point
            .iter()
            .enumerate()
            .all(|(i, &v)| v >= self.lower[i] && v <= self.upper[i])
    }

    /// True when some component has `lower > upper`.
    pub fn is_empty(&self) -> bool {
        self.lower.iter().zip(&self.upper).any(|(l, u)| l > u)
    }

    pub fn project(&self, point: &mut [f64]) {
        for (i, v) in point.iter_mut().enumerate() {
            *v = v.max(self.lower[i]).min(self.upper[i]);
        }
    }

    /// Largest distance by which `point` leaves the box, 0 when inside.
    pub fn violation(&self, point: &[f64]) -> f64 {
        point.iter().enumerate().fold(0.0f64, |m, (i, &v)| {
            m.max(self.lower[i] - v).max(v - self.upper[i])
        })
    }

    /// True when `other` lies inside `self` componentwise.
    pub fn contains_box(&self, other: &BoxBounds) -> bool {
        self.lower
            .iter()
            .zip(&other.lower)
            .all(|(a, b)| b >= a)
            && self.upper.iter().zip(&other.upper).all(|(a, b)| b <= a)
    }
}

/// Failures of the numerical substrate.
#[derive(Debug, Clone, Error)]
pub enum NumError {
    #[error("matrix is not positive definite (pivot {pivot_index} ≤ 0)")]
    NotPositiveDefinite { pivot_index: usize },
    #[error("matrix is not symmetric within 1e-10 relative tolerance")]
    NotSymmetric,
    #[error("objective evaluated to a non-finite value")]
    NonFiniteObjective,
    #[error("infeasible bounds: lower > upper at component {component}")]
    InfeasibleBounds { component: usize },
    #[error("penalty loop diverged: violation {violation:.3e} after {rounds} rounds")]
    PenaltyDiverged { violation: f64, rounds: usize },
    #[error("dimension mismatch: {context}")]
    DimensionMismatch { context: String },
    #[error("invalid optimizer configuration")]
    InvalidConfig,
}
