//! The immutable product of a training run: a total map from features to
//! labels, optionally with a predictive variance, plus its provenance.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::numkit::BoxBounds;

pub type EvalFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
pub type VarianceFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Record of how a map was produced: setup-function kind, final parameters,
/// and the metrics observed by the coordinator. Serializable to a
/// structured-text report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Provenance {
    pub setup_kind: String,
    pub input_dim: usize,
    pub output_dim: usize,
    /// Final parameters `w*` (empty for directly data-based maps whose data
    /// is frozen elsewhere).
    pub parameters: Vec<f64>,
    pub train_metric: f64,
    pub test_metric: f64,
    pub validation_metric: f64,
    pub rounds: usize,
    pub seed: u64,
}

impl Provenance {
    pub fn report(&self) -> String {
        serde_json::to_string_pretty(self).expect("provenance serializes")
    }
}

/// An immutable learned function `S: F → L`.
#[derive(Clone)]
pub struct TrainedMap {
    evaluate: EvalFn,
    predictive_variance: Option<VarianceFn>,
    provenance: Provenance,
}

impl fmt::Debug for TrainedMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TrainedMap")
            .field("provenance", &self.provenance)
            .field("has_variance", &self.predictive_variance.is_some())
            .finish()
    }
}

impl TrainedMap {
    pub fn new(evaluate: EvalFn, predictive_variance: Option<VarianceFn>, provenance: Provenance) -> Self {
        TrainedMap {
            evaluate,
            predictive_variance,
            provenance,
        }
    }

    /// Wraps a plain function without training provenance.
    pub fn from_fn<F>(input_dim: usize, output_dim: usize, f: F) -> Self
    where
        F: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        TrainedMap {
            evaluate: Arc::new(f),
            predictive_variance: None,
            provenance: Provenance {
                setup_kind: "function".into(),
                input_dim,
                output_dim,
                parameters: Vec::new(),
                train_metric: f64::NAN,
                test_metric: f64::NAN,
                validation_metric: f64::NAN,
                rounds: 0,
                seed: 0,
            },
        }
    }

    pub fn evaluate(&self, feature: &[f64]) -> Vec<f64> {
        (self.evaluate)(feature)
    }

    /// Predictive variance at `feature`, when the setup function provides one.
    pub fn variance(&self, feature: &[f64]) -> Option<f64> {
        self.predictive_variance.as_ref().map(|v| v(feature))
    }

    pub fn has_variance(&self) -> bool {
        self.predictive_variance.is_some()
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn input_dim(&self) -> usize {
        self.provenance.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.provenance.output_dim
    }

    /// Clamps every output component into `bounds` (the restricted function
    /// space realized as an output box).
    pub fn with_output_box(self, bounds: BoxBounds) -> Self {
        let inner = self.evaluate.clone();
        let clamped: EvalFn = Arc::new(move |f: &[f64]| {
            let mut out = inner(f);
            for (i, v) in out.iter_mut().enumerate() {
                *v = v.max(bounds.lower[i]).min(bounds.upper[i]);
            }
            out
        });
        TrainedMap {
            evaluate: clamped,
            predictive_variance: self.predictive_variance,
            provenance: self.provenance,
        }
    }
}
