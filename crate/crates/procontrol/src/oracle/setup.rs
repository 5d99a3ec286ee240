//! Setup-function descriptions: the to-be-trained families the coordinator
//! can instantiate, and their parameterized instances.

use serde::{Deserialize, Serialize};

use super::OracleError;
use crate::surrogates::{Activation, FnnModel, RnnCell};

/// Hyperparameter search box and starting point for an evidence-trained GP.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GpSetup {
    pub amplitude_bounds: (f64, f64),
    pub lengthscale_bounds: (f64, f64),
    pub noise_bounds: (f64, f64),
    /// Starting hyperparameters `(h1, h2, ν)`.
    pub initial: (f64, f64, f64),
}

impl Default for GpSetup {
    fn default() -> Self {
        GpSetup {
            amplitude_bounds: (1e-3, 1e3),
            lengthscale_bounds: (1e-3, 1e3),
            noise_bounds: (1e-8, 1.0),
            initial: (1.0, 1.0, 1e-2),
        }
    }
}

/// A to-be-trained function family. Feature and label dimensions come from
/// the dataset at training time.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum SetupFunction {
    /// Feed-forward network with the given hidden sizes; hidden layers share
    /// one activation, the output layer its own (use `Linear` for regression;
    /// classification applies a normalized exponential on top).
    Fnn {
        hidden: Vec<usize>,
        activation: Activation,
        output_activation: Activation,
    },
    /// Constant model: one bias parameter per output dimension.
    Bias,
    /// Recurrent cell unrolled over `steps`; dataset features are flattened
    /// `steps × per_step_input` sequences, labels flattened outputs.
    Rnn {
        hidden_dim: usize,
        steps: usize,
        hidden_activation: Activation,
        output_activation: Activation,
    },
    /// Gaussian process (directly data-based; evidence objective).
    Gp(GpSetup),
}

impl SetupFunction {
    pub fn fnn(hidden: Vec<usize>) -> Self {
        SetupFunction::Fnn {
            hidden,
            activation: Activation::Tanh,
            output_activation: Activation::Linear,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            SetupFunction::Fnn { .. } => "fnn",
            SetupFunction::Bias => "bias",
            SetupFunction::Rnn { .. } => "rnn",
            SetupFunction::Gp(_) => "gp",
        }
    }

    pub fn is_directly_data_based(&self) -> bool {
        matches!(self, SetupFunction::Gp(_))
    }

    /// Builds a seeded parameter-space instance for the indirectly
    /// data-based families. Errors for the GP, whose training data is frozen
    /// inside the evaluation instead.
    pub fn instantiate(
        &self,
        feature_dim: usize,
        label_dim: usize,
        seed: u64,
    ) -> Result<ModelInstance, OracleError> {
        match self {
            SetupFunction::Fnn {
                hidden,
                activation,
                output_activation,
            } => {
                let mut sizes = vec![feature_dim];
                sizes.extend_from_slice(hidden);
                sizes.push(label_dim);
                let mut acts = vec![*activation; sizes.len() - 1];
                *acts.last_mut().unwrap() = *output_activation;
                Ok(ModelInstance::Fnn(FnnModel::init(&sizes, &acts, seed)))
            }
            SetupFunction::Bias => Ok(ModelInstance::Bias {
                bias: vec![0.0; label_dim],
            }),
            SetupFunction::Rnn {
                hidden_dim,
                steps,
                hidden_activation,
                output_activation,
            } => {
                if *steps == 0 || feature_dim % steps != 0 || label_dim % steps != 0 {
                    return Err(OracleError::InvalidSpec {
                        context: format!(
                            "rnn setup: {feature_dim}/{label_dim} not divisible by {steps} steps"
                        ),
                    });
                }
                Ok(ModelInstance::Rnn {
                    cell: RnnCell::init(
                        feature_dim / steps,
                        *hidden_dim,
                        label_dim / steps,
                        *hidden_activation,
                        *output_activation,
                        seed,
                    ),
                    steps: *steps,
                })
            }
            SetupFunction::Gp(_) => Err(OracleError::InvalidSpec {
                context: "gp setup has no parameter-space instance".into(),
            }),
        }
    }
}

/// A parameterized instance of an indirectly data-based setup function.
#[derive(Debug, Clone)]
pub enum ModelInstance {
    Fnn(FnnModel),
    Bias { bias: Vec<f64> },
    Rnn { cell: RnnCell, steps: usize },
}

impl ModelInstance {
    pub fn param_count(&self) -> usize {
        match self {
            ModelInstance::Fnn(m) => m.param_count(),
            ModelInstance::Bias { bias } => bias.len(),
            ModelInstance::Rnn { cell, .. } => cell.param_count(),
        }
    }

    pub fn to_params(&self) -> Vec<f64> {
        match self {
            ModelInstance::Fnn(m) => m.to_params(),
            ModelInstance::Bias { bias } => bias.clone(),
            ModelInstance::Rnn { cell, .. } => cell.to_params(),
        }
    }

    pub fn with_params(&self, params: &[f64]) -> Self {
        match self {
            ModelInstance::Fnn(m) => ModelInstance::Fnn(m.with_params(params)),
            ModelInstance::Bias { .. } => ModelInstance::Bias {
                bias: params.to_vec(),
            },
            ModelInstance::Rnn { cell, steps } => ModelInstance::Rnn {
                cell: cell.with_params(params),
                steps: *steps,
            },
        }
    }

    /// Raw model output (no classification normalization).
    pub fn eval(&self, feature: &[f64]) -> Result<Vec<f64>, OracleError> {
        match self {
            ModelInstance::Fnn(m) => Ok(m.eval(feature)?),
            ModelInstance::Bias { bias } => Ok(bias.clone()),
            ModelInstance::Rnn { cell, steps } => {
                let per_step = feature.len() / steps;
                let seq: Vec<Vec<f64>> = feature.chunks(per_step).map(|c| c.to_vec()).collect();
                let outs = cell.run_sequence(&seq)?;
                Ok(outs.into_iter().flatten().collect())
            }
        }
    }
}
