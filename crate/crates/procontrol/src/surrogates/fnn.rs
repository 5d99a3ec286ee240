//! Feed-forward network: stacked affine layers with elementwise activations
//! and reverse-mode parameter gradients.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Activation, SurrogateError};
use crate::numkit::DenseMatrix;

/// Feed-forward network. Layer `l` maps `z_{l+1} = σ_l(W_l z_l + b_l)`;
/// `layer_sizes` runs from the feature dimension to the label dimension.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FnnModel {
    layer_sizes: Vec<usize>,
    weights: Vec<DenseMatrix>,
    biases: Vec<Vec<f64>>,
    activations: Vec<Activation>,
}

/// Per-layer gradients of a scalar loss, matching the parameter layout of
/// [`FnnModel::to_params`].
#[derive(Debug, Clone)]
pub struct FnnGradient {
    pub weights: Vec<DenseMatrix>,
    pub biases: Vec<Vec<f64>>,
}

impl FnnGradient {
    pub fn to_params(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w.values());
            out.extend_from_slice(b);
        }
        out
    }
}

impl FnnModel {
    /// Seeded initialization: weights uniform in ±√(6/(n_in + n_out)) per
    /// layer, biases uniform in ±1/√n_in so the units start differentiated.
    pub fn init(layer_sizes: &[usize], activations: &[Activation], seed: u64) -> Self {
        assert!(layer_sizes.len() >= 2, "need input and output layer sizes");
        assert_eq!(
            activations.len(),
            layer_sizes.len() - 1,
            "one activation per layer"
        );
        assert!(layer_sizes.iter().all(|&n| n >= 1));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for l in 0..layer_sizes.len() - 1 {
            let (n_in, n_out) = (layer_sizes[l], layer_sizes[l + 1]);
            let limit = (6.0 / (n_in + n_out) as f64).sqrt();
            let values = (0..n_in * n_out)
                .map(|_| rng.gen_range(-limit..limit))
                .collect();
            weights.push(DenseMatrix::new(n_out, n_in, values));
            let b_limit = 1.0 / (n_in as f64).sqrt();
            biases.push((0..n_out).map(|_| rng.gen_range(-b_limit..b_limit)).collect());
        }
        FnnModel {
            layer_sizes: layer_sizes.to_vec(),
            weights,
            biases,
            activations: activations.to_vec(),
        }
    }

    /// Builds a network from explicit parameters.
    pub fn from_parts(
        layer_sizes: Vec<usize>,
        weights: Vec<DenseMatrix>,
        biases: Vec<Vec<f64>>,
        activations: Vec<Activation>,
    ) -> Result<Self, SurrogateError> {
        if weights.len() != layer_sizes.len() - 1
            || biases.len() != weights.len()
            || activations.len() != weights.len()
        {
            return Err(SurrogateError::DimensionMismatch {
                context: "layer count disagreement".into(),
            });
        }
        for l in 0..weights.len() {
            if weights[l].rows() != layer_sizes[l + 1]
                || weights[l].cols() != layer_sizes[l]
                || biases[l].len() != layer_sizes[l + 1]
            {
                return Err(SurrogateError::DimensionMismatch {
                    context: format!("layer {l} shape"),
                });
            }
        }
        Ok(FnnModel {
            layer_sizes,
            weights,
            biases,
            activations,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn param_count(&self) -> usize {
        self.weights
            .iter()
            .zip(&self.biases)
            .map(|(w, b)| w.values().len() + b.len())
            .sum()
    }

    /// Flattens all parameters, layer by layer, weights (row-major) then bias.
    pub fn to_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w.values());
            out.extend_from_slice(b);
        }
        out
    }

    /// Rebuilds the network with the same architecture and new parameters.
    pub fn with_params(&self, params: &[f64]) -> Self {
        assert_eq!(params.len(), self.param_count(), "parameter count");
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        let mut at = 0;
        for l in 0..self.weights.len() {
            let (r, c) = (self.weights[l].rows(), self.weights[l].cols());
            weights.push(DenseMatrix::new(r, c, params[at..at + r * c].to_vec()));
            at += r * c;
            biases.push(params[at..at + r].to_vec());
            at += r;
        }
        FnnModel {
            layer_sizes: self.layer_sizes.clone(),
            weights,
            biases,
            activations: self.activations.clone(),
        }
    }

    /// Forward pass.
    pub fn eval(&self, feature: &[f64]) -> Result<Vec<f64>, SurrogateError> {
        if feature.len() != self.input_dim() {
            return Err(SurrogateError::DimensionMismatch {
                context: format!(
                    "feature length {} (expected {})",
                    feature.len(),
                    self.input_dim()
                ),
            });
        }
        let mut z = feature.to_vec();
        for l in 0..self.weights.len() {
            let mut a = self.weights[l].matvec(&z);
            for (ai, bi) in a.iter_mut().zip(&self.biases[l]) {
                *ai += bi;
            }
            z = a.iter().map(|&v| self.activations[l].apply(v)).collect();
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(SurrogateError::NonFiniteState);
        }
        Ok(z)
    }

    /// Forward pass plus reverse-mode accumulation of the parameter gradient
    /// for a scalar loss whose derivative with respect to the network output
    /// is `upstream` (e.g. `out − target` for ½‖out − target‖²).
    pub fn eval_with_grad(
        &self,
        feature: &[f64],
        upstream: &[f64],
    ) -> Result<(Vec<f64>, FnnGradient), SurrogateError> {
        if feature.len() != self.input_dim() {
            return Err(SurrogateError::DimensionMismatch {
                context: "feature length".into(),
            });
        }
        if upstream.len() != self.output_dim() {
            return Err(SurrogateError::DimensionMismatch {
                context: "upstream residual length".into(),
            });
        }
        let layers = self.weights.len();
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(layers + 1);
        let mut pre: Vec<Vec<f64>> = Vec::with_capacity(layers);
        acts.push(feature.to_vec());
        for l in 0..layers {
            let mut a = self.weights[l].matvec(acts.last().unwrap());
            for (ai, bi) in a.iter_mut().zip(&self.biases[l]) {
                *ai += bi;
            }
            let z: Vec<f64> = a.iter().map(|&v| self.activations[l].apply(v)).collect();
            pre.push(a);
            acts.push(z);
        }
        let output = acts.last().unwrap().clone();
        if output.iter().any(|v| !v.is_finite()) {
            return Err(SurrogateError::NonFiniteState);
        }

        let mut d_weights = vec![DenseMatrix::zeros(1, 1); layers];
        let mut d_biases = vec![Vec::new(); layers];
        let mut carry = upstream.to_vec();
        for l in (0..layers).rev() {
            let delta: Vec<f64> = carry
                .iter()
                .zip(&pre[l])
                .map(|(&c, &a)| c * self.activations[l].derivative(a))
                .collect();
            let (rows, cols) = (self.weights[l].rows(), self.weights[l].cols());
            let mut dw = DenseMatrix::zeros(rows, cols);
            for r in 0..rows {
                for c in 0..cols {
                    dw.set(r, c, delta[r] * acts[l][c]);
                }
            }
            d_weights[l] = dw;
            d_biases[l] = delta.clone();
            // carry = W_lᵀ · delta
            let mut next = vec![0.0; cols];
            for r in 0..rows {
                for (c, slot) in next.iter_mut().enumerate() {
                    *slot += self.weights[l].get(r, c) * delta[r];
                }
            }
            carry = next;
        }
        Ok((
            output,
            FnnGradient {
                weights: d_weights,
                biases: d_biases,
            },
        ))
    }

    /// Composes all layers into a single affine map `(A, c)`; only valid for
    /// all-linear activations.
    pub fn as_affine(&self) -> Option<(DenseMatrix, Vec<f64>)> {
        if self.activations.iter().any(|&a| a != Activation::Linear) {
            return None;
        }
        let mut a = self.weights[0].clone();
        let mut c = self.biases[0].clone();
        for l in 1..self.weights.len() {
            c = self.weights[l].matvec(&c);
            for (ci, bi) in c.iter_mut().zip(&self.biases[l]) {
                *ci += bi;
            }
            a = self.weights[l].matmul(&a);
        }
        Some((a, c))
    }

    pub fn to_text(&self) -> String {
        serde_json::to_string_pretty(self).expect("FnnModel serializes")
    }

    pub fn from_text(text: &str) -> Result<Self, SurrogateError> {
        serde_json::from_str(text).map_err(|e| SurrogateError::Serialization(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::finite_diff_gradient;

    #[test]
    fn identity_layer_passes_input_through() {
        let model = FnnModel::from_parts(
            vec![3, 3],
            vec![DenseMatrix::identity(3)],
            vec![vec![0.0; 3]],
            vec![Activation::Linear],
        )
        .unwrap();
        let out = model.eval(&[0.5, -1.0, 2.0]).unwrap();
        assert_eq!(out, vec![0.5, -1.0, 2.0]);
    }

    #[test]
    fn zero_weights_tanh_gives_zero_output() {
        let model = FnnModel::from_parts(
            vec![2, 4, 2],
            vec![DenseMatrix::zeros(4, 2), DenseMatrix::zeros(2, 4)],
            vec![vec![0.0; 4], vec![0.0; 2]],
            vec![Activation::Tanh, Activation::Tanh],
        )
        .unwrap();
        let out = model.eval(&[3.0, -7.0]).unwrap();
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backprop_matches_finite_differences() {
        // ½‖out − target‖² on a random 2-hidden-layer net.
        let model = FnnModel::init(&[3, 5, 4, 2], &[Activation::Tanh; 3], 42);
        let feature = [0.3, -0.8, 1.1];
        let target = [0.25, -0.5];
        let loss_at = |params: &[f64]| -> f64 {
            let m = model.with_params(params);
            let out = m.eval(&feature).unwrap();
            0.5 * out
                .iter()
                .zip(&target)
                .map(|(o, t)| (o - t) * (o - t))
                .sum::<f64>()
        };
        let out = model.eval(&feature).unwrap();
        let upstream: Vec<f64> = out.iter().zip(&target).map(|(o, t)| o - t).collect();
        let (_, grad) = model.eval_with_grad(&feature, &upstream).unwrap();
        let analytic = grad.to_params();
        let fd = finite_diff_gradient(loss_at, &model.to_params(), 1e-6).unwrap();
        let denom = fd.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
        let diff = analytic
            .iter()
            .zip(&fd)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        assert!(diff / denom < 1e-5, "relative error {}", diff / denom);
    }

    #[test]
    fn all_linear_network_equals_composed_affine() {
        let model = FnnModel::init(&[2, 3, 3, 2], &[Activation::Linear; 3], 9);
        let (a, c) = model.as_affine().unwrap();
        for feature in [[0.0, 0.0], [1.0, -2.0], [0.3, 0.7]] {
            let direct = model.eval(&feature).unwrap();
            let composed: Vec<f64> = a
                .matvec(&feature)
                .iter()
                .zip(&c)
                .map(|(v, ci)| v + ci)
                .collect();
            for (d, e) in direct.iter().zip(&composed) {
                assert!((d - e).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn params_round_trip() {
        let model = FnnModel::init(&[2, 4, 1], &[Activation::Tanh, Activation::Linear], 5);
        let rebuilt = model.with_params(&model.to_params());
        assert_eq!(model.to_params(), rebuilt.to_params());
    }

    #[test]
    fn serialization_round_trip_is_exact() {
        let model = FnnModel::init(&[3, 7, 2], &[Activation::Sigmoid, Activation::Linear], 123);
        let text = model.to_text();
        let back = FnnModel::from_text(&text).unwrap();
        assert_eq!(model.to_params(), back.to_params());
        assert_eq!(model.layer_sizes(), back.layer_sizes());
    }
}
