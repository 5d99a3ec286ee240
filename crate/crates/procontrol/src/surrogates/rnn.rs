//! Single recurrent cell: a hidden sublayer with state feedback and an
//! output sublayer, plus unrolled reverse-mode gradients for sequence losses.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Activation, SurrogateError};
use crate::numkit::DenseMatrix;

/// Recurrent cell:
///
/// ```text
/// h_{l+1} = σ_h(W_f f + W_h h_l + b_h)
/// ℓ       = σ_l(W_l h_{l+1} + b_l)
/// ```
///
/// Sequence processing folds [`RnnCell::step`] over the features from a zero
/// initial hidden state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RnnCell {
    input_dim: usize,
    hidden_dim: usize,
    output_dim: usize,
    w_f: DenseMatrix,
    w_h: DenseMatrix,
    b_h: Vec<f64>,
    w_l: DenseMatrix,
    b_l: Vec<f64>,
    hidden_activation: Activation,
    output_activation: Activation,
}

/// Gradients in the layout of [`RnnCell::to_params`].
#[derive(Debug, Clone)]
pub struct RnnGradient {
    pub w_f: DenseMatrix,
    pub w_h: DenseMatrix,
    pub b_h: Vec<f64>,
    pub w_l: DenseMatrix,
    pub b_l: Vec<f64>,
}

impl RnnGradient {
    pub fn to_params(&self) -> Vec<f64> {
        let mut out = Vec::new();
        out.extend_from_slice(self.w_f.values());
        out.extend_from_slice(self.w_h.values());
        out.extend_from_slice(&self.b_h);
        out.extend_from_slice(self.w_l.values());
        out.extend_from_slice(&self.b_l);
        out
    }
}

impl RnnCell {
    pub fn init(
        input_dim: usize,
        hidden_dim: usize,
        output_dim: usize,
        hidden_activation: Activation,
        output_activation: Activation,
        seed: u64,
    ) -> Self {
        assert!(input_dim >= 1 && hidden_dim >= 1 && output_dim >= 1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut mat = |rows: usize, cols: usize| {
            let limit = (6.0 / (rows + cols) as f64).sqrt();
            DenseMatrix::new(
                rows,
                cols,
                (0..rows * cols).map(|_| rng.gen_range(-limit..limit)).collect(),
            )
        };
        let w_f = mat(hidden_dim, input_dim);
        let w_h = mat(hidden_dim, hidden_dim);
        let w_l = mat(output_dim, hidden_dim);
        RnnCell {
            input_dim,
            hidden_dim,
            output_dim,
            w_f,
            w_h,
            b_h: vec![0.0; hidden_dim],
            w_l,
            b_l: vec![0.0; output_dim],
            hidden_activation,
            output_activation,
        }
    }

    pub fn from_parts(
        w_f: DenseMatrix,
        w_h: DenseMatrix,
        b_h: Vec<f64>,
        w_l: DenseMatrix,
        b_l: Vec<f64>,
        hidden_activation: Activation,
        output_activation: Activation,
    ) -> Result<Self, SurrogateError> {
        let hidden_dim = w_f.rows();
        let input_dim = w_f.cols();
        let output_dim = w_l.rows();
        if w_h.rows() != hidden_dim
            || w_h.cols() != hidden_dim
            || b_h.len() != hidden_dim
            || w_l.cols() != hidden_dim
            || b_l.len() != output_dim
        {
            return Err(SurrogateError::DimensionMismatch {
                context: "rnn cell shapes".into(),
            });
        }
        Ok(RnnCell {
            input_dim,
            hidden_dim,
            output_dim,
            w_f,
            w_h,
            b_h,
            w_l,
            b_l,
            hidden_activation,
            output_activation,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    /// One cell evaluation.
    pub fn step(&self, feature: &[f64], hidden: &[f64]) -> Result<(Vec<f64>, Vec<f64>), SurrogateError> {
        if feature.len() != self.input_dim || hidden.len() != self.hidden_dim {
            return Err(SurrogateError::DimensionMismatch {
                context: format!(
                    "rnn step: feature {} hidden {}",
                    feature.len(),
                    hidden.len()
                ),
            });
        }
        let mut a_h = self.w_f.matvec(feature);
        let rec = self.w_h.matvec(hidden);
        for i in 0..self.hidden_dim {
            a_h[i] += rec[i] + self.b_h[i];
        }
        let h_next: Vec<f64> = a_h.iter().map(|&v| self.hidden_activation.apply(v)).collect();
        let mut a_l = self.w_l.matvec(&h_next);
        for i in 0..self.output_dim {
            a_l[i] += self.b_l[i];
        }
        let out: Vec<f64> = a_l.iter().map(|&v| self.output_activation.apply(v)).collect();
        if out.iter().chain(&h_next).any(|v| !v.is_finite()) {
            return Err(SurrogateError::NonFiniteState);
        }
        Ok((out, h_next))
    }

    /// Folds [`step`](Self::step) over a feature sequence from a zero hidden
    /// state, returning one output per feature.
    pub fn run_sequence(&self, features: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, SurrogateError> {
        let mut hidden = vec![0.0; self.hidden_dim];
        let mut outputs = Vec::with_capacity(features.len());
        for f in features {
            let (out, h) = self.step(f, &hidden)?;
            outputs.push(out);
            hidden = h;
        }
        Ok(outputs)
    }

    /// Sequence loss `½ Σ_t ‖out_t − target_t‖²` with parameter gradients by
    /// unrolled reverse accumulation (backpropagation through time).
    pub fn sequence_loss_grad(
        &self,
        features: &[Vec<f64>],
        targets: &[Vec<f64>],
    ) -> Result<(f64, RnnGradient), SurrogateError> {
        if features.len() != targets.len() {
            return Err(SurrogateError::DimensionMismatch {
                context: "feature/target sequence lengths".into(),
            });
        }
        let steps = features.len();
        let mut hiddens = vec![vec![0.0; self.hidden_dim]];
        let mut pre_h = Vec::with_capacity(steps);
        let mut pre_l = Vec::with_capacity(steps);
        let mut outs = Vec::with_capacity(steps);
        let mut loss = 0.0;
        for t in 0..steps {
            let mut a_h = self.w_f.matvec(&features[t]);
            let rec = self.w_h.matvec(&hiddens[t]);
            for i in 0..self.hidden_dim {
                a_h[i] += rec[i] + self.b_h[i];
            }
            let h: Vec<f64> = a_h.iter().map(|&v| self.hidden_activation.apply(v)).collect();
            let mut a_l = self.w_l.matvec(&h);
            for i in 0..self.output_dim {
                a_l[i] += self.b_l[i];
            }
            let out: Vec<f64> = a_l.iter().map(|&v| self.output_activation.apply(v)).collect();
            loss += 0.5
                * out
                    .iter()
                    .zip(&targets[t])
                    .map(|(o, y)| (o - y) * (o - y))
                    .sum::<f64>();
            pre_h.push(a_h);
            pre_l.push(a_l);
            outs.push(out);
            hiddens.push(h);
        }
        if !loss.is_finite() {
            return Err(SurrogateError::NonFiniteState);
        }

        let mut g_wf = DenseMatrix::zeros(self.hidden_dim, self.input_dim);
        let mut g_wh = DenseMatrix::zeros(self.hidden_dim, self.hidden_dim);
        let mut g_bh = vec![0.0; self.hidden_dim];
        let mut g_wl = DenseMatrix::zeros(self.output_dim, self.hidden_dim);
        let mut g_bl = vec![0.0; self.output_dim];
        // dLoss/dh_{t+1} carried backwards through the recurrence.
        let mut carry = vec![0.0; self.hidden_dim];
        for t in (0..steps).rev() {
            let delta_out: Vec<f64> = (0..self.output_dim)
                .map(|i| (outs[t][i] - targets[t][i]) * self.output_activation.derivative(pre_l[t][i]))
                .collect();
            let h_next = &hiddens[t + 1];
            for i in 0..self.output_dim {
                for j in 0..self.hidden_dim {
                    let v = g_wl.get(i, j) + delta_out[i] * h_next[j];
                    g_wl.set(i, j, v);
                }
                g_bl[i] += delta_out[i];
            }
            // Accumulate dLoss/dh_{t+1} from the output path and the future.
            let mut dh: Vec<f64> = carry;
            for j in 0..self.hidden_dim {
                for i in 0..self.output_dim {
                    dh[j] += self.w_l.get(i, j) * delta_out[i];
                }
            }
            let delta_h: Vec<f64> = (0..self.hidden_dim)
                .map(|i| dh[i] * self.hidden_activation.derivative(pre_h[t][i]))
                .collect();
            for i in 0..self.hidden_dim {
                for j in 0..self.input_dim {
                    let v = g_wf.get(i, j) + delta_h[i] * features[t][j];
                    g_wf.set(i, j, v);
                }
                for j in 0..self.hidden_dim {
                    let v = g_wh.get(i, j) + delta_h[i] * hiddens[t][j];
                    g_wh.set(i, j, v);
                }
                g_bh[i] += delta_h[i];
            }
            let mut next_carry = vec![0.0; self.hidden_dim];
            for i in 0..self.hidden_dim {
                for (j, slot) in next_carry.iter_mut().enumerate() {
                    *slot += self.w_h.get(i, j) * delta_h[i];
                }
            }
            carry = next_carry;
        }
        Ok((
            loss,
            RnnGradient {
                w_f: g_wf,
                w_h: g_wh,
                b_h: g_bh,
                w_l: g_wl,
                b_l: g_bl,
            },
        ))
    }

    pub fn param_count(&self) -> usize {
        self.hidden_dim * self.input_dim
            + self.hidden_dim * self.hidden_dim
            + self.hidden_dim
            + self.output_dim * self.hidden_dim
            + self.output_dim
    }

    pub fn to_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        out.extend_from_slice(self.w_f.values());
        out.extend_from_slice(self.w_h.values());
        out.extend_from_slice(&self.b_h);
        out.extend_from_slice(self.w_l.values());
        out.extend_from_slice(&self.b_l);
        out
    }

    pub fn with_params(&self, params: &[f64]) -> Self {
        assert_eq!(params.len(), self.param_count());
        let mut at = 0;
        let mut take_mat = |rows: usize, cols: usize, at: &mut usize| {
            let m = DenseMatrix::new(rows, cols, params[*at..*at + rows * cols].to_vec());
            *at += rows * cols;
            m
        };
        let w_f = take_mat(self.hidden_dim, self.input_dim, &mut at);
        let w_h = take_mat(self.hidden_dim, self.hidden_dim, &mut at);
        let b_h = params[at..at + self.hidden_dim].to_vec();
        let at2 = at + self.hidden_dim;
        let w_l = DenseMatrix::new(
            self.output_dim,
            self.hidden_dim,
            params[at2..at2 + self.output_dim * self.hidden_dim].to_vec(),
        );
        let at3 = at2 + self.output_dim * self.hidden_dim;
        let b_l = params[at3..at3 + self.output_dim].to_vec();
        RnnCell {
            w_f,
            w_h,
            b_h,
            w_l,
            b_l,
            ..self.clone()
        }
    }

    pub fn to_text(&self) -> String {
        serde_json::to_string_pretty(self).expect("RnnCell serializes")
    }

    pub fn from_text(text: &str) -> Result<Self, SurrogateError> {
        serde_json::from_str(text).map_err(|e| SurrogateError::Serialization(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::finite_diff_gradient;

    fn scalar_cell(wf: f64, wh: f64, wl: f64) -> RnnCell {
        RnnCell::from_parts(
            DenseMatrix::new(1, 1, vec![wf]),
            DenseMatrix::new(1, 1, vec![wh]),
            vec![0.0],
            DenseMatrix::new(1, 1, vec![wl]),
            vec![0.0],
            Activation::Linear,
            Activation::Linear,
        )
        .unwrap()
    }

    #[test]
    fn no_recurrence_means_no_memory() {
        let cell = scalar_cell(2.0, 0.0, 1.0);
        let (out1, h1) = cell.step(&[3.0], &[100.0]).unwrap();
        assert_eq!(h1, vec![6.0]);
        assert_eq!(out1, vec![6.0]);
    }

    #[test]
    fn unit_weights_accumulate_inputs() {
        // h ← f + h, out = h: inputs (1,1,1) give hiddens and outputs (1,2,3).
        let cell = scalar_cell(1.0, 1.0, 1.0);
        let outs = cell
            .run_sequence(&[vec![1.0], vec![1.0], vec![1.0]])
            .unwrap();
        assert_eq!(outs, vec![vec![1.0], vec![2.0], vec![3.0]]);
    }

    #[test]
    fn bptt_gradient_matches_finite_differences() {
        let cell = RnnCell::init(2, 4, 2, Activation::Tanh, Activation::Linear, 17);
        let features = vec![vec![0.5, -1.0], vec![0.2, 0.9], vec![-0.7, 0.1]];
        let targets = vec![vec![0.1, 0.0], vec![-0.2, 0.4], vec![0.3, -0.3]];
        let (_, grad) = cell.sequence_loss_grad(&features, &targets).unwrap();
        let analytic = grad.to_params();
        let f = |params: &[f64]| -> f64 {
            let c = cell.with_params(params);
            let outs = c.run_sequence(&features).unwrap();
            0.5 * outs
                .iter()
                .zip(&targets)
                .map(|(o, y)| {
                    o.iter()
                        .zip(y)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                })
                .sum::<f64>()
        };
        let fd = finite_diff_gradient(f, &cell.to_params(), 1e-6).unwrap();
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
    fn zero_recurrence_equals_fnn_per_step() {
        // With W_h = 0 every step is an independent two-layer network.
        let cell = RnnCell::init(2, 3, 1, Activation::Tanh, Activation::Linear, 3);
        let cell = {
            let mut params = cell.to_params();
            let wh_start = cell.hidden_dim() * cell.input_dim();
            for v in params
                .iter_mut()
                .skip(wh_start)
                .take(cell.hidden_dim() * cell.hidden_dim())
            {
                *v = 0.0;
            }
            cell.with_params(&params)
        };
        let features = vec![vec![0.4, -0.1], vec![-0.9, 0.8], vec![0.0, 0.0]];
        let seq = cell.run_sequence(&features).unwrap();
        for (f, out) in features.iter().zip(&seq) {
            let (step_out, _) = cell.step(f, &vec![0.0; cell.hidden_dim()]).unwrap();
            assert_eq!(*out, step_out);
        }
    }

    #[test]
    fn serialization_round_trip_is_exact() {
        let cell = RnnCell::init(3, 5, 2, Activation::Sigmoid, Activation::Linear, 99);
        let back = RnnCell::from_text(&cell.to_text()).unwrap();
        assert_eq!(cell.to_params(), back.to_params());
    }
}
