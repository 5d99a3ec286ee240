//! Gaussian process regression with the squared-exponential kernel, a zero
//! prior mean, and Cholesky-backed posterior mean/variance.

use serde::{Deserialize, Serialize};

use super::SurrogateError;
use crate::numkit::{Cholesky, DenseMatrix, NumError};

/// Jitter added to the covariance diagonal on a failed factorization before
/// giving up.
const FIT_JITTER: f64 = 1e-10;

/// Squared-exponential kernel `h1 · exp(−Σ_α (f1_α − f2_α)² / h2)`.
///
/// The exponent is negative so the kernel is upper-bounded by its value at
/// zero distance and the covariance matrix stays positive semi-definite.
#[inline]
pub fn kernel_se(f1: &[f64], f2: &[f64], h1: f64, h2: f64) -> f64 {
    debug_assert!(h1 > 0.0 && h2 > 0.0, "kernel hyperparameters must be positive");
    debug_assert_eq!(f1.len(), f2.len());
    let sq: f64 = f1
        .iter()
        .zip(f2)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    h1 * (-sq / h2).exp()
}

fn covariance(inputs: &[Vec<f64>], h1: f64, h2: f64, noise: f64) -> DenseMatrix {
    let n = inputs.len();
    let mut k = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = kernel_se(&inputs[i], &inputs[j], h1, h2);
            k.set(i, j, v);
            k.set(j, i, v);
        }
        let d = k.get(i, i);
        k.set(i, i, d + noise);
    }
    k
}

/// Scalar-output Gaussian process frozen on its training data. Multi-output
/// regression uses one independent process per output dimension.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "GpModelData", into = "GpModelData")]
pub struct GpModel {
    amplitude: f64,
    lengthscale: f64,
    noise: f64,
    inputs: Vec<Vec<f64>>,
    labels: Vec<f64>,
    chol: Cholesky,
    alpha: Vec<f64>,
}

/// Serialized form: caches are rebuilt on load.
#[derive(Serialize, Deserialize)]
struct GpModelData {
    amplitude: f64,
    lengthscale: f64,
    noise: f64,
    inputs: Vec<Vec<f64>>,
    labels: Vec<f64>,
}

impl From<GpModel> for GpModelData {
    fn from(m: GpModel) -> Self {
        GpModelData {
            amplitude: m.amplitude,
            lengthscale: m.lengthscale,
            noise: m.noise,
            inputs: m.inputs,
            labels: m.labels,
        }
    }
}

impl TryFrom<GpModelData> for GpModel {
    type Error = SurrogateError;

    fn try_from(d: GpModelData) -> Result<Self, SurrogateError> {
        GpModel::fit(d.inputs, d.labels, d.amplitude, d.lengthscale, d.noise)
    }
}

impl GpModel {
    /// Builds `K = [k(f_i, f_j)] + ν·I`, factors it, and caches
    /// `alpha = K⁻¹ℓ`. A failed factorization is retried once with a 1e-10
    /// diagonal jitter.
    pub fn fit(
        inputs: Vec<Vec<f64>>,
        labels: Vec<f64>,
        amplitude: f64,
        lengthscale: f64,
        noise: f64,
    ) -> Result<Self, SurrogateError> {
        if inputs.is_empty() {
            return Err(SurrogateError::EmptyTrainingSet);
        }
        if inputs.len() != labels.len() {
            return Err(SurrogateError::DimensionMismatch {
                context: format!("{} inputs vs {} labels", inputs.len(), labels.len()),
            });
        }
        let dim = inputs[0].len();
        if inputs.iter().any(|f| f.len() != dim) {
            return Err(SurrogateError::DimensionMismatch {
                context: "ragged training inputs".into(),
            });
        }
        assert!(amplitude > 0.0 && lengthscale > 0.0 && noise >= 0.0);

        let k = covariance(&inputs, amplitude, lengthscale, noise);
        let chol = match Cholesky::factor(&k) {
            Ok(c) => c,
            Err(NumError::NotPositiveDefinite { .. }) => {
                let mut jittered = k.clone();
                jittered.add_jitter(FIT_JITTER);
                Cholesky::factor(&jittered).map_err(SurrogateError::Num)?
            }
            Err(e) => return Err(SurrogateError::Num(e)),
        };
        let alpha = chol.solve_vec(&labels)?;
        Ok(GpModel {
            amplitude,
            lengthscale,
            noise,
            inputs,
            labels,
            chol,
            alpha,
        })
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn lengthscale(&self) -> f64 {
        self.lengthscale
    }

    pub fn noise(&self) -> f64 {
        self.noise
    }

    pub fn training_inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn training_labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn input_dim(&self) -> usize {
        self.inputs[0].len()
    }

    /// Residual `‖K·alpha − ℓ‖` of the cached solve.
    pub fn cache_residual(&self) -> f64 {
        let k = covariance(&self.inputs, self.amplitude, self.lengthscale, self.noise);
        k.matvec(&self.alpha)
            .iter()
            .zip(&self.labels)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    /// Posterior mean and variance at `query`. The variance is floored at
    /// zero against roundoff.
    pub fn predict(&self, query: &[f64]) -> (f64, f64) {
        assert_eq!(query.len(), self.input_dim(), "query dimension");
        let k_star: Vec<f64> = self
            .inputs
            .iter()
            .map(|f| kernel_se(f, query, self.amplitude, self.lengthscale))
            .collect();
        let mean: f64 = k_star.iter().zip(&self.alpha).map(|(k, a)| k * a).sum();
        let v = self
            .chol
            .solve_vec(&k_star)
            .expect("factor dimension matches k_star");
        let explained: f64 = k_star.iter().zip(&v).map(|(k, vi)| k * vi).sum();
        let variance = (kernel_se(query, query, self.amplitude, self.lengthscale) - explained)
            .max(0.0);
        (mean, variance)
    }

    pub fn to_text(&self) -> String {
        serde_json::to_string_pretty(self).expect("GpModel serializes")
    }

    pub fn from_text(text: &str) -> Result<Self, SurrogateError> {
        serde_json::from_str(text).map_err(|e| SurrogateError::Serialization(e.to_string()))
    }
}

/// Log marginal likelihood
/// `−½ ℓᵀK⁻¹ℓ − ½ log det K − (n/2) log 2π`
/// of the data under hyperparameters `(h1, h2, ν)`.
pub fn gp_log_marginal_likelihood(
    inputs: &[Vec<f64>],
    labels: &[f64],
    h1: f64,
    h2: f64,
    noise: f64,
) -> Result<f64, SurrogateError> {
    if inputs.is_empty() {
        return Err(SurrogateError::EmptyTrainingSet);
    }
    let k = covariance(inputs, h1, h2, noise);
    let chol = Cholesky::factor(&k).map_err(SurrogateError::Num)?;
    let alpha = chol.solve_vec(labels)?;
    let data_term: f64 = labels.iter().zip(&alpha).map(|(l, a)| l * a).sum();
    let log_det: f64 = (0..k.rows())
        .map(|i| chol.lower().get(i, i).ln())
        .sum::<f64>()
        * 2.0;
    let n = labels.len() as f64;
    Ok(-0.5 * data_term - 0.5 * log_det - 0.5 * n * (2.0 * std::f64::consts::PI).ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn kernel_at_zero_distance_is_amplitude() {
        let f = [0.3, -2.0];
        assert_eq!(kernel_se(&f, &f, 1.7, 0.9), 1.7);
    }

    #[test]
    fn kernel_direct_evaluation() {
        let v = kernel_se(&[0.0], &[1.0], 1.0, 2.0);
        assert!((v - (-0.5f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn kernel_is_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let a: Vec<f64> = (0..3).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let b: Vec<f64> = (0..3).map(|_| rng.gen_range(-5.0..5.0)).collect();
            assert_eq!(kernel_se(&a, &b, 1.3, 0.7), kernel_se(&b, &a, 1.3, 0.7));
        }
    }

    #[test]
    fn single_point_fit_has_scalar_algebra() {
        let m = GpModel::fit(vec![vec![2.0]], vec![3.0], 1.5, 1.0, 0.5).unwrap();
        // K = [[h1 + ν]], alpha = ℓ/(h1 + ν).
        assert!((m.alpha[0] - 3.0 / 2.0).abs() < 1e-12);
    }

    #[test]
    fn duplicate_inputs_with_zero_noise_need_jitter() {
        // Rank-deficient K: the fit must either succeed through the jitter
        // retry or report NotPositiveDefinite, never anything else.
        let r = GpModel::fit(
            vec![vec![1.0], vec![1.0]],
            vec![0.5, 0.5],
            1.0,
            1.0,
            0.0,
        );
        match r {
            Ok(m) => assert!(m.cache_residual() < 1e-4),
            Err(SurrogateError::Num(NumError::NotPositiveDefinite { .. })) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn cache_residual_small_on_random_datasets() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..50 {
            let n = rng.gen_range(1..12);
            let inputs: Vec<Vec<f64>> = (0..n)
                .map(|i| vec![i as f64 + rng.gen_range(-0.2..0.2)])
                .collect();
            let labels: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let m = GpModel::fit(inputs, labels, 1.0, 1.0, 1e-4).unwrap();
            assert!(m.cache_residual() <= 1e-8, "residual {}", m.cache_residual());
        }
    }

    #[test]
    fn interpolates_training_points_with_tiny_noise() {
        let inputs = vec![vec![0.0], vec![1.0], vec![2.5]];
        let labels = vec![1.0, -0.5, 2.0];
        let m = GpModel::fit(inputs.clone(), labels.clone(), 1.0, 1.0, 1e-12).unwrap();
        for (f, l) in inputs.iter().zip(&labels) {
            let (mean, var) = m.predict(f);
            assert!((mean - l).abs() < 1e-5);
            assert!(var <= 1e-6);
        }
    }

    #[test]
    fn far_query_reverts_to_prior() {
        let m = GpModel::fit(vec![vec![0.0], vec![1.0]], vec![5.0, -3.0], 2.0, 1.0, 1e-12)
            .unwrap();
        let (mean, var) = m.predict(&[100.0]);
        assert!(mean.abs() < 1e-6);
        assert!((var - 2.0).abs() < 1e-6);
    }

    #[test]
    fn symmetric_data_predicts_symmetrically() {
        let m = GpModel::fit(vec![vec![-1.0], vec![1.0]], vec![0.7, 0.7], 1.0, 1.0, 1e-10)
            .unwrap();
        for q in [0.2, 0.5, 1.5] {
            let (mp, _) = m.predict(&[q]);
            let (mm, _) = m.predict(&[-q]);
            assert!((mp - mm).abs() < 1e-12);
        }
    }

    #[test]
    fn posterior_mean_is_linear_in_labels() {
        let inputs = vec![vec![0.0], vec![0.7], vec![1.9]];
        let l1 = vec![1.0, 2.0, -1.0];
        let l2 = vec![0.3, -0.4, 0.9];
        let sum: Vec<f64> = l1.iter().zip(&l2).map(|(a, b)| a + b).collect();
        let m1 = GpModel::fit(inputs.clone(), l1, 1.0, 0.8, 1e-8).unwrap();
        let m2 = GpModel::fit(inputs.clone(), l2, 1.0, 0.8, 1e-8).unwrap();
        let ms = GpModel::fit(inputs, sum, 1.0, 0.8, 1e-8).unwrap();
        for q in [-0.5, 0.3, 1.1, 2.4] {
            let a = m1.predict(&[q]).0 + m2.predict(&[q]).0;
            let b = ms.predict(&[q]).0;
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn variance_stays_in_prior_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let inputs: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64 * 0.8]).collect();
        let labels: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let m = GpModel::fit(inputs, labels, 1.4, 0.9, 1e-6).unwrap();
        for _ in 0..10_000 {
            let q = rng.gen_range(-10.0..10.0);
            let (_, var) = m.predict(&[q]);
            assert!(var >= 0.0 && var <= 1.4 + 1e-6 + 1e-9);
        }
    }

    #[test]
    fn lml_finite_on_single_point() {
        let v = gp_log_marginal_likelihood(&[vec![0.0]], &[1.0], 1.0, 1.0, 1e-2).unwrap();
        assert!(v.is_finite());
    }

    #[test]
    fn serialization_round_trip_preserves_predictions() {
        let m = GpModel::fit(
            vec![vec![0.0], vec![0.5], vec![1.3]],
            vec![0.1, -0.7, 0.4],
            1.2,
            0.6,
            1e-6,
        )
        .unwrap();
        let back = GpModel::from_text(&m.to_text()).unwrap();
        for q in [-1.0, 0.25, 2.0] {
            let (a, va) = m.predict(&[q]);
            let (b, vb) = back.predict(&[q]);
            assert_eq!(a, b);
            assert_eq!(va, vb);
        }
    }
}
