//! Semi-explicit DAE plant abstraction with additive learned parts, the
//! fixed-substep one-step integrator, and the steady-state solver.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::PlantError;
use crate::numkit::{solve_linear, BoxBounds, DenseMatrix};
use crate::oracle::TrainedMap;

/// Fixed number of integrator substeps per sampling interval.
pub const SUBSTEPS: usize = 10;
/// Algebraic Newton tolerance (infinity norm of the residual).
const NEWTON_TOL: f64 = 1e-10;
const NEWTON_MAX_ITER: usize = 50;
/// Steady-state Newton settings.
const STEADY_TOL: f64 = 1e-9;
const STEADY_MAX_ITER: usize = 100;

/// First-principles right-hand side `(x, z, u, p) → value`.
pub type DynamicsFn = Arc<dyn Fn(&[f64], &[f64], &[f64], &[f64]) -> Vec<f64> + Send + Sync>;
/// Output map `(x, z) → y`.
pub type OutputFn = Arc<dyn Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync>;

/// Plant model
///
/// ```text
/// ẋ = f(x, z, u, p) + F(x, z, p)
/// 0 = g(x, z, u, p) + G(x, z, p)
/// y = h(x, z)
/// ```
///
/// where `f`, `g`, `h` are first-principles parts and `F`, `G` are optional
/// learned increments (maps over the concatenated `[x‖z‖p]` vector).
/// Immutable after construction; all operations are pure.
#[derive(Clone)]
pub struct PlantModel {
    n_x: usize,
    n_z: usize,
    n_u: usize,
    n_y: usize,
    first_principles: DynamicsFn,
    learned_dynamics: Option<TrainedMap>,
    algebraic_residual: Option<DynamicsFn>,
    learned_algebraic: Option<TrainedMap>,
    output_map: OutputFn,
    parameters: Vec<f64>,
    sampling_time: f64,
    state_bounds: BoxBounds,
    input_bounds: BoxBounds,
}

pub struct PlantBuilder {
    n_x: usize,
    n_z: usize,
    n_u: usize,
    n_y: usize,
    first_principles: Option<DynamicsFn>,
    algebraic_residual: Option<DynamicsFn>,
    output_map: Option<OutputFn>,
    parameters: Vec<f64>,
    sampling_time: f64,
    state_bounds: Option<BoxBounds>,
    input_bounds: Option<BoxBounds>,
}

impl PlantBuilder {
    pub fn dynamics<F>(mut self, f: F) -> Self
    where
        F: Fn(&[f64], &[f64], &[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        self.first_principles = Some(Arc::new(f));
        self
    }

    pub fn algebraic<F>(mut self, g: F) -> Self
    where
        F: Fn(&[f64], &[f64], &[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        self.algebraic_residual = Some(Arc::new(g));
        self
    }

    pub fn output<F>(mut self, h: F) -> Self
    where
        F: Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        self.output_map = Some(Arc::new(h));
        self
    }

    pub fn parameters(mut self, p: Vec<f64>) -> Self {
        self.parameters = p;
        self
    }

    pub fn sampling_time(mut self, t: f64) -> Self {
        self.sampling_time = t;
        self
    }

    pub fn state_bounds(mut self, b: BoxBounds) -> Self {
        self.state_bounds = Some(b);
        self
    }

    pub fn input_bounds(mut self, b: BoxBounds) -> Self {
        self.input_bounds = Some(b);
        self
    }

    /// Finishes construction, probing every callable part once to verify the
    /// declared dimensions.
    pub fn build(self) -> Result<PlantModel, PlantError> {
        if self.sampling_time <= 0.0 || !self.sampling_time.is_finite() {
            return Err(PlantError::InvalidSamplingTime);
        }
        let first_principles = self.first_principles.ok_or(PlantError::MissingPart {
            part: "dynamics",
        })?;
        let output_map = self.output_map.ok_or(PlantError::MissingPart { part: "output" })?;
        if self.n_z > 0 && self.algebraic_residual.is_none() {
            return Err(PlantError::MissingPart { part: "algebraic" });
        }
        let state_bounds = self
            .state_bounds
            .unwrap_or_else(|| BoxBounds::unbounded(self.n_x));
        let input_bounds = self
            .input_bounds
            .unwrap_or_else(|| BoxBounds::unbounded(self.n_u));
        if state_bounds.dim() != self.n_x || input_bounds.dim() != self.n_u {
            return Err(PlantError::DimensionMismatch {
                context: "bound dimensions".into(),
            });
        }

        let model = PlantModel {
            n_x: self.n_x,
            n_z: self.n_z,
            n_u: self.n_u,
            n_y: self.n_y,
            first_principles,
            learned_dynamics: None,
            algebraic_residual: self.algebraic_residual,
            learned_algebraic: None,
            output_map,
            parameters: self.parameters,
            sampling_time: self.sampling_time,
            state_bounds,
            input_bounds,
        };
        model.probe_dimensions()?;
        Ok(model)
    }
}

impl PlantModel {
    pub fn builder(n_x: usize, n_z: usize, n_u: usize, n_y: usize) -> PlantBuilder {
        assert!(n_x >= 1, "at least one dynamic state required");
        PlantBuilder {
            n_x,
            n_z,
            n_u,
            n_y,
            first_principles: None,
            algebraic_residual: None,
            output_map: None,
            parameters: Vec::new(),
            sampling_time: 1.0,
            state_bounds: None,
            input_bounds: None,
        }
    }

    /// A representative in-bounds point used for construction-time probes.
    fn probe_point(bounds: &BoxBounds) -> Vec<f64> {
        bounds
            .lower
            .iter()
            .zip(&bounds.upper)
            .map(|(&l, &u)| match (l.is_finite(), u.is_finite()) {
                (true, true) => 0.5 * (l + u),
                (true, false) => l + 1.0,
                (false, true) => u - 1.0,
                (false, false) => 0.0,
            })
            .collect()
    }

    fn probe_dimensions(&self) -> Result<(), PlantError> {
        let x = Self::probe_point(&self.state_bounds);
        let u = Self::probe_point(&self.input_bounds);
        let z = vec![0.0; self.n_z];
        let f = (self.first_principles)(&x, &z, &u, &self.parameters);
        if f.len() != self.n_x {
            return Err(PlantError::DimensionMismatch {
                context: format!("dynamics returned {} values, expected {}", f.len(), self.n_x),
            });
        }
        if let Some(g) = &self.algebraic_residual {
            let r = g(&x, &z, &u, &self.parameters);
            if r.len() != self.n_z {
                return Err(PlantError::DimensionMismatch {
                    context: format!("algebraic residual returned {} values, expected {}", r.len(), self.n_z),
                });
            }
        }
        let y = (self.output_map)(&x, &z);
        if y.len() != self.n_y {
            return Err(PlantError::DimensionMismatch {
                context: format!("output map returned {} values, expected {}", y.len(), self.n_y),
            });
        }
        if let Some(m) = &self.learned_dynamics {
            let inc = m.evaluate(&Self::learned_feature(&x, &z, &self.parameters));
            if inc.len() != self.n_x {
                return Err(PlantError::DimensionMismatch {
                    context: "learned dynamics increment length".into(),
                });
            }
        }
        if let Some(m) = &self.learned_algebraic {
            let inc = m.evaluate(&Self::learned_feature(&x, &z, &self.parameters));
            if inc.len() != self.n_z {
                return Err(PlantError::DimensionMismatch {
                    context: "learned algebraic increment length".into(),
                });
            }
        }
        Ok(())
    }

    /// Installs a learned dynamics increment `F` over `[x‖z‖p]`.
    pub fn with_learned_dynamics(mut self, map: TrainedMap) -> Result<Self, PlantError> {
        self.learned_dynamics = Some(map);
        self.probe_dimensions()?;
        Ok(self)
    }

    /// Installs a learned algebraic increment `G` over `[x‖z‖p]`.
    pub fn with_learned_algebraic(mut self, map: TrainedMap) -> Result<Self, PlantError> {
        self.learned_algebraic = Some(map);
        self.probe_dimensions()?;
        Ok(self)
    }

    /// Replaces the parameter vector (dimension probes re-run).
    pub fn with_parameters(mut self, parameters: Vec<f64>) -> Result<Self, PlantError> {
        self.parameters = parameters;
        self.probe_dimensions()?;
        Ok(self)
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

    pub fn n_z(&self) -> usize {
        self.n_z
    }

    pub fn n_u(&self) -> usize {
        self.n_u
    }

    pub fn n_y(&self) -> usize {
        self.n_y
    }

    pub fn sampling_time(&self) -> f64 {
        self.sampling_time
    }

    pub fn parameters(&self) -> &[f64] {
        &self.parameters
    }

    pub fn state_bounds(&self) -> &BoxBounds {
        &self.state_bounds
    }

    pub fn input_bounds(&self) -> &BoxBounds {
        &self.input_bounds
    }

    pub fn has_learned_dynamics(&self) -> bool {
        self.learned_dynamics.is_some()
    }

    pub fn learned_feature(x: &[f64], z: &[f64], p: &[f64]) -> Vec<f64> {
        let mut f = Vec::with_capacity(x.len() + z.len() + p.len());
        f.extend_from_slice(x);
        f.extend_from_slice(z);
        f.extend_from_slice(p);
        f
    }

    /// Total right-hand side `f + F`.
    fn state_derivative(&self, x: &[f64], z: &[f64], u: &[f64]) -> Vec<f64> {
        let mut dx = (self.first_principles)(x, z, u, &self.parameters);
        if let Some(m) = &self.learned_dynamics {
            let inc = m.evaluate(&Self::learned_feature(x, z, &self.parameters));
            for (d, i) in dx.iter_mut().zip(&inc) {
                *d += i;
            }
        }
        dx
    }

    /// Total algebraic residual `g + G`.
    fn algebraic(&self, x: &[f64], z: &[f64], u: &[f64]) -> Vec<f64> {
        let mut r = match &self.algebraic_residual {
            Some(g) => g(x, z, u, &self.parameters),
            None => Vec::new(),
        };
        if let Some(m) = &self.learned_algebraic {
            let inc = m.evaluate(&Self::learned_feature(x, z, &self.parameters));
            for (ri, i) in r.iter_mut().zip(&inc) {
                *ri += i;
            }
        }
        r
    }

    pub fn output(&self, x: &[f64], z: &[f64]) -> Vec<f64> {
        (self.output_map)(x, z)
    }

    /// Solves `g + G = 0` for `z` at fixed `(x, u)` by damped Newton with a
    /// finite-difference Jacobian.
    pub fn solve_algebraic(&self, x: &[f64], u: &[f64], z_guess: &[f64]) -> Result<Vec<f64>, PlantError> {
        if self.n_z == 0 {
            return Ok(Vec::new());
        }
        let residual = |z: &[f64]| self.algebraic(x, z, u);
        damped_newton(residual, z_guess, NEWTON_TOL, NEWTON_MAX_ITER)
    }

    /// One-step integrator `I(x, u, p)` with the fixed substep count.
    pub fn integrate_step(&self, x: &[f64], u: &[f64]) -> Result<(Vec<f64>, Vec<f64>), PlantError> {
        self.integrate_step_with_substeps(x, u, SUBSTEPS)
    }

    /// Classical 4th-order stepping of `ẋ = f + F` with `substeps` fixed
    /// substeps over one sampling interval; at every stage the algebraic
    /// state is re-solved, warm-started from the previous stage. Inputs
    /// outside the input box are allowed (open-loop studies).
    pub fn integrate_step_with_substeps(
        &self,
        x: &[f64],
        u: &[f64],
        substeps: usize,
    ) -> Result<(Vec<f64>, Vec<f64>), PlantError> {
        assert!(substeps >= 1);
        if x.len() != self.n_x || u.len() != self.n_u {
            return Err(PlantError::DimensionMismatch {
                context: format!("integrate_step got x:{} u:{}", x.len(), u.len()),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(PlantError::NonFiniteState);
        }
        let h = self.sampling_time / substeps as f64;
        let mut state = x.to_vec();
        let mut z_warm = vec![0.0; self.n_z];

        let stage = |s: &PlantModel, xs: &[f64], zw: &[f64]| -> Result<(Vec<f64>, Vec<f64>), PlantError> {
            let z = s.solve_algebraic(xs, u, zw)?;
            let dx = s.state_derivative(xs, &z, u);
            Ok((dx, z))
        };

        for _ in 0..substeps {
            let (k1, z1) = stage(self, &state, &z_warm)?;
            let x2: Vec<f64> = state.iter().zip(&k1).map(|(s, k)| s + 0.5 * h * k).collect();
            let (k2, z2) = stage(self, &x2, &z1)?;
            let x3: Vec<f64> = state.iter().zip(&k2).map(|(s, k)| s + 0.5 * h * k).collect();
            let (k3, z3) = stage(self, &x3, &z2)?;
            let x4: Vec<f64> = state.iter().zip(&k3).map(|(s, k)| s + h * k).collect();
            let (k4, z4) = stage(self, &x4, &z3)?;
            for i in 0..self.n_x {
                state[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            z_warm = z4;
            if state.iter().any(|v| !v.is_finite()) {
                return Err(PlantError::NonFiniteState);
            }
        }
        let z_next = self.solve_algebraic(&state, u, &z_warm)?;
        Ok((state, z_next))
    }

    /// Applies [`integrate_step`](Self::integrate_step) once per input and
    /// records the sampled trajectory. Errors carry the failing step index.
    pub fn simulate(&self, x0: &[f64], inputs: &[Vec<f64>]) -> Result<SampledTrajectory, PlantError> {
        if x0.len() != self.n_x {
            return Err(PlantError::DimensionMismatch {
                context: "initial state length".into(),
            });
        }
        let u_for_z0: Vec<f64> = inputs
            .first()
            .cloned()
            .unwrap_or_else(|| vec![0.0; self.n_u]);
        let z0 = self
            .solve_algebraic(x0, &u_for_z0, &vec![0.0; self.n_z])
            .map_err(|e| PlantError::at_step(0, e))?;

        let mut times = vec![0.0];
        let mut states = vec![x0.to_vec()];
        let mut algebraic = vec![z0.clone()];
        let mut outputs = vec![self.output(x0, &z0)];
        let mut x = x0.to_vec();
        for (k, u) in inputs.iter().enumerate() {
            let (x_next, z_next) = self
                .integrate_step(&x, u)
                .map_err(|e| PlantError::at_step(k, e))?;
            times.push((k + 1) as f64 * self.sampling_time);
            outputs.push(self.output(&x_next, &z_next));
            states.push(x_next.clone());
            algebraic.push(z_next);
            x = x_next;
        }
        Ok(SampledTrajectory {
            times,
            states,
            algebraic,
            inputs: inputs.to_vec(),
            outputs,
        })
    }

    /// Solves the stacked steady-state residual `(f + F, g + G) = 0` for
    /// `(x, z)` at fixed input `u` by damped Newton from `x_guess`.
    pub fn steady_state(&self, u: &[f64], x_guess: &[f64]) -> Result<(Vec<f64>, Vec<f64>), PlantError> {
        if u.len() != self.n_u || x_guess.len() != self.n_x {
            return Err(PlantError::DimensionMismatch {
                context: "steady_state arguments".into(),
            });
        }
        let n_x = self.n_x;
        let residual = |v: &[f64]| -> Vec<f64> {
            let (x, z) = v.split_at(n_x);
            let mut r = self.state_derivative(x, z, u);
            r.extend(self.algebraic(x, z, u));
            r
        };
        let mut guess = x_guess.to_vec();
        guess.extend(vec![0.0; self.n_z]);
        let sol = damped_newton(residual, &guess, STEADY_TOL, STEADY_MAX_ITER)?;
        let (x_s, z_s) = sol.split_at(n_x);
        Ok((x_s.to_vec(), z_s.to_vec()))
    }
}

/// Damped Newton iteration on `residual(v) = 0` with finite-difference
/// Jacobian and residual-norm backtracking.
pub(crate) fn damped_newton<R>(
    residual: R,
    guess: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>, PlantError>
where
    R: Fn(&[f64]) -> Vec<f64>,
{
    let n = guess.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut v = guess.to_vec();
    let norm_inf = |r: &[f64]| r.iter().fold(0.0f64, |m, x| m.max(x.abs()));

    for iteration in 0..max_iter {
        let r = residual(&v);
        debug_assert_eq!(r.len(), n, "residual dimension must match unknowns");
        let rn = norm_inf(&r);
        if !rn.is_finite() {
            return Err(PlantError::NonFiniteState);
        }
        if rn <= tol {
            return Ok(v);
        }
        // Finite-difference Jacobian.
        let mut jac = DenseMatrix::zeros(n, n);
        let mut probe = v.clone();
        for j in 0..n {
            let h = 1e-7 * (1.0 + v[j].abs());
            probe[j] = v[j] + h;
            let rp = residual(&probe);
            probe[j] = v[j] - h;
            let rm = residual(&probe);
            probe[j] = v[j];
            for i in 0..n {
                jac.set(i, j, (rp[i] - rm[i]) / (2.0 * h));
            }
        }
        let neg_r: Vec<f64> = r.iter().map(|x| -x).collect();
        let delta = solve_linear(&jac, &neg_r).ok_or(PlantError::NewtonDiverged {
            iterations: iteration,
            residual: rn,
        })?;
        // Backtrack until the residual norm decreases.
        let mut lambda = 1.0;
        let mut accepted = false;
        while lambda >= 1.0 / 1024.0 {
            let cand: Vec<f64> = v.iter().zip(&delta).map(|(a, d)| a + lambda * d).collect();
            let rc = norm_inf(&residual(&cand));
            if rc.is_finite() && rc < rn {
                v = cand;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if !accepted {
            return Err(PlantError::NewtonDiverged {
                iterations: iteration + 1,
                residual: rn,
            });
        }
    }
    let rn = norm_inf(&residual(&v));
    if rn <= tol {
        Ok(v)
    } else {
        Err(PlantError::NewtonDiverged {
            iterations: max_iter,
            residual: rn,
        })
    }
}

/// Equidistantly sampled closed- or open-loop trajectory with piecewise
/// constant inputs: `inputs[k]` acts on `[times[k], times[k+1])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub algebraic: Vec<Vec<f64>>,
    pub inputs: Vec<Vec<f64>>,
    pub outputs: Vec<Vec<f64>>,
}

impl SampledTrajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn validate(&self) -> Result<(), PlantError> {
        if self.times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(PlantError::DimensionMismatch {
                context: "times must be strictly increasing".into(),
            });
        }
        if !self.inputs.is_empty() && self.inputs.len() + 1 != self.times.len() {
            return Err(PlantError::DimensionMismatch {
                context: "inputs must have exactly one fewer entry than times".into(),
            });
        }
        Ok(())
    }
}

/// Plant operating regime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeKind {
    Continuous,
    Batch,
    FedBatch,
}

/// Operating mode: continuous runs are open-ended; batch and fed-batch runs
/// have a finite duration and restart from the same initial state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatingMode {
    pub kind: ModeKind,
    pub batch_duration: Option<f64>,
    pub initial_state: Vec<f64>,
}

impl OperatingMode {
    pub fn continuous(initial_state: Vec<f64>) -> Self {
        OperatingMode {
            kind: ModeKind::Continuous,
            batch_duration: None,
            initial_state,
        }
    }

    pub fn batch(kind: ModeKind, duration: f64, initial_state: Vec<f64>) -> Result<Self, PlantError> {
        if !(duration.is_finite() && duration > 0.0) {
            return Err(PlantError::InvalidBatchDuration);
        }
        Ok(OperatingMode {
            kind,
            batch_duration: Some(duration),
            initial_state,
        })
    }

    pub fn validate(&self) -> Result<(), PlantError> {
        match self.kind {
            ModeKind::Continuous => Ok(()),
            ModeKind::Batch | ModeKind::FedBatch => match self.batch_duration {
                Some(d) if d.is_finite() && d > 0.0 => Ok(()),
                _ => Err(PlantError::InvalidBatchDuration),
            },
        }
    }
}
