//! Finite differences, projected-gradient descent, and the quadratic-penalty
//! loop for equality-constrained problems.

use serde::{Deserialize, Serialize};

use super::NumError;

/// Armijo sufficient-decrease constant for the backtracking line search.
const ARMIJO: f64 = 1e-4;
/// Initial quadratic-penalty weight.
const PENALTY_INITIAL: f64 = 10.0;
/// Equality violation accepted by the penalty loop.
const PENALTY_TOLERANCE: f64 = 1e-6;
/// Outer penalty rounds without improvement before giving up.
const PENALTY_STALL_ROUNDS: usize = 5;
/// Hard cap on outer penalty rounds.
const PENALTY_MAX_ROUNDS: usize = 30;

/// Tuning knobs for [`minimize_box`] and [`solve_penalty_nlp`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    pub initial_step: f64,
    /// Line-search shrink factor, in (0, 1).
    pub backtracking_factor: f64,
    /// Growth factor for the quadratic-penalty weight, > 1.
    pub penalty_growth: f64,
    /// Base finite-difference step; scaled by `1 + |xᵢ|` per component.
    pub fd_step: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            max_iterations: 400,
            gradient_tolerance: 1e-8,
            initial_step: 1.0,
            backtracking_factor: 0.5,
            penalty_growth: 10.0,
            fd_step: 1e-6,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<(), NumError> {
        if self.max_iterations < 1
            || self.gradient_tolerance <= 0.0
            || self.initial_step <= 0.0
            || !(0.0 < self.backtracking_factor && self.backtracking_factor < 1.0)
            || self.penalty_growth <= 1.0
            || self.fd_step <= 0.0
        {
            return Err(NumError::InvalidConfig);
        }
        Ok(())
    }
}

/// Central-difference gradient with per-component step `h·(1 + |xᵢ|)`.
pub fn finite_diff_gradient<F>(objective: F, point: &[f64], step: f64) -> Result<Vec<f64>, NumError>
where
    F: Fn(&[f64]) -> f64,
{
    assert!(step > 0.0, "finite-difference step must be positive");
    let mut grad = vec![0.0; point.len()];
    let mut probe = point.to_vec();
    for i in 0..point.len() {
        let h = step * (1.0 + point[i].abs());
        probe[i] = point[i] + h;
        let fp = objective(&probe);
        probe[i] = point[i] - h;
        let fm = objective(&probe);
        probe[i] = point[i];
        if !fp.is_finite() || !fm.is_finite() {
            return Err(NumError::NonFiniteObjective);
        }
        grad[i] = (fp - fm) / (2.0 * h);
    }
    Ok(grad)
}

/// Outcome of a box-constrained minimization.
#[derive(Debug, Clone)]
pub struct MinimizeResult {
    pub argmin: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    /// Objective value after every accepted iterate, starting at the initial
    /// point. Non-increasing by construction of the line search.
    pub trace: Vec<f64>,
    /// True when the projected-gradient norm met the tolerance.
    pub converged: bool,
}

fn project(x: &mut [f64], lower: &[f64], upper: &[f64]) {
    for i in 0..x.len() {
        x[i] = x[i].max(lower[i]).min(upper[i]);
    }
}

fn check_bounds(lower: &[f64], upper: &[f64]) -> Result<(), NumError> {
    for i in 0..lower.len() {
        if lower[i] > upper[i] {
            return Err(NumError::InfeasibleBounds { component: i });
        }
    }
    Ok(())
}

/// Projected-gradient descent with Armijo backtracking, gradients by central
/// finite differences. Bounds may be ±∞. The returned iterate always lies
/// inside the box.
pub fn minimize_box<F>(
    objective: F,
    initial: &[f64],
    lower: &[f64],
    upper: &[f64],
    config: &OptimizerConfig,
) -> Result<MinimizeResult, NumError>
where
    F: Fn(&[f64]) -> f64,
{
    let fd = config.fd_step;
    let f = &objective;
    minimize_box_impl(
        f,
        |x| finite_diff_gradient(f, x, fd),
        initial,
        lower,
        upper,
        config,
    )
}

/// Same as [`minimize_box`] but with a caller-supplied gradient (e.g. from
/// reverse-mode accumulation).
pub fn minimize_box_with_grad<F, G>(
    objective: F,
    gradient: G,
    initial: &[f64],
    lower: &[f64],
    upper: &[f64],
    config: &OptimizerConfig,
) -> Result<MinimizeResult, NumError>
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
{
    minimize_box_impl(
        &objective,
        |x| {
            let g = gradient(x);
            if g.iter().any(|v| !v.is_finite()) {
                Err(NumError::NonFiniteObjective)
            } else {
                Ok(g)
            }
        },
        initial,
        lower,
        upper,
        config,
    )
}

fn minimize_box_impl<F, G>(
    objective: &F,
    gradient: G,
    initial: &[f64],
    lower: &[f64],
    upper: &[f64],
    config: &OptimizerConfig,
) -> Result<MinimizeResult, NumError>
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Result<Vec<f64>, NumError>,
{
    config.validate()?;
    let n = initial.len();
    assert_eq!(lower.len(), n, "lower bound length mismatch");
    assert_eq!(upper.len(), n, "upper bound length mismatch");
    check_bounds(lower, upper)?;

    let mut x = initial.to_vec();
    project(&mut x, lower, upper);
    let mut fx = objective(&x);
    if !fx.is_finite() {
        return Err(NumError::NonFiniteObjective);
    }
    let mut trace = vec![fx];
    let mut converged = false;
    let mut iterations = 0;
    // Step memory: each line search starts from twice the last accepted
    // step, so well-scaled problems stop re-paying the backtracking cost.
    let mut step_start = config.initial_step;

    for _ in 0..config.max_iterations {
        let grad = gradient(&x)?;

        // Projected-gradient stationarity measure: ‖x − P(x − g)‖.
        let mut probe = x.clone();
        for i in 0..n {
            probe[i] -= grad[i];
        }
        project(&mut probe, lower, upper);
        let pg_norm = probe
            .iter()
            .zip(&x)
            .map(|(p, xi)| (p - xi) * (p - xi))
            .sum::<f64>()
            .sqrt();
        if pg_norm <= config.gradient_tolerance {
            converged = true;
            break;
        }

        // Backtracking along the projected steepest-descent arc. Non-finite
        // probes are rejected exactly like insufficient decrease; only
        // accepted iterates must be finite.
        let mut step = step_start;
        let mut accepted = false;
        for _ in 0..80 {
            let mut cand = x.clone();
            for i in 0..n {
                cand[i] -= step * grad[i];
            }
            project(&mut cand, lower, upper);
            let displacement: f64 = cand
                .iter()
                .zip(&x)
                .map(|(c, xi)| (c - xi) * (c - xi))
                .sum();
            if displacement == 0.0 {
                break;
            }
            let fc = objective(&cand);
            if fc.is_finite() && fc <= fx - ARMIJO / step * displacement {
                x = cand;
                fx = fc;
                accepted = true;
                step_start = (step * 2.0).min(1e12);
                break;
            }
            step *= config.backtracking_factor;
        }
        iterations += 1;
        if !accepted {
            // Line search exhausted: treat as numerically stationary.
            converged = pg_norm <= config.gradient_tolerance.max(1e-12) * 1e4;
            break;
        }
        trace.push(fx);
    }

    Ok(MinimizeResult {
        argmin: x,
        value: fx,
        iterations,
        trace,
        converged,
    })
}

/// Outcome of the quadratic-penalty loop.
#[derive(Debug, Clone)]
pub struct PenaltyResult {
    pub argmin: Vec<f64>,
    /// Raw objective at `argmin` (without penalty terms).
    pub value: f64,
    /// `max |residual|` re-evaluated at `argmin`.
    pub max_equality_violation: f64,
    pub outer_rounds: usize,
}

/// Minimizes `objective` subject to `equality_residuals(x) = 0` and box
/// bounds by a quadratic-penalty loop: each round solves the box problem on
/// `objective + ρ·‖residual‖²` and grows ρ until the violation drops below
/// 1e-6 or stalls.
pub fn solve_penalty_nlp<F, R>(
    objective: F,
    equality_residuals: R,
    initial: &[f64],
    lower: &[f64],
    upper: &[f64],
    config: &OptimizerConfig,
) -> Result<PenaltyResult, NumError>
where
    F: Fn(&[f64]) -> f64,
    R: Fn(&[f64]) -> Vec<f64>,
{
    config.validate()?;
    check_bounds(lower, upper)?;

    let max_violation = |x: &[f64]| -> f64 {
        equality_residuals(x)
            .iter()
            .fold(0.0f64, |m, r| m.max(r.abs()))
    };

    let mut rho = PENALTY_INITIAL;
    let mut x = initial.to_vec();
    project(&mut x, lower, upper);
    let mut best_violation = f64::INFINITY;
    let mut stalled = 0;

    for round in 1..=PENALTY_MAX_ROUNDS {
        let penalized = |v: &[f64]| -> f64 {
            let res = equality_residuals(v);
            objective(v) + rho * res.iter().map(|r| r * r).sum::<f64>()
        };
        let sub = minimize_box(penalized, &x, lower, upper, config)?;
        x = sub.argmin;
        let violation = max_violation(&x);
        if violation <= PENALTY_TOLERANCE {
            return Ok(PenaltyResult {
                value: objective(&x),
                max_equality_violation: violation,
                argmin: x,
                outer_rounds: round,
            });
        }
        // Require a meaningful shrink to count as progress.
        if violation < 0.9 * best_violation {
            best_violation = violation;
            stalled = 0;
        } else {
            stalled += 1;
            if stalled >= PENALTY_STALL_ROUNDS {
                return Err(NumError::PenaltyDiverged {
                    violation,
                    rounds: round,
                });
            }
        }
        rho *= config.penalty_growth;
    }

    let violation = max_violation(&x);
    if violation <= PENALTY_TOLERANCE {
        Ok(PenaltyResult {
            value: objective(&x),
            max_equality_violation: violation,
            argmin: x,
            outer_rounds: PENALTY_MAX_ROUNDS,
        })
    } else {
        Err(NumError::PenaltyDiverged {
            violation,
            rounds: PENALTY_MAX_ROUNDS,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn cfg() -> OptimizerConfig {
        OptimizerConfig::default()
    }

    #[test]
    fn gradient_of_square_matches_analytic() {
        let g = finite_diff_gradient(|x| x[0] * x[0], &[3.0], 1e-5).unwrap();
        assert!((g[0] - 6.0).abs() < 1e-6);
    }

    #[test]
    fn gradient_of_constant_is_zero() {
        let g = finite_diff_gradient(|_| 4.2, &[1.0, -2.0, 0.0], 1e-6).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn gradient_of_linear_is_coefficients() {
        let g = finite_diff_gradient(|x| x[0] + 2.0 * x[1], &[0.3, -0.7], 1e-6).unwrap();
        assert!((g[0] - 1.0).abs() < 1e-8);
        assert!((g[1] - 2.0).abs() < 1e-8);
    }

    #[test]
    fn gradient_rejects_non_finite() {
        let r = finite_diff_gradient(|x| (1.0 / x[0]).ln(), &[0.0], 1e-6);
        assert!(matches!(r, Err(NumError::NonFiniteObjective)));
    }

    #[test]
    fn gradient_of_random_quadratics_matches_hx() {
        // f(x) = ½ xᵀHx has gradient Hx; 20 random symmetric H.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let n = rng.gen_range(1..6);
            let mut h = vec![vec![0.0; n]; n];
            for i in 0..n {
                for j in 0..=i {
                    let v = rng.gen_range(-2.0..2.0);
                    h[i][j] = v;
                    h[j][i] = v;
                }
            }
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let hc = h.clone();
            let f = move |v: &[f64]| -> f64 {
                let mut acc = 0.0;
                for i in 0..v.len() {
                    for j in 0..v.len() {
                        acc += 0.5 * v[i] * hc[i][j] * v[j];
                    }
                }
                acc
            };
            let g = finite_diff_gradient(f, &x, 1e-6).unwrap();
            for i in 0..n {
                let exact: f64 = (0..n).map(|j| h[i][j] * x[j]).sum();
                let denom = exact.abs().max(1e-3);
                assert!(
                    (g[i] - exact).abs() / denom < 1e-5,
                    "component {i}: fd {} vs exact {exact}",
                    g[i]
                );
            }
        }
    }

    #[test]
    fn boundary_optimum_lands_on_bound() {
        let r = minimize_box(|x| (x[0] - 2.0).powi(2), &[0.5], &[0.0], &[1.0], &cfg()).unwrap();
        assert!((r.argmin[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn interior_optimum_found() {
        let r = minimize_box(|x| x[0] * x[0], &[0.9], &[-1.0], &[1.0], &cfg()).unwrap();
        assert!(r.argmin[0].abs() < 1e-6);
    }

    #[test]
    fn unbounded_two_dim_quadratic() {
        let r = minimize_box(
            |x| (x[0] - 1.0).powi(2) + (x[1] + 1.0).powi(2),
            &[5.0, 5.0],
            &[f64::NEG_INFINITY, f64::NEG_INFINITY],
            &[f64::INFINITY, f64::INFINITY],
            &cfg(),
        )
        .unwrap();
        assert!((r.argmin[0] - 1.0).abs() < 1e-5);
        assert!((r.argmin[1] + 1.0).abs() < 1e-5);
    }

    #[test]
    fn infeasible_bounds_rejected() {
        let r = minimize_box(|x| x[0], &[0.0], &[1.0], &[-1.0], &cfg());
        assert!(matches!(
            r,
            Err(NumError::InfeasibleBounds { component: 0 })
        ));
    }

    #[test]
    fn trace_is_non_increasing() {
        let r = minimize_box(
            |x| (x[0] - 0.3).powi(4) + x[1] * x[1],
            &[2.0, -2.0],
            &[-5.0, -5.0],
            &[5.0, 5.0],
            &cfg(),
        )
        .unwrap();
        for w in r.trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-15);
        }
    }

    #[test]
    fn iterates_stay_in_box() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let lo = rng.gen_range(-2.0..0.0);
            let hi = rng.gen_range(0.1..2.0);
            let target = rng.gen_range(-4.0..4.0);
            let r = minimize_box(
                |x| (x[0] - target).powi(2),
                &[rng.gen_range(lo..hi)],
                &[lo],
                &[hi],
                &cfg(),
            )
            .unwrap();
            assert!(r.argmin[0] >= lo && r.argmin[0] <= hi);
        }
    }

    #[test]
    fn penalty_equality_forces_answer() {
        let r = solve_penalty_nlp(
            |x| x[0] * x[0],
            |x| vec![x[0] - 1.0],
            &[0.0],
            &[f64::NEG_INFINITY],
            &[f64::INFINITY],
            &cfg(),
        )
        .unwrap();
        assert!((r.argmin[0] - 1.0).abs() < 1e-4);
        assert!(r.max_equality_violation <= 1e-6);
    }

    #[test]
    fn penalty_box_only_problem() {
        // min (x−3)² with x ≤ 1 expressed as a box: optimum at the bound.
        let r = solve_penalty_nlp(
            |x| (x[0] - 3.0).powi(2),
            |_| vec![],
            &[0.0],
            &[f64::NEG_INFINITY],
            &[1.0],
            &cfg(),
        )
        .unwrap();
        assert!((r.argmin[0] - 1.0).abs() < 1e-6);
        assert_eq!(r.max_equality_violation, 0.0);
    }

    #[test]
    fn penalty_detects_infeasibility() {
        // x = 5 is unreachable inside [0, 1].
        let r = solve_penalty_nlp(
            |x| x[0] * x[0],
            |x| vec![x[0] - 5.0],
            &[0.5],
            &[0.0],
            &[1.0],
            &cfg(),
        );
        assert!(matches!(r, Err(NumError::PenaltyDiverged { .. })));
    }

    #[test]
    fn penalty_violation_matches_reevaluation() {
        let residuals = |x: &[f64]| vec![x[0] + x[1] - 1.0, x[0] - x[1]];
        let r = solve_penalty_nlp(
            |x| x[0] * x[0] + x[1] * x[1],
            residuals,
            &[0.0, 0.0],
            &[-10.0, -10.0],
            &[10.0, 10.0],
            &cfg(),
        )
        .unwrap();
        let again = residuals(&r.argmin)
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        assert_eq!(r.max_equality_violation, again);
    }
}
