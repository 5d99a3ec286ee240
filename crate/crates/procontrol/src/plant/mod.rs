//! Plant abstraction: semi-explicit DAE models with optional learned parts,
//! one-step integration, steady states, and the benchmark plants.

mod benchmark;
mod model;

pub use benchmark::{
    make_benchmark, Benchmark, BenchmarkKind, Hole, HoleKind, HybridSkeleton, CSTR_INITIAL_STATE,
    CSTR_NOMINAL_INPUT, CSTR_PARAMS, CSTR_SAMPLING_TIME, FEDBATCH_INITIAL_STATE,
    FEDBATCH_NOMINAL_INPUT, FEDBATCH_PARAMS, FEDBATCH_SAMPLING_TIME,
};
pub(crate) use model::damped_newton;
pub use model::{
    DynamicsFn, ModeKind, OperatingMode, OutputFn, PlantBuilder, PlantModel, SampledTrajectory,
    SUBSTEPS,
};

use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum PlantError {
    #[error("algebraic/steady-state Newton diverged after {iterations} iterations (residual {residual:.3e})")]
    NewtonDiverged { iterations: usize, residual: f64 },
    #[error("integration produced non-finite values")]
    NonFiniteState,
    #[error("dimension mismatch: {context}")]
    DimensionMismatch { context: String },
    #[error("sampling time must be positive and finite")]
    InvalidSamplingTime,
    #[error("batch modes need a finite positive duration")]
    InvalidBatchDuration,
    #[error("plant is missing its {part} part")]
    MissingPart { part: &'static str },
    #[error("step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<PlantError>,
    },
}

impl PlantError {
    pub(crate) fn at_step(step: usize, source: PlantError) -> Self {
        PlantError::AtStep {
            step,
            source: Box::new(source),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::BoxBounds;

    fn scalar_decay() -> PlantModel {
        // ẋ = −x + u
        PlantModel::builder(1, 0, 1, 1)
            .dynamics(|x: &[f64], _z: &[f64], u: &[f64], _p: &[f64]| vec![-x[0] + u[0]])
            .output(|x: &[f64], _z: &[f64]| x.to_vec())
            .sampling_time(0.1)
            .build()
            .unwrap()
    }

    #[test]
    fn decay_step_matches_exponential() {
        let model = scalar_decay();
        let (x, _) = model.integrate_step(&[1.0], &[0.0]).unwrap();
        assert!((x[0] - (-0.1f64).exp()).abs() < 1e-7, "got {}", x[0]);
    }

    #[test]
    fn zero_dynamics_is_identity() {
        let model = PlantModel::builder(2, 0, 1, 2)
            .dynamics(|_x: &[f64], _z: &[f64], _u: &[f64], _p: &[f64]| vec![0.0, 0.0])
            .output(|x: &[f64], _z: &[f64]| x.to_vec())
            .sampling_time(1.0)
            .build()
            .unwrap();
        let (x, _) = model.integrate_step(&[3.0, -4.5], &[0.0]).unwrap();
        assert_eq!(x, vec![3.0, -4.5]);
    }

    #[test]
    fn identity_algebraic_coupling_tracks_state() {
        // Residual z − x = 0 forces z to follow x.
        let model = PlantModel::builder(1, 1, 1, 1)
            .dynamics(|x: &[f64], _z: &[f64], u: &[f64], _p: &[f64]| vec![-x[0] + u[0]])
            .algebraic(|x: &[f64], z: &[f64], _u: &[f64], _p: &[f64]| vec![z[0] - x[0]])
            .output(|_x: &[f64], z: &[f64]| z.to_vec())
            .sampling_time(0.2)
            .build()
            .unwrap();
        let (x, z) = model.integrate_step(&[2.0], &[0.5]).unwrap();
        assert!((z[0] - x[0]).abs() < 1e-10);
    }

    #[test]
    fn empty_input_sequence_gives_single_record() {
        let model = scalar_decay();
        let traj = model.simulate(&[1.5], &[]).unwrap();
        assert_eq!(traj.times, vec![0.0]);
        assert_eq!(traj.states, vec![vec![1.5]]);
        assert_eq!(traj.outputs, vec![vec![1.5]]);
        assert!(traj.inputs.is_empty());
        traj.validate().unwrap();
    }

    #[test]
    fn constant_input_reaches_steady_value() {
        let model = scalar_decay();
        let traj = model.simulate(&[0.0], &vec![vec![2.0]; 100]).unwrap();
        let last = traj.states.last().unwrap()[0];
        assert!((last - 2.0).abs() < 1e-4, "final state {last}");
    }

    #[test]
    fn simulate_equals_chained_steps_bitwise() {
        let model = scalar_decay();
        let inputs = vec![vec![0.3], vec![-0.7], vec![1.1], vec![0.0]];
        let traj = model.simulate(&[0.9], &inputs).unwrap();
        let mut x = vec![0.9];
        for (k, u) in inputs.iter().enumerate() {
            let (xn, _) = model.integrate_step(&x, u).unwrap();
            assert_eq!(xn, traj.states[k + 1], "bitwise at step {k}");
            x = xn;
        }
    }

    #[test]
    fn steady_state_of_linear_plant() {
        let model = scalar_decay();
        let (x_s, _) = model.steady_state(&[2.0], &[0.0]).unwrap();
        assert!((x_s[0] - 2.0).abs() < 1e-9);
        let (x0, _) = model.steady_state(&[0.0], &[1.0]).unwrap();
        assert!(x0[0].abs() < 1e-9);
    }

    #[test]
    fn steady_state_feeds_back_as_fixed_point() {
        let model = scalar_decay();
        let (x_s, _) = model.steady_state(&[1.3], &[0.0]).unwrap();
        let (x_next, _) = model.integrate_step(&x_s, &[1.3]).unwrap();
        assert!((x_next[0] - x_s[0]).abs() < 1e-7);
    }

    #[test]
    fn substep_halving_shows_high_order_convergence() {
        // Error from halving the substep count dominates the error from
        // doubling it (empirical order ≥ 3 on a smooth nonlinear plant).
        let bench = make_benchmark(BenchmarkKind::FedbatchBioreactor, false);
        let x0 = bench.initial_state.clone();
        let u = vec![1.0];
        let reference = bench
            .model
            .integrate_step_with_substeps(&x0, &u, 160)
            .unwrap()
            .0;
        let err = |substeps: usize| -> f64 {
            let x = bench
                .model
                .integrate_step_with_substeps(&x0, &u, substeps)
                .unwrap()
                .0;
            x.iter()
                .zip(&reference)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        };
        let (e5, e10, e20) = (err(5), err(10), err(20));
        assert!(e5 >= e10 && e10 >= e20, "{e5} {e10} {e20}");
        assert!(e5 / e10.max(1e-300) >= 8.0, "order ≥ 3: {e5} vs {e10}");
    }

    #[test]
    fn non_finite_state_is_reported_with_step_index() {
        // ẋ = x² blows up in finite time.
        let model = PlantModel::builder(1, 0, 1, 1)
            .dynamics(|x: &[f64], _z: &[f64], _u: &[f64], _p: &[f64]| vec![x[0] * x[0]])
            .output(|x: &[f64], _z: &[f64]| x.to_vec())
            .sampling_time(1.0)
            .build()
            .unwrap();
        let r = model.simulate(&[5.0], &vec![vec![0.0]; 10]);
        match r {
            Err(PlantError::AtStep { .. }) => {}
            other => panic!("expected step-annotated failure, got {other:?}"),
        }
    }

    #[test]
    fn probe_rejects_wrong_output_dimension() {
        let r = PlantModel::builder(1, 0, 1, 2)
            .dynamics(|x: &[f64], _z: &[f64], _u: &[f64], _p: &[f64]| vec![-x[0]])
            .output(|x: &[f64], _z: &[f64]| x.to_vec())
            .build();
        assert!(matches!(r, Err(PlantError::DimensionMismatch { .. })));
    }

    #[test]
    fn operating_mode_validation() {
        assert!(OperatingMode::batch(ModeKind::Batch, 0.0, vec![1.0]).is_err());
        assert!(OperatingMode::batch(ModeKind::FedBatch, 20.0, vec![1.0]).is_ok());
        OperatingMode::continuous(vec![0.0]).validate().unwrap();
    }

    #[test]
    fn input_outside_bounds_is_allowed_for_open_loop_studies() {
        let model = PlantModel::builder(1, 0, 1, 1)
            .dynamics(|x: &[f64], _z: &[f64], u: &[f64], _p: &[f64]| vec![-x[0] + u[0]])
            .output(|x: &[f64], _z: &[f64]| x.to_vec())
            .input_bounds(BoxBounds::new(vec![-1.0], vec![1.0]))
            .sampling_time(0.1)
            .build()
            .unwrap();
        assert!(model.integrate_step(&[0.0], &[5.0]).is_ok());
    }
}
