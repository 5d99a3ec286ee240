//! Built-in benchmark plants and the hole mechanism that lets a learned map
//! stand in for a hidden mechanistic term.
//!
//! Nominal parameter values are pinned constants; see
//! `docs/benchmark_parameters.txt` at the repository root for the documented
//! reference values.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::model::PlantModel;
use super::PlantError;
use crate::numkit::BoxBounds;
use crate::oracle::TrainedMap;

/// Where a plugged map enters the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HoleKind {
    Dynamics,
    Algebraic,
}

type FeatureFn = Arc<dyn Fn(&[f64], &[f64], &[f64]) -> Vec<f64> + Send + Sync>;
type AssembleFn = Arc<dyn Fn(&[f64], &[f64], &[f64], &[f64]) -> Vec<f64> + Send + Sync>;

/// A hole in a hybrid model: it describes how a generic feature→label map is
/// wired into the plant as the additive increment `F(x, z, p)` (or `G`).
/// `feature` extracts the map input from `(x, z, p)`; `assemble` turns the
/// map output back into a state (or residual) increment.
#[derive(Clone)]
pub struct Hole {
    pub kind: HoleKind,
    n_x: usize,
    n_z: usize,
    n_p: usize,
    map_input_dim: usize,
    map_output_dim: usize,
    increment_dim: usize,
    feature: FeatureFn,
    assemble: AssembleFn,
}

impl Hole {
    #[allow(clippy::too_many_arguments)]
    pub fn new<F, A>(
        kind: HoleKind,
        dims: (usize, usize, usize),
        map_input_dim: usize,
        map_output_dim: usize,
        increment_dim: usize,
        feature: F,
        assemble: A,
    ) -> Self
    where
        F: Fn(&[f64], &[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static,
        A: Fn(&[f64], &[f64], &[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        Hole {
            kind,
            n_x: dims.0,
            n_z: dims.1,
            n_p: dims.2,
            map_input_dim,
            map_output_dim,
            increment_dim,
            feature: Arc::new(feature),
            assemble: Arc::new(assemble),
        }
    }

    pub fn map_input_dim(&self) -> usize {
        self.map_input_dim
    }

    pub fn map_output_dim(&self) -> usize {
        self.map_output_dim
    }

    /// The map input built from a plant evaluation point.
    pub fn map_feature(&self, x: &[f64], z: &[f64], p: &[f64]) -> Vec<f64> {
        (self.feature)(x, z, p)
    }

    /// Wraps `inner` (a map over the hole's own feature space) into a
    /// [`TrainedMap`] over the plant's concatenated `[x‖z‖p]` space, ready
    /// for [`PlantModel::with_learned_dynamics`].
    pub fn plug(&self, inner: Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>) -> TrainedMap {
        let feature = self.feature.clone();
        let assemble = self.assemble.clone();
        let (n_x, n_z) = (self.n_x, self.n_z);
        let total = self.n_x + self.n_z + self.n_p;
        let increment_dim = self.increment_dim;
        TrainedMap::from_fn(total, increment_dim, move |concat: &[f64]| {
            let x = &concat[..n_x];
            let z = &concat[n_x..n_x + n_z];
            let p = &concat[n_x + n_z..];
            let out = inner(&feature(x, z, p));
            assemble(&out, x, z, p)
        })
    }

    /// Plugs a [`TrainedMap`] trained on the hole's feature space.
    pub fn plug_map(&self, map: &TrainedMap) -> TrainedMap {
        let map = map.clone();
        self.plug(Arc::new(move |f: &[f64]| map.evaluate(f)))
    }
}

/// A plant with a hole where a mechanistic term is missing; realize it by
/// plugging a map into the hole.
#[derive(Clone)]
pub struct HybridSkeleton {
    pub model: PlantModel,
    pub hole: Hole,
}

impl HybridSkeleton {
    /// Installs `inner` into the hole and returns the runnable model.
    pub fn realize(&self, inner: Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>) -> Result<PlantModel, PlantError> {
        let plugged = self.hole.plug(inner);
        match self.hole.kind {
            HoleKind::Dynamics => self.model.clone().with_learned_dynamics(plugged),
            HoleKind::Algebraic => self.model.clone().with_learned_algebraic(plugged),
        }
    }

    pub fn realize_map(&self, map: &TrainedMap) -> Result<PlantModel, PlantError> {
        let map = map.clone();
        self.realize(Arc::new(move |f: &[f64]| map.evaluate(f)))
    }
}

/// Available benchmark plants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchmarkKind {
    Cstr,
    FedbatchBioreactor,
}

/// A constructed benchmark: the full model, optionally the skeleton with the
/// kinetics removed, and the ground-truth kinetics as a training oracle.
pub struct Benchmark {
    /// Full plant when `hide_kinetics` was false, otherwise the skeleton
    /// model with the kinetic term absent.
    pub model: PlantModel,
    /// Present when the kinetics were hidden.
    pub skeleton: Option<HybridSkeleton>,
    /// Ground-truth kinetics over the hole's feature space: `r(c, Θ)` for
    /// the CSTR, `μ(S)` for the bioreactor.
    pub true_kinetics: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
    pub initial_state: Vec<f64>,
    pub nominal_input: Vec<f64>,
}

// CSTR parameter layout: [q/V, c_in, Θ_in, k0, E, γ, β].
pub const CSTR_PARAMS: [f64; 7] = [1.0, 1.0, 350.0, 1.1e4, 3500.0, 40.0, 1.0];
pub const CSTR_SAMPLING_TIME: f64 = 0.5;
pub const CSTR_INITIAL_STATE: [f64; 2] = [0.8, 330.0];
pub const CSTR_NOMINAL_INPUT: [f64; 1] = [300.0];

// Fed-batch bioreactor parameter layout: [μ_max, K_s, Y, S_in].
pub const FEDBATCH_PARAMS: [f64; 4] = [0.4, 0.2, 0.5, 10.0];
pub const FEDBATCH_SAMPLING_TIME: f64 = 0.5;
pub const FEDBATCH_INITIAL_STATE: [f64; 3] = [1.0, 0.5, 100.0];
pub const FEDBATCH_NOMINAL_INPUT: [f64; 1] = [1.0];

fn cstr_rate(c: f64, theta: f64, p: &[f64]) -> f64 {
    // Arrhenius rate r = k0 · exp(−E/Θ) · c with E in temperature units.
    p[3] * (-p[4] / theta).exp() * c
}

fn monod_rate(s: f64, p: &[f64]) -> f64 {
    p[0] * s / (p[1] + s)
}

/// Builds a benchmark plant. With `hide_kinetics` the reaction/growth rate is
/// removed from the first-principles dynamics and must be supplied through
/// the returned skeleton's hole; the true rate function is returned
/// separately as the training oracle.
pub fn make_benchmark(which: BenchmarkKind, hide_kinetics: bool) -> Benchmark {
    match which {
        BenchmarkKind::Cstr => make_cstr(hide_kinetics),
        BenchmarkKind::FedbatchBioreactor => make_fedbatch(hide_kinetics),
    }
}

fn make_cstr(hide_kinetics: bool) -> Benchmark {
    let params = CSTR_PARAMS.to_vec();
    let state_bounds = BoxBounds::new(vec![0.0, 250.0], vec![2.0, 500.0]);
    let input_bounds = BoxBounds::new(vec![280.0], vec![370.0]);

    let flow_terms = |x: &[f64], u: &[f64], p: &[f64]| -> Vec<f64> {
        let (c, theta) = (x[0], x[1]);
        vec![
            p[0] * (p[1] - c),
            p[0] * (p[2] - theta) - p[6] * (theta - u[0]),
        ]
    };

    let full = move |x: &[f64], _z: &[f64], u: &[f64], p: &[f64]| -> Vec<f64> {
        let mut dx = flow_terms(x, u, p);
        let r = cstr_rate(x[0], x[1], p);
        dx[0] -= r;
        dx[1] += p[5] * r;
        dx
    };
    let skeleton_dyn = move |x: &[f64], _z: &[f64], u: &[f64], p: &[f64]| -> Vec<f64> {
        flow_terms(x, u, p)
    };

    let build = |dynamics_full: bool| -> PlantModel {
        let b = PlantModel::builder(2, 0, 1, 2)
            .parameters(params.clone())
            .sampling_time(CSTR_SAMPLING_TIME)
            .state_bounds(state_bounds.clone())
            .input_bounds(input_bounds.clone())
            .output(|x: &[f64], _z: &[f64]| x.to_vec());
        let b = if dynamics_full {
            b.dynamics(full)
        } else {
            b.dynamics(skeleton_dyn)
        };
        b.build().expect("benchmark dimensions are consistent")
    };

    let hole = Hole::new(
        HoleKind::Dynamics,
        (2, 0, CSTR_PARAMS.len()),
        2,
        1,
        2,
        |x: &[f64], _z: &[f64], _p: &[f64]| vec![x[0], x[1]],
        |out: &[f64], _x: &[f64], _z: &[f64], p: &[f64]| vec![-out[0], p[5] * out[0]],
    );

    let true_kinetics: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync> = {
        let p = CSTR_PARAMS.to_vec();
        Arc::new(move |f: &[f64]| cstr_rate(f[0], f[1], &p))
    };

    if hide_kinetics {
        let model = build(false);
        Benchmark {
            skeleton: Some(HybridSkeleton {
                model: model.clone(),
                hole,
            }),
            model,
            true_kinetics,
            initial_state: CSTR_INITIAL_STATE.to_vec(),
            nominal_input: CSTR_NOMINAL_INPUT.to_vec(),
        }
    } else {
        Benchmark {
            model: build(true),
            skeleton: None,
            true_kinetics,
            initial_state: CSTR_INITIAL_STATE.to_vec(),
            nominal_input: CSTR_NOMINAL_INPUT.to_vec(),
        }
    }
}

fn make_fedbatch(hide_kinetics: bool) -> Benchmark {
    let params = FEDBATCH_PARAMS.to_vec();
    let state_bounds = BoxBounds::new(vec![0.0, 0.0, 1.0], vec![50.0, 20.0, 1000.0]);
    let input_bounds = BoxBounds::new(vec![0.0], vec![5.0]);

    let feed_terms = |x: &[f64], u: &[f64], p: &[f64]| -> Vec<f64> {
        let (biomass, substrate, volume) = (x[0], x[1], x[2]);
        let feed = u[0];
        vec![
            -(feed / volume) * biomass,
            (feed / volume) * (p[3] - substrate),
            feed,
        ]
    };

    let full = move |x: &[f64], _z: &[f64], u: &[f64], p: &[f64]| -> Vec<f64> {
        let mut dx = feed_terms(x, u, p);
        let mu = monod_rate(x[1], p);
        dx[0] += mu * x[0];
        dx[1] -= mu * x[0] / p[2];
        dx
    };
    let skeleton_dyn = move |x: &[f64], _z: &[f64], u: &[f64], p: &[f64]| -> Vec<f64> {
        feed_terms(x, u, p)
    };

    let build = |dynamics_full: bool| -> PlantModel {
        let b = PlantModel::builder(3, 0, 1, 3)
            .parameters(params.clone())
            .sampling_time(FEDBATCH_SAMPLING_TIME)
            .state_bounds(state_bounds.clone())
            .input_bounds(input_bounds.clone())
            .output(|x: &[f64], _z: &[f64]| x.to_vec());
        let b = if dynamics_full {
            b.dynamics(full)
        } else {
            b.dynamics(skeleton_dyn)
        };
        b.build().expect("benchmark dimensions are consistent")
    };

    let hole = Hole::new(
        HoleKind::Dynamics,
        (3, 0, FEDBATCH_PARAMS.len()),
        1,
        1,
        3,
        |x: &[f64], _z: &[f64], _p: &[f64]| vec![x[1]],
        |out: &[f64], x: &[f64], _z: &[f64], p: &[f64]| {
            let mu = out[0];
            vec![mu * x[0], -mu * x[0] / p[2], 0.0]
        },
    );

    let true_kinetics: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync> = {
        let p = FEDBATCH_PARAMS.to_vec();
        Arc::new(move |f: &[f64]| monod_rate(f[0], &p))
    };

    if hide_kinetics {
        let model = build(false);
        Benchmark {
            skeleton: Some(HybridSkeleton {
                model: model.clone(),
                hole,
            }),
            model,
            true_kinetics,
            initial_state: FEDBATCH_INITIAL_STATE.to_vec(),
            nominal_input: FEDBATCH_NOMINAL_INPUT.to_vec(),
        }
    } else {
        Benchmark {
            model: build(true),
            skeleton: None,
            true_kinetics,
            initial_state: FEDBATCH_INITIAL_STATE.to_vec(),
            nominal_input: FEDBATCH_NOMINAL_INPUT.to_vec(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::SUBSTEPS;

    #[test]
    fn cstr_without_inlet_concentration_stays_at_zero() {
        let bench = make_benchmark(BenchmarkKind::Cstr, false);
        let mut params = CSTR_PARAMS.to_vec();
        params[1] = 0.0; // c_in = 0
        let model = bench.model.with_parameters(params).unwrap();
        let traj = model
            .simulate(&[0.0, 330.0], &vec![vec![305.0]; 20])
            .unwrap();
        for x in &traj.states {
            assert!(x[0].abs() < 1e-12, "concentration stayed zero");
        }
    }

    #[test]
    fn fedbatch_without_feed_keeps_volume_constant() {
        let bench = make_benchmark(BenchmarkKind::FedbatchBioreactor, false);
        let traj = bench
            .model
            .simulate(&bench.initial_state, &vec![vec![0.0]; 30])
            .unwrap();
        for x in &traj.states {
            assert_eq!(x[2], bench.initial_state[2]);
        }
    }

    #[test]
    fn fedbatch_matches_finer_step_reference() {
        // Self-oracle: a 10×-finer substep schedule must agree to 1e-6
        // relative over a whole batch.
        let bench = make_benchmark(BenchmarkKind::FedbatchBioreactor, false);
        let inputs = vec![vec![1.5]; 20];
        let coarse = bench.model.simulate(&bench.initial_state, &inputs).unwrap();
        let mut x = bench.initial_state.clone();
        for (k, u) in inputs.iter().enumerate() {
            let (xn, _) = bench
                .model
                .integrate_step_with_substeps(&x, u, SUBSTEPS * 10)
                .unwrap();
            x = xn;
            let coarse_x = &coarse.states[k + 1];
            for i in 0..3 {
                let rel = (coarse_x[i] - x[i]).abs() / x[i].abs().max(1.0);
                assert!(rel < 1e-6, "state {i} at step {k}: rel {rel}");
            }
        }
    }

    #[test]
    fn fedbatch_zero_substrate_zero_feed_keeps_biomass_constant() {
        let bench = make_benchmark(BenchmarkKind::FedbatchBioreactor, false);
        let x0 = vec![1.0, 0.0, 100.0];
        let traj = bench.model.simulate(&x0, &vec![vec![0.0]; 20]).unwrap();
        for x in &traj.states {
            assert!((x[0] - 1.0).abs() < 1e-12, "Monod rate vanishes at S = 0");
        }
    }

    #[test]
    fn hidden_kinetics_skeleton_with_truth_matches_full_model() {
        for kind in [BenchmarkKind::Cstr, BenchmarkKind::FedbatchBioreactor] {
            let full = make_benchmark(kind, false);
            let hidden = make_benchmark(kind, true);
            let skeleton = hidden.skeleton.as_ref().unwrap();
            let truth = hidden.true_kinetics.clone();
            let realized = skeleton
                .realize(Arc::new(move |f: &[f64]| vec![truth(f)]))
                .unwrap();
            let inputs = vec![full.nominal_input.clone(); 10];
            let a = full.model.simulate(&full.initial_state, &inputs).unwrap();
            let b = realized.simulate(&full.initial_state, &inputs).unwrap();
            for (xa, xb) in a.states.iter().zip(&b.states) {
                for (va, vb) in xa.iter().zip(xb) {
                    assert!((va - vb).abs() < 1e-9, "{kind:?}: {va} vs {vb}");
                }
            }
        }
    }

    #[test]
    fn benchmarks_keep_states_physical_over_nominal_sweep() {
        // Nonnegativity sweep across the documented operating envelope.
        let cstr = make_benchmark(BenchmarkKind::Cstr, false);
        for coolant in [285.0, 300.0, 320.0, 345.0, 369.0] {
            let traj = cstr
                .model
                .simulate(&cstr.initial_state, &vec![vec![coolant]; 60])
                .unwrap();
            for x in &traj.states {
                assert!(x[0] >= 0.0 && x[1] > 0.0, "coolant {coolant}");
            }
        }
        let fb = make_benchmark(BenchmarkKind::FedbatchBioreactor, false);
        for feed in [0.0, 0.5, 1.0, 2.5, 5.0] {
            let traj = fb
                .model
                .simulate(&fb.initial_state, &vec![vec![feed]; 40])
                .unwrap();
            for x in &traj.states {
                assert!(
                    x[0] >= 0.0 && x[1] >= -1e-9 && x[2] >= 100.0 - 1e-9,
                    "feed {feed}: {x:?}"
                );
            }
        }
    }

    #[test]
    fn cstr_steady_state_is_integrator_fixed_point() {
        let bench = make_benchmark(BenchmarkKind::Cstr, false);
        let (x_s, z_s) = bench
            .model
            .steady_state(&[300.0], &bench.initial_state)
            .unwrap();
        let (x_next, _) = bench.model.integrate_step(&x_s, &[300.0]).unwrap();
        for (a, b) in x_s.iter().zip(&x_next) {
            assert!((a - b).abs() < 1e-7);
        }
        assert!(z_s.is_empty());
    }

    #[test]
    fn cstr_steady_state_diverges_far_outside_physical_range() {
        let bench = make_benchmark(BenchmarkKind::Cstr, false);
        // Absurd coolant temperature: Newton cannot find a physical root
        // from the nominal guess.
        let r = bench.model.steady_state(&[-4.0e4], &bench.initial_state);
        assert!(r.is_err(), "expected divergence, got {r:?}");
    }
}
