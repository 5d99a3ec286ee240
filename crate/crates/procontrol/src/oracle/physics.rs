//! Physics-informed training: sequential mode converts data through
//! mechanistic pre/post models offline; integrated mode trains the setup
//! function through the mechanistic (possibly dynamic) model itself.

use std::sync::Arc;

use super::dataset::{Dataset, LabelKind};
use super::setup::SetupFunction;
use super::trained::{Provenance, TrainedMap};
use super::training::{coordinate, rmse, shuffle_split, TrainingSpec};
use super::OracleError;
use crate::numkit::minimize_box;
use crate::plant::{damped_newton, HybridSkeleton, PlantError, PlantModel};

/// A mechanistic conversion. Explicit transforms are plain maps; implicit
/// ones are residuals `r(raw, converted) = 0` solved pointwise by Newton
/// (raw and converted must share a dimension; the raw value seeds the solve).
#[derive(Clone)]
pub enum Transform {
    Explicit(Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>),
    Implicit(Arc<dyn Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync>),
}

impl Transform {
    pub fn explicit<F>(f: F) -> Self
    where
        F: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        Transform::Explicit(Arc::new(f))
    }

    pub fn implicit<F>(residual: F) -> Self
    where
        F: Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        Transform::Implicit(Arc::new(residual))
    }

    pub fn apply(&self, raw: &[f64]) -> Result<Vec<f64>, PlantError> {
        match self {
            Transform::Explicit(f) => {
                let out = f(raw);
                if out.iter().any(|v| !v.is_finite()) {
                    Err(PlantError::NonFiniteState)
                } else {
                    Ok(out)
                }
            }
            Transform::Implicit(residual) => {
                let r = residual.clone();
                let raw_owned = raw.to_vec();
                damped_newton(move |t: &[f64]| r(&raw_owned, t), raw, 1e-12, 50)
            }
        }
    }
}

/// One batch of dynamic data: where the plant started and what was fed in.
#[derive(Debug, Clone)]
pub struct Episode {
    pub initial_state: Vec<f64>,
    pub input_schedule: Vec<Vec<f64>>,
}

/// Algebraic system for integrated training: `0 = g(z1, z2, u)` with
/// `z2 = s(z1, w)` plugged in, outputs `y = h(z1, z2)`.
#[derive(Clone)]
pub struct AlgebraicSkeleton {
    pub residual: Arc<dyn Fn(&[f64], &[f64], &[f64]) -> Vec<f64> + Send + Sync>,
    pub output: Arc<dyn Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync>,
    pub z1_dim: usize,
    pub z2_dim: usize,
    pub z1_guess: Vec<f64>,
}

/// The mechanistic model a setup function is trained through.
#[derive(Clone)]
pub enum Skeleton {
    Dynamic(HybridSkeleton),
    Algebraic(AlgebraicSkeleton),
}

/// Side information accompanying a dataset: initial conditions and input
/// schedules for dynamic training, a plant skeleton with a hole for the
/// learned part, and the mechanistic pre/post transforms.
#[derive(Clone, Default)]
pub struct AdditionalData {
    pub initial_state: Option<Vec<f64>>,
    pub input_schedule: Option<Vec<Vec<f64>>>,
    /// Batches beyond the primary one (repetitive operation restarts from
    /// its own initial state).
    pub extra_episodes: Vec<Episode>,
    pub plant_skeleton: Option<Skeleton>,
    pub transform_pre: Option<Transform>,
    pub transform_post: Option<Transform>,
}

impl AdditionalData {
    fn episodes(&self) -> Result<Vec<Episode>, OracleError> {
        let initial_state = self
            .initial_state
            .clone()
            .ok_or(OracleError::MissingAdditionalData {
                what: "initial_state",
            })?;
        let input_schedule = self
            .input_schedule
            .clone()
            .ok_or(OracleError::MissingAdditionalData {
                what: "input_schedule",
            })?;
        if input_schedule.is_empty() {
            return Err(OracleError::InvalidSpec {
                context: "empty input schedule: no transitions to fit".into(),
            });
        }
        let mut eps = vec![Episode {
            initial_state,
            input_schedule,
        }];
        eps.extend(self.extra_episodes.iter().cloned());
        if eps.iter().any(|e| e.input_schedule.is_empty()) {
            return Err(OracleError::InvalidSpec {
                context: "empty input schedule in extra episode".into(),
            });
        }
        Ok(eps)
    }
}

/// Converts features through `Ω_pre` and labels through the declared
/// label-side conversion offline, then delegates to [`coordinate`] on the
/// transformed dataset. The returned map operates on the transformed feature
/// space (no composition with the transforms).
pub fn train_sequential(
    dataset: &Dataset,
    additional: &AdditionalData,
    setup: &SetupFunction,
    spec: &TrainingSpec,
) -> Result<TrainedMap, OracleError> {
    if dataset.is_empty() {
        return Err(OracleError::EmptyDataset);
    }
    let mut features = Vec::with_capacity(dataset.len());
    for (i, f) in dataset.features().iter().enumerate() {
        let t = match &additional.transform_pre {
            Some(tr) => tr.apply(f).map_err(|_| OracleError::TransformFailed { index: i })?,
            None => f.clone(),
        };
        features.push(t);
    }
    let transformed = match dataset.kind() {
        LabelKind::Regression => {
            let raw = dataset.regression_labels().unwrap();
            let mut labels = Vec::with_capacity(raw.len());
            for (i, l) in raw.iter().enumerate() {
                let t = match &additional.transform_post {
                    Some(tr) => tr.apply(l).map_err(|_| OracleError::TransformFailed { index: i })?,
                    None => l.clone(),
                };
                labels.push(t);
            }
            Dataset::regression(features, labels)?
        }
        LabelKind::Classification => {
            if additional.transform_post.is_some() {
                return Err(OracleError::LabelKindMismatch {
                    context: "label transforms apply to regression labels only".into(),
                });
            }
            Dataset::classification(
                features,
                dataset.class_labels().unwrap().to_vec(),
                dataset.label_dim(),
            )?
        }
    };
    let passthrough = AdditionalData {
        transform_pre: None,
        transform_post: None,
        ..additional.clone()
    };
    coordinate(&transformed, &passthrough, spec, setup)
}

/// Which mechanistic evaluation backs the integrated loss.
enum IntegratedSystem {
    Dynamic {
        skeleton: HybridSkeleton,
        episodes: Vec<Episode>,
        /// Per sample: (episode index, step index on the grid).
        sample_at: Vec<(usize, usize)>,
    },
    Algebraic(AlgebraicSkeleton),
}

impl IntegratedSystem {
    /// Squared-error sum and entry count over the selected samples for the
    /// realized model. Typed errors identify the failing step.
    fn loss(
        &self,
        inner: &Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>,
        dataset: &Dataset,
        idx: &[usize],
    ) -> Result<(f64, usize), OracleError> {
        let labels = dataset.regression_labels().expect("validated regression");
        match self {
            IntegratedSystem::Dynamic {
                skeleton,
                episodes,
                sample_at,
            } => {
                let model: PlantModel = skeleton.realize(inner.clone())?;
                let mut trajectories = Vec::with_capacity(episodes.len());
                for ep in episodes {
                    trajectories.push(model.simulate(&ep.initial_state, &ep.input_schedule)?);
                }
                let mut sq = 0.0;
                let mut entries = 0;
                for &i in idx {
                    let (ep, step) = sample_at[i];
                    let predicted = &trajectories[ep].outputs[step];
                    sq += predicted
                        .iter()
                        .zip(&labels[i])
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>();
                    entries += labels[i].len();
                }
                Ok((sq, entries))
            }
            IntegratedSystem::Algebraic(alg) => {
                let mut sq = 0.0;
                let mut entries = 0;
                for &i in idx {
                    let u = &dataset.features()[i];
                    let residual = alg.residual.clone();
                    let inner_for_solve = inner.clone();
                    let u_owned = u.clone();
                    let z1 = damped_newton(
                        move |z1: &[f64]| {
                            let z2 = inner_for_solve(z1);
                            residual(z1, &z2, &u_owned)
                        },
                        &alg.z1_guess,
                        1e-10,
                        50,
                    )
                    .map_err(|_| OracleError::TrainingSimulationFailed {
                        round: 0,
                        step: Some(i),
                    })?;
                    let z2 = inner(&z1);
                    let predicted = (alg.output)(&z1, &z2);
                    sq += predicted
                        .iter()
                        .zip(&labels[i])
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>();
                    entries += labels[i].len();
                }
                Ok((sq, entries))
            }
        }
    }
}

/// Trains the setup function through the mechanistic model: the loss sums
/// `‖y_k − ŷ_k(w)‖²` where `ŷ_k` comes from simulating the skeleton with
/// `s(·, w)` plugged into the hole (dynamic case) or from a per-sample Newton
/// solve (algebraic case). Gradients over `w` are finite differences. The
/// returned map is the learned term itself, over the hole's feature space.
pub fn train_integrated(
    dataset: &Dataset,
    additional: &AdditionalData,
    setup: &SetupFunction,
    spec: &TrainingSpec,
) -> Result<TrainedMap, OracleError> {
    spec.validate()?;
    if dataset.is_empty() {
        return Err(OracleError::EmptyDataset);
    }
    if dataset.kind() != LabelKind::Regression {
        return Err(OracleError::LabelKindMismatch {
            context: "integrated training fits measured outputs (regression)".into(),
        });
    }
    if setup.is_directly_data_based() {
        return Err(OracleError::InvalidSpec {
            context: "integrated training takes an indirectly data-based setup function".into(),
        });
    }

    let skeleton = additional
        .plant_skeleton
        .as_ref()
        .ok_or(OracleError::MissingAdditionalData {
            what: "plant_skeleton",
        })?;

    let (system, map_in, map_out) = match skeleton {
        Skeleton::Dynamic(sk) => {
            let episodes = additional.episodes()?;
            let t_step = sk.model.sampling_time();
            let mut sample_at = Vec::with_capacity(dataset.len());
            for f in dataset.features() {
                let (ep, t) = match f.len() {
                    1 => (0usize, f[0]),
                    2 => (f[0].round() as usize, f[1]),
                    _ => {
                        return Err(OracleError::InvalidSpec {
                            context: "dynamic features are [t] or [episode, t]".into(),
                        })
                    }
                };
                if ep >= episodes.len() {
                    return Err(OracleError::InvalidSpec {
                        context: format!("episode index {ep} out of range"),
                    });
                }
                let k = (t / t_step).round() as i64;
                if k < 0
                    || (t - k as f64 * t_step).abs() > 1e-6 * t_step.max(1.0)
                    || k as usize > episodes[ep].input_schedule.len()
                {
                    return Err(OracleError::InvalidSpec {
                        context: format!("sample time {t} is off the episode grid"),
                    });
                }
                sample_at.push((ep, k as usize));
            }
            let dims = (sk.hole.map_input_dim(), sk.hole.map_output_dim());
            (
                IntegratedSystem::Dynamic {
                    skeleton: sk.clone(),
                    episodes,
                    sample_at,
                },
                dims.0,
                dims.1,
            )
        }
        Skeleton::Algebraic(alg) => (
            IntegratedSystem::Algebraic(alg.clone()),
            alg.z1_dim,
            alg.z2_dim,
        ),
    };

    let (train_idx, test_idx, val_idx) = shuffle_split(dataset.len(), spec.split_fractions, spec.seed);
    let as_inner = |instance: super::setup::ModelInstance| -> Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync> {
        Arc::new(move |f: &[f64]| {
            instance
                .eval(f)
                .unwrap_or_else(|_| vec![f64::NAN; map_out])
        })
    };

    let mut best: Option<(f64, Vec<f64>, f64, usize)> = None;
    for round in 0..spec.max_rounds {
        let round_seed = spec.seed.wrapping_add(round as u64);
        let instance = setup.instantiate(map_in, map_out, round_seed)?;
        let w0 = instance.to_params();

        // Pre-flight with typed errors so simulation failures carry context.
        system
            .loss(&as_inner(instance.with_params(&w0)), dataset, &train_idx)
            .map_err(|e| match e {
                OracleError::Plant(PlantError::AtStep { step, .. }) => {
                    OracleError::TrainingSimulationFailed {
                        round,
                        step: Some(step),
                    }
                }
                other => other,
            })?;

        let objective = {
            let instance = instance.clone();
            let dataset = dataset.clone();
            let train_idx = train_idx.clone();
            let system = &system;
            let as_inner = &as_inner;
            move |w: &[f64]| -> f64 {
                match system.loss(&as_inner(instance.with_params(w)), &dataset, &train_idx) {
                    Ok((sq, _)) => sq,
                    Err(_) => f64::INFINITY,
                }
            }
        };
        let n_params = w0.len();
        let result = minimize_box(
            objective,
            &w0,
            &vec![f64::NEG_INFINITY; n_params],
            &vec![f64::INFINITY; n_params],
            &spec.optimizer,
        )
        .map_err(|e| match e {
            crate::numkit::NumError::NonFiniteObjective => OracleError::TrainingSimulationFailed {
                round,
                step: None,
            },
            other => OracleError::Num(other),
        })?;
        let w_star = result.argmin;

        let inner = as_inner(instance.with_params(&w_star));
        let (train_sq, train_entries) = system.loss(&inner, dataset, &train_idx)?;
        let (test_sq, test_entries) = system.loss(&inner, dataset, &test_idx)?;
        let train_metric = rmse(train_sq, train_entries);
        let test_metric = rmse(test_sq, test_entries);

        if test_metric <= spec.acceptance_rmse {
            let (val_sq, val_entries) = system.loss(&inner, dataset, &val_idx)?;
            let provenance = Provenance {
                setup_kind: setup.kind_name().into(),
                input_dim: map_in,
                output_dim: map_out,
                parameters: w_star.clone(),
                train_metric,
                test_metric,
                validation_metric: rmse(val_sq, val_entries),
                rounds: round + 1,
                seed: spec.seed,
            };
            let final_instance = instance.with_params(&w_star);
            let map = TrainedMap::new(
                Arc::new(move |f: &[f64]| {
                    final_instance.eval(f).unwrap_or_else(|_| vec![f64::NAN; map_out])
                }),
                None,
                provenance,
            );
            return Ok(match &spec.constraint_set {
                Some(b) => map.with_output_box(b.clone()),
                None => map,
            });
        }
        match &best {
            Some((m, ..)) if *m <= test_metric => {}
            _ => best = Some((test_metric, w_star, train_metric, round)),
        }
    }

    let (best_metric, w_star, train_metric, round) = best.expect("max_rounds ≥ 1");
    let instance = setup
        .instantiate(map_in, map_out, spec.seed.wrapping_add(round as u64))?
        .with_params(&w_star);
    let provenance = Provenance {
        setup_kind: setup.kind_name().into(),
        input_dim: map_in,
        output_dim: map_out,
        parameters: w_star,
        train_metric,
        test_metric: best_metric,
        validation_metric: f64::NAN,
        rounds: round + 1,
        seed: spec.seed,
    };
    let best_map = TrainedMap::new(
        Arc::new(move |f: &[f64]| instance.eval(f).unwrap_or_else(|_| vec![f64::NAN; map_out])),
        None,
        provenance,
    );
    Err(OracleError::AcceptanceNotReached {
        best: Box::new(best_map),
        best_metric,
    })
}
