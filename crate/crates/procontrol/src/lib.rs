//! Learning-supported process control for (bio)chemical benchmark plants.
//!
//! The crate is organized in layers:
//!
//! * [`numkit`] — dense matrices, finite differences, projected-gradient and
//!   penalty solvers used by everything above.
//! * [`surrogates`] — the trainable function families: feed-forward networks,
//!   a recurrent cell, and Gaussian processes.
//! * [`plant`] — semi-explicit DAE plant models with optional learned parts,
//!   a fixed-step integrator, and the CSTR / fed-batch bioreactor benchmarks.
//! * [`oracle`] — dataset handling and the training coordinator, including
//!   sequential and integrated physics-informed training modes.
//! * [`control`] — RTO, setpoint-tracking MPC, variance back-off MPC,
//!   iterative learning control, imitation policies, and internal model
//!   control.
//! * [`monitor`] — learned soft sensors and fault classifiers.
//! * [`harness`] — scenario configs, the closed-loop runner, Monte Carlo
//!   batching, and CSV/JSON report emission.
//!
//! Every stochastic step is driven by an explicit seed; running the same
//! scenario twice produces byte-identical reports. See the `examples/`
//! directory for one runnable program per capability.

pub mod control;
pub mod harness;
pub mod monitor;
pub mod numkit;
pub mod oracle;
pub mod plant;
pub mod surrogates;
