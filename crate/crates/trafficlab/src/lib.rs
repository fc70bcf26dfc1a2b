//! trafficlab: a research harness for calibrating, evaluating, and iteratively
//! improving analytic traffic models.
//!
//! The crate covers three model families:
//!
//! * `idm` — car-following acceleration models evaluated by forward-simulating
//!   spacing trajectories against recorded events,
//! * `mobil` — lane-change decision models scored as binary classifiers,
//! * `lwr` — macroscopic density→speed relations scored by regression error.
//!
//! Around the families sit the shared machinery: dataset loaders and splits
//! ([`datasets`]), the native model registry ([`models`]), a sandboxed
//! expression DSL for machine-written candidate models ([`dsl`]), loss
//! computation and reporting ([`evaluation`], [`report`]), a seeded genetic
//! algorithm for parameter fitting ([`calibration`]), a pluggable chat backend
//! ([`llm`]), and the iterative improvement loop that ties them together
//! ([`agent`]).

pub mod agent;
pub mod calibration;
pub mod datasets;
pub mod dsl;
pub mod error;
pub mod evaluation;
pub mod llm;
pub mod models;
pub mod report;

pub use error::{Error, Result};
