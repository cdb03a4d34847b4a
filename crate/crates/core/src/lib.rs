//! Switched model reference adaptive control with memory-based parameter
//! estimation.
//!
//! A plant switches among known-structure linear subsystems with unknown
//! parameters. Each subsystem keeps its own estimate; while a subsystem is
//! inactive its estimate keeps converging on stored filter and Gramian data.
//!
//! Start with [`scenario::default_config`] and [`engine::run_scenario`].

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cli;
pub mod engine;
pub mod error;
pub mod estimator;
pub mod excitation;
pub mod filters;
pub mod numerics;
pub mod output;
pub mod scenario;
pub mod system;

pub use engine::{run_scenario, RunOutput, RunSummary, Simulation, SimulationConfig, TraceRecord};
pub use error::{Error, Result};
pub use scenario::{default_config, load_scenario, parse_scenario};
