//! Double machine learning under shared-state interference.
//!
//! Units arrive one at a time; each carries covariates, a binary treatment and
//! an outcome that may depend on an observed shared state evolving as a Markov
//! chain. This crate holds the allocation-only algorithmic core:
//!
//! - [`types`]: observations, trajectories, validation and estimate reports.
//! - [`rng`]: reproducible, splittable random streams.
//! - [`dgp`]: simulators for the AR(1) shared-state model and the switchback
//!   design, plus the true estimands.
//! - [`nuisance`]: a CART regression forest and the outcome/propensity models
//!   built on it.
//! - [`estimators`]: debiased ADE and GATE estimators and their comparators.
//! - [`variance`]: batch-means and m-dependent long-run variance estimators
//!   and normal confidence intervals.
//!
//! IO, configuration and the Monte Carlo runner live in the `dml4ssi` crate.

#![no_std]
#![deny(rust_2018_idioms)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod design;
pub mod dgp;
pub mod estimators;
pub mod math;
pub mod normal;
pub mod nuisance;
pub mod orthogonality;
pub mod rng;
pub mod types;
pub mod variance;

pub use design::{draw_switchback_assignments, switchback_window_prob, SwitchbackDesign, WindowValue};
pub use estimators::{Estimator, PhiSeries};
pub use rng::{derive_stream, Generator, RngStream};
pub use types::{validate_trajectory, EstimateReport, Observation, Regime, Trajectory, Violation};
