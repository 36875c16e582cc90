//! Estimation of transition probabilities in multi-state models that may
//! violate the Markov property.
//!
//! The crate covers the full chain of a simulation study: cohort data
//! ([`history`]), counting processes ([`counting`]), the Aalen-Johansen,
//! landmark and hybrid estimators ([`estimators`]), Markov tests
//! ([`markov_tests`]), a Weibull illness-death simulator ([`simulation`]) and
//! Monte Carlo truth and performance measures ([`metrics`], [`study`]).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod counting;
pub mod error;
pub mod estimators;
pub mod history;
pub mod linalg;
pub mod markov_tests;
pub mod metrics;
pub mod rng;
pub mod simulation;
pub mod study;

pub use error::{MsmError, Result};
pub use history::{Cohort, Event, LongRecord, SamplePath, StateSpace, Transition};
