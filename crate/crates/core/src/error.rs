use thiserror::Error;

use crate::history::Transition;

/// Errors raised by data validation, estimation and model fitting.
#[derive(Debug, Error)]
pub enum MsmError {
    #[error("invalid state space: {0}")]
    InvalidStateSpace(String),

    #[error("time {time} outside the observation window [0, {max_time}]")]
    TimeOutOfRange { time: f64, max_time: f64 },

    #[error("subject {subject}: {reason}")]
    InvalidPath { subject: u64, reason: String },

    #[error("subject {subject}: transition {transition} is not permitted by the state space")]
    ForbiddenTransition { subject: u64, transition: Transition },

    #[error("subject {subject}: overlapping records ({previous_exit} > {next_entry})")]
    OverlappingRecords {
        subject: u64,
        previous_exit: f64,
        next_entry: f64,
    },

    #[error("duplicate subject id {0}")]
    DuplicateSubject(u64),

    #[error("cohort paths disagree on the study horizon ({expected} vs {found})")]
    HorizonMismatch { expected: f64, found: f64 },

    #[error("no subjects at landmark: state {state} at time {time}")]
    EmptyLandmark { state: usize, time: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("model not identifiable: {0}")]
    Unidentifiable(String),

    #[error("optimizer did not converge after {iterations} iterations (last scale {scale}, shape {shape})")]
    NonConvergence { iterations: usize, scale: f64, shape: f64 },

    #[error("invalid parameter `{field}`: {message}")]
    InvalidParameter { field: String, message: String },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, MsmError>;

impl MsmError {
    pub(crate) fn param(field: impl Into<String>, message: impl Into<String>) -> Self {
        MsmError::InvalidParameter {
            field: field.into(),
            message: message.into(),
        }
    }
}
