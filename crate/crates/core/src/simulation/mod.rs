//! Cohort simulation under Markov, semi-Markov, frailty, partial-frailty,
//! mixed and pathological illness-death processes with Weibull intensities,
//! plus a Weibull maximum-likelihood fitter for censored, left-truncated
//! transition records.

mod fit;
mod params;
mod sampler;
mod setting;

pub use fit::{fit_weibull, transition_observations, weibull_log_likelihood, Clock, WeibullFit, WeibullObservation};
pub use params::{ParamVariant, Weibull, WeibullParams};
pub use sampler::{draw_censoring, draw_frailty_time, draw_markov_time, draw_semi_markov_time, Simulator};
pub use setting::{
    CensoringSpec, CohortSpec, FrailtyDist, FrailtyPreset, Setting, MIXED_CHANGEPOINT, PATHOLOGICAL_THRESHOLD,
};
