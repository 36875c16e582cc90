//! Shared fixtures for the benchmarks.

use msm_core::simulation::{CohortSpec, Setting, Simulator};
use msm_core::Cohort;

/// Cohort of `n` subjects from the setting with the given label.
pub fn cohort(label: &str, n: usize, seed: u64) -> Cohort {
    simulator(label)
        .simulate_cohort(&CohortSpec::new(n, seed))
        .expect("valid cohort")
}

pub fn simulator(label: &str) -> Simulator {
    Simulator::with_defaults(Setting::from_label(label).expect("known setting")).expect("valid setting")
}
