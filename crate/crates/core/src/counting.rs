//! Aggregated censored counting and at-risk processes, optionally restricted
//! to a landmark subsample.

use crate::error::{MsmError, Result};
use crate::history::{Cohort, SamplePath, StateSpace, Transition};

/// Restricts a cohort to subjects observed in `state` at `time`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LandmarkFilter {
    pub state: usize,
    pub time: f64,
}

impl LandmarkFilter {
    pub fn new(state: usize, time: f64, space: &StateSpace) -> Result<Self> {
        if !(time >= 0.0 && time.is_finite()) {
            return Err(MsmError::param("landmark time", format!("{time} must be >= 0")));
        }
        if !space.contains(state) || space.is_absorbing(state) {
            return Err(MsmError::param(
                "landmark state",
                format!("{state} must be a transient state"),
            ));
        }
        Ok(LandmarkFilter { state, time })
    }

    /// Subjects still under observation at the landmark time and occupying
    /// the landmark state there.
    pub fn qualifies(&self, path: &SamplePath) -> bool {
        self.time <= path.max_time()
            && path.is_observed_at(self.time)
            && path.state_at_unchecked(self.time) == self.state
    }

    pub fn mask(&self, cohort: &Cohort) -> Vec<bool> {
        cohort.paths().iter().map(|p| self.qualifies(p)).collect()
    }

    pub fn subsample_size(&self, cohort: &Cohort) -> usize {
        cohort.paths().iter().filter(|p| self.qualifies(p)).count()
    }
}

/// Jump times and multiplicities of an aggregated counting process `N_hj`.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionCounter {
    pub transition: Transition,
    pub jump_times: Vec<f64>,
    pub jump_sizes: Vec<u32>,
}

impl TransitionCounter {
    pub fn total(&self) -> u64 {
        self.jump_sizes.iter().map(|&d| u64::from(d)).sum()
    }

    /// `N(t)`, the number of transitions in `(0, t]`.
    pub fn value_at(&self, t: f64) -> u64 {
        let k = self.jump_times.partition_point(|&u| u <= t);
        self.jump_sizes[..k].iter().map(|&d| u64::from(d)).sum()
    }
}

/// Left-continuous at-risk count `Y_h(t)`: subjects in `state` just before `t`
/// and still under observation at `t`.
///
/// `values[i]` holds the count on `(breakpoints[i], breakpoints[i + 1]]`; the
/// count is zero up to and including the first breakpoint.
#[derive(Clone, Debug, PartialEq)]
pub struct AtRiskProcess {
    pub state: usize,
    pub breakpoints: Vec<f64>,
    pub values: Vec<u32>,
}

impl AtRiskProcess {
    pub fn value_at(&self, t: f64) -> u32 {
        let k = self.breakpoints.partition_point(|&b| b < t);
        if k == 0 {
            0
        } else {
            self.values[k - 1]
        }
    }

    /// `J_h(t) = 1{Y_h(t) > 0}`.
    pub fn is_positive_at(&self, t: f64) -> bool {
        self.value_at(t) > 0
    }
}

pub(crate) fn subject_mask(cohort: &Cohort, filter: Option<&LandmarkFilter>) -> Option<Vec<bool>> {
    filter.map(|f| f.mask(cohort))
}

pub(crate) fn counter_from_mask(cohort: &Cohort, transition: Transition, mask: Option<&[bool]>) -> TransitionCounter {
    let mut times: Vec<f64> = cohort
        .spells()
        .iter()
        .filter(|cs| mask.is_none_or(|m| m[cs.subject]))
        .filter(|cs| cs.spell.state == transition.from && cs.spell.outcome == Some(transition.to))
        .map(|cs| cs.spell.exit)
        .collect();
    times.sort_by(f64::total_cmp);
    let mut jump_times: Vec<f64> = Vec::new();
    let mut jump_sizes: Vec<u32> = Vec::new();
    for t in times {
        if jump_times.last() == Some(&t) {
            *jump_sizes.last_mut().expect("non-empty") += 1;
        } else {
            jump_times.push(t);
            jump_sizes.push(1);
        }
    }
    TransitionCounter {
        transition,
        jump_times,
        jump_sizes,
    }
}

pub(crate) fn at_risk_from_mask(cohort: &Cohort, state: usize, mask: Option<&[bool]>) -> AtRiskProcess {
    // +1 effective just after entry, -1 effective just after exit.
    let mut deltas: Vec<(f64, i64)> = Vec::new();
    for cs in cohort.spells() {
        if cs.spell.state != state || !mask.is_none_or(|m| m[cs.subject]) {
            continue;
        }
        deltas.push((cs.spell.entry, 1));
        deltas.push((cs.spell.exit, -1));
    }
    deltas.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut breakpoints = Vec::new();
    let mut values = Vec::new();
    let mut level: i64 = 0;
    let mut i = 0;
    while i < deltas.len() {
        let t = deltas[i].0;
        while i < deltas.len() && deltas[i].0 == t {
            level += deltas[i].1;
            i += 1;
        }
        debug_assert!(level >= 0);
        breakpoints.push(t);
        values.push(level as u32);
    }
    AtRiskProcess {
        state,
        breakpoints,
        values,
    }
}

/// Aggregated counting process for `transition`, restricted to the landmark
/// subsample when a filter is given. The full time axis is kept; estimators
/// only use jumps after the landmark time.
pub fn count_transitions(
    cohort: &Cohort,
    transition: Transition,
    filter: Option<&LandmarkFilter>,
) -> TransitionCounter {
    let mask = subject_mask(cohort, filter);
    counter_from_mask(cohort, transition, mask.as_deref())
}

pub fn at_risk(cohort: &Cohort, state: usize, filter: Option<&LandmarkFilter>) -> AtRiskProcess {
    let mask = subject_mask(cohort, filter);
    at_risk_from_mask(cohort, state, mask.as_deref())
}
