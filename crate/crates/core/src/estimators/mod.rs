//! Aalen-Johansen, landmark Aalen-Johansen and hybrid Aalen-Johansen
//! estimators of transition probabilities, with Greenwood-type variances.
//!
//! All three estimators go through the same intensity builder and product
//! integral; they differ only in which subsample feeds each transition's
//! Nelson-Aalen increments. The hybrid estimator with an empty non-Markov set
//! is therefore the plain estimator, and with every transition flagged it is
//! the landmark estimator, bit for bit.

mod intensity;
mod product;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use crate::counting::LandmarkFilter;
use crate::error::{MsmError, Result};
use crate::history::{Cohort, StateSpace, Transition};

pub use intensity::{hybrid_nelson_aalen, nelson_aalen, CumulativeIntensityMatrix, Subsample};
pub use product::{greenwood_covariance, product_integral, transition_curve, wald_interval, ProbabilityCurve};

/// Transitions judged non-Markov; landmarking is applied to exactly these.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct NonMarkovSet {
    transitions: BTreeSet<Transition>,
}

impl NonMarkovSet {
    pub fn empty() -> Self {
        NonMarkovSet::default()
    }

    pub fn all(space: &StateSpace) -> Self {
        NonMarkovSet {
            transitions: space.transitions().collect(),
        }
    }

    pub fn new(transitions: impl IntoIterator<Item = Transition>, space: &StateSpace) -> Result<Self> {
        let transitions: BTreeSet<Transition> = transitions.into_iter().collect();
        if let Some(tr) = transitions.iter().find(|&&t| !space.permits(t)) {
            return Err(MsmError::param(
                "non-Markov set",
                format!("{tr} is not a permitted transition"),
            ));
        }
        Ok(NonMarkovSet { transitions })
    }

    pub(crate) fn insert(&mut self, transition: Transition) {
        self.transitions.insert(transition);
    }

    pub fn contains(&self, transition: Transition) -> bool {
        self.transitions.contains(&transition)
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = Transition> + '_ {
        self.transitions.iter().copied()
    }

    pub fn is_subset(&self, other: &NonMarkovSet) -> bool {
        self.transitions.is_subset(&other.transitions)
    }
}

impl fmt::Display for NonMarkovSet {
    /// Space-separated transitions, e.g. `1->2 2->1`; empty set prints nothing.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.transitions.iter().map(|t| t.to_string()).collect();
        f.write_str(&parts.join(" "))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Estimator {
    Aj,
    Lmaj,
    HajLogRank,
    HajCox,
}

impl Estimator {
    pub const ALL: [Estimator; 4] = [Estimator::Aj, Estimator::Lmaj, Estimator::HajLogRank, Estimator::HajCox];

    pub fn name(self) -> &'static str {
        match self {
            Estimator::Aj => "aj",
            Estimator::Lmaj => "lmaj",
            Estimator::HajLogRank => "haj_lr",
            Estimator::HajCox => "haj_cox",
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Estimator {
    type Err = MsmError;
    fn from_str(s: &str) -> Result<Self> {
        Estimator::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| MsmError::param("estimator", format!("unknown estimator `{s}`")))
    }
}

/// Aalen-Johansen curves from `s`, one per transient state.
pub fn estimate_aj(cohort: &Cohort, s: f64) -> Vec<ProbabilityCurve> {
    let a = nelson_aalen(cohort, None);
    cohort
        .state_space()
        .non_absorbing()
        .map(|h| transition_curve(&a, s, h))
        .collect()
}

/// Aalen-Johansen curve from state `h` at time `s`.
pub fn estimate_aj_from(cohort: &Cohort, s: f64, h: usize) -> ProbabilityCurve {
    transition_curve(&nelson_aalen(cohort, None), s, h)
}

fn landmark(cohort: &Cohort, s: f64, h: usize) -> Result<LandmarkFilter> {
    let filter = LandmarkFilter::new(h, s, cohort.state_space())?;
    if filter.subsample_size(cohort) == 0 {
        return Err(MsmError::EmptyLandmark { state: h, time: s });
    }
    Ok(filter)
}

/// Landmark Aalen-Johansen curve: every intensity estimated on the subjects
/// observed in `h` at `s`.
pub fn estimate_lmaj(cohort: &Cohort, s: f64, h: usize) -> Result<ProbabilityCurve> {
    let filter = landmark(cohort, s, h)?;
    Ok(transition_curve(&nelson_aalen(cohort, Some(&filter)), s, h))
}

/// Hybrid Aalen-Johansen curve: landmark intensities for transitions in
/// `non_markov`, full-sample intensities elsewhere.
pub fn estimate_haj(cohort: &Cohort, s: f64, h: usize, non_markov: &NonMarkovSet) -> Result<ProbabilityCurve> {
    let filter = LandmarkFilter::new(h, s, cohort.state_space())?;
    if !non_markov.is_empty() && filter.subsample_size(cohort) == 0 {
        return Err(MsmError::EmptyLandmark { state: h, time: s });
    }
    Ok(transition_curve(
        &hybrid_nelson_aalen(cohort, &filter, non_markov),
        s,
        h,
    ))
}
