//! Per-transition tests of the Markov assumption: a Cox model on the most
//! recent entry time into the source state, and a log-rank comparison over a
//! grid of landmark times with a wild-bootstrap null. Either one yields the
//! set of non-Markov transitions handed to the hybrid estimator.

mod cox;
mod logrank;

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{MsmError, Result};
use crate::estimators::NonMarkovSet;
use crate::history::{Cohort, Transition};
use crate::rng::derive_seed;

pub use cox::{cox_entry_time_test, cox_test, maximize, two_sided_p, CoxData, CoxFitResult, CoxSpell};
pub use logrank::{linspace, logrank_grid_test, LogRankConfig, LogRankTestResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TestFlag {
    Ok,
    /// No events, or no comparison with enough subjects.
    Untestable,
    /// The covariate does not vary within any risk set.
    Degenerate,
    NotConverged,
}

impl TestFlag {
    pub fn name(self) -> &'static str {
        match self {
            TestFlag::Ok => "ok",
            TestFlag::Untestable => "untestable",
            TestFlag::Degenerate => "degenerate",
            TestFlag::NotConverged => "not_converged",
        }
    }
}

impl fmt::Display for TestFlag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TestMethod {
    Cox,
    LogRank,
}

impl TestMethod {
    pub fn name(self) -> &'static str {
        match self {
            TestMethod::Cox => "cox",
            TestMethod::LogRank => "logrank",
        }
    }
}

impl fmt::Display for TestMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TestMethod {
    type Err = MsmError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cox" => Ok(TestMethod::Cox),
            "logrank" | "log-rank" | "lr" => Ok(TestMethod::LogRank),
            other => Err(MsmError::param("method", format!("unknown test method `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TestConfig {
    pub alpha: f64,
    pub methods: Vec<TestMethod>,
    pub logrank: LogRankConfig,
}

impl Default for TestConfig {
    fn default() -> Self {
        TestConfig {
            alpha: 0.05,
            methods: vec![TestMethod::Cox, TestMethod::LogRank],
            logrank: LogRankConfig::default(),
        }
    }
}

/// Results of both tests for every permitted transition, with the selected
/// non-Markov sets at `alpha`.
#[derive(Clone, Debug, PartialEq)]
pub struct MarkovTestReport {
    pub alpha: f64,
    pub cox: Vec<CoxFitResult>,
    pub logrank: Vec<LogRankTestResult>,
    pub selected_cox: NonMarkovSet,
    pub selected_logrank: NonMarkovSet,
}

/// One row of the test report CSV.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TestRecord {
    pub transition: String,
    pub method: String,
    pub statistic: f64,
    pub p_value: f64,
    pub flag: String,
}

impl MarkovTestReport {
    pub fn p_values(&self, method: TestMethod) -> Vec<(Transition, f64)> {
        match method {
            TestMethod::Cox => self.cox.iter().map(|r| (r.transition, r.p_value)).collect(),
            TestMethod::LogRank => self.logrank.iter().map(|r| (r.transition, r.p_value)).collect(),
        }
    }

    pub fn selected(&self, method: TestMethod) -> &NonMarkovSet {
        match method {
            TestMethod::Cox => &self.selected_cox,
            TestMethod::LogRank => &self.selected_logrank,
        }
    }

    /// True when some Cox fit hit the iteration limit.
    pub fn has_nonconvergence(&self) -> bool {
        self.cox.iter().any(|r| r.flag == TestFlag::NotConverged)
    }

    pub fn records(&self) -> Vec<TestRecord> {
        let cox = self.cox.iter().map(|r| TestRecord {
            transition: r.transition.to_string(),
            method: TestMethod::Cox.to_string(),
            statistic: r.wald,
            p_value: r.p_value,
            flag: r.flag.to_string(),
        });
        let lr = self.logrank.iter().map(|r| TestRecord {
            transition: r.transition.to_string(),
            method: TestMethod::LogRank.to_string(),
            statistic: r.statistic,
            p_value: r.p_value,
            flag: r.flag.to_string(),
        });
        cox.chain(lr).collect()
    }

    /// CSV with header `transition,method,statistic,p_value,flag`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for r in self.records() {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Transitions with `p < alpha`, without multiplicity adjustment.
pub fn select_nonmarkov(p_values: &[(Transition, f64)], alpha: f64) -> NonMarkovSet {
    let mut set = NonMarkovSet::empty();
    for &(tr, p) in p_values {
        if p < alpha {
            set.insert(tr);
        }
    }
    set
}

/// Runs the configured tests on every permitted transition. The log-rank
/// bootstrap for transition number `k` uses seed `derive_seed(seed, k)`.
pub fn run_markov_tests(cohort: &Cohort, config: &TestConfig) -> MarkovTestReport {
    let transitions: Vec<Transition> = cohort.state_space().transitions().collect();
    let cox: Vec<CoxFitResult> = if config.methods.contains(&TestMethod::Cox) {
        transitions.iter().map(|&tr| cox_entry_time_test(cohort, tr)).collect()
    } else {
        Vec::new()
    };
    let logrank: Vec<LogRankTestResult> = if config.methods.contains(&TestMethod::LogRank) {
        transitions
            .iter()
            .enumerate()
            .map(|(k, &tr)| {
                let cfg = LogRankConfig {
                    seed: derive_seed(config.logrank.seed, k as u64),
                    ..config.logrank.clone()
                };
                logrank_grid_test(cohort, tr, &cfg)
            })
            .collect()
    } else {
        Vec::new()
    };
    let mut report = MarkovTestReport {
        alpha: config.alpha,
        cox,
        logrank,
        selected_cox: NonMarkovSet::empty(),
        selected_logrank: NonMarkovSet::empty(),
    };
    report.selected_cox = select_nonmarkov(&report.p_values(TestMethod::Cox), config.alpha);
    report.selected_logrank = select_nonmarkov(&report.p_values(TestMethod::LogRank), config.alpha);
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tr(h: usize, j: usize) -> Transition {
        Transition::new(h, j)
    }

    #[test]
    fn threshold_rule() {
        let p = [(tr(1, 2), 0.03), (tr(1, 3), 0.2), (tr(2, 1), 0.001), (tr(2, 3), 0.9)];
        assert_eq!(select_nonmarkov(&p, 0.05).to_string(), "1->2 2->1");
        let ones: Vec<_> = p.iter().map(|&(t, _)| (t, 1.0)).collect();
        assert!(select_nonmarkov(&ones, 0.05).is_empty());
        let zeros: Vec<_> = p.iter().map(|&(t, _)| (t, 0.0)).collect();
        assert_eq!(select_nonmarkov(&zeros, 0.05).len(), 4);
    }

    #[test]
    fn selection_is_monotone_in_alpha() {
        let p = [(tr(1, 2), 0.03), (tr(1, 3), 0.2), (tr(2, 1), 0.001), (tr(2, 3), 0.9)];
        let alphas = [0.0, 0.001, 0.01, 0.05, 0.2, 0.5, 1.0];
        for w in alphas.windows(2) {
            assert!(select_nonmarkov(&p, w[0]).is_subset(&select_nonmarkov(&p, w[1])));
        }
    }

    #[test]
    fn method_names_parse() {
        assert_eq!("cox".parse::<TestMethod>().unwrap(), TestMethod::Cox);
        assert_eq!("logrank".parse::<TestMethod>().unwrap(), TestMethod::LogRank);
        assert!("wald".parse::<TestMethod>().is_err());
    }
}
