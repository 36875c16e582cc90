//! Replicated simulation studies: simulate, test, estimate and score every
//! replicate against a Monte Carlo truth.
//!
//! Replicates run in parallel batches; their outputs are folded into the
//! evaluation table in replicate order, so results do not depend on the
//! number of threads.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::counting::at_risk;
use crate::error::{MsmError, Result};
use crate::estimators::{
    estimate_haj, estimate_lmaj, nelson_aalen, transition_curve, Estimator, NonMarkovSet, ProbabilityCurve,
};
use crate::history::{Cohort, Transition};
use crate::markov_tests::{linspace, run_markov_tests, MarkovTestReport, TestConfig, TestMethod};
use crate::metrics::{compute_truth, CurveKey, EvaluationTable, TruthTable};
use crate::rng::derive_seed;
use crate::simulation::{CohortSpec, Simulator};

/// Landmark times used throughout the study.
pub const DEFAULT_START_TIMES: [f64; 3] = [0.0, 245.57, 495.64];
pub const REPORT_GRID_SIZE: usize = 800;

/// Two-sided normal critical value for a `level` confidence interval.
pub fn z_value(level: f64) -> f64 {
    Normal::standard().inverse_cdf(0.5 + level / 2.0)
}

/// Seeds of replicate `r`: `(cohort, tests)`.
pub fn replicate_seeds(master: u64, r: u64) -> (u64, u64) {
    (derive_seed(master, 2 * r), derive_seed(master, 2 * r + 1))
}

/// Seed of the uncensored truth simulation.
pub fn truth_seed(master: u64) -> u64 {
    derive_seed(master, u64::MAX)
}

/// Which test drives a hybrid estimator.
pub fn test_method_for(estimator: Estimator) -> Option<TestMethod> {
    match estimator {
        Estimator::HajCox => Some(TestMethod::Cox),
        Estimator::HajLogRank => Some(TestMethod::LogRank),
        Estimator::Aj | Estimator::Lmaj => None,
    }
}

/// One row of a per-replicate estimate CSV. The interval is clipped to
/// `[0, 1]` for reporting only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub estimator: String,
    pub from: usize,
    pub to: usize,
    pub s: f64,
    pub t: f64,
    pub estimate: Option<f64>,
    pub variance: Option<f64>,
    pub ci_lo: Option<f64>,
    pub ci_hi: Option<f64>,
}

/// Everything computed from one cohort.
#[derive(Clone, Debug)]
pub struct ReplicateOutput {
    pub start_times: Vec<f64>,
    /// Per start time, the report grid points `t >= s`.
    pub grids: Vec<Vec<f64>>,
    /// `(estimate, variance)` per grid point; `None` where the estimator is undefined.
    pub estimates: BTreeMap<CurveKey, Vec<Option<(f64, f64)>>>,
    /// `at_risk[s_index][h - 1][i]`: full-sample number at risk in `h` at grid point `i`.
    pub at_risk: Vec<Vec<Vec<u32>>>,
    pub report: Option<MarkovTestReport>,
}

impl ReplicateOutput {
    pub fn estimate_records(&self, z: f64) -> Vec<EstimateRecord> {
        let mut out = Vec::new();
        for (key, cells) in &self.estimates {
            let s = self.start_times[key.s_index];
            for (cell, &t) in cells.iter().zip(&self.grids[key.s_index]) {
                let ci = cell.map(|(p, v)| {
                    let half = z * v.max(0.0).sqrt();
                    ((p - half).clamp(0.0, 1.0), (p + half).clamp(0.0, 1.0))
                });
                out.push(EstimateRecord {
                    estimator: key.estimator.to_string(),
                    from: key.from,
                    to: key.to,
                    s,
                    t,
                    estimate: cell.map(|c| c.0),
                    variance: cell.map(|c| c.1),
                    ci_lo: ci.map(|c| c.0),
                    ci_hi: ci.map(|c| c.1),
                });
            }
        }
        out
    }

    pub fn write_estimates_csv<W: Write>(&self, z: f64, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for r in self.estimate_records(z) {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Non-Markov set selected for a hybrid estimator; empty for AJ and LMAJ.
fn selected_set(estimator: Estimator, report: Option<&MarkovTestReport>) -> NonMarkovSet {
    match (test_method_for(estimator), report) {
        (Some(method), Some(r)) => r.selected(method).clone(),
        _ => NonMarkovSet::empty(),
    }
}

/// Runs the Markov tests needed by `estimators` and evaluates every
/// requested estimator from every transient state at every start time.
pub fn analyse_cohort(
    cohort: &Cohort,
    estimators: &[Estimator],
    start_times: &[f64],
    report_grid: &[f64],
    tests: &TestConfig,
) -> Result<ReplicateOutput> {
    let methods: Vec<TestMethod> = estimators.iter().filter_map(|&e| test_method_for(e)).collect();
    let report = if methods.is_empty() {
        None
    } else {
        let mut cfg = tests.clone();
        cfg.methods.retain(|m| methods.contains(m));
        for m in methods {
            if !cfg.methods.contains(&m) {
                cfg.methods.push(m);
            }
        }
        Some(run_markov_tests(cohort, &cfg))
    };

    let space = cohort.state_space();
    let k = space.size();
    let grids: Vec<Vec<f64>> = start_times
        .iter()
        .map(|&s| report_grid.iter().copied().filter(|&t| t >= s).collect())
        .collect();
    let aj = estimators.contains(&Estimator::Aj).then(|| nelson_aalen(cohort, None));

    let mut estimates = BTreeMap::new();
    for (s_index, &s) in start_times.iter().enumerate() {
        for h in space.non_absorbing() {
            for &estimator in estimators {
                let curve: Option<ProbabilityCurve> = match estimator {
                    Estimator::Aj => Some(transition_curve(aj.as_ref().expect("built above"), s, h)),
                    Estimator::Lmaj => undefined_if_empty(estimate_lmaj(cohort, s, h))?,
                    Estimator::HajLogRank | Estimator::HajCox => {
                        let m = selected_set(estimator, report.as_ref());
                        undefined_if_empty(estimate_haj(cohort, s, h, &m))?
                    }
                };
                for to in 1..=k {
                    let cells = match &curve {
                        Some(c) => c.on_grid(&grids[s_index], to),
                        None => vec![None; grids[s_index].len()],
                    };
                    estimates.insert(
                        CurveKey {
                            estimator,
                            from: h,
                            to,
                            s_index,
                        },
                        cells,
                    );
                }
            }
        }
    }

    let at_risk_counts = grids
        .iter()
        .map(|g| {
            (1..=k)
                .map(|h| {
                    let y = at_risk(cohort, h, None);
                    g.iter().map(|&t| y.value_at(t)).collect()
                })
                .collect()
        })
        .collect();

    Ok(ReplicateOutput {
        start_times: start_times.to_vec(),
        grids,
        estimates,
        at_risk: at_risk_counts,
        report,
    })
}

fn undefined_if_empty(r: Result<ProbabilityCurve>) -> Result<Option<ProbabilityCurve>> {
    match r {
        Ok(c) => Ok(Some(c)),
        Err(MsmError::EmptyLandmark { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

#[derive(Clone, Debug)]
pub struct StudyConfig {
    pub label: String,
    pub simulator: Simulator,
    pub n: usize,
    pub replicates: usize,
    pub seed: u64,
    pub estimators: Vec<Estimator>,
    pub start_times: Vec<f64>,
    pub report_grid: Vec<f64>,
    /// Alpha, methods and log-rank settings; the bootstrap seed is replaced per replicate.
    pub tests: TestConfig,
    pub confidence: f64,
    pub truth_paths: usize,
    /// Replicates held in memory at once.
    pub batch_size: usize,
}

impl StudyConfig {
    /// Desk-scale defaults: n = 488, 500 replicates, 200000 truth paths.
    pub fn new(label: impl Into<String>, simulator: Simulator, seed: u64) -> Self {
        let horizon = simulator.horizon();
        StudyConfig {
            label: label.into(),
            simulator,
            n: 488,
            replicates: 500,
            seed,
            estimators: Estimator::ALL.to_vec(),
            start_times: DEFAULT_START_TIMES.to_vec(),
            report_grid: linspace(0.0, horizon, REPORT_GRID_SIZE),
            tests: TestConfig::default(),
            confidence: 0.95,
            truth_paths: 200_000,
            batch_size: 32,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(MsmError::param("replicates", "must be at least 1"));
        }
        if self.n == 0 {
            return Err(MsmError::param("n", "must be at least 1"));
        }
        let horizon = self.simulator.horizon();
        if let Some(s) = self.start_times.iter().find(|&&s| !(0.0..horizon).contains(&s)) {
            return Err(MsmError::param("start_times", format!("{s} outside [0, {horizon})")));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(MsmError::param("confidence", "must lie in (0, 1)"));
        }
        if !(self.tests.alpha > 0.0 && self.tests.alpha < 1.0) {
            return Err(MsmError::param("alpha", "must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// Aggregated outcome of a study.
#[derive(Clone, Debug)]
pub struct StudyResult {
    pub evaluation: EvaluationTable,
    pub truth: TruthTable,
    /// `mean_at_risk[s_index][h - 1][i]`, averaged over replicates.
    pub mean_at_risk: Vec<Vec<Vec<f64>>>,
    /// Replicates with `p < alpha`, per test method and transition.
    pub rejections: BTreeMap<(TestMethod, Transition), usize>,
    /// Number of replicates in which some Cox fit did not converge.
    pub nonconverged_replicates: usize,
    pub replicates: usize,
}

impl StudyResult {
    /// Grid points (for start time `s_index`) where every transient state has
    /// on average at least `min` subjects at risk.
    pub fn well_populated(&self, s_index: usize, min: f64, transient: &[usize]) -> Vec<bool> {
        let grid_len = self.evaluation.grids[s_index].len();
        (0..grid_len)
            .map(|i| transient.iter().all(|&h| self.mean_at_risk[s_index][h - 1][i] >= min))
            .collect()
    }

    pub fn rejection_rate(&self, method: TestMethod, transition: Transition) -> f64 {
        *self.rejections.get(&(method, transition)).unwrap_or(&0) as f64 / self.replicates as f64
    }
}

/// Simulates, analyses and scores `config.replicates` cohorts.
pub fn run_study(config: &StudyConfig) -> Result<StudyResult> {
    config.validate()?;
    let truth = compute_truth(
        &config.simulator,
        config.truth_paths,
        truth_seed(config.seed),
        &config.start_times,
        &config.report_grid,
        &config.label,
    )?;
    run_study_with_truth(config, truth)
}

/// As [`run_study`], with a precomputed truth on the same start times and grid.
pub fn run_study_with_truth(config: &StudyConfig, truth: TruthTable) -> Result<StudyResult> {
    config.validate()?;
    let z = z_value(config.confidence);
    let space = config.simulator.state_space().clone();
    let k = space.size();
    let mut table = EvaluationTable::new(config.label.clone(), &config.start_times, &config.report_grid);
    let mut at_risk_sum: Vec<Vec<Vec<f64>>> = table.grids.iter().map(|g| vec![vec![0.0; g.len()]; k]).collect();
    let mut rejections = BTreeMap::new();
    let mut nonconverged = 0;

    let batch = config.batch_size.max(1);
    let mut start = 0;
    while start < config.replicates {
        let end = (start + batch).min(config.replicates);
        let outputs: Vec<ReplicateOutput> = (start..end)
            .into_par_iter()
            .map(|r| {
                let (cohort_seed, test_seed) = replicate_seeds(config.seed, r as u64);
                let cohort = config
                    .simulator
                    .simulate_cohort(&CohortSpec::new(config.n, cohort_seed))?;
                let mut tests = config.tests.clone();
                tests.logrank.seed = test_seed;
                analyse_cohort(
                    &cohort,
                    &config.estimators,
                    &config.start_times,
                    &config.report_grid,
                    &tests,
                )
            })
            .collect::<Result<_>>()?;
        for out in &outputs {
            for (key, cells) in &out.estimates {
                let Some(curve) = truth.curve(key.from, config.start_times[key.s_index]) else {
                    continue;
                };
                let acc = table.accumulators_mut(*key);
                for (i, cell) in cells.iter().enumerate() {
                    if let (Some((est, var)), Some(p)) = (cell, curve.value(i, key.to)) {
                        acc[i].push(*est, *var, p, z);
                    }
                }
            }
            for (s_index, per_state) in out.at_risk.iter().enumerate() {
                for (h, counts) in per_state.iter().enumerate() {
                    for (i, &y) in counts.iter().enumerate() {
                        at_risk_sum[s_index][h][i] += f64::from(y);
                    }
                }
            }
            if let Some(report) = &out.report {
                for method in [TestMethod::Cox, TestMethod::LogRank] {
                    for (tr, p) in report.p_values(method) {
                        let entry = rejections.entry((method, tr)).or_insert(0);
                        if p < report.alpha {
                            *entry += 1;
                        }
                    }
                }
                if report.has_nonconvergence() {
                    nonconverged += 1;
                }
            }
        }
        start = end;
    }

    let reps = config.replicates as f64;
    let mean_at_risk = at_risk_sum
        .into_iter()
        .map(|per_state| {
            per_state
                .into_iter()
                .map(|v| v.into_iter().map(|x| x / reps).collect())
                .collect()
        })
        .collect();
    Ok(StudyResult {
        evaluation: table,
        truth,
        mean_at_risk,
        rejections,
        nonconverged_replicates: nonconverged,
        replicates: config.replicates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulation::Setting;

    #[test]
    fn z_for_95_percent() {
        assert!((z_value(0.95) - 1.959963984540054).abs() < 1e-9);
    }

    #[test]
    fn small_study_is_reproducible() {
        let sim = Simulator::with_defaults(Setting::Markov).unwrap();
        let mut cfg = StudyConfig::new("1", sim, 5);
        cfg.n = 60;
        cfg.replicates = 3;
        cfg.truth_paths = 2000;
        cfg.report_grid = linspace(0.0, 4892.0, 20);
        cfg.tests.logrank.n_bootstrap = 20;
        cfg.batch_size = 2;
        let a = run_study(&cfg).unwrap();
        let b = run_study(&cfg).unwrap();
        assert_eq!(a.evaluation, b.evaluation);
        let key = CurveKey {
            estimator: Estimator::Aj,
            from: 1,
            to: 2,
            s_index: 0,
        };
        let m = a.evaluation.measures(key).unwrap();
        // P_12(0, 0) = 0 is estimated exactly
        let first = m[0].unwrap();
        assert_eq!((first.bias, first.variance, first.n_valid), (0.0, 0.0, 3));
    }

    #[test]
    fn estimate_records_clip_intervals() {
        let sim = Simulator::with_defaults(Setting::Markov).unwrap();
        let cohort = sim.simulate_cohort(&CohortSpec::new(40, 1)).unwrap();
        let out = analyse_cohort(
            &cohort,
            &[Estimator::Aj],
            &[0.0],
            &linspace(0.0, 4892.0, 10),
            &TestConfig::default(),
        )
        .unwrap();
        assert!(out.report.is_none());
        let recs = out.estimate_records(1.96);
        assert_eq!(recs.len(), 2 * 3 * 10);
        for r in recs {
            assert_eq!(r.estimator, "aj");
            let (lo, hi) = (r.ci_lo.unwrap(), r.ci_hi.unwrap());
            assert!((0.0..=1.0).contains(&lo) && (0.0..=1.0).contains(&hi) && lo <= hi);
        }
    }
}
