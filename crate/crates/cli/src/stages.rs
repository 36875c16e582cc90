//! Pipeline stages. Each reads its upstream files through the manifest and
//! records what it wrote.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use msm_core::estimators::Estimator;
use msm_core::history::{from_long, read_long_csv, write_long_csv};
use msm_core::markov_tests::{run_markov_tests, TestConfig, TestMethod};
use msm_core::metrics::{compute_truth, occupancy, CurveKey, EvaluationTable, Occupancy, TruthTable};
use msm_core::study::{analyse_cohort, replicate_seeds, test_method_for, truth_seed, z_value, EstimateRecord};
use msm_core::{Cohort, Transition};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::Plan;
use crate::error::CliError;
use crate::manifest::{read_verified, write_file, FileRecord, Manifest, StageRecord};

pub const TRUTH_FILE: &str = "truth.csv";
pub const OCCUPANCY_FILE: &str = "occupancy.csv";
pub const REJECTIONS_FILE: &str = "tests/rejections.csv";
pub const SELECTED_FILE: &str = "selected_sets.csv";
pub const EVALUATION_FILE: &str = "evaluation.csv";
pub const MEASURES: [&str; 4] = ["bias", "variance", "rmse", "coverage"];

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Outcome {
    Complete,
    /// Replicates in which some fit did not converge.
    NonConverged(Vec<usize>),
}

impl Outcome {
    pub fn merge(self, other: Outcome) -> Outcome {
        match (self, other) {
            (Outcome::Complete, o) | (o, Outcome::Complete) => o,
            (Outcome::NonConverged(mut a), Outcome::NonConverged(b)) => {
                a.extend(b);
                a.sort_unstable();
                a.dedup();
                Outcome::NonConverged(a)
            }
        }
    }

    fn from_replicates(nonconverged: Vec<usize>) -> Outcome {
        if nonconverged.is_empty() {
            Outcome::Complete
        } else {
            Outcome::NonConverged(nonconverged)
        }
    }
}

fn replicate_file(dir: &str, r: usize) -> String {
    format!("{dir}/rep_{r:04}.csv")
}

fn csv_bytes<T: Serialize>(header: &[&str], rows: &[T]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    let io = |e: csv::Error| CliError::Core(e.into());
    w.write_record(header).map_err(io)?;
    for row in rows {
        w.serialize(row).map_err(io)?;
    }
    w.into_inner().map_err(|e| CliError::Core(e.into_error().into()))
}

fn save_stage(
    out: &Path,
    plan: &Plan,
    stage: &str,
    inputs: &str,
    files: Vec<FileRecord>,
    nonconverged: Vec<usize>,
) -> Result<Outcome, CliError> {
    let mut manifest = Manifest::load_or_default(out)?;
    manifest.setting = plan.label.clone();
    manifest.seed = plan.seed;
    manifest
        .stages
        .insert(stage.to_string(), StageRecord::new(inputs, files, nonconverged.clone()));
    manifest.save(out)?;
    Ok(Outcome::from_replicates(nonconverged))
}

/// Simulates one cohort per replicate and the pooled state occupancy.
pub fn simulate(plan: &Plan, out: &Path) -> Result<Outcome, CliError> {
    let results: Vec<(FileRecord, Occupancy)> = (0..plan.replicates)
        .into_par_iter()
        .map(|r| {
            let (cohort_seed, test_seed) = replicate_seeds(plan.seed, r as u64);
            let mut spec = plan.cohort.clone();
            spec.seed = cohort_seed;
            let cohort = plan.simulator.simulate_cohort(&spec)?;
            let mut buf = Vec::new();
            write_long_csv(&cohort.to_long(), &mut buf)?;
            let mut file = write_file(out, &replicate_file("cohorts", r), &buf)?;
            file.replicate = Some(r);
            file.cohort_seed = Some(cohort_seed);
            file.test_seed = Some(test_seed);
            Ok((file, occupancy(&cohort, &plan.report_grid)))
        })
        .collect::<Result<_, CliError>>()?;

    let mut files = Vec::with_capacity(results.len() + 1);
    let mut pooled: Option<Occupancy> = None;
    for (file, occ) in results {
        files.push(file);
        match pooled.as_mut() {
            Some(p) => p.add(&occ),
            None => pooled = Some(occ),
        }
    }
    let mut buf = Vec::new();
    pooled.expect("at least one replicate").write_csv(&mut buf)?;
    files.push(write_file(out, OCCUPANCY_FILE, &buf)?);
    save_stage(out, plan, "simulate", &plan.digests.simulate, files, vec![])
}

/// Monte Carlo truth from uncensored paths.
pub fn truth(plan: &Plan, out: &Path) -> Result<Outcome, CliError> {
    let table = compute_truth(
        &plan.simulator,
        plan.truth_paths,
        truth_seed(plan.seed),
        &plan.start_times,
        &plan.report_grid,
        &plan.label,
    )?;
    let mut buf = Vec::new();
    table.write_csv(&mut buf)?;
    let file = write_file(out, TRUTH_FILE, &buf)?;
    save_stage(out, plan, "truth", &plan.digests.truth, vec![file], vec![])
}

/// The simulated cohorts, checked against the manifest.
fn cohort_files(plan: &Plan, out: &Path, stage: &'static str) -> Result<Vec<FileRecord>, CliError> {
    let manifest = Manifest::load_or_default(out)?;
    let record = manifest.require(stage, "simulate", &plan.digests.simulate)?;
    let files: Vec<FileRecord> = record.replicate_files().into_iter().cloned().collect();
    if files.len() != plan.replicates {
        return Err(CliError::StageDependency {
            stage,
            upstream: "simulate",
            reason: format!("expected {} cohorts, manifest lists {}", plan.replicates, files.len()),
        });
    }
    Ok(files)
}

fn read_cohort(plan: &Plan, out: &Path, file: &FileRecord, stage: &'static str) -> Result<Cohort, CliError> {
    let bytes = read_verified(out, file, stage, "simulate")?;
    let path = out.join(&file.path);
    let records = read_long_csv(bytes.as_slice()).map_err(|e| CliError::data(&path, e))?;
    from_long(&records, plan.simulator.state_space(), plan.simulator.horizon()).map_err(|e| CliError::data(&path, e))
}

fn tests_for(plan: &Plan, file: &FileRecord) -> TestConfig {
    let mut tests = plan.tests.clone();
    tests.logrank.seed = file
        .test_seed
        .unwrap_or_else(|| replicate_seeds(plan.seed, file.replicate.unwrap_or(0) as u64).1);
    tests
}

#[derive(Serialize)]
struct RejectionRow {
    method: String,
    transition: String,
    rejections: usize,
    replicates: usize,
    rate: f64,
}

/// Markov tests on every cohort; one report per replicate plus rejection rates.
pub fn test(plan: &Plan, out: &Path) -> Result<Outcome, CliError> {
    type PValues = Vec<(TestMethod, Vec<(Transition, f64)>)>;
    let inputs = cohort_files(plan, out, "test")?;
    let results: Vec<(FileRecord, PValues, bool, f64)> = inputs
        .par_iter()
        .map(|input| {
            let r = input.replicate.expect("replicate file");
            let cohort = read_cohort(plan, out, input, "test")?;
            let report = run_markov_tests(&cohort, &tests_for(plan, input));
            let mut buf = Vec::new();
            report.write_csv(&mut buf)?;
            let mut file = write_file(out, &replicate_file("tests", r), &buf)?;
            file.replicate = Some(r);
            file.test_seed = input.test_seed;
            let p = plan.tests.methods.iter().map(|&m| (m, report.p_values(m))).collect();
            Ok((file, p, report.has_nonconvergence(), report.alpha))
        })
        .collect::<Result<_, CliError>>()?;

    let mut counts: BTreeMap<(TestMethod, Transition), usize> = BTreeMap::new();
    let mut files = Vec::new();
    let mut nonconverged = Vec::new();
    for (file, p_values, failed, alpha) in results {
        if failed {
            nonconverged.push(file.replicate.expect("replicate file"));
        }
        for (method, ps) in p_values {
            for (tr, p) in ps {
                *counts.entry((method, tr)).or_insert(0) += usize::from(p < alpha);
            }
        }
        files.push(file);
    }
    let rows: Vec<RejectionRow> = counts
        .into_iter()
        .map(|((method, tr), n)| RejectionRow {
            method: method.to_string(),
            transition: tr.to_string(),
            rejections: n,
            replicates: plan.replicates,
            rate: n as f64 / plan.replicates as f64,
        })
        .collect();
    let header = ["method", "transition", "rejections", "replicates", "rate"];
    files.push(write_file(out, REJECTIONS_FILE, &csv_bytes(&header, &rows)?)?);
    save_stage(out, plan, "test", &plan.digests.test, files, nonconverged)
}

#[derive(Serialize)]
struct SelectedRow {
    replicate: usize,
    estimator: String,
    selected: String,
}

/// Every requested estimator at every start time and transient state. The
/// hybrid estimators run their test first; the selected sets are recorded.
pub fn estimate(plan: &Plan, out: &Path) -> Result<Outcome, CliError> {
    let inputs = cohort_files(plan, out, "estimate")?;
    let z = z_value(plan.confidence);
    let hybrids: Vec<Estimator> = plan
        .estimators
        .iter()
        .copied()
        .filter(|&e| test_method_for(e).is_some())
        .collect();
    let results: Vec<(FileRecord, Vec<SelectedRow>, bool)> = inputs
        .par_iter()
        .map(|input| {
            let r = input.replicate.expect("replicate file");
            let cohort = read_cohort(plan, out, input, "estimate")?;
            let output = analyse_cohort(
                &cohort,
                &plan.estimators,
                &plan.start_times,
                &plan.report_grid,
                &tests_for(plan, input),
            )?;
            let mut buf = Vec::new();
            output.write_estimates_csv(z, &mut buf)?;
            let mut file = write_file(out, &replicate_file("estimates", r), &buf)?;
            file.replicate = Some(r);
            file.test_seed = input.test_seed;
            let selected = match &output.report {
                Some(report) => hybrids
                    .iter()
                    .map(|&e| SelectedRow {
                        replicate: r,
                        estimator: e.to_string(),
                        selected: report.selected(test_method_for(e).expect("hybrid")).to_string(),
                    })
                    .collect(),
                None => Vec::new(),
            };
            let failed = output.report.as_ref().is_some_and(|rep| rep.has_nonconvergence());
            Ok((file, selected, failed))
        })
        .collect::<Result<_, CliError>>()?;

    let mut files = Vec::new();
    let mut selected = Vec::new();
    let mut nonconverged = Vec::new();
    for (file, rows, failed) in results {
        if failed {
            nonconverged.push(file.replicate.expect("replicate file"));
        }
        selected.extend(rows);
        files.push(file);
    }
    let header = ["replicate", "estimator", "selected"];
    files.push(write_file(out, SELECTED_FILE, &csv_bytes(&header, &selected)?)?);
    save_stage(out, plan, "estimate", &plan.digests.estimate, files, nonconverged)
}

/// Scores one replicate's estimates against the truth.
fn score_replicate(
    plan: &Plan,
    truth: &TruthTable,
    path: &Path,
    bytes: &[u8],
    z: f64,
) -> Result<EvaluationTable, CliError> {
    let mut table = EvaluationTable::new(plan.label.clone(), &plan.start_times, &plan.report_grid);
    let index: Vec<HashMap<u64, usize>> = table
        .grids
        .iter()
        .map(|g| g.iter().enumerate().map(|(i, t)| (t.to_bits(), i)).collect())
        .collect();
    let bad = |msg: String| CliError::data(path, msm_core::MsmError::InsufficientData(msg));
    let mut rdr = csv::Reader::from_reader(bytes);
    for row in rdr.deserialize() {
        let rec: EstimateRecord = row.map_err(|e| CliError::data(path, e.into()))?;
        let estimator: Estimator = rec.estimator.parse().map_err(|e| CliError::data(path, e))?;
        let s_index = plan
            .start_times
            .iter()
            .position(|&s| s == rec.s)
            .ok_or_else(|| bad(format!("start time {} is not configured", rec.s)))?;
        let i = *index[s_index]
            .get(&rec.t.to_bits())
            .ok_or_else(|| bad(format!("time {} is not on the report grid", rec.t)))?;
        let Some(curve) = truth.curve(rec.from, rec.s) else {
            continue;
        };
        let key = CurveKey {
            estimator,
            from: rec.from,
            to: rec.to,
            s_index,
        };
        let acc = table.accumulators_mut(key);
        if let (Some(est), Some(var), Some(p)) = (rec.estimate, rec.variance, curve.value(i, rec.to)) {
            acc[i].push(est, var, p, z);
        }
    }
    Ok(table)
}

/// Joins the estimates with the truth: the evaluation table and one plot
/// table per measure.
pub fn evaluate(plan: &Plan, out: &Path) -> Result<Outcome, CliError> {
    let manifest = Manifest::load_or_default(out)?;
    let truth_record = manifest.require("evaluate", "truth", &plan.digests.truth)?;
    let truth_file = truth_record.file(TRUTH_FILE).ok_or_else(|| CliError::StageDependency {
        stage: "evaluate",
        upstream: "truth",
        reason: format!("manifest does not list {TRUTH_FILE}"),
    })?;
    let bytes = read_verified(out, truth_file, "evaluate", "truth")?;
    let n_states = plan.simulator.state_space().size();
    let truth = TruthTable::read_csv(bytes.as_slice(), &plan.label, n_states)
        .map_err(|e| CliError::data(&out.join(TRUTH_FILE), e))?;

    let estimates = manifest.require("evaluate", "estimate", &plan.digests.estimate)?;
    let z = z_value(plan.confidence);
    let tables: Vec<EvaluationTable> = estimates
        .replicate_files()
        .par_iter()
        .map(|file| {
            let bytes = read_verified(out, file, "evaluate", "estimate")?;
            score_replicate(plan, &truth, &out.join(&file.path), &bytes, z)
        })
        .collect::<Result<_, CliError>>()?;
    let mut table = EvaluationTable::new(plan.label.clone(), &plan.start_times, &plan.report_grid);
    for t in &tables {
        table.merge(t);
    }

    let mut files = Vec::new();
    let mut buf = Vec::new();
    table.write_csv(&mut buf)?;
    files.push(write_file(out, EVALUATION_FILE, &buf)?);
    for measure in MEASURES {
        let mut buf = Vec::new();
        table.write_measure_csv(measure, &mut buf)?;
        files.push(write_file(out, &format!("plots/{measure}.csv"), &buf)?);
    }
    save_stage(out, plan, "evaluate", &plan.digests.evaluate, files, vec![])
}

pub fn pipeline(plan: &Plan, out: &Path) -> Result<Outcome, CliError> {
    let mut outcome = simulate(plan, out)?;
    for stage in [truth, test, estimate, evaluate] {
        outcome = outcome.merge(stage(plan, out)?);
    }
    Ok(outcome)
}
