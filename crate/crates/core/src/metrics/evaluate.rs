use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::estimators::{wald_interval, Estimator};

/// Running sums of `d = p_hat - P` over replicates at one grid point.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MeasureAccumulator {
    pub n: u64,
    pub sum: f64,
    pub sum_sq: f64,
    pub hits: u64,
}

/// Bias, variance, RMSE and coverage at one grid point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Measures {
    pub bias: f64,
    pub variance: f64,
    pub rmse: f64,
    pub coverage: f64,
    pub n_valid: u64,
}

impl MeasureAccumulator {
    /// Adds one replicate. The unclipped Wald interval decides coverage.
    pub fn push(&mut self, estimate: f64, variance: f64, truth: f64, z: f64) {
        let d = estimate - truth;
        self.n += 1;
        self.sum += d;
        self.sum_sq += d * d;
        let (lo, hi) = wald_interval(estimate, variance, z);
        if lo <= truth && truth <= hi {
            self.hits += 1;
        }
    }

    pub fn merge(&mut self, other: &MeasureAccumulator) {
        self.n += other.n;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
        self.hits += other.hits;
    }

    /// `None` without valid replicates. With a single replicate the sample
    /// variance is reported as 0.
    pub fn finish(&self) -> Option<Measures> {
        if self.n == 0 {
            return None;
        }
        let n = self.n as f64;
        let bias = self.sum / n;
        let variance = if self.n > 1 {
            ((self.sum_sq - n * bias * bias) / (n - 1.0)).max(0.0)
        } else {
            0.0
        };
        Some(Measures {
            bias,
            variance,
            rmse: (variance + bias * bias).sqrt(),
            coverage: self.hits as f64 / n,
            n_valid: self.n,
        })
    }
}

/// The four measures for one `(h, j, s)` across replicates. `runs[r][i]` is
/// replicate `r`'s `(estimate, variance)` at grid point `i`, `None` when the
/// estimator was undefined.
pub fn evaluate(runs: &[Vec<Option<(f64, f64)>>], truth: &[Option<f64>], z: f64) -> Vec<Option<Measures>> {
    let mut acc = vec![MeasureAccumulator::default(); truth.len()];
    for run in runs {
        for (i, (cell, p)) in run.iter().zip(truth).enumerate() {
            if let (Some((est, var)), Some(p)) = (cell, p) {
                acc[i].push(*est, *var, *p, z);
            }
        }
    }
    acc.iter().map(|a| a.finish()).collect()
}

/// Key of one evaluated curve.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CurveKey {
    pub estimator: Estimator,
    pub from: usize,
    pub to: usize,
    /// Index into the list of start times.
    pub s_index: usize,
}

/// One row of the evaluation CSV. Missing measures are empty fields.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRecord {
    pub setting: String,
    pub estimator: String,
    pub from: usize,
    pub to: usize,
    pub s: f64,
    pub t: f64,
    pub bias: Option<f64>,
    pub variance: Option<f64>,
    pub rmse: Option<f64>,
    pub coverage: Option<f64>,
    pub n_valid_runs: u64,
}

/// Accumulators for every curve on a shared report grid.
#[derive(Clone, Debug, PartialEq)]
pub struct EvaluationTable {
    pub setting: String,
    pub start_times: Vec<f64>,
    /// Per start time, the grid points `t >= s`.
    pub grids: Vec<Vec<f64>>,
    pub cells: BTreeMap<CurveKey, Vec<MeasureAccumulator>>,
}

impl EvaluationTable {
    pub fn new(setting: impl Into<String>, start_times: &[f64], grid: &[f64]) -> Self {
        EvaluationTable {
            setting: setting.into(),
            start_times: start_times.to_vec(),
            grids: start_times
                .iter()
                .map(|&s| grid.iter().copied().filter(|&t| t >= s).collect())
                .collect(),
            cells: BTreeMap::new(),
        }
    }

    pub fn accumulators_mut(&mut self, key: CurveKey) -> &mut Vec<MeasureAccumulator> {
        let len = self.grids[key.s_index].len();
        self.cells
            .entry(key)
            .or_insert_with(|| vec![MeasureAccumulator::default(); len])
    }

    pub fn merge(&mut self, other: &EvaluationTable) {
        for (key, cells) in &other.cells {
            let mine = self.accumulators_mut(*key);
            for (a, b) in mine.iter_mut().zip(cells) {
                a.merge(b);
            }
        }
    }

    pub fn measures(&self, key: CurveKey) -> Option<Vec<Option<Measures>>> {
        self.cells.get(&key).map(|c| c.iter().map(|a| a.finish()).collect())
    }

    pub fn records(&self) -> Vec<EvaluationRecord> {
        let mut out = Vec::new();
        for (key, cells) in &self.cells {
            let s = self.start_times[key.s_index];
            for (a, &t) in cells.iter().zip(&self.grids[key.s_index]) {
                let m = a.finish();
                out.push(EvaluationRecord {
                    setting: self.setting.clone(),
                    estimator: key.estimator.to_string(),
                    from: key.from,
                    to: key.to,
                    s,
                    t,
                    bias: m.map(|m| m.bias),
                    variance: m.map(|m| m.variance),
                    rmse: m.map(|m| m.rmse),
                    coverage: m.map(|m| m.coverage),
                    n_valid_runs: a.n,
                });
            }
        }
        out
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for r in self.records() {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Plot data for one measure (`bias`, `variance`, `rmse` or `coverage`):
    /// columns `from,to,s,t` and one column per estimator.
    pub fn write_measure_csv<W: Write>(&self, measure: &str, writer: W) -> Result<()> {
        let pick = |m: &Measures| -> f64 {
            match measure {
                "bias" => m.bias,
                "variance" => m.variance,
                "rmse" => m.rmse,
                _ => m.coverage,
            }
        };
        let estimators: Vec<Estimator> = {
            let mut e: Vec<Estimator> = self.cells.keys().map(|k| k.estimator).collect();
            e.sort();
            e.dedup();
            e
        };
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["from".to_string(), "to".into(), "s".into(), "t".into()];
        header.extend(estimators.iter().map(|e| e.to_string()));
        w.write_record(&header)?;
        let mut curves: Vec<(usize, usize, usize)> = self.cells.keys().map(|k| (k.from, k.to, k.s_index)).collect();
        curves.sort();
        curves.dedup();
        for (from, to, s_index) in curves {
            let cols: Vec<Option<Vec<Option<Measures>>>> = estimators
                .iter()
                .map(|&estimator| {
                    self.measures(CurveKey {
                        estimator,
                        from,
                        to,
                        s_index,
                    })
                })
                .collect();
            for (i, t) in self.grids[s_index].iter().enumerate() {
                let mut row = vec![
                    from.to_string(),
                    to.to_string(),
                    self.start_times[s_index].to_string(),
                    t.to_string(),
                ];
                for col in &cols {
                    row.push(
                        col.as_ref()
                            .and_then(|c| c[i])
                            .map(|m| pick(&m).to_string())
                            .unwrap_or_default(),
                    );
                }
                w.write_record(&row)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}
