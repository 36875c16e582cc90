//! Monte Carlo ground truth and the bias / variance / RMSE / coverage
//! measures used to compare estimators across simulation replicates.

mod evaluate;
mod occupancy;
mod truth;

pub use evaluate::{evaluate, CurveKey, EvaluationRecord, EvaluationTable, MeasureAccumulator, Measures};
pub use occupancy::{occupancy, Occupancy};
pub use truth::{compute_truth, TruthCurve, TruthRecord, TruthTable};
