use crate::linalg::{row_mul, Matrix};

use super::intensity::CumulativeIntensityMatrix;

/// Ordered product of `I + dA(u)` over grid points `s < u <= t`.
pub fn product_integral(a: &CumulativeIntensityMatrix, s: f64, t: f64) -> Matrix {
    let mut p = Matrix::identity(a.n_states());
    if t <= s {
        return p;
    }
    let start = a.grid().partition_point(|&u| u <= s);
    let end = a.grid().partition_point(|&u| u <= t);
    for g in start..end {
        p = p.mul(&a.step_matrix(g));
    }
    p
}

/// Row `h` of an estimated transition matrix `P(s, .)`, right-constant
/// between the stored times, with pointwise Greenwood variances.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbabilityCurve {
    pub start_time: f64,
    pub from_state: usize,
    /// `times[0] == start_time`, then every intensity grid point after it.
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    pub variances: Vec<Vec<f64>>,
}

impl ProbabilityCurve {
    fn index_at(&self, t: f64) -> Option<usize> {
        if t < self.start_time {
            return None;
        }
        Some(self.times.partition_point(|&u| u <= t) - 1)
    }

    /// `(P_h1(s,t), ..., P_hk(s,t))`; `None` before the start time.
    pub fn value_at(&self, t: f64) -> Option<&[f64]> {
        self.index_at(t).map(|i| self.values[i].as_slice())
    }

    pub fn variance_at(&self, t: f64) -> Option<&[f64]> {
        self.index_at(t).map(|i| self.variances[i].as_slice())
    }

    /// Estimate and variance for target state `to` on a sorted report grid.
    /// Grid points before the start time yield `None`.
    pub fn on_grid(&self, grid: &[f64], to: usize) -> Vec<Option<(f64, f64)>> {
        let mut out = Vec::with_capacity(grid.len());
        let mut idx = 0;
        for &t in grid {
            if t < self.start_time {
                out.push(None);
                continue;
            }
            while idx + 1 < self.times.len() && self.times[idx + 1] <= t {
                idx += 1;
            }
            out.push(Some((self.values[idx][to - 1], self.variances[idx][to - 1])));
        }
        out
    }
}

/// Unclipped Wald interval `p +/- z * sqrt(var)`.
pub fn wald_interval(estimate: f64, variance: f64, z: f64) -> (f64, f64) {
    let half = z * variance.max(0.0).sqrt();
    (estimate - half, estimate + half)
}

/// Row-`h` product integral from `s` together with the Greenwood covariance
/// matrix of that row at every step.
///
/// One-step recursion: with `p(t) = p(t-) (I + dA(t))`,
/// `V(t) = (I + dA)^T V(t-) (I + dA) + sum_l p_l(t-)^2 Cov(row l of dA(t))`.
pub fn greenwood_covariance(
    a: &CumulativeIntensityMatrix,
    s: f64,
    from_state: usize,
) -> (Vec<f64>, Vec<Vec<f64>>, Vec<Matrix>) {
    let k = a.n_states();
    let mut p = vec![0.0; k];
    p[from_state - 1] = 1.0;
    let mut v = Matrix::zeros(k);
    let start = a.grid().partition_point(|&u| u <= s);
    let n = a.grid().len() - start + 1;
    let mut times = Vec::with_capacity(n);
    let mut rows = Vec::with_capacity(n);
    let mut covs = Vec::with_capacity(n);
    times.push(s);
    rows.push(p.clone());
    covs.push(v.clone());
    for g in start..a.grid().len() {
        let step = a.step_matrix(g);
        let mut next_v = step.congruence(&v);
        for (l, &pl) in p.iter().enumerate() {
            if pl != 0.0 {
                next_v.add_scaled(&a.row_covariance(g, l + 1), pl * pl);
            }
        }
        p = row_mul(&p, &step);
        v = next_v;
        times.push(a.grid()[g]);
        rows.push(p.clone());
        covs.push(v.clone());
    }
    (times, rows, covs)
}

pub fn transition_curve(a: &CumulativeIntensityMatrix, s: f64, from_state: usize) -> ProbabilityCurve {
    let (times, values, covs) = greenwood_covariance(a, s, from_state);
    let k = a.n_states();
    let variances = covs
        .iter()
        .map(|c| (0..k).map(|j| c[(j, j)].max(0.0)).collect())
        .collect();
    ProbabilityCurve {
        start_time: s,
        from_state,
        times,
        values,
        variances,
    }
}
