use std::collections::HashMap;

use crate::counting::{at_risk_from_mask, counter_from_mask, LandmarkFilter};
use crate::history::{Cohort, Transition};
use crate::linalg::Matrix;

use super::NonMarkovSet;

/// Which subjects feed the intensity estimate of one transition.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Subsample {
    Full,
    Landmark,
}

/// Nelson-Aalen increments on the grid of observed transition times.
///
/// For every grid point and transition the raw counts `dN_hj(t)` and `Y_h(t)`
/// are kept, taken from the subsample assigned to that transition, so the
/// same object drives the product integral and the Greenwood covariance.
#[derive(Clone, Debug)]
pub struct CumulativeIntensityMatrix {
    k: usize,
    transitions: Vec<Transition>,
    sources: Vec<Subsample>,
    landmark: Option<LandmarkFilter>,
    grid: Vec<f64>,
    // [grid point][transition], row-major
    dn: Vec<u32>,
    at_risk: Vec<u32>,
}

impl CumulativeIntensityMatrix {
    pub fn n_states(&self) -> usize {
        self.k
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn source(&self, transition: Transition) -> Option<Subsample> {
        self.transitions
            .iter()
            .position(|&t| t == transition)
            .map(|i| self.sources[i])
    }

    pub fn landmark(&self) -> Option<&LandmarkFilter> {
        self.landmark.as_ref()
    }

    fn cell(&self, g: usize, tr: usize) -> (u32, u32) {
        let idx = g * self.transitions.len() + tr;
        (self.dn[idx], self.at_risk[idx])
    }

    /// `(dN_hj(t), Y_h(t))` at grid point `g`.
    pub fn counts(&self, g: usize, transition: Transition) -> Option<(u32, u32)> {
        let tr = self.transitions.iter().position(|&t| t == transition)?;
        Some(self.cell(g, tr))
    }

    fn off_diagonal(&self, g: usize, tr: usize) -> f64 {
        let (dn, y) = self.cell(g, tr);
        if y == 0 {
            0.0
        } else {
            f64::from(dn) / f64::from(y)
        }
    }

    /// `dA(t)` at grid point `g`: off-diagonal `dN/Y` (zero when nobody is at
    /// risk), diagonal the negative row sum.
    pub fn increment(&self, g: usize) -> Matrix {
        let mut m = Matrix::zeros(self.k);
        for (i, tr) in self.transitions.iter().enumerate() {
            let v = self.off_diagonal(g, i);
            let (h, j) = (tr.from - 1, tr.to - 1);
            m[(h, j)] += v;
            m[(h, h)] -= v;
        }
        m
    }

    /// `I + dA(t)` at grid point `g`.
    pub fn step_matrix(&self, g: usize) -> Matrix {
        let mut m = self.increment(g);
        for i in 0..self.k {
            m[(i, i)] += 1.0;
        }
        m
    }

    /// Cumulative intensity `A_hj(t)`.
    pub fn cumulative(&self, transition: Transition, t: f64) -> f64 {
        let Some(tr) = self.transitions.iter().position(|&x| x == transition) else {
            return 0.0;
        };
        let end = self.grid.partition_point(|&u| u <= t);
        (0..end).map(|g| self.off_diagonal(g, tr)).sum()
    }

    /// Greenwood-type covariance of row `state` of `dA(t)`, as a `k x k`
    /// matrix over target states (diagonal entry included by linearity).
    ///
    /// Within one subsample, `Cov(dA_hj, dA_hj') = (1{j=j'} Y - dN_hj) dN_hj' / Y^3`.
    /// Transitions estimated from different subsamples are taken as
    /// uncorrelated.
    pub fn row_covariance(&self, g: usize, state: usize) -> Matrix {
        let h = state - 1;
        let mut off = Matrix::zeros(self.k);
        let rows: Vec<usize> = (0..self.transitions.len())
            .filter(|&i| self.transitions[i].from == state)
            .collect();
        for &a in &rows {
            let (dn_a, y_a) = self.cell(g, a);
            if y_a == 0 {
                continue;
            }
            let ja = self.transitions[a].to - 1;
            for &b in &rows {
                let (dn_b, y_b) = self.cell(g, b);
                if y_b == 0 {
                    continue;
                }
                let jb = self.transitions[b].to - 1;
                let y = f64::from(y_a);
                let v = if a == b {
                    (y - f64::from(dn_a)) * f64::from(dn_a) / (y * y * y)
                } else if self.sources[a] == self.sources[b] {
                    -f64::from(dn_a) * f64::from(dn_b) / (y * y * y)
                } else {
                    0.0
                };
                off[(ja, jb)] = v;
            }
        }
        // dA_hh = -sum_j dA_hj
        let mut full = off.clone();
        for j in 0..self.k {
            if j == h {
                continue;
            }
            let col: f64 = (0..self.k).filter(|&m| m != h).map(|m| off[(m, j)]).sum();
            full[(h, j)] = -col;
            full[(j, h)] = -col;
        }
        let mut total = 0.0;
        for m in 0..self.k {
            for n in 0..self.k {
                if m != h && n != h {
                    total += off[(m, n)];
                }
            }
        }
        full[(h, h)] = total;
        full
    }
}

pub(crate) fn build_intensity(
    cohort: &Cohort,
    landmark: Option<LandmarkFilter>,
    source_of: impl Fn(Transition) -> Subsample,
) -> CumulativeIntensityMatrix {
    let space = cohort.state_space();
    let transitions: Vec<Transition> = space.transitions().collect();
    let sources: Vec<Subsample> = transitions
        .iter()
        .map(|&tr| {
            if landmark.is_some() {
                source_of(tr)
            } else {
                Subsample::Full
            }
        })
        .collect();
    let mask = landmark.as_ref().map(|f| f.mask(cohort));
    let mask_for = |src: Subsample| match src {
        Subsample::Full => None,
        Subsample::Landmark => mask.as_deref(),
    };

    let mut risk_cache = HashMap::new();
    let mut counters = Vec::with_capacity(transitions.len());
    for (&tr, &src) in transitions.iter().zip(&sources) {
        counters.push(counter_from_mask(cohort, tr, mask_for(src)));
        risk_cache
            .entry((tr.from, src))
            .or_insert_with(|| at_risk_from_mask(cohort, tr.from, mask_for(src)));
    }

    let mut grid: Vec<f64> = counters.iter().flat_map(|c| c.jump_times.iter().copied()).collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();

    let nt = transitions.len();
    let mut dn = vec![0u32; grid.len() * nt];
    let mut at_risk = vec![0u32; grid.len() * nt];
    for (i, c) in counters.iter().enumerate() {
        let y = &risk_cache[&(transitions[i].from, sources[i])];
        let mut cursor = 0;
        for (g, &t) in grid.iter().enumerate() {
            at_risk[g * nt + i] = y.value_at(t);
            if cursor < c.jump_times.len() && c.jump_times[cursor] == t {
                dn[g * nt + i] = c.jump_sizes[cursor];
                cursor += 1;
            }
        }
    }

    CumulativeIntensityMatrix {
        k: space.size(),
        transitions,
        sources,
        landmark,
        grid,
        dn,
        at_risk,
    }
}

/// Nelson-Aalen estimate of every cumulative transition intensity, on the
/// landmark subsample when a filter is given.
pub fn nelson_aalen(cohort: &Cohort, filter: Option<&LandmarkFilter>) -> CumulativeIntensityMatrix {
    build_intensity(cohort, filter.copied(), |_| Subsample::Landmark)
}

/// Hybrid intensities: landmark subsample for transitions in `non_markov`,
/// full sample for the rest.
pub fn hybrid_nelson_aalen(
    cohort: &Cohort,
    filter: &LandmarkFilter,
    non_markov: &NonMarkovSet,
) -> CumulativeIntensityMatrix {
    build_intensity(cohort, Some(*filter), |tr| {
        if non_markov.contains(tr) {
            Subsample::Landmark
        } else {
            Subsample::Full
        }
    })
}
