use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::counting::LandmarkFilter;
use crate::history::{Cohort, Transition};
use crate::rng::stream;

use super::TestFlag;

/// Grid of landmark times and bootstrap settings for the log-rank test.
#[derive(Clone, Debug, PartialEq)]
pub struct LogRankConfig {
    /// Number of equally spaced grid times over `[0, max_time]`.
    pub grid_size: usize,
    pub n_bootstrap: usize,
    /// Minimum harmonic-mean group size `|A||B| / (|A| + |B|)`, exclusive.
    pub min_weight: f64,
    pub seed: u64,
}

impl Default for LogRankConfig {
    fn default() -> Self {
        LogRankConfig {
            grid_size: 60,
            n_bootstrap: 500,
            min_weight: 2.5,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogRankTestResult {
    pub transition: Transition,
    pub statistic: f64,
    pub p_value: f64,
    /// Retained `(state, time)` comparisons.
    pub grid: Vec<(usize, f64)>,
    pub n_bootstrap: usize,
    pub flag: TestFlag,
}

impl LogRankTestResult {
    pub fn grid_times(&self) -> Vec<f64> {
        let mut t: Vec<f64> = self.grid.iter().map(|&(_, s)| s).collect();
        t.dedup();
        t
    }
}

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|i| {
                if i == n - 1 {
                    hi
                } else {
                    lo + (hi - lo) * i as f64 / (n - 1) as f64
                }
            })
            .collect(),
    }
}

#[derive(Clone, Copy, Debug)]
struct HSpell {
    subject: usize,
    entry: f64,
    exit: f64,
    event: bool,
}

/// Pooled Nelson-Aalen estimate of `A_hj` plus the spells in `h`.
struct Pooled {
    spells: Vec<HSpell>,
    times: Vec<f64>,
    dn: Vec<f64>,
    at_risk: Vec<f64>,
    // prefix[e] = A_hj just before the e-th event time
    prefix: Vec<f64>,
}

impl Pooled {
    fn new(cohort: &Cohort, transition: Transition) -> Self {
        let spells: Vec<HSpell> = cohort
            .spells()
            .iter()
            .filter(|cs| cs.spell.state == transition.from)
            .map(|cs| HSpell {
                subject: cs.subject,
                entry: cs.spell.entry,
                exit: cs.spell.exit,
                event: cs.spell.outcome == Some(transition.to),
            })
            .collect();
        let mut times: Vec<f64> = spells.iter().filter(|s| s.event).map(|s| s.exit).collect();
        times.sort_by(f64::total_cmp);
        times.dedup();
        let mut dn = vec![0.0; times.len()];
        let mut diff = vec![0.0; times.len() + 1];
        for s in &spells {
            let (lo, hi) = index_range(&times, s.entry, s.exit);
            diff[lo] += 1.0;
            diff[hi] -= 1.0;
            if s.event {
                dn[times.partition_point(|&t| t < s.exit)] += 1.0;
            }
        }
        let mut at_risk = Vec::with_capacity(times.len());
        let mut y = 0.0;
        for d in &diff[..times.len()] {
            y += d;
            at_risk.push(y);
        }
        let mut prefix = Vec::with_capacity(times.len() + 1);
        prefix.push(0.0);
        for e in 0..times.len() {
            prefix.push(prefix[e] + dn[e] / at_risk[e]);
        }
        Pooled {
            spells,
            times,
            dn,
            at_risk,
            prefix,
        }
    }
}

/// Event indices `e` with `lo < times[e] <= hi`.
fn index_range(times: &[f64], lo: f64, hi: f64) -> (usize, usize) {
    let a = times.partition_point(|&t| t <= lo);
    let b = times.partition_point(|&t| t <= hi).max(a);
    (a, b)
}

/// Per-subject contributions to one local statistic, or `None` when the
/// comparison is not retained.
fn local_residuals(pooled: &Pooled, in_group: &[bool], s: f64, n_subjects: usize, min_weight: f64) -> Option<Vec<f64>> {
    let ne = pooled.times.len();
    let start = pooled.times.partition_point(|&t| t <= s);

    let mut seen_a = vec![false; n_subjects];
    let mut seen_b = vec![false; n_subjects];
    let mut diff = vec![0.0; ne + 1];
    for sp in &pooled.spells {
        if sp.exit <= s {
            continue;
        }
        if in_group[sp.subject] {
            seen_a[sp.subject] = true;
            let (lo, hi) = index_range(&pooled.times, sp.entry.max(s), sp.exit);
            diff[lo] += 1.0;
            diff[hi] -= 1.0;
        } else {
            seen_b[sp.subject] = true;
        }
    }
    let na = seen_a.iter().filter(|&&x| x).count() as f64;
    let nb = seen_b.iter().filter(|&&x| x).count() as f64;
    if na == 0.0 || nb == 0.0 || na * nb / (na + nb) <= min_weight {
        return None;
    }

    // g(t) = Y_A(t) / Y(t); gprefix[e] = sum of g dA before event index e, from s on
    let mut g = vec![0.0; ne];
    let mut gprefix = vec![0.0; ne + 1];
    let mut ya = 0.0;
    for e in 0..ne {
        ya += diff[e];
        if e >= start {
            g[e] = ya / pooled.at_risk[e];
            gprefix[e + 1] = gprefix[e] + g[e] * pooled.dn[e] / pooled.at_risk[e];
        } else {
            gprefix[e + 1] = gprefix[e];
        }
    }

    let mut r = vec![0.0; n_subjects];
    for sp in &pooled.spells {
        if sp.exit <= s {
            continue;
        }
        let (lo, hi) = index_range(&pooled.times, sp.entry.max(s), sp.exit);
        let compensator = pooled.prefix[hi] - pooled.prefix[lo];
        let g_compensator = gprefix[hi] - gprefix[lo];
        let (n_i, g_n) = if sp.event {
            (1.0, g[pooled.times.partition_point(|&t| t < sp.exit)])
        } else {
            (0.0, 0.0)
        };
        let a = if in_group[sp.subject] { 1.0 } else { 0.0 };
        r[sp.subject] += a * (n_i - compensator) - (g_n - g_compensator);
    }
    let v: f64 = r.iter().map(|x| x * x).sum();
    if !(v > 1e-12) {
        return None;
    }
    let sd = v.sqrt();
    r.iter_mut().for_each(|x| *x /= sd);
    Some(r)
}

/// Global log-rank test of whether the `h -> j` intensity after `s` depends on
/// the state occupied at `s`, maximised over grid times and states, with a
/// wild-bootstrap null.
pub fn logrank_grid_test(cohort: &Cohort, transition: Transition, config: &LogRankConfig) -> LogRankTestResult {
    let untestable = |grid| LogRankTestResult {
        transition,
        statistic: 0.0,
        p_value: 1.0,
        grid,
        n_bootstrap: config.n_bootstrap,
        flag: TestFlag::Untestable,
    };
    let pooled = Pooled::new(cohort, transition);
    if pooled.times.is_empty() {
        return untestable(Vec::new());
    }
    let n = cohort.len();
    let space = cohort.state_space();
    let mut grid = Vec::new();
    let mut columns: Vec<Vec<f64>> = Vec::new();
    for s in linspace(0.0, cohort.max_time(), config.grid_size) {
        for l in space.non_absorbing() {
            let filter = LandmarkFilter::new(l, s, space).expect("transient state and valid time");
            let mask = filter.mask(cohort);
            if let Some(r) = local_residuals(&pooled, &mask, s, n, config.min_weight) {
                grid.push((l, s));
                columns.push(r);
            }
        }
    }
    if columns.is_empty() {
        return untestable(grid);
    }
    let max_abs = |weights: &[f64]| -> f64 {
        columns
            .iter()
            .map(|r| r.iter().zip(weights).map(|(x, w)| x * w).sum::<f64>().abs())
            .fold(0.0, f64::max)
    };
    let observed = max_abs(&vec![1.0; n]);
    let exceed: usize = (0..config.n_bootstrap as u64)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream(config.seed, b);
            let mult: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
            usize::from(max_abs(&mult) >= observed)
        })
        .sum();
    LogRankTestResult {
        transition,
        statistic: observed,
        p_value: (1 + exceed) as f64 / (config.n_bootstrap + 1) as f64,
        grid,
        n_bootstrap: config.n_bootstrap,
        flag: TestFlag::Ok,
    }
}
