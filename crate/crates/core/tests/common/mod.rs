#![allow(dead_code)]

use msm_core::rng::stream;
use msm_core::{Cohort, Event, SamplePath, StateSpace, Transition};
use rand::{Rng, RngExt};

/// Random illness-death cohort. With `integer_times` every event and
/// censoring time is a whole number, which produces plenty of ties.
pub fn random_illness_death(seed: u64, n: usize, integer_times: bool) -> Cohort {
    let space = StateSpace::illness_death();
    let horizon = 50.0;
    let mut rng = stream(seed, 0);
    let mut paths = Vec::with_capacity(n);
    for id in 0..n {
        let start = if rng.random_bool(0.8) { 1 } else { 2 };
        let mut censoring: f64 = rng.random_range(1.0..horizon);
        if integer_times {
            censoring = censoring.ceil();
        }
        let mut events = Vec::new();
        let mut state = start;
        let mut t: f64 = 0.0;
        loop {
            let mut next: f64 = t + rng.random_range(0.2..15.0);
            if integer_times {
                next = next.floor().max(t + 1.0);
            }
            if next > censoring || space.is_absorbing(state) {
                break;
            }
            let targets: Vec<usize> = space.reachable_from(state).collect();
            let to = targets[rng.random_range(0..targets.len())];
            events.push(Event { time: next, to });
            state = to;
            t = next;
            if space.is_absorbing(state) {
                break;
            }
        }
        paths.push(SamplePath::new(id as u64 + 1, start, events, censoring, horizon, &space).unwrap());
    }
    Cohort::new(space, horizon, paths).unwrap()
}

/// Random alive/dead cohort with integer times in `1..=30`.
pub fn random_two_state(seed: u64, n: usize) -> Cohort {
    let space = StateSpace::two_state();
    let horizon = 30.0;
    let mut rng = stream(seed, 1);
    let paths = (0..n)
        .map(|id| {
            let time = f64::from(rng.random_range(1u32..=30));
            let events = if rng.random_bool(0.6) {
                vec![Event { time, to: 2 }]
            } else {
                vec![]
            };
            SamplePath::new(id as u64 + 1, 1, events, time, horizon, &space).unwrap()
        })
        .collect();
    Cohort::new(space, horizon, paths).unwrap()
}

/// `(time, event)` pairs of a two-state cohort, for oracles that do not go
/// through the library's counting processes.
pub fn survival_data(cohort: &Cohort) -> Vec<(f64, bool)> {
    cohort
        .paths()
        .iter()
        .map(|p| match p.events().first() {
            Some(e) => (e.time, true),
            None => (p.censoring_time(), false),
        })
        .collect()
}

/// Product-limit survival and Greenwood variance at `t`.
pub fn kaplan_meier(data: &[(f64, bool)], t: f64) -> (f64, f64) {
    let mut times: Vec<f64> = data.iter().filter(|d| d.1 && d.0 <= t).map(|d| d.0).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let mut surv = 1.0;
    let mut gw_sum = 0.0;
    for &u in &times {
        let at_risk = data.iter().filter(|d| d.0 >= u).count() as f64;
        let deaths = data.iter().filter(|d| d.1 && d.0 == u).count() as f64;
        surv *= 1.0 - deaths / at_risk;
        if deaths < at_risk {
            gw_sum += deaths / (at_risk * (at_risk - deaths));
        }
    }
    if surv == 0.0 {
        return (0.0, 0.0);
    }
    (surv, surv * surv * gw_sum)
}

pub fn illness_death_transitions() -> [Transition; 4] {
    [
        Transition::new(1, 2),
        Transition::new(1, 3),
        Transition::new(2, 1),
        Transition::new(2, 3),
    ]
}

/// Uniform on `(0, 1)` helper for tests that need raw draws.
pub fn unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    msm_core::rng::open_unit(rng)
}

/// Kolmogorov-Smirnov distance between a sample and a continuous
/// distribution function. Sample points where `cdf` is not continuous
/// (e.g. an atom at the horizon) can be skipped with `keep`.
pub fn ks_statistic(sample: &mut [f64], cdf: impl Fn(f64) -> f64, keep: impl Fn(f64) -> bool) -> f64 {
    sample.sort_by(f64::total_cmp);
    let n = sample.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sample.iter().enumerate() {
        if !keep(x) {
            continue;
        }
        let f = cdf(x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    d
}

/// Asymptotic Kolmogorov tail probability with the usual small-sample
/// correction of the scaling factor.
pub fn ks_p_value(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda < 0.2 {
        return 1.0;
    }
    let mut p = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        let sign = if k as u64 % 2 == 1 { 1.0 } else { -1.0 };
        p += sign * (-2.0 * k * k * lambda * lambda).exp();
    }
    (2.0 * p).clamp(0.0, 1.0)
}
