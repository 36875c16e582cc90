use statrs::function::erf::erfc;

use crate::history::{Cohort, Transition};

use super::TestFlag;

/// One at-risk spell for the Cox model: at risk on `(entry, exit]` with a
/// fixed covariate, ending in the event of interest when `event` is true.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoxSpell {
    pub entry: f64,
    pub exit: f64,
    pub covariate: f64,
    pub event: bool,
}

/// Risk sets of a single-covariate Cox model with Breslow ties.
#[derive(Clone, Debug)]
pub struct CoxData {
    covariates: Vec<f64>,
    // per distinct event time: (number of events, sum of event covariates, risk-set members)
    event_sets: Vec<(f64, f64, Vec<u32>)>,
    shift: f64,
}

impl CoxData {
    pub fn new(spells: &[CoxSpell]) -> Self {
        let mut times: Vec<f64> = spells.iter().filter(|s| s.event).map(|s| s.exit).collect();
        times.sort_by(f64::total_cmp);
        times.dedup();
        let mut event_sets: Vec<(f64, f64, Vec<u32>)> = vec![(0.0, 0.0, Vec::new()); times.len()];
        for (i, s) in spells.iter().enumerate() {
            let lo = times.partition_point(|&t| t <= s.entry);
            let hi = times.partition_point(|&t| t <= s.exit);
            for set in &mut event_sets[lo..hi] {
                set.2.push(i as u32);
            }
            if s.event {
                let g = times.partition_point(|&t| t < s.exit);
                event_sets[g].0 += 1.0;
                event_sets[g].1 += s.covariate;
            }
        }
        let covariates: Vec<f64> = spells.iter().map(|s| s.covariate).collect();
        // centring keeps exp(theta z) in range; the likelihood is shift invariant
        let shift = if covariates.is_empty() {
            0.0
        } else {
            covariates.iter().sum::<f64>() / covariates.len() as f64
        };
        CoxData {
            covariates,
            event_sets,
            shift,
        }
    }

    /// Spells in `transition.from`, with the entry time into that state as
    /// covariate (0 for a subject that started there).
    pub fn entry_time_model(cohort: &Cohort, transition: Transition) -> Self {
        let spells: Vec<CoxSpell> = cohort
            .spells()
            .iter()
            .filter(|cs| cs.spell.state == transition.from)
            .map(|cs| CoxSpell {
                entry: cs.spell.entry,
                exit: cs.spell.exit,
                covariate: cs.spell.entry,
                event: cs.spell.outcome == Some(transition.to),
            })
            .collect();
        CoxData::new(&spells)
    }

    pub fn n_events(&self) -> usize {
        self.event_sets.iter().map(|e| e.0 as usize).sum()
    }

    /// True when every risk set holds a single covariate value, so the
    /// likelihood is flat in theta.
    pub fn is_degenerate(&self) -> bool {
        self.event_sets.iter().all(|(_, _, members)| {
            let mut it = members.iter().map(|&i| self.covariates[i as usize]);
            match it.next() {
                Some(first) => it.all(|z| z == first),
                None => true,
            }
        })
    }

    /// Partial log-likelihood, score and observed information at `theta`.
    pub fn evaluate(&self, theta: f64) -> (f64, f64, f64) {
        let w: Vec<f64> = self
            .covariates
            .iter()
            .map(|&z| (theta * (z - self.shift)).exp())
            .collect();
        let mut ll = 0.0;
        let mut score = 0.0;
        let mut info = 0.0;
        for (d, zsum, members) in &self.event_sets {
            let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
            for &i in members {
                let z = self.covariates[i as usize] - self.shift;
                let wi = w[i as usize];
                s0 += wi;
                s1 += wi * z;
                s2 += wi * z * z;
            }
            let mean = s1 / s0;
            let zc = zsum - d * self.shift;
            ll += theta * zc - d * s0.ln();
            score += zc - d * mean;
            info += d * (s2 / s0 - mean * mean);
        }
        (ll, score, info)
    }
}

/// Outcome of the entry-time Cox test for one transition.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoxFitResult {
    pub transition: Transition,
    pub theta_hat: f64,
    pub se: f64,
    pub wald: f64,
    pub p_value: f64,
    pub converged: bool,
    pub iterations: usize,
    pub flag: TestFlag,
}

const MAX_ITER: usize = 50;
const SCORE_TOL: f64 = 1e-8;

/// Two-sided normal p-value `2 (1 - Phi(|w|))`.
pub fn two_sided_p(w: f64) -> f64 {
    erfc(w.abs() / std::f64::consts::SQRT_2).min(1.0)
}

/// Damped Newton-Raphson from `theta = 0` with step halving.
/// Returns `(theta, iterations, converged)`.
pub fn maximize(data: &CoxData) -> (f64, usize, bool) {
    let mut theta = 0.0;
    let (mut ll, mut score, mut info) = data.evaluate(theta);
    for iter in 0..MAX_ITER {
        if score.abs() < SCORE_TOL {
            return (theta, iter, true);
        }
        if !(info > 0.0) {
            return (theta, iter, false);
        }
        let mut step = score / info;
        let mut accepted = None;
        for _ in 0..60 {
            let cand = theta + step;
            let (l, s, i) = data.evaluate(cand);
            if l.is_finite() && l >= ll {
                accepted = Some((cand, l, s, i));
                break;
            }
            step *= 0.5;
        }
        match accepted {
            Some((cand, l, s, i)) => {
                let moved = (cand - theta).abs();
                theta = cand;
                ll = l;
                score = s;
                info = i;
                // At the optimum the score can stall at a rounding floor above
                // the tolerance; a vanishing Newton step means we are there.
                if moved <= 1e-14 * theta.abs().max(1e-300) || moved == 0.0 {
                    return (theta, iter + 1, true);
                }
            }
            None => {
                let newton = (score / info).abs();
                return (theta, iter + 1, newton <= 1e-10 * theta.abs().max(1e-12));
            }
        }
    }
    (theta, MAX_ITER, score.abs() < SCORE_TOL)
}

/// Wald test of `theta = 0` in `alpha_hj(t) = alpha_0(t) exp(theta t_h)`,
/// `t_h` the most recent entry time into `h`.
pub fn cox_entry_time_test(cohort: &Cohort, transition: Transition) -> CoxFitResult {
    cox_test(&CoxData::entry_time_model(cohort, transition), transition)
}

pub fn cox_test(data: &CoxData, transition: Transition) -> CoxFitResult {
    let flat = |flag| CoxFitResult {
        transition,
        theta_hat: 0.0,
        se: 0.0,
        wald: 0.0,
        p_value: 1.0,
        converged: true,
        iterations: 0,
        flag,
    };
    if data.n_events() == 0 {
        return flat(TestFlag::Untestable);
    }
    if data.is_degenerate() {
        return flat(TestFlag::Degenerate);
    }
    let (theta, iterations, converged) = maximize(data);
    let (_, _, info) = data.evaluate(theta);
    let se = if info > 0.0 { 1.0 / info.sqrt() } else { f64::INFINITY };
    let wald = if se.is_finite() && se > 0.0 { theta / se } else { 0.0 };
    CoxFitResult {
        transition,
        theta_hat: theta,
        se,
        wald,
        p_value: two_sided_p(wald),
        converged,
        iterations,
        flag: if converged {
            TestFlag::Ok
        } else {
            TestFlag::NotConverged
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spell(entry: f64, exit: f64, covariate: f64, event: bool) -> CoxSpell {
        CoxSpell {
            entry,
            exit,
            covariate,
            event,
        }
    }

    #[test]
    fn two_spell_score_equation() {
        // events at 1 (z = 0, both at risk) and 2 (z = 3, alone at risk)
        // the second term is identically 0, so only the first shapes the
        // likelihood: l = -log(1 + exp(3 theta)), decreasing in theta
        let data = CoxData::new(&[
            spell(0.0, 1.0, 0.0, true),
            spell(0.0, 2.0, 3.0, true),
            spell(0.0, 0.5, 3.0, false),
        ]);
        let (_, s0, i0) = data.evaluate(0.0);
        assert!((s0 + 1.5).abs() < 1e-12);
        assert!((i0 - 2.25).abs() < 1e-12);
    }

    #[test]
    fn constant_covariate_is_degenerate() {
        let data = CoxData::new(&[spell(0.0, 1.0, 0.0, true), spell(0.0, 2.0, 0.0, false)]);
        assert!(data.is_degenerate());
        let r = cox_test(&data, Transition::new(1, 2));
        assert_eq!(r.p_value, 1.0);
        assert_eq!(r.flag, TestFlag::Degenerate);
    }

    #[test]
    fn no_events_is_untestable() {
        let data = CoxData::new(&[spell(0.0, 1.0, 0.0, false)]);
        let r = cox_test(&data, Transition::new(1, 2));
        assert_eq!(r.flag, TestFlag::Untestable);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn p_value_matches_normal_tail() {
        let p = two_sided_p(1.959963984540054);
        assert!((p - 0.05).abs() < 1e-10, "{p}");
        assert_eq!(two_sided_p(0.0), 1.0);
    }
}
