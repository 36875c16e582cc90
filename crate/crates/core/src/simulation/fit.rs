use crate::error::{MsmError, Result};
use crate::history::{Cohort, Transition};

use super::params::Weibull;

/// One spell at risk for a transition: observed on `(entry, time]`, ending in
/// the transition when `event` is true.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeibullObservation {
    pub time: f64,
    pub entry: f64,
    pub event: bool,
}

/// Time scale for the transition records.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Clock {
    /// Calendar time since study start; later spells are left-truncated at entry.
    Forward,
    /// Time since entering the current state.
    Reset,
}

/// Every spell in `transition.from`, as Weibull records for `transition`.
/// Competing transitions count as censoring.
pub fn transition_observations(cohort: &Cohort, transition: Transition, clock: Clock) -> Vec<WeibullObservation> {
    cohort
        .spells()
        .iter()
        .filter(|cs| cs.spell.state == transition.from)
        .map(|cs| {
            let s = cs.spell;
            let event = s.outcome == Some(transition.to);
            match clock {
                Clock::Forward => WeibullObservation {
                    time: s.exit,
                    entry: s.entry,
                    event,
                },
                Clock::Reset => WeibullObservation {
                    time: s.exit - s.entry,
                    entry: 0.0,
                    event,
                },
            }
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeibullFit {
    pub params: Weibull,
    pub log_likelihood: f64,
    pub iterations: usize,
}

/// Log-likelihood and its gradient in `(log a, log b)`.
///
/// `l = sum d (log a + log b + (b - 1) log t) - a t^b + a w^b`
pub fn weibull_log_likelihood(obs: &[WeibullObservation], log_scale: f64, log_shape: f64) -> (f64, [f64; 2]) {
    let a = log_scale.exp();
    let b = log_shape.exp();
    let mut ll = 0.0;
    let mut g = [0.0; 2];
    for o in obs {
        let lt = o.time.ln();
        let tb = (b * lt).exp();
        let (wb, wb_lw) = if o.entry > 0.0 {
            let lw = o.entry.ln();
            let wb = (b * lw).exp();
            (wb, wb * lw)
        } else {
            (0.0, 0.0)
        };
        if o.event {
            ll += log_scale + log_shape + (b - 1.0) * lt;
            g[0] += 1.0;
            g[1] += 1.0 + b * lt;
        }
        ll += -a * tb + a * wb;
        g[0] += -a * tb + a * wb;
        g[1] += -a * b * tb * lt + a * b * wb_lw;
    }
    (ll, g)
}

const MAX_ITER: usize = 500;
const GRAD_TOL: f64 = 1e-9;

/// Maximum-likelihood Weibull fit under right censoring and left truncation,
/// by BFGS on `(log a, log b)`. Starts from `init`, or from the exponential
/// fit when `None`.
pub fn fit_weibull(obs: &[WeibullObservation], init: Option<Weibull>) -> Result<WeibullFit> {
    if let Some(o) = obs.iter().find(|o| !(o.time > o.entry && o.entry >= 0.0)) {
        return Err(MsmError::param(
            "observations",
            format!("need 0 <= entry < time, got entry {} time {}", o.entry, o.time),
        ));
    }
    let events: Vec<f64> = obs.iter().filter(|o| o.event).map(|o| o.time).collect();
    if events.len() < 2 {
        return Err(MsmError::InsufficientData(format!(
            "{} uncensored events, need at least 2",
            events.len()
        )));
    }
    if events.iter().all(|&t| t == events[0]) {
        return Err(MsmError::Unidentifiable(format!("every event at time {}", events[0])));
    }

    let n = obs.len() as f64;
    let init = init.unwrap_or_else(|| {
        let exposure: f64 = obs.iter().map(|o| o.time - o.entry).sum();
        Weibull {
            scale: events.len() as f64 / exposure,
            shape: 1.0,
        }
    });
    // minimise f = -l / n
    let objective = |x: [f64; 2]| {
        let (ll, g) = weibull_log_likelihood(obs, x[0], x[1]);
        (-ll / n, [-g[0] / n, -g[1] / n])
    };

    let mut x = [init.scale.ln(), init.shape.ln()];
    let (mut f, mut g) = objective(x);
    let mut h = [[1.0, 0.0], [0.0, 1.0]];
    for iter in 0..MAX_ITER {
        if g[0].abs().max(g[1].abs()) < GRAD_TOL {
            return Ok(WeibullFit {
                params: Weibull {
                    scale: x[0].exp(),
                    shape: x[1].exp(),
                },
                log_likelihood: -f * n,
                iterations: iter,
            });
        }
        let mut d = [-(h[0][0] * g[0] + h[0][1] * g[1]), -(h[1][0] * g[0] + h[1][1] * g[1])];
        let mut slope = d[0] * g[0] + d[1] * g[1];
        if slope >= 0.0 {
            h = [[1.0, 0.0], [0.0, 1.0]];
            d = [-g[0], -g[1]];
            slope = -(g[0] * g[0] + g[1] * g[1]);
        }
        // keep exp() in range on the first steps
        let max_step = d[0].abs().max(d[1].abs());
        let mut step = if max_step > 2.0 { 2.0 / max_step } else { 1.0 };
        let (x_new, f_new, g_new) = loop {
            let cand = [x[0] + step * d[0], x[1] + step * d[1]];
            let (fc, gc) = objective(cand);
            if fc.is_finite() && fc <= f + 1e-4 * step * slope {
                break (cand, fc, gc);
            }
            step *= 0.5;
            if step < 1e-16 {
                return Err(MsmError::NonConvergence {
                    iterations: iter,
                    scale: x[0].exp(),
                    shape: x[1].exp(),
                });
            }
        };
        let s = [x_new[0] - x[0], x_new[1] - x[1]];
        let y = [g_new[0] - g[0], g_new[1] - g[1]];
        let sy = s[0] * y[0] + s[1] * y[1];
        if sy > 1e-12 * (s[0] * s[0] + s[1] * s[1]).sqrt() * (y[0] * y[0] + y[1] * y[1]).sqrt() {
            let rho = 1.0 / sy;
            // H <- (I - rho s y') H (I - rho y s') + rho s s'
            let mut a = [[0.0; 2]; 2];
            for i in 0..2 {
                for j in 0..2 {
                    a[i][j] = f64::from(u8::from(i == j)) - rho * s[i] * y[j];
                }
            }
            let mut ah = [[0.0; 2]; 2];
            for i in 0..2 {
                for j in 0..2 {
                    ah[i][j] = a[i][0] * h[0][j] + a[i][1] * h[1][j];
                }
            }
            for i in 0..2 {
                for j in 0..2 {
                    h[i][j] = ah[i][0] * a[j][0] + ah[i][1] * a[j][1] + rho * s[i] * s[j];
                }
            }
        }
        let converged_f = (f - f_new).abs() <= 1e-15 * f.abs().max(1.0);
        x = x_new;
        f = f_new;
        g = g_new;
        if converged_f && g[0].abs().max(g[1].abs()) < 1e-6 {
            return Ok(WeibullFit {
                params: Weibull {
                    scale: x[0].exp(),
                    shape: x[1].exp(),
                },
                log_likelihood: -f * n,
                iterations: iter + 1,
            });
        }
    }
    Err(MsmError::NonConvergence {
        iterations: MAX_ITER,
        scale: x[0].exp(),
        shape: x[1].exp(),
    })
}
