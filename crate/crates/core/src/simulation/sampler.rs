use rand::Rng;
use rayon::prelude::*;

use crate::error::{MsmError, Result};
use crate::history::{Cohort, Event, SamplePath, StateSpace, Transition};
use crate::rng::{open_unit, stream};

use super::params::{Weibull, WeibullParams};
use super::setting::{CensoringSpec, CohortSpec, Setting};

// Per-subject substreams: index * STREAMS_PER_SUBJECT + purpose.
const STREAMS_PER_SUBJECT: u64 = 4;
const STREAM_START: u64 = 0;
const STREAM_CENSORING: u64 = 1;
const STREAM_FRAILTY: u64 = 2;
const STREAM_TRANSITIONS: u64 = 3;

fn weibull(params: &WeibullParams, transition: Transition) -> &Weibull {
    params
        .get(transition)
        .unwrap_or_else(|| panic!("no Weibull parameters for {transition}"))
}

/// Guard against `u` so close to 1 that the draw does not move past `t0`.
fn strictly_after(t0: f64, t: f64) -> f64 {
    if t > t0 {
        t
    } else {
        t0.next_up()
    }
}

pub fn draw_censoring<R: Rng + ?Sized>(spec: &CensoringSpec, rng: &mut R) -> f64 {
    spec.draw(rng)
}

/// Clock-forward draw conditional on no transition before `t0`.
pub fn draw_markov_time<R: Rng + ?Sized>(params: &WeibullParams, transition: Transition, t0: f64, rng: &mut R) -> f64 {
    draw_frailty_time(params, transition, t0, 1.0, rng)
}

/// Clock-reset draw: an unconditional sojourn added to the entry time.
pub fn draw_semi_markov_time<R: Rng + ?Sized>(
    params: &WeibullParams,
    transition: Transition,
    t0: f64,
    rng: &mut R,
) -> f64 {
    let u = open_unit(rng);
    strictly_after(t0, t0 + weibull(params, transition).sojourn_time(u))
}

/// Clock-forward draw with the intensity multiplied by `w`.
pub fn draw_frailty_time<R: Rng + ?Sized>(
    params: &WeibullParams,
    transition: Transition,
    t0: f64,
    w: f64,
    rng: &mut R,
) -> f64 {
    let u = open_unit(rng);
    strictly_after(t0, weibull(params, transition).conditional_time(t0, u, w))
}

/// Draws sample paths for one setting on the illness-death state space.
#[derive(Clone, Debug)]
pub struct Simulator {
    pub setting: Setting,
    pub params: WeibullParams,
    pub censoring: CensoringSpec,
    space: StateSpace,
}

impl Simulator {
    pub fn new(setting: Setting, params: WeibullParams, censoring: CensoringSpec) -> Result<Self> {
        setting.validate()?;
        censoring.validate()?;
        let space = StateSpace::illness_death();
        for tr in space.transitions() {
            if params.get(tr).is_none() {
                return Err(MsmError::param("params", format!("missing parameters for {tr}")));
            }
        }
        Ok(Simulator {
            setting,
            params,
            censoring,
            space,
        })
    }

    /// Simulator using the setting's own parameter table and default censoring.
    pub fn with_defaults(setting: Setting) -> Result<Self> {
        let params = setting.default_params();
        Simulator::new(setting, params, CensoringSpec::default())
    }

    pub fn state_space(&self) -> &StateSpace {
        &self.space
    }

    pub fn horizon(&self) -> f64 {
        self.censoring.horizon
    }

    /// One competing transition time from state `transition.from`, entered at `t0`.
    /// `pathological_branch` is whether the subject started in state 1 and has
    /// not moved yet (before the threshold) or did not move up to it (after).
    fn draw<R: Rng + ?Sized>(
        &self,
        transition: Transition,
        t0: f64,
        w: f64,
        pathological_branch: bool,
        rng: &mut R,
    ) -> f64 {
        let p = &self.params;
        match &self.setting {
            Setting::Markov => draw_markov_time(p, transition, t0, rng),
            Setting::SemiMarkov => draw_semi_markov_time(p, transition, t0, rng),
            Setting::Frailty { .. } => draw_frailty_time(p, transition, t0, w, rng),
            Setting::PartialFrailty { affected, .. } => {
                let m = if affected.contains(&transition) { w } else { 1.0 };
                draw_frailty_time(p, transition, t0, m, rng)
            }
            Setting::Mixed { changepoint, .. } => {
                if t0 >= *changepoint {
                    return draw_frailty_time(p, transition, t0, w, rng);
                }
                let t = draw_markov_time(p, transition, t0, rng);
                if t > *changepoint && w != 1.0 {
                    draw_frailty_time(p, transition, *changepoint, w, rng)
                } else {
                    t
                }
            }
            Setting::Pathological {
                threshold,
                z_default,
                z_overrides,
            } => {
                let z = z_overrides
                    .iter()
                    .find(|(tr, _)| *tr == transition)
                    .map_or(*z_default, |&(_, z)| z);
                if !pathological_branch {
                    return draw_markov_time(p, transition, t0, rng);
                }
                if t0 >= *threshold {
                    return draw_frailty_time(p, transition, t0, z, rng);
                }
                // Still in the initial state-1 spell: the multiplier switches
                // on at the threshold if no exit happens before it.
                let t = draw_markov_time(p, transition, t0, rng);
                if t > *threshold && z != 1.0 {
                    draw_frailty_time(p, transition, *threshold, z, rng)
                } else {
                    t
                }
            }
        }
    }

    /// Runs the competing-risks loop from `start_state` until absorption or
    /// `censoring_time`. Censoring wins ties with a transition.
    pub fn simulate_path<R: Rng + ?Sized>(
        &self,
        subject_id: u64,
        start_state: usize,
        censoring_time: f64,
        frailty: f64,
        rng: &mut R,
    ) -> Result<SamplePath> {
        if !self.space.contains(start_state) || self.space.is_absorbing(start_state) {
            return Err(MsmError::param(
                "start_state",
                format!("{start_state} is not a transient state"),
            ));
        }
        let mut events = Vec::new();
        let mut state = start_state;
        let mut t0 = 0.0;
        let mut branch = start_state == 1;
        let threshold = match self.setting {
            Setting::Pathological { threshold, .. } => threshold,
            _ => f64::INFINITY,
        };
        while !self.space.is_absorbing(state) {
            let mut best: Option<(f64, usize)> = None;
            for to in self.space.reachable_from(state) {
                let t = self.draw(Transition::new(state, to), t0, frailty, branch, rng);
                if best.is_none_or(|(bt, _)| t < bt) {
                    best = Some((t, to));
                }
            }
            let (t, to) = best.expect("transient state has an exit");
            if t >= censoring_time {
                break;
            }
            if t <= threshold {
                branch = false;
            }
            events.push(Event { time: t, to });
            state = to;
            t0 = t;
        }
        SamplePath::new(
            subject_id,
            start_state,
            events,
            censoring_time,
            self.censoring.horizon,
            &self.space,
        )
    }

    fn subject_streams(seed: u64, index: u64, purpose: u64) -> rand_chacha::ChaCha8Rng {
        stream(seed, index * STREAMS_PER_SUBJECT + purpose)
    }

    /// Subject `index` of a cohort, drawn from its own substreams. With
    /// `censored == false` the path is followed to the horizon.
    pub fn simulate_subject(&self, spec: &CohortSpec, index: u64, censored: bool) -> Result<SamplePath> {
        let seed = spec.seed;
        let start = spec.pick_start(open_unit(&mut Self::subject_streams(seed, index, STREAM_START)));
        let censoring_time = if censored {
            draw_censoring(
                &self.censoring,
                &mut Self::subject_streams(seed, index, STREAM_CENSORING),
            )
        } else {
            self.censoring.horizon
        };
        let frailty = match self.setting.frailty() {
            Some(dist) => dist.sample(&mut Self::subject_streams(seed, index, STREAM_FRAILTY)),
            None => 1.0,
        };
        let mut rng = Self::subject_streams(seed, index, STREAM_TRANSITIONS);
        self.simulate_path(index + 1, start, censoring_time, frailty, &mut rng)
    }

    /// `spec.n` independent censored subjects; reproducible from `spec.seed`
    /// regardless of thread count.
    pub fn simulate_cohort(&self, spec: &CohortSpec) -> Result<Cohort> {
        spec.validate()?;
        let paths = (0..spec.n as u64)
            .into_par_iter()
            .map(|i| self.simulate_subject(spec, i, true))
            .collect::<Result<Vec<_>>>()?;
        Cohort::new(self.space.clone(), self.censoring.horizon, paths)
    }
}
