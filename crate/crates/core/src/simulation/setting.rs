use std::collections::BTreeSet;
use std::fmt;

use rand::{Rng, RngExt};
use rand_distr::{Distribution, Exp, Gamma, Uniform};

use crate::error::{MsmError, Result};
use crate::history::Transition;

use super::params::WeibullParams;

/// Time at which the mixed setting switches from Markov to frailty dynamics.
pub const MIXED_CHANGEPOINT: f64 = 607.54;
/// The pathological setting conditions on staying in state 1 up to this time.
pub const PATHOLOGICAL_THRESHOLD: f64 = 40.0;

/// Distribution of the subject-level multiplicative frailty `W`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FrailtyDist {
    /// Gamma with the given shape and scale (mean `shape * scale`).
    Gamma { shape: f64, scale: f64 },
    /// Every subject gets the same multiplier.
    Fixed(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FrailtyPreset {
    A,
    B,
    C,
}

impl FrailtyPreset {
    pub fn label(self) -> char {
        match self {
            FrailtyPreset::A => 'a',
            FrailtyPreset::B => 'b',
            FrailtyPreset::C => 'c',
        }
    }

    pub fn parse(c: &str) -> Result<Self> {
        match c {
            "a" => Ok(FrailtyPreset::A),
            "b" => Ok(FrailtyPreset::B),
            "c" => Ok(FrailtyPreset::C),
            other => Err(MsmError::param(
                "frailty",
                format!("unknown preset `{other}` (a, b or c)"),
            )),
        }
    }

    /// Unit-mean gamma frailties with variance 0.5, 1 and 2.
    pub fn distribution(self) -> FrailtyDist {
        let (shape, scale) = match self {
            FrailtyPreset::A => (2.0, 0.5),
            FrailtyPreset::B => (1.0, 1.0),
            FrailtyPreset::C => (0.5, 2.0),
        };
        FrailtyDist::Gamma { shape, scale }
    }
}

impl FrailtyDist {
    pub fn mean(&self) -> f64 {
        match *self {
            FrailtyDist::Gamma { shape, scale } => shape * scale,
            FrailtyDist::Fixed(w) => w,
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            FrailtyDist::Gamma { shape, scale } => shape * scale * scale,
            FrailtyDist::Fixed(_) => 0.0,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            FrailtyDist::Gamma { shape, scale } => Gamma::new(shape, scale)
                .expect("validated gamma parameters")
                .sample(rng),
            FrailtyDist::Fixed(w) => w,
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            FrailtyDist::Gamma { shape, scale } if shape > 0.0 && scale > 0.0 => Ok(()),
            FrailtyDist::Fixed(w) if w > 0.0 => Ok(()),
            _ => Err(MsmError::param(
                "frailty",
                format!("{self:?} must have positive parameters"),
            )),
        }
    }
}

/// One of the data-generating mechanisms of the simulation study.
#[derive(Clone, Debug, PartialEq)]
pub enum Setting {
    /// Time-inhomogeneous Markov process (clock forward).
    Markov,
    /// Clock-reset process: intensities depend on time since state entry.
    SemiMarkov,
    /// Shared gamma frailty on every transition.
    Frailty { frailty: FrailtyDist },
    /// Frailty on `affected` transitions only; Markov elsewhere.
    PartialFrailty {
        frailty: FrailtyDist,
        affected: BTreeSet<Transition>,
    },
    /// Markov up to `changepoint`, frailty afterwards.
    Mixed { frailty: FrailtyDist, changepoint: f64 },
    /// Intensities after `threshold` are multiplied by `z` for subjects that
    /// started in state 1 and stayed there through `threshold`.
    Pathological {
        threshold: f64,
        z_default: f64,
        z_overrides: Vec<(Transition, f64)>,
    },
}

impl Setting {
    /// The study's settings by label: `1`, `2`, `3a`-`3c`, `4a`-`4c`, `5a`-`5c`, `6`.
    pub fn from_label(label: &str) -> Result<Self> {
        let bad = || MsmError::param("setting", format!("unknown setting `{label}`"));
        let (num, preset) = label.split_at(1);
        let frailty = || -> Result<FrailtyDist> { Ok(FrailtyPreset::parse(preset)?.distribution()) };
        match num {
            "1" if preset.is_empty() => Ok(Setting::Markov),
            "2" if preset.is_empty() => Ok(Setting::SemiMarkov),
            "3" => Ok(Setting::Frailty { frailty: frailty()? }),
            "4" => Ok(Setting::partial_frailty(frailty()?)),
            "5" => Ok(Setting::Mixed {
                frailty: frailty()?,
                changepoint: MIXED_CHANGEPOINT,
            }),
            "6" if preset.is_empty() => Ok(Setting::pathological()),
            _ => Err(bad()),
        }
    }

    /// Frailty acting on recovery (2 -> 1) only.
    pub fn partial_frailty(frailty: FrailtyDist) -> Self {
        Setting::PartialFrailty {
            frailty,
            affected: [Transition::new(2, 1)].into_iter().collect(),
        }
    }

    /// `z = 0.3` on every transition except recovery, where `z = 3`.
    pub fn pathological() -> Self {
        Setting::Pathological {
            threshold: PATHOLOGICAL_THRESHOLD,
            z_default: 0.3,
            z_overrides: vec![(Transition::new(2, 1), 3.0)],
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Setting::Markov => "markov",
            Setting::SemiMarkov => "semi_markov",
            Setting::Frailty { .. } => "frailty",
            Setting::PartialFrailty { .. } => "partial_frailty",
            Setting::Mixed { .. } => "mixed",
            Setting::Pathological { .. } => "pathological",
        }
    }

    pub fn frailty(&self) -> Option<FrailtyDist> {
        match self {
            Setting::Frailty { frailty } | Setting::PartialFrailty { frailty, .. } | Setting::Mixed { frailty, .. } => {
                Some(*frailty)
            }
            _ => None,
        }
    }

    /// Parameter table the setting is defined with.
    pub fn default_params(&self) -> WeibullParams {
        match self {
            Setting::SemiMarkov => WeibullParams::semi_markov(),
            _ => WeibullParams::markov(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(f) = self.frailty() {
            f.validate()?;
        }
        match self {
            Setting::Mixed { changepoint, .. } if !(*changepoint > 0.0) => {
                Err(MsmError::param("setting.changepoint", "must be positive"))
            }
            Setting::Pathological {
                threshold,
                z_default,
                z_overrides,
            } => {
                if !(*threshold > 0.0) {
                    return Err(MsmError::param("setting.threshold", "must be positive"));
                }
                if !(*z_default > 0.0) || z_overrides.iter().any(|(_, z)| !(*z > 0.0)) {
                    return Err(MsmError::param("setting.z", "multipliers must be positive"));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.kind())
    }
}

/// Exponential censoring with a uniform tail, capped at the study horizon.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CensoringSpec {
    pub rate: f64,
    pub switch: f64,
    pub uniform_low: f64,
    pub uniform_high: f64,
    pub horizon: f64,
}

impl Default for CensoringSpec {
    fn default() -> Self {
        CensoringSpec {
            rate: 0.00035,
            switch: 2500.0,
            uniform_low: 2500.0,
            uniform_high: 5200.0,
            horizon: 4892.0,
        }
    }
}

impl CensoringSpec {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("censoring.rate", self.rate),
            ("censoring.switch", self.switch),
            ("censoring.horizon", self.horizon),
        ];
        for (field, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(MsmError::param(field, format!("{v} must be positive")));
            }
        }
        if !(self.uniform_low < self.uniform_high) {
            return Err(MsmError::param("censoring.uniform_low", "must be below uniform_high"));
        }
        Ok(())
    }

    /// Censoring time from an exponential draw `c1` and, when `c1` exceeds
    /// the switch point, the uniform draw `c2`.
    pub fn resolve(&self, c1: f64, c2: impl FnOnce() -> f64) -> f64 {
        let c = if c1 > self.switch { c2() } else { c1 };
        c.min(self.horizon)
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let c1 = Exp::new(self.rate).expect("validated rate").sample(rng);
        self.resolve(c1, || {
            let u = Uniform::new(self.uniform_low, self.uniform_high).expect("validated range");
            rng.sample(u)
        })
    }

    /// Analytic distribution function of the censoring time.
    pub fn cdf(&self, c: f64) -> f64 {
        if c < 0.0 {
            return 0.0;
        }
        if c >= self.horizon {
            return 1.0;
        }
        let exp_cdf = |x: f64| 1.0 - (-self.rate * x).exp();
        let tail = 1.0 - exp_cdf(self.switch);
        let uniform_cdf = ((c - self.uniform_low) / (self.uniform_high - self.uniform_low)).clamp(0.0, 1.0);
        exp_cdf(c.min(self.switch)) + tail * uniform_cdf
    }
}

/// Cohort size and initial-state distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct CohortSpec {
    pub n: usize,
    /// `(state, probability)`; probabilities sum to one.
    pub start_distribution: Vec<(usize, f64)>,
    pub seed: u64,
}

impl CohortSpec {
    pub fn new(n: usize, seed: u64) -> Self {
        CohortSpec {
            n,
            start_distribution: vec![(1, 0.4467), (2, 0.5533)],
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let total: f64 = self.start_distribution.iter().map(|&(_, p)| p).sum();
        if (total - 1.0).abs() > 1e-9 || self.start_distribution.iter().any(|&(_, p)| p < 0.0) {
            return Err(MsmError::param(
                "cohort.start_distribution",
                "probabilities must sum to 1",
            ));
        }
        Ok(())
    }

    pub(crate) fn pick_start(&self, u: f64) -> usize {
        let mut acc = 0.0;
        for &(state, p) in &self.start_distribution {
            acc += p;
            if u < acc {
                return state;
            }
        }
        self.start_distribution.last().expect("non-empty start distribution").0
    }
}
