use std::collections::BTreeMap;

use crate::error::{MsmError, Result};
use crate::history::Transition;

/// Weibull transition intensity `a b t^(b-1)`, survival `exp(-a t^b)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Weibull {
    pub scale: f64,
    pub shape: f64,
}

impl Weibull {
    pub fn new(scale: f64, shape: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(MsmError::param("scale", format!("{scale} must be positive")));
        }
        if !(shape > 0.0 && shape.is_finite()) {
            return Err(MsmError::param("shape", format!("{shape} must be positive")));
        }
        Ok(Weibull { scale, shape })
    }

    pub fn hazard(&self, t: f64) -> f64 {
        self.scale * self.shape * t.powf(self.shape - 1.0)
    }

    pub fn cumulative_hazard(&self, t: f64) -> f64 {
        self.scale * t.powf(self.shape)
    }

    pub fn survival(&self, t: f64) -> f64 {
        (-self.cumulative_hazard(t)).exp()
    }

    /// Inverse of the conditional survival `exp(-m a (t^b - t0^b))` at `u`,
    /// i.e. `(t0^b - log(u) / (m a))^(1/b)`, where `m` scales the intensity.
    pub fn conditional_time(&self, t0: f64, u: f64, multiplier: f64) -> f64 {
        let b = self.shape;
        (t0.powf(b) - u.ln() / (multiplier * self.scale)).powf(1.0 / b)
    }

    /// Unconditional draw `(-log(u) / a)^(1/b)`.
    pub fn sojourn_time(&self, u: f64) -> f64 {
        (-u.ln() / self.scale).powf(1.0 / self.shape)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamVariant {
    Markov,
    SemiMarkov,
}

/// Weibull parameters for every transition of the illness-death model.
#[derive(Clone, Debug, PartialEq)]
pub struct WeibullParams {
    pub variant: ParamVariant,
    table: BTreeMap<Transition, Weibull>,
}

type Row = ((usize, usize), (f64, f64));

const MARKOV_TABLE: [Row; 4] = [
    ((1, 2), (0.0057, 0.7050)),
    ((1, 3), (0.0003, 0.9449)),
    ((2, 1), (0.0058, 0.8327)),
    ((2, 3), (0.0017, 0.9253)),
];

const SEMI_MARKOV_TABLE: [Row; 4] = [
    ((1, 2), (0.0037, 0.7453)),
    ((1, 3), (0.0006, 0.8682)),
    ((2, 1), (0.0015, 1.0228)),
    ((2, 3), (0.0046, 0.7549)),
];

impl WeibullParams {
    fn from_table(variant: ParamVariant, rows: &[Row]) -> Self {
        let table = rows
            .iter()
            .map(|&((h, j), (scale, shape))| (Transition::new(h, j), Weibull { scale, shape }))
            .collect();
        WeibullParams { variant, table }
    }

    /// Clock-forward intensities fitted to the prothrombin data.
    pub fn markov() -> Self {
        Self::from_table(ParamVariant::Markov, &MARKOV_TABLE)
    }

    /// Clock-reset (sojourn-time) intensities fitted to the same data.
    pub fn semi_markov() -> Self {
        Self::from_table(ParamVariant::SemiMarkov, &SEMI_MARKOV_TABLE)
    }

    pub fn get(&self, transition: Transition) -> Option<&Weibull> {
        self.table.get(&transition)
    }

    pub fn set(&mut self, transition: Transition, params: Weibull) {
        self.table.insert(transition, params);
    }

    pub fn iter(&self) -> impl Iterator<Item = (Transition, Weibull)> + '_ {
        self.table.iter().map(|(&t, &w)| (t, w))
    }
}
