//! Run configuration: TOML schema, defaults and validation into a [`Plan`].

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::error::CliError;
use crate::manifest::sha256_hex;
use msm_core::estimators::Estimator;
use msm_core::markov_tests::{linspace, LogRankConfig, TestConfig, TestMethod};
use msm_core::simulation::{
    CensoringSpec, CohortSpec, FrailtyDist, FrailtyPreset, Setting, Simulator, Weibull, WeibullParams,
};
use msm_core::study::DEFAULT_START_TIMES;
use msm_core::{MsmError, StateSpace, Transition};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub setting: SettingConfig,
    pub cohort: CohortConfig,
    pub censoring: CensoringConfig,
    pub parameters: Vec<ParameterOverride>,
    pub estimation: EstimationConfig,
    pub tests: TestsConfig,
    pub truth: TruthConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 1,
            output_dir: None,
            setting: SettingConfig::default(),
            cohort: CohortConfig::default(),
            censoring: CensoringConfig::default(),
            parameters: Vec::new(),
            estimation: EstimationConfig::default(),
            tests: TestsConfig::default(),
            truth: TruthConfig::default(),
        }
    }
}

/// Either a study `label` (`1`, `2`, `3a`-`3c`, `4a`-`4c`, `5a`-`5c`, `6`) or
/// an explicit `kind` with its options.
#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct SettingConfig {
    pub label: Option<String>,
    pub kind: Option<String>,
    /// Gamma preset `a`, `b` or `c`.
    pub frailty: Option<String>,
    /// Unit-mean gamma frailty with this variance.
    pub frailty_variance: Option<f64>,
    /// Transitions carrying the frailty in `partial_frailty`.
    pub affected: Option<Vec<String>>,
    pub changepoint: Option<f64>,
    pub threshold: Option<f64>,
    pub z_default: Option<f64>,
    pub z_overrides: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct CohortConfig {
    pub n: usize,
    pub replicates: usize,
    /// Initial-state probabilities keyed by state, e.g. `{ "1" = 0.5, "2" = 0.5 }`.
    pub start_distribution: Option<BTreeMap<String, f64>>,
}

impl Default for CohortConfig {
    fn default() -> Self {
        CohortConfig {
            n: 488,
            replicates: 500,
            start_distribution: None,
        }
    }
}

/// Overrides of the default censoring constants.
#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct CensoringConfig {
    pub rate: Option<f64>,
    pub switch: Option<f64>,
    pub uniform_low: Option<f64>,
    pub uniform_high: Option<f64>,
    pub horizon: Option<f64>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ParameterOverride {
    pub transition: String,
    pub scale: f64,
    pub shape: f64,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimationConfig {
    pub estimators: Vec<String>,
    pub start_times: Vec<f64>,
    pub grid_size: usize,
    pub confidence: f64,
}

impl Default for EstimationConfig {
    fn default() -> Self {
        EstimationConfig {
            estimators: Estimator::ALL.iter().map(|e| e.to_string()).collect(),
            start_times: DEFAULT_START_TIMES.to_vec(),
            grid_size: 800,
            confidence: 0.95,
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct TestsConfig {
    pub methods: Vec<String>,
    pub alpha: f64,
    pub n_bootstrap: usize,
    pub grid_size: usize,
    pub min_weight: f64,
}

impl Default for TestsConfig {
    fn default() -> Self {
        let lr = LogRankConfig::default();
        TestsConfig {
            methods: vec!["cox".into(), "logrank".into()],
            alpha: 0.05,
            n_bootstrap: lr.n_bootstrap,
            grid_size: lr.grid_size,
            min_weight: lr.min_weight,
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct TruthConfig {
    pub n_paths: usize,
}

impl Default for TruthConfig {
    fn default() -> Self {
        TruthConfig { n_paths: 200_000 }
    }
}

impl RunConfig {
    /// Parses TOML; errors name the offending field path.
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let de = toml::Deserializer::parse(text).map_err(|e| CliError::validation("config", e.to_string()))?;
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let path = if path == "." { "config".to_string() } else { path };
            CliError::validation(path, e.into_inner().message().trim().to_string())
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is representable in TOML")
    }
}

/// A validated configuration, ready to run.
#[derive(Clone, Debug)]
pub struct Plan {
    pub label: String,
    pub seed: u64,
    pub simulator: Simulator,
    pub cohort: CohortSpec,
    pub replicates: usize,
    pub estimators: Vec<Estimator>,
    pub start_times: Vec<f64>,
    pub report_grid: Vec<f64>,
    pub confidence: f64,
    pub tests: TestConfig,
    pub truth_paths: usize,
    pub digests: InputDigests,
}

/// Hashes of the configuration sections each stage depends on.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InputDigests {
    pub simulate: String,
    pub truth: String,
    pub test: String,
    pub estimate: String,
    pub evaluate: String,
}

fn digest_of<T: Serialize>(value: &T) -> String {
    sha256_hex(serde_json::to_string(value).expect("serializable").as_bytes())
}

fn from_core(e: MsmError) -> CliError {
    match e {
        MsmError::InvalidParameter { field, message } => CliError::validation(field, message),
        other => CliError::validation("config", other.to_string()),
    }
}

fn unit_interval(path: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(CliError::validation(path, format!("{v} must lie in (0, 1)")))
    }
}

fn at_least(path: &str, v: usize, min: usize) -> Result<(), CliError> {
    if v >= min {
        Ok(())
    } else {
        Err(CliError::validation(path, format!("{v} must be at least {min}")))
    }
}

fn transition(path: &str, s: &str, space: &StateSpace) -> Result<Transition, CliError> {
    let tr: Transition = s
        .parse()
        .map_err(|_| CliError::validation(path, format!("cannot parse `{s}`")))?;
    if !space.transitions().any(|t| t == tr) {
        return Err(CliError::validation(
            path,
            format!("{tr} is not a permitted transition"),
        ));
    }
    Ok(tr)
}

impl SettingConfig {
    /// Kind-specific options that are set, by field path.
    fn options_set(&self) -> Vec<&'static str> {
        [
            ("setting.frailty", self.frailty.is_some()),
            ("setting.frailty_variance", self.frailty_variance.is_some()),
            ("setting.affected", self.affected.is_some()),
            ("setting.changepoint", self.changepoint.is_some()),
            ("setting.threshold", self.threshold.is_some()),
            ("setting.z_default", self.z_default.is_some()),
            ("setting.z_overrides", !self.z_overrides.is_empty()),
        ]
        .into_iter()
        .filter_map(|(path, set)| set.then_some(path))
        .collect()
    }

    fn frailty_dist(&self) -> Result<FrailtyDist, CliError> {
        match (&self.frailty, self.frailty_variance) {
            (Some(_), Some(_)) => Err(CliError::validation(
                "setting.frailty_variance",
                "give either a preset or a variance, not both",
            )),
            (Some(p), None) => FrailtyPreset::parse(p)
                .map(FrailtyPreset::distribution)
                .map_err(|_| CliError::validation("setting.frailty", format!("unknown preset `{p}` (a, b or c)"))),
            (None, Some(v)) if v > 0.0 && v.is_finite() => Ok(FrailtyDist::Gamma {
                shape: 1.0 / v,
                scale: v,
            }),
            (None, Some(v)) => Err(CliError::validation(
                "setting.frailty_variance",
                format!("{v} must be positive"),
            )),
            (None, None) => Err(CliError::validation(
                "setting.frailty",
                "required for this setting kind",
            )),
        }
    }

    /// Returns the output label and the resolved setting.
    fn resolve(&self, space: &StateSpace) -> Result<(String, Setting), CliError> {
        match (&self.label, &self.kind) {
            (Some(_), Some(_)) => Err(CliError::validation(
                "setting.kind",
                "cannot be combined with setting.label",
            )),
            (label, None) => {
                if let Some(path) = self.options_set().first() {
                    return Err(CliError::validation(*path, "only allowed together with setting.kind"));
                }
                let label = label.clone().unwrap_or_else(|| "1".into());
                let setting = Setting::from_label(&label)
                    .map_err(|_| CliError::validation("setting.label", format!("unknown setting `{label}`")))?;
                Ok((label, setting))
            }
            (None, Some(kind)) => {
                let allowed: &[&str] = match kind.as_str() {
                    "markov" | "semi_markov" => &[],
                    "frailty" => &["setting.frailty", "setting.frailty_variance"],
                    "partial_frailty" => &["setting.frailty", "setting.frailty_variance", "setting.affected"],
                    "mixed" => &["setting.frailty", "setting.frailty_variance", "setting.changepoint"],
                    "pathological" => &["setting.threshold", "setting.z_default", "setting.z_overrides"],
                    other => {
                        return Err(CliError::validation(
                            "setting.kind",
                            format!(
                                "unknown kind `{other}` (markov, semi_markov, frailty, partial_frailty, mixed, pathological)"
                            ),
                        ))
                    }
                };
                if let Some(path) = self.options_set().into_iter().find(|p| !allowed.contains(p)) {
                    return Err(CliError::validation(path, format!("not used by setting kind `{kind}`")));
                }
                let setting = match kind.as_str() {
                    "markov" => Setting::Markov,
                    "semi_markov" => Setting::SemiMarkov,
                    "frailty" => Setting::Frailty {
                        frailty: self.frailty_dist()?,
                    },
                    "partial_frailty" => {
                        let frailty = self.frailty_dist()?;
                        match &self.affected {
                            None => Setting::partial_frailty(frailty),
                            Some(list) => Setting::PartialFrailty {
                                frailty,
                                affected: list
                                    .iter()
                                    .enumerate()
                                    .map(|(i, s)| transition(&format!("setting.affected[{i}]"), s, space))
                                    .collect::<Result<_, _>>()?,
                            },
                        }
                    }
                    "mixed" => Setting::Mixed {
                        frailty: self.frailty_dist()?,
                        changepoint: self.changepoint.unwrap_or(msm_core::simulation::MIXED_CHANGEPOINT),
                    },
                    _ => {
                        let default = Setting::pathological();
                        let Setting::Pathological {
                            threshold,
                            z_default,
                            z_overrides,
                        } = default
                        else {
                            unreachable!("pathological preset")
                        };
                        let z_overrides = if self.z_overrides.is_empty() && self.z_default.is_none() {
                            z_overrides
                        } else {
                            self.z_overrides
                                .iter()
                                .map(|(k, &z)| Ok((transition(&format!("setting.z_overrides.{k}"), k, space)?, z)))
                                .collect::<Result<_, CliError>>()?
                        };
                        Setting::Pathological {
                            threshold: self.threshold.unwrap_or(threshold),
                            z_default: self.z_default.unwrap_or(z_default),
                            z_overrides,
                        }
                    }
                };
                Ok((kind.clone(), setting))
            }
        }
    }
}

impl RunConfig {
    pub fn plan(&self) -> Result<Plan, CliError> {
        let space = StateSpace::illness_death();
        let (label, setting) = self.setting.resolve(&space)?;

        let mut params: WeibullParams = setting.default_params();
        for (i, p) in self.parameters.iter().enumerate() {
            let tr = transition(&format!("parameters[{i}].transition"), &p.transition, &space)?;
            let w = Weibull::new(p.scale, p.shape).map_err(|e| match e {
                MsmError::InvalidParameter { field, message } => {
                    CliError::validation(format!("parameters[{i}].{field}"), message)
                }
                other => CliError::validation(format!("parameters[{i}]"), other.to_string()),
            })?;
            params.set(tr, w);
        }

        let d = CensoringSpec::default();
        let c = &self.censoring;
        let censoring = CensoringSpec {
            rate: c.rate.unwrap_or(d.rate),
            switch: c.switch.unwrap_or(d.switch),
            uniform_low: c.uniform_low.unwrap_or(d.uniform_low),
            uniform_high: c.uniform_high.unwrap_or(d.uniform_high),
            horizon: c.horizon.unwrap_or(d.horizon),
        };
        let simulator = Simulator::new(setting, params, censoring).map_err(from_core)?;
        let horizon = simulator.horizon();

        at_least("cohort.n", self.cohort.n, 1)?;
        at_least("cohort.replicates", self.cohort.replicates, 1)?;
        let mut cohort = CohortSpec::new(self.cohort.n, self.seed);
        if let Some(dist) = &self.cohort.start_distribution {
            cohort.start_distribution = dist
                .iter()
                .map(|(k, &p)| {
                    let path = format!("cohort.start_distribution.{k}");
                    match k.parse::<usize>() {
                        Ok(h) if space.non_absorbing().any(|x| x == h) => Ok((h, p)),
                        _ => Err(CliError::validation(path, "not a transient state")),
                    }
                })
                .collect::<Result<_, _>>()?;
            cohort.validate().map_err(from_core)?;
        }

        let e = &self.estimation;
        if e.estimators.is_empty() {
            return Err(CliError::validation(
                "estimation.estimators",
                "list at least one estimator",
            ));
        }
        let mut estimators = Vec::new();
        for (i, name) in e.estimators.iter().enumerate() {
            let est: Estimator = name.parse().map_err(|_| {
                CliError::validation(
                    format!("estimation.estimators[{i}]"),
                    format!("unknown estimator `{name}` (aj, lmaj, haj_lr, haj_cox)"),
                )
            })?;
            if estimators.contains(&est) {
                return Err(CliError::validation(
                    format!("estimation.estimators[{i}]"),
                    "listed twice",
                ));
            }
            estimators.push(est);
        }
        if e.start_times.is_empty() {
            return Err(CliError::validation(
                "estimation.start_times",
                "list at least one start time",
            ));
        }
        for (i, &s) in e.start_times.iter().enumerate() {
            if !(0.0..horizon).contains(&s) {
                return Err(CliError::validation(
                    format!("estimation.start_times[{i}]"),
                    format!("{s} outside [0, {horizon})"),
                ));
            }
            if e.start_times[..i].contains(&s) {
                return Err(CliError::validation(
                    format!("estimation.start_times[{i}]"),
                    "listed twice",
                ));
            }
        }
        at_least("estimation.grid_size", e.grid_size, 2)?;
        unit_interval("estimation.confidence", e.confidence)?;

        let t = &self.tests;
        unit_interval("tests.alpha", t.alpha)?;
        at_least("tests.n_bootstrap", t.n_bootstrap, 1)?;
        at_least("tests.grid_size", t.grid_size, 1)?;
        if !(t.min_weight >= 0.0 && t.min_weight.is_finite()) {
            return Err(CliError::validation(
                "tests.min_weight",
                format!("{} must be non-negative", t.min_weight),
            ));
        }
        let mut methods = Vec::new();
        for (i, m) in t.methods.iter().enumerate() {
            let method: TestMethod = m.parse().map_err(|_| {
                CliError::validation(
                    format!("tests.methods[{i}]"),
                    format!("unknown method `{m}` (cox, logrank)"),
                )
            })?;
            if !methods.contains(&method) {
                methods.push(method);
            }
        }
        let tests = TestConfig {
            alpha: t.alpha,
            methods,
            logrank: LogRankConfig {
                grid_size: t.grid_size,
                n_bootstrap: t.n_bootstrap,
                min_weight: t.min_weight,
                seed: 0,
            },
        };
        at_least("truth.n_paths", self.truth.n_paths, 1)?;

        let sim_inputs = (
            self.seed,
            &self.setting,
            &self.cohort,
            &self.censoring,
            &self.parameters,
        );
        let grid_inputs = (&e.start_times, e.grid_size);
        let truth = digest_of(&(&sim_inputs, &grid_inputs, &self.truth));
        let estimate = digest_of(&(&sim_inputs, e, &self.tests));
        let digests = InputDigests {
            simulate: digest_of(&sim_inputs),
            test: digest_of(&(&sim_inputs, &self.tests)),
            evaluate: digest_of(&(&truth, &estimate)),
            truth,
            estimate,
        };

        Ok(Plan {
            label,
            seed: self.seed,
            simulator,
            cohort,
            replicates: self.cohort.replicates,
            estimators,
            start_times: e.start_times.clone(),
            report_grid: linspace(0.0, horizon, e.grid_size),
            confidence: e.confidence,
            tests,
            truth_paths: self.truth.n_paths,
            digests,
        })
    }
}
