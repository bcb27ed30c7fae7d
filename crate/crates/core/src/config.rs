//! Run configuration for the command-line tool, read from TOML.
//!
//! Every section is optional and falls back to the reference single-asset
//! experiment, so an empty file is a valid configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelParams, ModelParamsConfig};
use crate::qlearn::{LearnConfig, PolicyRecord, Schedule, StudyConfig, UpdateRule};
use crate::sde::{Measure, DEFAULT_ACTION_LIMIT};

fn reference_model() -> ModelParamsConfig {
    ModelParams::reference().into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "reference_model")]
    pub model: ModelParamsConfig,
    /// Exploration temperature; `ρ/d` when absent.
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub solve: SolveConfig,
    #[serde(default)]
    pub simulate: SimulateConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub diagnose: DiagnoseConfig,
    #[serde(default)]
    pub backtest: Option<BacktestConfig>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            model: reference_model(),
            gamma: None,
            solve: SolveConfig::default(),
            simulate: SimulateConfig::default(),
            train: TrainConfig::default(),
            diagnose: DiagnoseConfig::default(),
            backtest: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolveConfig {
    pub y_max: f64,
    pub y_step: f64,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self { y_max: 10.0, y_step: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Controlled reflected state under a chosen policy.
    Reflected,
    /// One-factor aggregated dynamics under the optimal exploratory policy.
    Aggregated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyChoice {
    /// Optimal exploratory Gaussian policy.
    Exploratory,
    /// Classical deterministic feedback.
    Classical,
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateConfig {
    pub y0: f64,
    pub horizon: f64,
    pub dt: f64,
    pub paths: u64,
    pub scheme: Scheme,
    pub policy: PolicyChoice,
    pub measure: Measure,
    pub action_limit: f64,
    /// Also run the Skorokhod-oracle KS comparison.
    pub oracle: bool,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            y0: 0.0,
            horizon: 1.0,
            dt: 0.01,
            paths: 100,
            scheme: Scheme::Reflected,
            policy: PolicyChoice::Exploratory,
            measure: Measure::RiskNeutral,
            action_limit: DEFAULT_ACTION_LIMIT,
            oracle: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub y0: f64,
    pub horizon: f64,
    pub dt: f64,
    pub episodes: u64,
    pub schedule: Schedule,
    pub update: UpdateRule,
    pub init: Option<PolicyRecord>,
    pub action_limit: f64,
    pub max_rejected_fraction: f64,
    /// History JSON of an earlier run to continue.
    pub resume: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let base = LearnConfig::new(4000, 0.01, 0);
        Self {
            y0: base.y0,
            horizon: base.horizon,
            dt: base.dt,
            episodes: base.episodes,
            schedule: base.schedule,
            update: base.update,
            init: None,
            action_limit: base.action_limit,
            max_rejected_fraction: base.max_rejected_fraction,
            resume: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagnoseConfig {
    pub y0: f64,
    pub horizon: f64,
    pub dt: f64,
    pub paths: u64,
    pub chain_rule: bool,
    /// Shift applied to `ξ` for the power check.
    pub xi_shift: f64,
    /// Parameters to test; the exact constants when absent.
    pub policy: Option<PolicyRecord>,
    pub sweep_dt: Vec<f64>,
    pub sweep_horizon: Vec<f64>,
}

impl Default for DiagnoseConfig {
    fn default() -> Self {
        Self {
            y0: 0.0,
            horizon: 12.0,
            dt: 0.01,
            paths: 10_000,
            chain_rule: true,
            xi_shift: 0.5,
            policy: None,
            sweep_dt: vec![0.02, 0.01, 0.005],
            sweep_horizon: vec![6.0, 12.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BacktestConfig {
    pub prices: PathBuf,
    /// Series used for the maximum-likelihood estimates; `prices` when absent.
    #[serde(default)]
    pub estimation_prices: Option<PathBuf>,
    pub v0: f64,
    /// Length of one bar in the time unit of `rho`.
    #[serde(default = "one")]
    pub bar: f64,
    /// Discount rate of the injection cost; the model's `rho` when absent.
    #[serde(default)]
    pub rho: Option<f64>,
    #[serde(default = "one")]
    pub kappa: f64,
    /// Learned parameters (the JSON written by `train`) to run alongside the
    /// baseline.
    #[serde(default)]
    pub learned: Option<PathBuf>,
    /// Sample learned actions instead of using the policy mean.
    #[serde(default)]
    pub sample: bool,
}

fn one() -> f64 {
    1.0
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn params(&self) -> Result<ModelParams> {
        ModelParams::try_from(self.model.clone())
    }

    pub fn gamma(&self, params: &ModelParams) -> Result<f64> {
        let g = self.gamma.unwrap_or(params.rho() / params.dim() as f64);
        if g > 0.0 && g.is_finite() {
            Ok(g)
        } else {
            Err(Error::InvalidGamma(g))
        }
    }

    pub fn learn_config(&self, params: &ModelParams) -> Result<LearnConfig> {
        let t = &self.train;
        let cfg = LearnConfig {
            y0: t.y0,
            horizon: t.horizon,
            dt: t.dt,
            episodes: t.episodes,
            gamma: self.gamma(params)?,
            rho: params.rho(),
            seed: self.seed,
            schedule: t.schedule.clone(),
            update: t.update,
            init: t.init.clone(),
            action_limit: t.action_limit,
            max_rejected_fraction: t.max_rejected_fraction,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn study_config(&self) -> StudyConfig {
        let d = &self.diagnose;
        StudyConfig {
            y0: d.y0,
            horizon: d.horizon,
            dt: d.dt,
            paths: d.paths,
            seed: self.seed,
            chain_rule: d.chain_rule,
            action_limit: DEFAULT_ACTION_LIMIT,
        }
    }

    /// Checks everything that can be checked without running.
    pub fn validate(&self) -> Result<()> {
        let params = self.params()?;
        self.gamma(&params)?;
        if !(self.solve.y_step > 0.0) || !(self.solve.y_max >= 0.0) {
            return Err(Error::InvalidConfig("solve.y_step must be positive and solve.y_max non-negative".into()));
        }
        crate::sde::grid_steps(self.simulate.horizon, self.simulate.dt)?;
        crate::sde::grid_steps(self.diagnose.horizon, self.diagnose.dt)?;
        self.learn_config(&params)?;
        Ok(())
    }
}
