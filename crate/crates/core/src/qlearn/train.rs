use std::io::Write;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use super::params::{PolicyParams, PolicyRecord};
use super::schedule::Schedule;
use super::update::{update, UpdateRule};
use crate::error::{Error, Result};
use crate::rng::StreamId;
use crate::sde::{grid_steps, rollout, Environment, DEFAULT_ACTION_LIMIT};

fn default_action_limit() -> f64 {
    DEFAULT_ACTION_LIMIT
}

fn default_max_rejected() -> f64 {
    0.1
}

/// Inputs of the offline learner. The learner only talks to the market
/// through an [`Environment`], so no model parameters appear here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnConfig {
    pub y0: f64,
    pub horizon: f64,
    pub dt: f64,
    pub episodes: u64,
    pub gamma: f64,
    pub rho: f64,
    pub seed: u64,
    #[serde(default)]
    pub schedule: Schedule,
    #[serde(default)]
    pub update: UpdateRule,
    /// Starting point; `ξ = 0, ψ1 = 0, ψ2 = I` when absent.
    #[serde(default)]
    pub init: Option<PolicyRecord>,
    #[serde(default = "default_action_limit")]
    pub action_limit: f64,
    #[serde(default = "default_max_rejected")]
    pub max_rejected_fraction: f64,
}

impl LearnConfig {
    /// Defaults matching the reference experiment, with a reduced episode
    /// count and step.
    pub fn new(episodes: u64, dt: f64, seed: u64) -> Self {
        Self {
            y0: 0.0,
            horizon: 12.0,
            dt,
            episodes,
            gamma: 0.2,
            rho: 0.2,
            seed,
            schedule: Schedule::default(),
            update: UpdateRule::default(),
            init: None,
            action_limit: DEFAULT_ACTION_LIMIT,
            max_rejected_fraction: 0.1,
        }
    }

    /// Number of steps per episode.
    pub fn steps(&self) -> Result<usize> {
        grid_steps(self.horizon, self.dt)
    }

    pub fn validate(&self) -> Result<()> {
        self.steps()?;
        crate::error::check_state(self.y0)?;
        if self.episodes == 0 {
            return Err(Error::InvalidConfig("episodes must be at least 1".into()));
        }
        if !(self.gamma > 0.0) {
            return Err(Error::InvalidGamma(self.gamma));
        }
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(Error::InvalidConfig(format!("rho must be positive, got {}", self.rho)));
        }
        if !(self.update.max_norm > 0.0) || !(self.update.psi2_floor > 0.0) {
            return Err(Error::InvalidConfig("update bound and psi2 floor must be positive".into()));
        }
        if !(self.action_limit > 0.0) {
            return Err(Error::InvalidConfig("action limit must be positive".into()));
        }
        self.schedule.validate()
    }

    pub fn initial_params(&self, dim: usize) -> Result<PolicyParams> {
        match &self.init {
            None => PolicyParams::initial(dim, self.gamma),
            Some(r) => {
                let r = PolicyRecord { gamma: self.gamma, ..r.clone() };
                let pp = PolicyParams::try_from(r)?;
                if pp.dim() != dim {
                    return Err(Error::InvalidConfig(format!(
                        "initial parameters have dimension {}, environment has {dim}",
                        pp.dim()
                    )));
                }
                Ok(pp)
            }
        }
    }
}

/// Parameters after one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub episode: u64,
    pub xi: f64,
    pub psi1: Vec<f64>,
    /// Row-major.
    pub psi2: Vec<f64>,
    pub psi3: f64,
    pub update_norm: f64,
    pub clipped: bool,
    pub rejected: bool,
}

impl Snapshot {
    fn of(episode: u64, pp: &PolicyParams, update_norm: f64, clipped: bool, rejected: bool) -> Self {
        let flat = pp.to_flat();
        let d = pp.dim();
        Self {
            episode,
            xi: flat[0],
            psi1: flat[1..1 + d].to_vec(),
            psi2: flat[1 + d..].to_vec(),
            psi3: pp.psi3(),
            update_norm,
            clipped,
            rejected,
        }
    }

    /// `[ξ, ψ1, ψ2]`
    pub fn coords(&self) -> Vec<f64> {
        let mut v = vec![self.xi];
        v.extend(&self.psi1);
        v.extend(&self.psi2);
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub snapshots: Vec<Snapshot>,
    pub final_params: PolicyParams,
    pub clamp_events: u64,
    pub clipped_updates: u64,
    pub projected_updates: u64,
    pub rejected: u64,
}

/// Compact report of a run.
#[derive(Debug, Clone, Serialize)]
pub struct TrainSummary {
    pub episodes: usize,
    pub final_params: PolicyParams,
    pub tail_std: Vec<f64>,
    pub clamp_events: u64,
    pub clipped_updates: u64,
    pub projected_updates: u64,
    pub rejected: u64,
}

impl TrainHistory {
    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    /// Per-coordinate standard deviation over the last `fraction` of
    /// snapshots (at least two).
    pub fn tail_std(&self, fraction: f64) -> Vec<f64> {
        let n = self.snapshots.len();
        let take = ((n as f64 * fraction).ceil() as usize).clamp(2.min(n), n);
        let tail = &self.snapshots[n - take..];
        let coords: Vec<Vec<f64>> = tail.iter().map(Snapshot::coords).collect();
        let width = coords.first().map_or(0, Vec::len);
        (0..width)
            .map(|i| {
                let col: Vec<f64> = coords.iter().map(|c| c[i]).collect();
                let m = col.iter().sum::<f64>() / col.len() as f64;
                (col.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (col.len() as f64 - 1.0)).sqrt()
            })
            .collect()
    }

    pub fn summary(&self) -> TrainSummary {
        TrainSummary {
            episodes: self.len(),
            final_params: self.final_params.clone(),
            tail_std: self.tail_std(0.1),
            clamp_events: self.clamp_events,
            clipped_updates: self.clipped_updates,
            projected_updates: self.projected_updates,
            rejected: self.rejected,
        }
    }

    /// CSV with columns `episode,xi,psi1…,psi2…,psi3,update_norm`.
    pub fn write_csv<W: Write>(&self, mut out: W, comment: Option<&str>) -> Result<()> {
        if let Some(c) = comment {
            writeln!(out, "# {c}")?;
        }
        let d = self.final_params.dim();
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["episode".to_string(), "xi".into()];
        if d == 1 {
            header.extend(["psi1".to_string(), "psi2".into()]);
        } else {
            header.extend((1..=d).map(|i| format!("psi1_{i}")));
            for i in 1..=d {
                header.extend((1..=d).map(|j| format!("psi2_{i}{j}")));
            }
        }
        header.extend(["psi3".to_string(), "update_norm".into()]);
        w.write_record(&header)?;
        for s in &self.snapshots {
            let mut row = vec![s.episode.to_string(), s.xi.to_string()];
            row.extend(s.psi1.iter().chain(&s.psi2).map(|x| x.to_string()));
            row.push(s.psi3.to_string());
            row.push(s.update_norm.to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs `config.episodes` episodes of simulate, residuals, update.
pub fn train<E: Environment + ?Sized>(env: &E, config: &LearnConfig) -> Result<TrainHistory> {
    config.validate()?;
    let start = config.initial_params(env.action_dim())?;
    let history = TrainHistory {
        snapshots: Vec::with_capacity(config.episodes as usize),
        final_params: start,
        clamp_events: 0,
        clipped_updates: 0,
        projected_updates: 0,
        rejected: 0,
    };
    run(env, config, history)
}

/// Continues a previous run up to `config.episodes` in total. Episode `i`
/// always draws from stream `(seed, i)`, so resuming reproduces an
/// uninterrupted run exactly.
pub fn resume<E: Environment + ?Sized>(env: &E, config: &LearnConfig, history: TrainHistory) -> Result<TrainHistory> {
    config.validate()?;
    if history.len() as u64 > config.episodes {
        return Err(Error::InvalidConfig(format!(
            "history already has {} episodes, more than the requested {}",
            history.len(),
            config.episodes
        )));
    }
    if history.final_params.dim() != env.action_dim() || history.final_params.gamma() != config.gamma {
        return Err(Error::InvalidConfig("history does not match this environment and temperature".into()));
    }
    run(env, config, history)
}

fn run<E: Environment + ?Sized>(env: &E, config: &LearnConfig, mut h: TrainHistory) -> Result<TrainHistory> {
    let first = h.len() as u64 + 1;
    let report_every = (config.episodes / 10).max(1);
    let max_rejected = config.max_rejected_fraction * config.episodes as f64;
    let mut pp = h.final_params.clone();
    for i in first..=config.episodes {
        let rates = config.schedule.rates(i)?;
        let outcome = pp.sampler().and_then(|policy| {
            rollout(env, &policy, config.y0, config.horizon, config.dt, config.action_limit, StreamId::new(config.seed, i))
        });
        let step = outcome.and_then(|path| {
            h.clamp_events += path.clamp_events as u64;
            update(&pp, &path, rates, config.rho, &config.update)
        });
        match step {
            Ok(out) => {
                h.clipped_updates += out.clipped as u64;
                h.projected_updates += out.projected as u64;
                pp = out.params;
                h.snapshots.push(Snapshot::of(i, &pp, out.norm, out.clipped, false));
            }
            Err(e @ (Error::NonFiniteUpdate | Error::NonFinite { .. } | Error::Step { .. } | Error::SingularPsi2)) => {
                warn!("episode {i} rejected: {e}");
                h.rejected += 1;
                if h.rejected as f64 > max_rejected {
                    return Err(Error::TooManyRejected { rejected: h.rejected, episodes: config.episodes });
                }
                h.snapshots.push(Snapshot::of(i, &pp, 0.0, false, true));
            }
            Err(e) => return Err(e),
        }
        if i % report_every == 0 {
            info!("episode {i}/{}: xi = {:.4}, psi1 = {:?}", config.episodes, pp.xi(), pp.psi1().as_slice());
        }
    }
    h.final_params = pp;
    Ok(h)
}
