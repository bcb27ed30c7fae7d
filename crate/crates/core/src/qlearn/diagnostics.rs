use rayon::prelude::*;
use serde::Serialize;

use super::params::PolicyParams;
use super::update::episode_statistic;
use crate::error::{Error, Result};
use crate::rng::StreamId;
use crate::sde::{rollout, EpisodePath, Environment, DEFAULT_ACTION_LIMIT};
use crate::stats::{MeanEstimate, Running};

const CHUNK: u64 = 64;

/// Monte Carlo estimates of the orthogonality expectations
/// `E[Σ_k ς_{t_k} G_k]`, one per test function.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrthogonalityStats {
    pub labels: Vec<String>,
    pub estimates: Vec<MeanEstimate>,
}

impl OrthogonalityStats {
    pub fn z_scores(&self) -> Vec<f64> {
        self.estimates.iter().map(|e| e.mean / e.stderr).collect()
    }

    pub fn max_abs_z(&self) -> f64 {
        self.z_scores().into_iter().map(f64::abs).fold(0.0, f64::max)
    }

    /// Every statistic within `threshold` standard errors of zero.
    pub fn passes(&self, threshold: f64) -> bool {
        self.z_scores().iter().all(|z| z.abs() < threshold)
    }

    pub fn get(&self, label: &str) -> Option<&MeanEstimate> {
        self.labels.iter().position(|l| l == label).map(|i| &self.estimates[i])
    }
}

/// `iota` for ξ, then `psi1`, `psi2` (indexed `psi1_i`, `psi2_ij` when d > 1).
pub fn statistic_labels(dim: usize) -> Vec<String> {
    let mut labels = vec!["iota".to_string()];
    if dim == 1 {
        labels.extend(["psi1".to_string(), "psi2".into()]);
    } else {
        labels.extend((1..=dim).map(|i| format!("psi1_{i}")));
        for i in 1..=dim {
            labels.extend((1..=dim).map(|j| format!("psi2_{i}{j}")));
        }
    }
    labels
}

pub fn orthogonality_stats(pp: &PolicyParams, paths: &[EpisodePath], rho: f64, chain_rule: bool) -> Result<OrthogonalityStats> {
    if paths.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut acc = vec![Running::default(); pp.flat_len()];
    for p in paths {
        for (r, s) in acc.iter_mut().zip(episode_statistic(pp, p, rho, chain_rule)?) {
            r.push(s);
        }
    }
    Ok(OrthogonalityStats { labels: statistic_labels(pp.dim()), estimates: acc.iter().map(Running::estimate).collect() })
}

/// Frozen-policy Monte Carlo study settings.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub y0: f64,
    pub horizon: f64,
    pub dt: f64,
    pub paths: u64,
    pub seed: u64,
    #[serde(default = "default_true")]
    pub chain_rule: bool,
    #[serde(default = "default_action_limit")]
    pub action_limit: f64,
}

fn default_true() -> bool {
    true
}

fn default_action_limit() -> f64 {
    DEFAULT_ACTION_LIMIT
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyResult {
    pub dt: f64,
    pub horizon: f64,
    pub stats: OrthogonalityStats,
    /// `e^{−ρT} J(Y_T)`, the truncation tail of the infinite-horizon problem.
    pub discounted_terminal: MeanEstimate,
}

/// Streams `paths` on-policy episodes in parallel without storing them.
/// Chunks are merged in index order, so results do not depend on the
/// thread count.
pub fn orthogonality_study<E: Environment>(env: &E, pp: &PolicyParams, rho: f64, cfg: &StudyConfig) -> Result<StudyResult> {
    if cfg.paths == 0 {
        return Err(Error::EmptyBatch);
    }
    let policy = pp.sampler()?;
    let width = pp.flat_len();
    let discount = (-rho * cfg.horizon).exp();
    let chunks = cfg.paths.div_ceil(CHUNK);
    let partial: Vec<Vec<Running>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = vec![Running::default(); width + 1];
            for i in c * CHUNK..((c + 1) * CHUNK).min(cfg.paths) {
                let path = rollout(env, &policy, cfg.y0, cfg.horizon, cfg.dt, cfg.action_limit, StreamId::new(cfg.seed, i))?;
                for (r, s) in acc.iter_mut().zip(episode_statistic(pp, &path, rho, cfg.chain_rule)?) {
                    r.push(s);
                }
                acc[width].push(discount * (path.terminal_state().ln_1p() + pp.xi()));
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let total = partial
        .into_iter()
        .reduce(|a, b| a.into_iter().zip(b).map(|(x, y)| x.merge(y)).collect())
        .expect("at least one chunk");
    Ok(StudyResult {
        dt: cfg.dt,
        horizon: cfg.horizon,
        stats: OrthogonalityStats {
            labels: statistic_labels(pp.dim()),
            estimates: total[..width].iter().map(Running::estimate).collect(),
        },
        discounted_terminal: total[width].estimate(),
    })
}

/// Orthogonality statistics at a frozen parameter over a `(Δt, T)` grid.
pub fn convergence_study<E: Environment>(
    env: &E,
    pp: &PolicyParams,
    rho: f64,
    dts: &[f64],
    horizons: &[f64],
    base: &StudyConfig,
) -> Result<Vec<StudyResult>> {
    if dts.is_empty() || horizons.is_empty() {
        return Err(Error::InvalidConfig("convergence study needs at least one dt and one horizon".into()));
    }
    let mut rows = Vec::with_capacity(dts.len() * horizons.len());
    for &horizon in horizons {
        for &dt in dts {
            let cfg = StudyConfig { dt, horizon, ..base.clone() };
            rows.push(orthogonality_study(env, pp, rho, &cfg)?);
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ExploratoryConstants, ModelParams};
    use crate::sde::{simulate_batch, Measure, ReflectedMarket};

    fn setup() -> (ReflectedMarket, PolicyParams) {
        let p = ModelParams::reference();
        let c = ExploratoryConstants::new(&p, 0.2).unwrap();
        (ReflectedMarket::new(p, Measure::RiskNeutral), PolicyParams::from_constants(&c).unwrap())
    }

    fn cfg(paths: u64) -> StudyConfig {
        StudyConfig { y0: 0.0, horizon: 2.0, dt: 0.01, paths, seed: 8, chain_rule: true, action_limit: DEFAULT_ACTION_LIMIT }
    }

    #[test]
    fn empty_batch_rejected() {
        let (env, pp) = setup();
        assert!(matches!(orthogonality_stats(&pp, &[], 0.2, true), Err(Error::EmptyBatch)));
        assert!(matches!(orthogonality_study(&env, &pp, 0.2, &cfg(0)), Err(Error::EmptyBatch)));
        assert!(convergence_study(&env, &pp, 0.2, &[], &[1.0], &cfg(1)).is_err());
    }

    #[test]
    fn streaming_matches_stored_batch() {
        let (env, pp) = setup();
        let policy = pp.sampler().unwrap();
        let batch = simulate_batch(&env, &policy, 0.0, 2.0, 0.01, DEFAULT_ACTION_LIMIT, 8, 300).unwrap();
        let stored = orthogonality_stats(&pp, &batch, 0.2, true).unwrap();
        let streamed = orthogonality_study(&env, &pp, 0.2, &cfg(300)).unwrap();
        for (a, b) in stored.estimates.iter().zip(&streamed.stats.estimates) {
            assert!((a.mean - b.mean).abs() < 1e-12);
            assert!((a.stderr - b.stderr).abs() < 1e-12);
        }
        let rows = convergence_study(&env, &pp, 0.2, &[0.01], &[2.0], &cfg(300)).unwrap();
        assert_eq!(rows[0], streamed);
    }

    #[test]
    fn labels() {
        assert_eq!(statistic_labels(1), ["iota", "psi1", "psi2"]);
        assert_eq!(statistic_labels(2), ["iota", "psi1_1", "psi1_2", "psi2_11", "psi2_12", "psi2_21", "psi2_22"]);
    }
}
