//! Environment simulator for the normalised, reflected state process.
//!
//! A step is a projection-Euler update of
//! `dY = −σ_Z(Y+1) dW̃^κ + θᵀμ dt + θᵀσ dW + dL`:
//! the unreflected proposal is clamped at zero and the overshoot is credited
//! to the local time `L`. The module also provides the one-factor aggregated
//! dynamics under the optimal exploratory policy and an exact Skorokhod-map
//! construction of their logarithm, used as an independent oracle.

use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{Error, Result};
use crate::gaussian::ScaledGaussian;
use crate::model::{DerivedConstants, ModelParams};
use crate::rng::{StreamId, StreamRng};
use crate::stats::{ks_two_sample, mean_estimate, KsResult};

/// Default bound on `‖θ‖₂`, guarding against overflow from Gaussian tails.
pub const DEFAULT_ACTION_LIMIT: f64 = 1e6;

/// Which probability measure the increments are drawn under.
///
/// `RiskNeutral` draws `W̃^κ` as a standard Brownian motion, which is the
/// measure under which the normalised control problem (and every closed form
/// in [`crate::model`]) is posed. `Physical` draws `W^κ` as a standard
/// Brownian motion instead, adding the drift `σ_Z²(Y+1)` to the state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Measure {
    #[default]
    RiskNeutral,
    Physical,
}

/// Brownian increments over one step.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseIncrements {
    /// Increment of the benchmark driver `W^κ = κW⁰ + √(1−κ²)W^η`.
    pub dw_kappa: f64,
    /// Increment of `W̃^κ = W^κ − σ_Z t`.
    pub dw_kappa_tilde: f64,
    /// Increments of the asset drivers `W¹..W^d`.
    pub dw: SmallVec<[f64; 4]>,
}

/// Draws `g0, g1..gd ~ N(0, dt)` (in that order) and assembles the drivers.
/// `W^η = η̂ᵀW` uses the unit vector `η/‖η‖`, so `Cov(dW^κ, dW_j) =
/// √(1−κ²) η̂_j dt`.
pub fn draw_increments<R: Rng + ?Sized>(
    params: &ModelParams,
    dt: f64,
    measure: Measure,
    rng: &mut R,
) -> NoiseIncrements {
    let sqrt_dt = dt.max(0.0).sqrt();
    let g0: f64 = rng.sample::<f64, _>(StandardNormal) * sqrt_dt;
    let eta = params.eta_unit();
    let mut dw = SmallVec::with_capacity(params.dim());
    let mut dw_eta = 0.0;
    for &e in eta.iter() {
        let g = rng.sample::<f64, _>(StandardNormal) * sqrt_dt;
        dw_eta += e * g;
        dw.push(g);
    }
    let gaussian = params.kappa() * g0 + params.kappa_bar() * dw_eta;
    let shift = params.sigma_z() * dt;
    let (dw_kappa, dw_kappa_tilde) = match measure {
        Measure::RiskNeutral => (gaussian + shift, gaussian),
        Measure::Physical => (gaussian, gaussian - shift),
    };
    NoiseIncrements { dw_kappa, dw_kappa_tilde, dw }
}

/// One projection-Euler step. Returns `(y_next, dL)` with `dL ≥ 0` and
/// `y_next · 1{dL > 0} = 0`.
pub fn step_reflected(
    y: f64,
    action: &[f64],
    params: &ModelParams,
    dt: f64,
    inc: &NoiseIncrements,
) -> Result<(f64, f64)> {
    let mu = params.mu();
    let sigma = params.sigma();
    let mut drift = 0.0;
    for (a, m) in action.iter().zip(mu.iter()) {
        drift += a * m;
    }
    let mut vol = 0.0;
    for (j, dwj) in inc.dw.iter().enumerate() {
        let mut col = 0.0;
        for (i, a) in action.iter().enumerate() {
            col += a * sigma[(i, j)];
        }
        vol += col * dwj;
    }
    let proposal = y - params.sigma_z() * (y + 1.0) * inc.dw_kappa_tilde + drift * dt + vol;
    if !proposal.is_finite() {
        return Err(Error::non_finite(format!("state update from y = {y}")));
    }
    if proposal >= 0.0 {
        Ok((proposal, 0.0))
    } else {
        Ok((0.0, -proposal))
    }
}

/// A black-box environment: given the state and an action, produces the next
/// state and local-time increment. Learners only ever see this interface.
pub trait Environment: Sync {
    fn action_dim(&self) -> usize;

    fn step(&self, y: f64, action: &[f64], dt: f64, rng: &mut StreamRng) -> Result<(f64, f64)>;
}

/// The reflected market simulator.
#[derive(Debug, Clone)]
pub struct ReflectedMarket {
    params: ModelParams,
    measure: Measure,
}

impl ReflectedMarket {
    pub fn new(params: ModelParams, measure: Measure) -> Self {
        Self { params, measure }
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn measure(&self) -> Measure {
        self.measure
    }
}

impl Environment for ReflectedMarket {
    fn action_dim(&self) -> usize {
        self.params.dim()
    }

    fn step(&self, y: f64, action: &[f64], dt: f64, rng: &mut StreamRng) -> Result<(f64, f64)> {
        let inc = draw_increments(&self.params, dt, self.measure, rng);
        step_reflected(y, action, &self.params, dt, &inc)
    }
}

/// Produces actions from states.
pub trait ActionSampler: Sync {
    fn dim(&self) -> usize;

    fn sample(&self, y: f64, rng: &mut StreamRng, out: &mut [f64]);
}

impl ActionSampler for ScaledGaussian {
    fn dim(&self) -> usize {
        ScaledGaussian::dim(self)
    }

    fn sample(&self, y: f64, rng: &mut StreamRng, out: &mut [f64]) {
        self.sample_into(y, rng, out)
    }
}

/// Deterministic feedback rule.
pub struct Feedback<F> {
    dim: usize,
    rule: F,
}

impl<F: Fn(f64, &mut [f64]) + Sync> Feedback<F> {
    pub fn new(dim: usize, rule: F) -> Self {
        Self { dim, rule }
    }
}

impl<F: Fn(f64, &mut [f64]) + Sync> ActionSampler for Feedback<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn sample(&self, y: f64, _rng: &mut StreamRng, out: &mut [f64]) {
        (self.rule)(y, out)
    }
}

/// Number of grid steps `K` with `K · dt = horizon`.
pub fn grid_steps(horizon: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidConfig(format!("time step must be positive, got {dt}")));
    }
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidConfig(format!("horizon must be non-negative, got {horizon}")));
    }
    let k = (horizon / dt).round();
    if (k * dt - horizon).abs() > 1e-9 * horizon.max(1.0) {
        return Err(Error::InvalidConfig(format!("horizon {horizon} is not a multiple of dt = {dt}")));
    }
    Ok(k as usize)
}

/// Discretised reflected trajectory on a uniform grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodePath {
    pub stream: StreamId,
    pub dt: f64,
    /// Action dimension; zero for paths without actions.
    pub dim: usize,
    pub times: Vec<f64>,
    pub states: Vec<f64>,
    /// Row-major `K × dim` actions applied on `[t_k, t_{k+1})`.
    pub actions: Vec<f64>,
    /// Cumulative local time, `L_0 = 0`.
    pub local_time: Vec<f64>,
    /// Number of actions shrunk to the configured norm bound.
    pub clamp_events: usize,
}

impl EpisodePath {
    pub fn steps(&self) -> usize {
        self.states.len().saturating_sub(1)
    }

    pub fn action(&self, k: usize) -> &[f64] {
        &self.actions[k * self.dim..(k + 1) * self.dim]
    }

    pub fn dl(&self, k: usize) -> f64 {
        self.local_time[k + 1] - self.local_time[k]
    }

    pub fn terminal_state(&self) -> f64 {
        *self.states.last().expect("paths have at least one point")
    }

    /// Checks positivity, monotone local time and that local time only
    /// grows on steps ending at the boundary.
    pub fn check_invariants(&self) -> Result<()> {
        let fail = |k: usize, m: &str| Err(Error::Validation { row: k, message: m.to_string() });
        if self.local_time.first() != Some(&0.0) {
            return fail(0, "local time must start at 0");
        }
        for k in 0..self.states.len() {
            if !(self.states[k] >= 0.0) {
                return fail(k, "negative state");
            }
        }
        for k in 0..self.steps() {
            let dl = self.dl(k);
            if dl < 0.0 {
                return fail(k, "local time decreased");
            }
            if dl > 0.0 && self.states[k + 1] != 0.0 {
                return fail(k, "local time increased away from the boundary");
            }
        }
        Ok(())
    }
}

/// Runs one episode of `horizon / dt` steps: sample an action, apply it to
/// the environment, record the outcome.
pub fn rollout<E, P>(
    env: &E,
    policy: &P,
    y0: f64,
    horizon: f64,
    dt: f64,
    action_limit: f64,
    stream: StreamId,
) -> Result<EpisodePath>
where
    E: Environment + ?Sized,
    P: ActionSampler + ?Sized,
{
    crate::error::check_state(y0)?;
    let steps = grid_steps(horizon, dt)?;
    let dim = env.action_dim();
    if policy.dim() != dim {
        return Err(Error::InvalidConfig(format!(
            "policy dimension {} does not match environment dimension {dim}",
            policy.dim()
        )));
    }
    let mut rng = stream.rng();
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    let mut local_time = Vec::with_capacity(steps + 1);
    let mut actions = vec![0.0; steps * dim];
    let mut clamp_events = 0;
    let (mut y, mut l) = (y0, 0.0);
    times.push(0.0);
    states.push(y);
    local_time.push(l);
    for k in 0..steps {
        let a = &mut actions[k * dim..(k + 1) * dim];
        policy.sample(y, &mut rng, a);
        let norm = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > action_limit {
            let scale = action_limit / norm;
            a.iter_mut().for_each(|x| *x *= scale);
            clamp_events += 1;
        }
        let (y_next, dl) = env
            .step(y, a, dt, &mut rng)
            .map_err(|e| Error::Step { episode: stream.index, step: k, source: Box::new(e) })?;
        y = y_next;
        l += dl;
        times.push((k + 1) as f64 * dt);
        states.push(y);
        local_time.push(l);
    }
    Ok(EpisodePath { stream, dt, dim, times, states, actions, local_time, clamp_events })
}

/// Single episode in the reflected market under the risk-neutral measure.
pub fn simulate_episode<P: ActionSampler + ?Sized>(
    policy: &P,
    y0: f64,
    horizon: f64,
    dt: f64,
    params: &ModelParams,
    stream: StreamId,
) -> Result<EpisodePath> {
    let env = ReflectedMarket::new(params.clone(), Measure::RiskNeutral);
    rollout(&env, policy, y0, horizon, dt, DEFAULT_ACTION_LIMIT, stream)
}

/// `n` independent episodes on streams `(run_seed, 0..n)`, generated in
/// parallel.
#[allow(clippy::too_many_arguments)]
pub fn simulate_batch<E, P>(
    env: &E,
    policy: &P,
    y0: f64,
    horizon: f64,
    dt: f64,
    action_limit: f64,
    run_seed: u64,
    n: u64,
) -> Result<Vec<EpisodePath>>
where
    E: Environment,
    P: ActionSampler,
{
    (0..n)
        .into_par_iter()
        .map(|i| rollout(env, policy, y0, horizon, dt, action_limit, StreamId::new(run_seed, i)))
        .collect()
}

/// Coefficients of `dY* = b(1+Y*)dt + s(1+Y*)dB + dL*`, the aggregated
/// dynamics under the optimal exploratory policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AggregatedDynamics {
    /// `b = 2α + √(1−κ²)ζ`
    pub drift: f64,
    /// `s² = α + (d/2)γ + ½κ²σ_Z² + √(1−κ²)ζ`
    pub diffusion_sq: f64,
}

impl AggregatedDynamics {
    pub fn new(params: &ModelParams, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0) {
            return Err(Error::InvalidGamma(gamma));
        }
        let DerivedConstants { alpha, zeta } = params.derived();
        let kz = params.kappa_bar() * zeta;
        let d = params.dim() as f64;
        let diffusion_sq =
            alpha + 0.5 * d * gamma + 0.5 * params.kappa().powi(2) * params.sigma_z().powi(2) + kz;
        if !(diffusion_sq >= 0.0) {
            return Err(Error::InvalidVariance(diffusion_sq));
        }
        Ok(Self { drift: 2.0 * alpha + kz, diffusion_sq })
    }

    pub fn diffusion(&self) -> f64 {
        self.diffusion_sq.sqrt()
    }

    /// Drift `μ̂ = b − ½s²` of `H = ln(1+Y*)`.
    pub fn log_drift(&self) -> f64 {
        self.drift - 0.5 * self.diffusion_sq
    }
}

/// Projection-Euler path of the aggregated one-factor dynamics.
pub fn simulate_aggregated(
    params: &ModelParams,
    gamma: f64,
    y0: f64,
    horizon: f64,
    dt: f64,
    stream: StreamId,
) -> Result<EpisodePath> {
    crate::error::check_state(y0)?;
    let dynamics = AggregatedDynamics::new(params, gamma)?;
    let steps = grid_steps(horizon, dt)?;
    let (b, s) = (dynamics.drift, dynamics.diffusion());
    let sqrt_dt = dt.sqrt();
    let mut rng = stream.rng();
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    let mut local_time = Vec::with_capacity(steps + 1);
    let (mut y, mut l) = (y0, 0.0);
    times.push(0.0);
    states.push(y);
    local_time.push(l);
    for k in 0..steps {
        let db = rng.sample::<f64, _>(StandardNormal) * sqrt_dt;
        let proposal = y + (1.0 + y) * (b * dt + s * db);
        if !proposal.is_finite() {
            return Err(Error::Step {
                episode: stream.index,
                step: k,
                source: Box::new(Error::non_finite("aggregated state update")),
            });
        }
        if proposal >= 0.0 {
            y = proposal;
        } else {
            y = 0.0;
            l -= proposal;
        }
        times.push((k + 1) as f64 * dt);
        states.push(y);
        local_time.push(l);
    }
    Ok(EpisodePath { stream, dt, dim: 0, times, states, actions: Vec::new(), local_time, clamp_events: 0 })
}

/// Path of `H = ln(1+Y*)` built from the explicit Skorokhod map
/// `K_t = 0 ∨ (−h + max_{s≤t}(−μ̂s − σ̂B_s))`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogPath {
    pub times: Vec<f64>,
    pub h: Vec<f64>,
    /// Reflection term `K`.
    pub reflection: Vec<f64>,
    /// Driving Brownian motion `B`.
    pub brownian: Vec<f64>,
    pub log_drift: f64,
    pub log_vol: f64,
}

impl LogPath {
    pub fn terminal(&self) -> f64 {
        *self.h.last().expect("paths have at least one point")
    }

    /// `Y = e^H − 1`
    pub fn states(&self) -> Vec<f64> {
        self.h.iter().map(|h| h.exp_m1()).collect()
    }
}

pub fn skorokhod_log_path(
    params: &ModelParams,
    gamma: f64,
    h0: f64,
    horizon: f64,
    dt: f64,
    stream: StreamId,
) -> Result<LogPath> {
    if !(h0 >= 0.0) {
        return Err(Error::Domain { what: "initial log-state h0", expected: "non-negative", value: h0 });
    }
    let dynamics = AggregatedDynamics::new(params, gamma)?;
    let steps = grid_steps(horizon, dt)?;
    let (m, s) = (dynamics.log_drift(), dynamics.diffusion());
    let sqrt_dt = dt.sqrt();
    let mut rng = stream.rng();
    let mut times = Vec::with_capacity(steps + 1);
    let mut h = Vec::with_capacity(steps + 1);
    let mut reflection = Vec::with_capacity(steps + 1);
    let mut brownian = Vec::with_capacity(steps + 1);
    let mut b = 0.0;
    let mut running_max = 0.0f64;
    times.push(0.0);
    h.push(h0);
    reflection.push(0.0);
    brownian.push(0.0);
    for k in 1..=steps {
        b += rng.sample::<f64, _>(StandardNormal) * sqrt_dt;
        let t = k as f64 * dt;
        let free = m * t + s * b;
        running_max = running_max.max(-free);
        let kt = (running_max - h0).max(0.0);
        times.push(t);
        brownian.push(b);
        reflection.push(kt);
        h.push(h0 + free + kt);
    }
    Ok(LogPath { times, h, reflection, brownian, log_drift: m, log_vol: s })
}

/// `e^{−ρT}(2h + 2|μ̂|T + σ̂√(2T/π))`, bounding `e^{−ρT} E[H_T]` from the
/// Skorokhod representation.
pub fn transversality_bound(params: &ModelParams, gamma: f64, h0: f64, horizon: f64) -> Result<f64> {
    let dynamics = AggregatedDynamics::new(params, gamma)?;
    let (m, s) = (dynamics.log_drift(), dynamics.diffusion());
    Ok((-params.rho() * horizon).exp()
        * (2.0 * h0 + 2.0 * m.abs() * horizon + s * (2.0 * horizon / std::f64::consts::PI).sqrt()))
}

/// Euler scheme against the Skorokhod construction at the terminal time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleComparison {
    pub ks: KsResult,
    pub euler_mean: f64,
    pub oracle_mean: f64,
    pub paths: u64,
}

/// Two-sample KS test of `Y_T` from [`simulate_aggregated`] (streams
/// `(seed, 0..n)`) against `e^{H_T} − 1` from [`skorokhod_log_path`] (streams
/// `(seed, n..2n)`), so the two samples are independent.
pub fn oracle_comparison(
    params: &ModelParams,
    gamma: f64,
    y0: f64,
    horizon: f64,
    dt: f64,
    n: u64,
    seed: u64,
) -> Result<OracleComparison> {
    if n == 0 {
        return Err(Error::EmptyBatch);
    }
    let euler: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| simulate_aggregated(params, gamma, y0, horizon, dt, StreamId::new(seed, i)).map(|p| p.terminal_state()))
        .collect::<Result<_>>()?;
    let oracle: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            skorokhod_log_path(params, gamma, y0.ln_1p(), horizon, dt, StreamId::new(seed, n + i))
                .map(|p| p.terminal().exp_m1())
        })
        .collect::<Result<_>>()?;
    Ok(OracleComparison {
        ks: ks_two_sample(&euler, &oracle),
        euler_mean: mean_estimate(&euler).mean,
        oracle_mean: mean_estimate(&oracle).mean,
        paths: n,
    })
}

/// Metadata written next to exported paths.
#[derive(Debug, Clone, Serialize)]
pub struct PathMetadata<'a> {
    pub seed: u64,
    pub params: &'a ModelParams,
    pub scheme: &'static str,
    pub measure: Measure,
    pub dt: f64,
    pub horizon: f64,
    pub paths: usize,
    pub clamp_events: usize,
}

/// CSV with columns `episode,k,t,y,action_1..action_d,dL,L`. Action and `dL`
/// cells are empty on the terminal grid point.
/// `dim` sets the number of action columns (zero for aggregated paths).
pub fn write_paths_csv<W: Write>(out: W, dim: usize, paths: &[EpisodePath], comment: Option<&str>) -> Result<()> {
    let mut out = out;
    if let Some(c) = comment {
        writeln!(out, "# {c}")?;
    }
    if let Some(p) = paths.iter().find(|p| p.dim != dim) {
        return Err(Error::InvalidConfig(format!("path {} has {} action columns, expected {dim}", p.stream.index, p.dim)));
    }
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["episode".to_string(), "k".into(), "t".into(), "y".into()];
    header.extend((1..=dim).map(|i| format!("action_{i}")));
    header.extend(["dL".to_string(), "L".into()]);
    w.write_record(&header)?;
    for p in paths {
        for k in 0..p.states.len() {
            let mut row = vec![p.stream.index.to_string(), k.to_string(), p.times[k].to_string(), p.states[k].to_string()];
            if k < p.steps() {
                row.extend(p.action(k).iter().map(|a| a.to_string()));
                row.push(p.dl(k).to_string());
            } else {
                row.extend(std::iter::repeat_n(String::new(), p.dim + 1));
            }
            row.push(p.local_time[k].to_string());
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ExploratoryConstants;
    use rand::SeedableRng;

    fn zero_noise(d: usize) -> NoiseIncrements {
        NoiseIncrements { dw_kappa: 0.0, dw_kappa_tilde: 0.0, dw: SmallVec::from_elem(0.0, d) }
    }

    #[test]
    fn kappa_one_driver_is_g0() {
        let p = ModelParams::reference().with_kappa(1.0).unwrap();
        let mut r1 = StreamRng::seed_from_u64(9);
        let mut r2 = StreamRng::seed_from_u64(9);
        let inc = draw_increments(&p, 0.01, Measure::Physical, &mut r1);
        let g0: f64 = r2.sample::<f64, _>(StandardNormal) * 0.1;
        assert_eq!(inc.dw_kappa, g0);
        assert!((inc.dw_kappa_tilde - (g0 - 0.2 * 0.01)).abs() < 1e-15);
    }

    #[test]
    fn zero_dt_gives_zero_increments() {
        let p = ModelParams::reference();
        let inc = draw_increments(&p, 0.0, Measure::RiskNeutral, &mut StreamRng::seed_from_u64(1));
        assert_eq!(inc.dw_kappa, 0.0);
        assert_eq!(inc.dw_kappa_tilde, 0.0);
        assert!(inc.dw.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn driver_correlation() {
        // Cov(dW^κ, dW_1) = √(1−κ²) dt with η = 1; check within 3 standard errors.
        let p = ModelParams::reference();
        let dt = 0.01;
        let n = 1_000_000;
        let mut rng = StreamRng::seed_from_u64(11);
        let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
        let mut prods = Vec::with_capacity(n);
        for _ in 0..n {
            let inc = draw_increments(&p, dt, Measure::RiskNeutral, &mut rng);
            let (x, y) = (inc.dw_kappa_tilde, inc.dw[0]);
            sxy += x * y;
            sxx += x * x;
            syy += y * y;
            prods.push(x * y);
        }
        let nf = n as f64;
        let cov = sxy / nf;
        let var_prod = prods.iter().map(|v| (v - cov).powi(2)).sum::<f64>() / (nf - 1.0);
        let se = (var_prod / nf).sqrt();
        assert!((cov - 0.75f64.sqrt() * dt).abs() < 3.0 * se, "cov {cov} se {se}");
        assert!((sxx / nf - dt).abs() < 1e-4);
        assert!((syy / nf - dt).abs() < 1e-4);
    }

    #[test]
    fn physical_measure_pushes_up_at_boundary() {
        let p = ModelParams::reference();
        let dt = 0.01;
        let inc = NoiseIncrements { dw_kappa: 0.0, dw_kappa_tilde: -0.2 * dt, dw: SmallVec::from_elem(0.0, 1) };
        let (y1, dl) = step_reflected(0.0, &[0.0], &p, dt, &inc).unwrap();
        assert!((y1 - 0.04 * dt).abs() < 1e-18);
        assert_eq!(dl, 0.0);
    }

    #[test]
    fn projection_credits_overshoot() {
        let p = ModelParams::reference();
        // a μ dt = −0.01 with dt = 0.01 ⇒ a = −5; zero noise removes the σ_Z term
        let (y1, dl) = step_reflected(0.0, &[-5.0], &p, 0.01, &zero_noise(1)).unwrap();
        assert_eq!(y1, 0.0);
        assert!((dl - 0.01).abs() < 1e-15);
        let (y1, dl) = step_reflected(1.0, &[-5.0], &p, 0.01, &zero_noise(1)).unwrap();
        assert!((y1 - 0.99).abs() < 1e-15);
        assert_eq!(dl, 0.0);
    }

    #[test]
    fn non_finite_state_reported() {
        let p = ModelParams::reference();
        assert!(matches!(
            step_reflected(0.0, &[f64::NAN], &p, 0.01, &zero_noise(1)),
            Err(Error::NonFinite { .. })
        ));
    }

    #[test]
    fn grid_must_divide_horizon() {
        assert_eq!(grid_steps(12.0, 0.01).unwrap(), 1200);
        assert_eq!(grid_steps(12.0, 0.005).unwrap(), 2400);
        assert!(grid_steps(1.0, 0.3).is_err());
        assert!(grid_steps(1.0, 0.0).is_err());
    }

    #[test]
    fn quiet_market_keeps_state() {
        struct Quiet;
        impl Environment for Quiet {
            fn action_dim(&self) -> usize {
                1
            }
            fn step(&self, y: f64, a: &[f64], dt: f64, _: &mut StreamRng) -> Result<(f64, f64)> {
                let p = ModelParams::reference();
                step_reflected(y, a, &p, dt, &zero_noise(1))
            }
        }
        let zero = Feedback::new(1, |_, out: &mut [f64]| out[0] = 0.0);
        let path = rollout(&Quiet, &zero, 0.7, 1.0, 0.01, DEFAULT_ACTION_LIMIT, StreamId::new(0, 0)).unwrap();
        assert!(path.states.iter().all(|&y| y == 0.7));
        assert!(path.local_time.iter().all(|&l| l == 0.0));
    }

    #[test]
    fn episodes_respect_invariants_and_are_reproducible() {
        let p = ModelParams::reference();
        let ex = ExploratoryConstants::new(&p, 0.2).unwrap();
        let pi = ex.optimal_sampler(&p).unwrap();
        let env = ReflectedMarket::new(p.clone(), Measure::RiskNeutral);
        let batch = simulate_batch(&env, &pi, 0.0, 2.0, 0.01, DEFAULT_ACTION_LIMIT, 5, 1000).unwrap();
        let mut hits = 0;
        for path in &batch {
            path.check_invariants().unwrap();
            hits += (path.local_time.last().unwrap() > &0.0) as usize;
        }
        assert!(hits > 100, "boundary should be hit from y0 = 0");
        let again = simulate_episode(&pi, 0.0, 2.0, 0.01, &p, StreamId::new(5, 17)).unwrap();
        assert_eq!(again, batch[17]);
    }

    #[test]
    fn action_limit_clamps() {
        let p = ModelParams::reference();
        let env = ReflectedMarket::new(p, Measure::RiskNeutral);
        let big = Feedback::new(1, |_, out: &mut [f64]| out[0] = 50.0);
        let path = rollout(&env, &big, 1.0, 0.1, 0.01, 10.0, StreamId::new(1, 0)).unwrap();
        assert_eq!(path.clamp_events, 10);
        assert!(path.actions.iter().all(|&a| a == 10.0));
    }

    #[test]
    fn aggregated_coefficients() {
        let p = ModelParams::reference();
        let dynamics = AggregatedDynamics::new(&p, 0.2).unwrap();
        let kz = 0.75f64.sqrt() * 0.04;
        assert!((dynamics.drift - (0.04 + kz)).abs() < 1e-15);
        assert!((dynamics.diffusion_sq - (0.02 + 0.1 + 0.5 * 0.25 * 0.04 + kz)).abs() < 1e-15);
        let path = simulate_aggregated(&p, 0.2, 0.0, 1.0, 0.001, StreamId::new(2, 0)).unwrap();
        path.check_invariants().unwrap();
    }

    #[test]
    fn skorokhod_path_properties() {
        let p = ModelParams::reference();
        // far from the boundary the reflection never activates
        let far = skorokhod_log_path(&p, 0.2, 50.0, 0.5, 0.001, StreamId::new(3, 0)).unwrap();
        assert!(far.reflection.iter().all(|&k| k == 0.0));
        for i in 0..200 {
            let path = skorokhod_log_path(&p, 0.2, 0.3, 1.0, 0.01, StreamId::new(4, i)).unwrap();
            for k in 0..path.times.len() {
                assert!(path.h[k] >= -1e-15);
                assert!(k == 0 || path.reflection[k] >= path.reflection[k - 1]);
            }
        }
        assert!(skorokhod_log_path(&p, 0.2, -0.1, 1.0, 0.01, StreamId::new(0, 0)).is_err());
    }

    #[test]
    fn csv_export_layout() {
        let p = ModelParams::reference();
        let zero = Feedback::new(1, |_, out: &mut [f64]| out[0] = 0.0);
        let path = simulate_episode(&zero, 1.0, 0.02, 0.01, &p, StreamId::new(0, 3)).unwrap();
        let mut buf = Vec::new();
        write_paths_csv(&mut buf, 1, &[path], Some("{}")).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "# {}");
        assert_eq!(lines[1], "episode,k,t,y,action_1,dL,L");
        assert_eq!(lines.len(), 5);
        assert!(lines[4].starts_with("3,2,0.02,"));
        assert!(lines[4].ends_with(",,,0"));
    }
}
