use serde::{Deserialize, Serialize};

use super::params::PolicyParams;
use super::schedule::Rates;
use crate::error::{Error, Result};
use crate::sde::EpisodePath;

/// `G_k = J(y_{k+1}) − J(y_k) − q(y_k, a_k)Δt − ΔL_k − ρJ(y_k)Δt`
pub fn td_residual(j_k: f64, j_k1: f64, q_k: f64, dl_k: f64, rho: f64, dt: f64) -> f64 {
    j_k1 - j_k - q_k * dt - dl_k - rho * j_k * dt
}

/// How episode statistics are turned into parameter steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UpdateRule {
    /// Include the dependence of `ψ3` on `(ψ1, ψ2)` in the test function.
    pub chain_rule: bool,
    /// Cap on the Euclidean norm of one episode's step.
    pub max_norm: f64,
    /// Lower bound for a scalar `ψ2`.
    pub psi2_floor: f64,
}

impl Default for UpdateRule {
    fn default() -> Self {
        Self { chain_rule: true, max_norm: 1.0, psi2_floor: 1e-6 }
    }
}

/// Per-episode sums `Σ e^{−ρt_k} ∂J/∂ξ G_k` and `Σ e^{−ρt_k} ∂q/∂ψ G_k`,
/// laid out as `[ξ, ψ1, ψ2 row-major]`.
pub fn episode_statistic(pp: &PolicyParams, path: &EpisodePath, rho: f64, chain_rule: bool) -> Result<Vec<f64>> {
    let d = pp.dim();
    if path.dim != d {
        return Err(Error::InvalidConfig(format!("episode has action dimension {}, policy has {d}", path.dim)));
    }
    let mut acc = vec![0.0; pp.flat_len()];
    let mut grad = vec![0.0; d + d * d];
    let xi = pp.xi();
    let dt = path.dt;
    let mut j_k = path.states[0].ln_1p() + xi;
    for k in 0..path.steps() {
        let y = path.states[k];
        let a = path.action(k);
        let j_k1 = path.states[k + 1].ln_1p() + xi;
        let q = pp.q_unchecked(rho, y, a);
        let g = td_residual(j_k, j_k1, q, path.dl(k), rho, dt);
        let w = (-rho * path.times[k]).exp() * g;
        acc[0] += w;
        pp.q_grad_into(y, a, chain_rule, &mut grad);
        for (s, gi) in acc[1..].iter_mut().zip(&grad) {
            *s += w * gi;
        }
        j_k = j_k1;
    }
    if acc.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFiniteUpdate);
    }
    Ok(acc)
}

#[derive(Debug, Clone, PartialEq)]
pub struct UpdateOutcome {
    pub params: PolicyParams,
    /// Norm of the applied step (after clipping).
    pub norm: f64,
    pub clipped: bool,
    pub projected: bool,
}

/// One stochastic-approximation step from an on-policy episode.
pub fn update(pp: &PolicyParams, path: &EpisodePath, rates: Rates, rho: f64, rule: &UpdateRule) -> Result<UpdateOutcome> {
    let stat = episode_statistic(pp, path, rho, rule.chain_rule)?;
    apply_step(pp, &stat, rates, rule)
}

pub(crate) fn apply_step(pp: &PolicyParams, stat: &[f64], rates: Rates, rule: &UpdateRule) -> Result<UpdateOutcome> {
    let d = pp.dim();
    let mut step: Vec<f64> = stat
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let rate = if i == 0 {
                rates.xi
            } else if i <= d {
                rates.psi1
            } else {
                rates.psi2
            };
            rate * s
        })
        .collect();
    let mut norm = step.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !norm.is_finite() {
        return Err(Error::NonFiniteUpdate);
    }
    let clipped = norm > rule.max_norm;
    if clipped {
        let scale = rule.max_norm / norm;
        step.iter_mut().for_each(|x| *x *= scale);
        norm = rule.max_norm;
    }
    let mut flat = pp.to_flat();
    flat.iter_mut().zip(&step).for_each(|(p, s)| *p += s);
    let projected = PolicyParams::floor_psi2(&mut flat, d, rule.psi2_floor);
    let params = PolicyParams::from_flat(d, pp.gamma(), &flat)?;
    Ok(UpdateOutcome { params, norm, clipped, projected })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamId;

    fn path(states: Vec<f64>, actions: Vec<f64>, local_time: Vec<f64>, dt: f64) -> EpisodePath {
        let times = (0..states.len()).map(|k| k as f64 * dt).collect();
        EpisodePath { stream: StreamId::new(0, 0), dt, dim: 1, times, states, actions, local_time, clamp_events: 0 }
    }

    #[test]
    fn stationary_transition_has_zero_residual() {
        let (j, rho, dt) = (0.7, 0.2, 0.01);
        assert_eq!(td_residual(j, j, -rho * j, 0.0, rho, dt), 0.0);
        let base = td_residual(0.3, 0.4, 0.1, 0.0, rho, dt);
        assert!((td_residual(0.3, 0.4, 0.1, 0.1, rho, dt) - (base - 0.1)).abs() < 1e-15);
    }

    #[test]
    fn zero_rates_leave_params_unchanged() {
        let pp = PolicyParams::initial(1, 0.2).unwrap();
        let p = path(vec![0.0, 0.1, 0.0, 0.2], vec![0.5, -1.0, 0.3], vec![0.0, 0.0, 0.05, 0.05], 0.1);
        let out = update(&pp, &p, Rates::ZERO, 0.2, &UpdateRule::default()).unwrap();
        assert_eq!(out.params, pp);
        assert_eq!(out.norm, 0.0);
    }

    #[test]
    fn hand_computed_three_step_episode() {
        // ξ = 0, ψ1 = 0, ψ2 = 1, γ = 0.2 ⇒ ψ3 = −0.1 ln(0.4π)
        let pp = PolicyParams::initial(1, 0.2).unwrap();
        let psi3 = -0.1 * (0.4 * std::f64::consts::PI).ln();
        assert!((pp.psi3() - psi3).abs() < 1e-15);
        let (rho, dt) = (0.2, 0.1);
        let ys = [0.0, 0.1, 0.0, 0.2];
        let acts = [0.5, -1.0, 0.3];
        let ls = [0.0, 0.0, 0.05, 0.05];
        let p = path(ys.to_vec(), acts.to_vec(), ls.to_vec(), dt);

        let mut expect = [0.0; 3];
        for k in 0..3 {
            let s = 1.0 + ys[k];
            let (jk, jk1) = (ys[k].ln_1p(), ys[k + 1].ln_1p());
            let q = -acts[k] * acts[k] / (2.0 * s * s) - rho * s.ln() + psi3;
            let g = jk1 - jk - q * dt - (ls[k + 1] - ls[k]) - rho * jk * dt;
            let w = (-rho * k as f64 * dt).exp() * g;
            // ψ1 = 0 removes S⁻¹ψ1 terms; γψ2⁻ᵀ = 0.2
            expect[0] += w;
            expect[1] += w * acts[k] / s;
            expect[2] += w * (-acts[k] * acts[k] / (s * s) + 0.2);
        }
        let stat = episode_statistic(&pp, &p, rho, true).unwrap();
        for i in 0..3 {
            assert!((stat[i] - expect[i]).abs() < 1e-15, "{i}: {} vs {}", stat[i], expect[i]);
        }
        let rates = Rates { xi: 0.5, psi1: 0.2, psi2: 0.1 };
        let out = update(&pp, &p, rates, rho, &UpdateRule::default()).unwrap();
        assert!((out.params.xi() - 0.5 * expect[0]).abs() < 1e-15);
        assert!((out.params.psi1()[0] - 0.2 * expect[1]).abs() < 1e-15);
        assert!((out.params.psi2()[(0, 0)] - (1.0 + 0.1 * expect[2])).abs() < 1e-15);
        assert!(!out.clipped);
    }

    #[test]
    fn zero_residual_episode_is_fixed_point() {
        // y constant and q = −ρJ makes every G_k vanish
        let pp = PolicyParams::initial(1, 0.2).unwrap();
        let rho = 0.2;
        // with a = 0 at y = 0, q = ψ3 and G_k = −(ψ3 + ρξ)Δt
        let pp = pp.with_xi(-pp.psi3() / rho).unwrap();
        let p = path(vec![0.0; 4], vec![0.0; 3], vec![0.0; 4], 0.1);
        let stat = episode_statistic(&pp, &p, rho, false).unwrap();
        assert!(stat.iter().all(|s| s.abs() < 1e-15), "{stat:?}");
    }

    #[test]
    fn clipping_and_floor() {
        let pp = PolicyParams::initial(1, 0.2).unwrap();
        let rule = UpdateRule { max_norm: 0.5, ..UpdateRule::default() };
        let out = apply_step(&pp, &[10.0, 0.0, -30.0], Rates { xi: 1.0, psi1: 1.0, psi2: 1.0 }, &rule).unwrap();
        assert!(out.clipped);
        assert!((out.norm - 0.5).abs() < 1e-15);
        let rule = UpdateRule { max_norm: 100.0, ..UpdateRule::default() };
        let out = apply_step(&pp, &[0.0, 0.0, -30.0], Rates { xi: 1.0, psi1: 1.0, psi2: 1.0 }, &rule).unwrap();
        assert!(out.projected);
        assert_eq!(out.params.psi2()[(0, 0)], 1e-6);
        assert!(matches!(
            apply_step(&pp, &[f64::NAN, 0.0, 0.0], Rates { xi: 1.0, psi1: 1.0, psi2: 1.0 }, &rule),
            Err(Error::NonFiniteUpdate)
        ));
    }
}
