//! Closed-form mathematics of the tracking problem: market parameters, the
//! classical value function of the normalised reflected problem together with
//! its feedback portfolio, and the explicit exploratory (entropy-regularised)
//! solution at temperature `γ = ρ/d`.
//!
//! The benchmark correlation direction `η` only enters through its unit
//! vector `η/‖η‖`: the simulator normalises it so that `W^η` is a standard
//! Brownian motion, and every closed form below is written against the same
//! normalised vector so the two stay consistent.

use std::f64::consts::PI;

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_state, Error, Result};
use crate::gaussian::{GaussianSpec, ScaledGaussian};
use crate::linalg;
use crate::roots;

/// Serialisable form of [`ModelParams`], used by configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParamsConfig {
    pub mu: Vec<f64>,
    pub sigma: Vec<Vec<f64>>,
    pub sigma_z: f64,
    pub kappa: f64,
    pub eta: Vec<f64>,
    pub rho: f64,
}

/// Market and benchmark coefficients. Validated on construction and
/// immutable afterwards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelParamsConfig", into = "ModelParamsConfig")]
pub struct ModelParams {
    mu: DVector<f64>,
    sigma: DMatrix<f64>,
    sigma_z: f64,
    kappa: f64,
    eta: DVector<f64>,
    rho: f64,
    cov_inv: DMatrix<f64>,
    cov_det: f64,
    eta_unit: DVector<f64>,
    /// `(σσᵀ)⁻¹ σ η̂ = σ⁻ᵀ η̂`
    hedge_dir: DVector<f64>,
}

impl ModelParams {
    pub fn new(
        mu: DVector<f64>,
        sigma: DMatrix<f64>,
        sigma_z: f64,
        kappa: f64,
        eta: DVector<f64>,
        rho: f64,
    ) -> Result<Self> {
        let d = mu.len();
        let bad = |msg: &str| Err(Error::InvalidParams(msg.to_string()));
        if d == 0 {
            return bad("asset count must be positive");
        }
        if sigma.nrows() != d || sigma.ncols() != d {
            return bad("sigma must be a d x d matrix");
        }
        if eta.len() != d {
            return bad("eta must have length d");
        }
        if !linalg::all_finite(&mu) || sigma.iter().any(|x| !x.is_finite()) {
            return bad("mu and sigma must be finite");
        }
        if mu.iter().all(|&x| x == 0.0) {
            return bad("mu must be nonzero");
        }
        if !(sigma_z > 0.0 && sigma_z.is_finite()) {
            return bad("sigma_z must be positive");
        }
        if !(rho > 0.0 && rho.is_finite()) {
            return bad("rho must be positive");
        }
        if !(kappa.abs() <= 1.0) {
            return bad("kappa must lie in [-1, 1]");
        }
        if eta.iter().any(|e| !(e.abs() <= 1.0)) {
            return bad("every eta_i must lie in [-1, 1]");
        }
        let eta_norm = eta.norm();
        if eta_norm == 0.0 {
            return bad("eta must be nonzero");
        }

        let sigma_inv = linalg::guarded_inverse(&sigma)?;
        let cov = &sigma * sigma.transpose();
        let cov_inv = sigma_inv.transpose() * &sigma_inv;
        let cov_det = cov.determinant();
        let eta_unit = &eta / eta_norm;
        let hedge_dir = sigma_inv.transpose() * &eta_unit;

        Ok(Self { mu, sigma, sigma_z, kappa, eta, rho, cov_inv, cov_det, eta_unit, hedge_dir })
    }

    /// One risky asset.
    pub fn scalar(mu: f64, sigma: f64, sigma_z: f64, kappa: f64, eta: f64, rho: f64) -> Result<Self> {
        Self::new(
            DVector::from_element(1, mu),
            DMatrix::from_element(1, 1, sigma),
            sigma_z,
            kappa,
            DVector::from_element(1, eta),
            rho,
        )
    }

    /// The single-asset simulation market used throughout the test suites:
    /// `μ = 0.2, σ = 1, σ_Z = 0.2, κ = 0.5, η = 1, ρ = 0.2`.
    pub fn reference() -> Self {
        Self::scalar(0.2, 1.0, 0.2, 0.5, 1.0, 0.2).expect("reference parameters are valid")
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }
    pub fn mu(&self) -> &DVector<f64> {
        &self.mu
    }
    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }
    pub fn sigma_z(&self) -> f64 {
        self.sigma_z
    }
    pub fn kappa(&self) -> f64 {
        self.kappa
    }
    pub fn eta(&self) -> &DVector<f64> {
        &self.eta
    }
    pub fn eta_unit(&self) -> &DVector<f64> {
        &self.eta_unit
    }
    pub fn rho(&self) -> f64 {
        self.rho
    }
    /// `(σσᵀ)⁻¹`
    pub fn cov_inv(&self) -> &DMatrix<f64> {
        &self.cov_inv
    }
    /// `|σσᵀ|`
    pub fn cov_det(&self) -> f64 {
        self.cov_det
    }
    /// `√(1 − κ²)`
    pub fn kappa_bar(&self) -> f64 {
        (1.0 - self.kappa * self.kappa).max(0.0).sqrt()
    }

    pub fn derived(&self) -> DerivedConstants {
        DerivedConstants {
            alpha: 0.5 * self.mu.dot(&(&self.cov_inv * &self.mu)),
            zeta: self.sigma_z * self.hedge_dir.dot(&self.mu),
        }
    }

    /// The same market with a different correlation coefficient.
    pub fn with_kappa(&self, kappa: f64) -> Result<Self> {
        Self::new(self.mu.clone(), self.sigma.clone(), self.sigma_z, kappa, self.eta.clone(), self.rho)
    }

    pub fn with_rho(&self, rho: f64) -> Result<Self> {
        Self::new(self.mu.clone(), self.sigma.clone(), self.sigma_z, self.kappa, self.eta.clone(), rho)
    }
}

impl TryFrom<ModelParamsConfig> for ModelParams {
    type Error = Error;

    fn try_from(c: ModelParamsConfig) -> Result<Self> {
        Self::new(
            DVector::from_vec(c.mu),
            linalg::from_rows(&c.sigma)?,
            c.sigma_z,
            c.kappa,
            DVector::from_vec(c.eta),
            c.rho,
        )
    }
}

impl From<ModelParams> for ModelParamsConfig {
    fn from(p: ModelParams) -> Self {
        Self {
            mu: p.mu.iter().copied().collect(),
            sigma: linalg::to_rows(&p.sigma),
            sigma_z: p.sigma_z,
            kappa: p.kappa,
            eta: p.eta.iter().copied().collect(),
            rho: p.rho,
        }
    }
}

/// `α = ½ μᵀ(σσᵀ)⁻¹μ` and `ζ = σ_Z η̂ᵀσ⁻¹μ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DerivedConstants {
    pub alpha: f64,
    pub zeta: f64,
}

/// The quartic-like equation whose root in `(0, 1)` pins down the classical
/// value function.
pub fn lambda_equation(params: &ModelParams, lambda: f64) -> f64 {
    let DerivedConstants { alpha, zeta } = params.derived();
    let lm1 = lambda - 1.0;
    let (kappa, sz) = (params.kappa, params.sigma_z);
    alpha * lambda * lm1 * lm1 + params.rho * lm1 * lm1
        - params.kappa_bar() * zeta * lambda * lm1
        - 0.5 * kappa * kappa * sz * sz * lambda
}

const LAMBDA_EDGE: f64 = 1e-12;
const LAMBDA_XTOL: f64 = 1e-14;

/// Solves for the root `λ ∈ (0, 1)` with Brent's method.
///
/// With `κ = 0` the equation degenerates (`ℓ(1) = 0`) and the closed form is
/// not applicable; that case returns [`Error::NoBracket`].
pub fn solve_lambda(params: &ModelParams) -> Result<f64> {
    let f = |l: f64| lambda_equation(params, l);
    let (lo, hi) = (LAMBDA_EDGE, 1.0 - LAMBDA_EDGE);
    let (f_lo, f_hi) = (f(lo), f(hi));
    if f(1.0) >= 0.0 || f_hi >= 0.0 || f_lo <= 0.0 {
        return Err(Error::NoBracket { at_zero: f(0.0), at_one: f(1.0) });
    }
    roots::brent(f, lo, hi, LAMBDA_XTOL)
}

/// Classical (strict control) solution `u(y) = ((λ−1)/λ)(1+y)^{λ/(λ−1)}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassicalSolution {
    pub lambda: f64,
    pub params: ModelParams,
}

impl ClassicalSolution {
    pub fn new(params: &ModelParams) -> Result<Self> {
        Ok(Self { lambda: solve_lambda(params)?, params: params.clone() })
    }

    fn exponent(&self) -> f64 {
        self.lambda / (self.lambda - 1.0)
    }

    pub fn value(&self, y: f64) -> Result<f64> {
        check_state(y)?;
        Ok((self.lambda - 1.0) / self.lambda * (1.0 + y).powf(self.exponent()))
    }

    /// `u'(y) = (1+y)^{1/(λ−1)}`
    pub fn derivative(&self, y: f64) -> Result<f64> {
        check_state(y)?;
        Ok((1.0 + y).powf(1.0 / (self.lambda - 1.0)))
    }

    pub fn second_derivative(&self, y: f64) -> Result<f64> {
        check_state(y)?;
        let p = 1.0 / (self.lambda - 1.0);
        Ok(p * (1.0 + y).powf(p - 1.0))
    }

    /// Optimal feedback amount per unit of benchmark, linear in `(1+y)`.
    pub fn policy(&self, y: f64) -> Result<DVector<f64>> {
        check_state(y)?;
        let p = &self.params;
        let s = 1.0 + y;
        Ok((&p.cov_inv * &p.mu) * ((1.0 - self.lambda) * s) + &p.hedge_dir * (p.kappa_bar() * p.sigma_z * s))
    }

    /// Residual of the reduced HJB equation with analytic derivatives.
    pub fn hjb_residual(&self, y: f64) -> Result<f64> {
        let p = &self.params;
        let DerivedConstants { alpha, zeta } = p.derived();
        let (u, du, ddu) = (self.value(y)?, self.derivative(y)?, self.second_derivative(y)?);
        let s = 1.0 + y;
        // u'²/u'' = (λ−1)(1+y)u', which stays finite when u' underflows
        Ok(-alpha * (self.lambda - 1.0) * s * du + p.kappa_bar() * zeta * s * du
            + 0.5 * p.sigma_z.powi(2) * p.kappa.powi(2) * s * s * ddu
            - p.rho * u)
    }

    /// Value of the un-normalised auxiliary problem at wealth gap `x` and
    /// benchmark level `z`.
    pub fn auxiliary_value(&self, x: f64, z: f64) -> Result<f64> {
        if !(z > 0.0) {
            return Err(Error::Domain { what: "benchmark level z", expected: "positive", value: z });
        }
        denormalize_value(self.value(x / z)?, z)
    }
}

/// `z · u(x/z)` given `u` already evaluated at `x/z`.
pub fn denormalize_value(u_val: f64, z: f64) -> Result<f64> {
    if !(z > 0.0) {
        return Err(Error::Domain { what: "benchmark level z", expected: "positive", value: z });
    }
    Ok(z * u_val)
}

/// The constant that makes `E_π[q − γ ln π] = 0` for the Gaussian policy
/// induced by a quadratic q-function with linear coefficient `ψ1` and
/// curvature `S = ψ2ψ2ᵀ`:
/// `−½ ψ1ᵀ S⁻¹ ψ1 − (γ/2) ln((2πγ)^d / |S|)`.
pub fn entropy_consistent_constant(psi1: &DVector<f64>, s: &DMatrix<f64>, gamma: f64) -> Result<f64> {
    let chol = s.clone().cholesky().ok_or(Error::SingularPsi2)?;
    let d = psi1.len() as f64;
    let log_det = 2.0 * chol.l().diagonal().iter().map(|x| x.ln()).sum::<f64>();
    let quad = psi1.dot(&chol.solve(psi1));
    Ok(-0.5 * quad - 0.5 * gamma * (d * (2.0 * PI * gamma).ln() - log_det))
}

/// Explicit solution of the exploratory problem:
/// `v(y) = ln(1+y) + ξ*` and the exact q-function coefficients.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExploratoryConstants {
    pub gamma: f64,
    pub xi_star: f64,
    pub psi1_star: DVector<f64>,
    pub psi2_star: DMatrix<f64>,
    pub psi3_star: f64,
}

impl ExploratoryConstants {
    /// The closed form is exact only at `γ = ρ/d`; other temperatures are
    /// accepted with a warning.
    pub fn new(params: &ModelParams, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::InvalidGamma(gamma));
        }
        let d = params.dim() as f64;
        let exact_gamma = params.rho / d;
        if (gamma - exact_gamma).abs() > 1e-12 * exact_gamma {
            warn!("gamma = {gamma} differs from rho/d = {exact_gamma}; exploratory closed form is not exact");
        }
        let DerivedConstants { alpha, zeta } = params.derived();
        let kb = params.kappa_bar();
        let sz = params.sigma_z;
        let entropy_term = 0.5 * gamma * (d * (2.0 * PI * gamma).ln() - params.cov_det.ln());
        let xi_star =
            (-0.5 * sz * sz * params.kappa.powi(2) + kb * zeta + entropy_term + alpha) / params.rho;
        let psi1_star = &params.mu + (&params.sigma * &params.eta_unit) * (sz * kb);
        let psi2_star = if params.dim() == 1 { params.sigma.abs() } else { params.sigma.clone() };
        let s = &psi2_star * psi2_star.transpose();
        let psi3_star = entropy_consistent_constant(&psi1_star, &s, gamma)?;
        Ok(Self { gamma, xi_star, psi1_star, psi2_star, psi3_star })
    }

    pub fn value(&self, y: f64) -> Result<f64> {
        check_state(y)?;
        Ok((1.0 + y).ln() + self.xi_star)
    }

    pub fn value_dy(&self, y: f64) -> Result<f64> {
        check_state(y)?;
        Ok(1.0 / (1.0 + y))
    }

    pub fn value_dyy(&self, y: f64) -> Result<f64> {
        check_state(y)?;
        Ok(-1.0 / (1.0 + y).powi(2))
    }

    /// Optimal Gaussian policy, computed from the market coefficients.
    pub fn optimal_policy(&self, params: &ModelParams, y: f64) -> Result<GaussianSpec> {
        check_state(y)?;
        Ok(self.optimal_sampler(params)?.at(y))
    }

    pub fn optimal_sampler(&self, params: &ModelParams) -> Result<ScaledGaussian> {
        let tilt = &params.mu + (&params.sigma * &params.eta_unit) * (params.sigma_z * params.kappa_bar());
        ScaledGaussian::new(&params.cov_inv * tilt, &(&params.cov_inv * self.gamma))
    }

    /// `ψ1*ᵀa/(1+y) − aᵀψ2*ψ2*ᵀa/(2(1+y)²) − ρ ln(1+y) + ψ3*`
    pub fn exact_q(&self, rho: f64, y: f64, a: &DVector<f64>) -> Result<f64> {
        check_state(y)?;
        let s = 1.0 + y;
        let pa = self.psi2_star.transpose() * a;
        Ok(self.psi1_star.dot(a) / s - pa.norm_squared() / (2.0 * s * s) - rho * s.ln() + self.psi3_star)
    }

    /// Residual of the exploratory HJB equation evaluated with `v`.
    pub fn hjb_residual(&self, params: &ModelParams, y: f64) -> Result<f64> {
        let DerivedConstants { alpha, zeta } = params.derived();
        let (v, dv, ddv) = (self.value(y)?, self.value_dy(y)?, self.value_dyy(y)?);
        let d = params.dim() as f64;
        let s = 1.0 + y;
        let g = self.gamma;
        let log_term = 0.5 * g * (d * (2.0 * PI * g).ln() - params.cov_det.ln() - d * (-ddv).ln());
        Ok(0.5 * params.sigma_z.powi(2) * params.kappa.powi(2) * s * s * ddv
            + params.kappa_bar() * zeta * s * dv
            + log_term
            - alpha * dv * dv / ddv
            - params.rho * v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference() -> (ModelParams, ClassicalSolution, ExploratoryConstants) {
        let p = ModelParams::reference();
        let sol = ClassicalSolution::new(&p).unwrap();
        let ex = ExploratoryConstants::new(&p, 0.2).unwrap();
        (p, sol, ex)
    }

    /// Plain bisection, kept independent of the Brent path.
    fn bisect_lambda(p: &ModelParams) -> f64 {
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        while hi - lo > 1e-14 {
            let mid = 0.5 * (lo + hi);
            if lambda_equation(p, mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn lambda_equation_endpoints() {
        let p = ModelParams::reference();
        assert!((lambda_equation(&p, 0.0) - 0.2).abs() < 1e-15);
        assert!((lambda_equation(&p, 1.0) + 0.5 * 0.25 * 0.04).abs() < 1e-15);
    }

    #[test]
    fn lambda_matches_bisection_oracle() {
        let p = ModelParams::reference();
        let lambda = solve_lambda(&p).unwrap();
        // frozen from the bisection oracle above
        assert!((lambda - 0.910_753_193_579_917_6).abs() < 1e-12, "{lambda:.16}");
        assert!((lambda - bisect_lambda(&p)).abs() < 1e-12);
        assert!(lambda_equation(&p, lambda).abs() < 1e-12);
    }

    #[test]
    fn kappa_zero_has_no_bracket() {
        let p = ModelParams::reference().with_kappa(0.0).unwrap();
        assert!(matches!(solve_lambda(&p), Err(Error::NoBracket { .. })));
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(ModelParams::scalar(0.0, 1.0, 0.2, 0.5, 1.0, 0.2).is_err());
        assert!(ModelParams::scalar(0.2, 0.0, 0.2, 0.5, 1.0, 0.2).is_err());
        assert!(ModelParams::scalar(0.2, 1.0, -0.2, 0.5, 1.0, 0.2).is_err());
        assert!(ModelParams::scalar(0.2, 1.0, 0.2, 1.5, 1.0, 0.2).is_err());
        assert!(ModelParams::scalar(0.2, 1.0, 0.2, 0.5, 1.2, 0.2).is_err());
        assert!(ModelParams::scalar(0.2, 1.0, 0.2, 0.5, 0.0, 0.2).is_err());
        assert!(ModelParams::scalar(0.2, 1.0, 0.2, 0.5, 1.0, 0.0).is_err());
    }

    #[test]
    fn classical_value_boundary_behaviour() {
        let (_, sol, _) = reference();
        let l = sol.lambda;
        assert_eq!(sol.derivative(0.0).unwrap(), 1.0);
        assert!((sol.value(0.0).unwrap() - (l - 1.0) / l).abs() < 1e-15);
        assert!(sol.value(-0.1).is_err());
        let u1 = sol.value(1.0).unwrap();
        // u(1) with lambda from the bisection oracle
        assert!((u1 + 8.302_639_428_110_688e-5).abs() < 1e-15);
    }

    #[test]
    fn classical_policy_linear_in_one_plus_y() {
        let (_, sol, _) = reference();
        let a0 = sol.policy(0.0).unwrap();
        let a1 = sol.policy(1.0).unwrap();
        assert!((a1[0] - 2.0 * a0[0]).abs() < 1e-15);
        // oracle lambda plugged into the feedback formula
        assert!((a0[0] - 0.191_054_442_040_904_2).abs() < 1e-12);

        let p1 = ModelParams::reference().with_kappa(1.0).unwrap();
        let s1 = ClassicalSolution::new(&p1).unwrap();
        let a = s1.policy(0.5).unwrap();
        assert!((a[0] - (1.0 - s1.lambda) * 1.5 * 0.2).abs() < 1e-15);
    }

    #[test]
    fn classical_hjb_residual_has_power() {
        let (p, sol, _) = reference();
        for i in 0..=100 {
            let y = i as f64 * 0.1;
            assert!(sol.hjb_residual(y).unwrap().abs() < 1e-12);
        }
        let off = ClassicalSolution { lambda: sol.lambda - 0.05, params: p };
        assert!(off.hjb_residual(1.0).unwrap().abs() > 1e-4);
    }

    #[test]
    fn table_constants() {
        let (_, _, ex) = reference();
        assert!((ex.xi_star - 0.3624).abs() < 5e-5, "{}", ex.xi_star);
        assert!((ex.psi1_star[0] - 0.3732).abs() < 5e-5);
        assert!((ex.psi2_star[(0, 0)] - 1.0).abs() < 1e-15);
        // explicit psi3 formula from the q-function derivation
        let (alpha, zeta) = (0.02, 0.04);
        let kb = 0.75f64.sqrt();
        let explicit = 0.5 * 0.04 * (0.25 - 1.0) - alpha - kb * zeta - 0.1 * (2.0 * PI * 0.2).ln();
        assert!((ex.psi3_star - explicit).abs() < 1e-14);
        assert!((ex.psi3_star + 0.0925).abs() < 1e-4);
    }

    #[test]
    fn exploratory_value_and_policy() {
        let (p, _, ex) = reference();
        assert_eq!(ex.value(0.0).unwrap(), ex.xi_star);
        assert_eq!(ex.value_dy(0.0).unwrap(), 1.0);
        let e = std::f64::consts::E;
        assert!((ex.value(e - 1.0).unwrap() - 1.0 - ex.xi_star).abs() < 1e-15);
        let g0 = ex.optimal_policy(&p, 0.0).unwrap();
        let g1 = ex.optimal_policy(&p, 1.0).unwrap();
        assert!((g0.mean[0] - 0.3732).abs() < 5e-5);
        assert!((g0.cov[(0, 0)] - 0.2).abs() < 1e-15);
        assert!((g1.cov[(0, 0)] - 4.0 * g0.cov[(0, 0)]).abs() < 1e-15);
        let p1 = p.with_kappa(1.0).unwrap();
        let ex1 = ExploratoryConstants::new(&p1, 0.2).unwrap();
        assert!((ex1.optimal_policy(&p1, 2.0).unwrap().mean[0] - 0.6).abs() < 1e-15);
    }

    #[test]
    fn exact_q_maximised_at_policy_mean() {
        let (p, _, ex) = reference();
        assert_eq!(ex.exact_q(0.2, 0.0, &DVector::zeros(1)).unwrap(), ex.psi3_star);
        let y = 0.7;
        let m = ex.optimal_policy(&p, y).unwrap().mean;
        let q_at = |a: f64| ex.exact_q(0.2, y, &DVector::from_element(1, a)).unwrap();
        let qm = q_at(m[0]);
        for h in [1e-3, 1e-2, 0.1] {
            assert!(q_at(m[0] + h) < qm && q_at(m[0] - h) < qm);
        }
    }

    #[test]
    fn exploratory_residual_depends_on_gamma() {
        let (p, _, ex) = reference();
        assert!(ex.hjb_residual(&p, 3.0).unwrap().abs() < 1e-12);
        assert!(ex.hjb_residual(&p, 1e6).unwrap().abs() < 1e-6);
        let hot = ExploratoryConstants::new(&p, 0.4).unwrap();
        assert!(hot.hjb_residual(&p, 3.0).unwrap().abs() > 1e-3);
    }

    #[test]
    fn invalid_gamma() {
        let p = ModelParams::reference();
        assert!(matches!(ExploratoryConstants::new(&p, 0.0), Err(Error::InvalidGamma(_))));
    }

    #[test]
    fn denormalisation() {
        let (_, sol, _) = reference();
        assert_eq!(denormalize_value(1.5, 1.0).unwrap(), 1.5);
        assert!(denormalize_value(1.0, 0.0).is_err());
        let w = sol.auxiliary_value(1.0, 2.0).unwrap();
        assert!((sol.auxiliary_value(2.0, 4.0).unwrap() - 2.0 * w).abs() < 1e-14);
        assert!((w - 2.0 * sol.value(0.5).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn config_round_trip() {
        let p = ModelParams::reference();
        let json = serde_json::to_string(&p).unwrap();
        let back: ModelParams = serde_json::from_str(&json).unwrap();
        assert_eq!(p, back);
        let bad = r#"{"mu":[0.2],"sigma":[[1.0]],"sigma_z":0.2,"kappa":2.0,"eta":[1.0],"rho":0.2}"#;
        assert!(serde_json::from_str::<ModelParams>(bad).is_err());
    }
}
