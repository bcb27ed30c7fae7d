use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_state, Error, Result};
use crate::gaussian::{GaussianSpec, ScaledGaussian};
use crate::linalg;
use crate::model::{entropy_consistent_constant, ExploratoryConstants};

/// Parameters of `J^ξ(y) = ln(1+y) + ξ` and
/// `q^ψ(y,a) = ψ1ᵀa/(1+y) − aᵀψ2ψ2ᵀa/(2(1+y)²) − ρ ln(1+y) + ψ3`.
///
/// `ψ3` is never free: it is recomputed from `(ψ1, ψ2, γ)` on construction so
/// that `E_π[q − γ ln π] = 0` under the induced Gaussian policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PolicyRecord", into = "PolicyRecord")]
pub struct PolicyParams {
    xi: f64,
    psi1: DVector<f64>,
    psi2: DMatrix<f64>,
    psi3: f64,
    gamma: f64,
    // S⁻¹ with S = ψ2ψ2ᵀ
    s_inv: DMatrix<f64>,
    // S⁻¹ψ1
    mean_coef: DVector<f64>,
    // gradient of ψ3 in ψ2: S⁻¹ψ1ψ1ᵀS⁻¹ψ2 + γψ2⁻ᵀ
    psi3_grad_psi2: DMatrix<f64>,
}

/// Serialised form; `psi3` is informational and recomputed when read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyRecord {
    pub xi: f64,
    pub psi1: Vec<f64>,
    pub psi2: Vec<Vec<f64>>,
    #[serde(default)]
    pub psi3: f64,
    pub gamma: f64,
}

impl TryFrom<PolicyRecord> for PolicyParams {
    type Error = Error;

    fn try_from(r: PolicyRecord) -> Result<Self> {
        PolicyParams::new(r.xi, DVector::from_vec(r.psi1), linalg::from_rows(&r.psi2)?, r.gamma)
    }
}

impl From<PolicyParams> for PolicyRecord {
    fn from(p: PolicyParams) -> Self {
        PolicyRecord { xi: p.xi, psi1: p.psi1.iter().copied().collect(), psi2: linalg::to_rows(&p.psi2), psi3: p.psi3, gamma: p.gamma }
    }
}

/// Gradient of `q^ψ` in `(ψ1, ψ2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QGradient {
    pub psi1: DVector<f64>,
    pub psi2: DMatrix<f64>,
}

impl PolicyParams {
    pub fn new(xi: f64, psi1: DVector<f64>, psi2: DMatrix<f64>, gamma: f64) -> Result<Self> {
        let d = psi1.len();
        if d == 0 || psi2.nrows() != d || psi2.ncols() != d {
            return Err(Error::InvalidParams(format!(
                "psi1 has length {d} but psi2 is {}x{}",
                psi2.nrows(),
                psi2.ncols()
            )));
        }
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::InvalidGamma(gamma));
        }
        if !xi.is_finite() || !linalg::all_finite(&psi1) || psi2.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteUpdate);
        }
        let s = &psi2 * psi2.transpose();
        let s_inv = linalg::guarded_inverse(&s).map_err(|_| Error::SingularPsi2)?;
        let psi2_inv_t = linalg::guarded_inverse(&psi2).map_err(|_| Error::SingularPsi2)?.transpose();
        let psi3 = entropy_consistent_constant(&psi1, &s, gamma)?;
        let mean_coef = &s_inv * &psi1;
        let psi3_grad_psi2 = &mean_coef * (mean_coef.transpose() * &psi2) + psi2_inv_t * gamma;
        Ok(Self { xi, psi1, psi2, psi3, gamma, s_inv, mean_coef, psi3_grad_psi2 })
    }

    /// Neutral start `ξ = 0, ψ1 = 0, ψ2 = I`.
    pub fn initial(dim: usize, gamma: f64) -> Result<Self> {
        Self::new(0.0, DVector::zeros(dim), DMatrix::identity(dim, dim), gamma)
    }

    pub fn from_constants(c: &ExploratoryConstants) -> Result<Self> {
        Self::new(c.xi_star, c.psi1_star.clone(), c.psi2_star.clone(), c.gamma)
    }

    pub fn with_xi(&self, xi: f64) -> Result<Self> {
        Self::new(xi, self.psi1.clone(), self.psi2.clone(), self.gamma)
    }

    pub fn dim(&self) -> usize {
        self.psi1.len()
    }

    pub fn xi(&self) -> f64 {
        self.xi
    }

    pub fn psi1(&self) -> &DVector<f64> {
        &self.psi1
    }

    pub fn psi2(&self) -> &DMatrix<f64> {
        &self.psi2
    }

    pub fn psi3(&self) -> f64 {
        self.psi3
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Number of learnable coordinates `1 + d + d²`.
    pub fn flat_len(&self) -> usize {
        let d = self.dim();
        1 + d + d * d
    }

    /// `[ξ, ψ1, ψ2 row-major]`
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.flat_len());
        v.push(self.xi);
        v.extend(self.psi1.iter());
        v.extend(self.psi2.transpose().iter());
        v
    }

    pub fn from_flat(dim: usize, gamma: f64, flat: &[f64]) -> Result<Self> {
        if flat.len() != 1 + dim + dim * dim {
            return Err(Error::InvalidParams(format!("flat vector has length {}", flat.len())));
        }
        let psi1 = DVector::from_row_slice(&flat[1..1 + dim]);
        let psi2 = DMatrix::from_row_slice(dim, dim, &flat[1 + dim..]);
        Self::new(flat[0], psi1, psi2, gamma)
    }

    pub fn j_value(&self, y: f64) -> Result<f64> {
        check_state(y)?;
        Ok((1.0 + y).ln() + self.xi)
    }

    pub fn j_dy(&self, y: f64) -> Result<f64> {
        check_state(y)?;
        Ok(1.0 / (1.0 + y))
    }

    /// `∂J/∂ξ ≡ 1`.
    pub fn j_grad_xi(&self, y: f64) -> Result<f64> {
        check_state(y)?;
        Ok(1.0)
    }

    pub fn q_value(&self, rho: f64, y: f64, a: &DVector<f64>) -> Result<f64> {
        check_state(y)?;
        Ok(self.q_unchecked(rho, y, a.as_slice()))
    }

    pub(crate) fn q_unchecked(&self, rho: f64, y: f64, a: &[f64]) -> f64 {
        let s = 1.0 + y;
        let d = self.dim();
        let mut lin = 0.0;
        let mut quad = 0.0;
        for j in 0..d {
            let mut pa = 0.0;
            for i in 0..d {
                pa += self.psi2[(i, j)] * a[i];
            }
            quad += pa * pa;
            lin += self.psi1[j] * a[j];
        }
        lin / s - quad / (2.0 * s * s) - rho * s.ln() + self.psi3
    }

    /// Gradient of `q^ψ` in `(ψ1, ψ2)`. With `chain_rule` the dependence of
    /// `ψ3` on `(ψ1, ψ2)` is included.
    pub fn q_grad(&self, y: f64, a: &DVector<f64>, chain_rule: bool) -> Result<QGradient> {
        check_state(y)?;
        let d = self.dim();
        let mut buf = vec![0.0; d + d * d];
        self.q_grad_into(y, a.as_slice(), chain_rule, &mut buf);
        Ok(QGradient {
            psi1: DVector::from_row_slice(&buf[..d]),
            psi2: DMatrix::from_row_slice(d, d, &buf[d..]),
        })
    }

    /// Writes `[∂ψ1, ∂ψ2 row-major]` into `out`.
    pub(crate) fn q_grad_into(&self, y: f64, a: &[f64], chain_rule: bool, out: &mut [f64]) {
        let s = 1.0 + y;
        let d = self.dim();
        for i in 0..d {
            out[i] = a[i] / s;
            if chain_rule {
                out[i] -= self.mean_coef[i];
            }
        }
        let s2 = s * s;
        for j in 0..d {
            let mut pa = 0.0;
            for i in 0..d {
                pa += self.psi2[(i, j)] * a[i];
            }
            for i in 0..d {
                let mut g = -a[i] * pa / s2;
                if chain_rule {
                    g += self.psi3_grad_psi2[(i, j)];
                }
                out[d + i * d + j] = g;
            }
        }
    }

    /// Gibbs policy `∝ exp(q^ψ/γ)`: `N(S⁻¹ψ1(1+y), γS⁻¹(1+y)²)`.
    pub fn policy_from_q(&self, y: f64) -> Result<GaussianSpec> {
        check_state(y)?;
        let s = 1.0 + y;
        Ok(GaussianSpec { mean: &self.mean_coef * s, cov: &self.s_inv * (self.gamma * s * s) })
    }

    pub fn sampler(&self) -> Result<ScaledGaussian> {
        ScaledGaussian::new(self.mean_coef.clone(), &(&self.s_inv * self.gamma))
    }

    /// Mean action coefficient `S⁻¹ψ1`; the policy mean is this times `(1+y)`.
    pub fn mean_coef(&self) -> &DVector<f64> {
        &self.mean_coef
    }

    /// Projects a scalar `ψ2` in a flat vector up to `floor`; returns whether it moved.
    pub(crate) fn floor_psi2(flat: &mut [f64], dim: usize, floor: f64) -> bool {
        if dim == 1 && flat[2] < floor {
            flat[2] = floor;
            true
        } else {
            false
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelParams;

    fn truth() -> (ModelParams, ExploratoryConstants, PolicyParams) {
        let p = ModelParams::reference();
        let c = ExploratoryConstants::new(&p, 0.2).unwrap();
        let pp = PolicyParams::from_constants(&c).unwrap();
        (p, c, pp)
    }

    #[test]
    fn exact_parameterisation() {
        let (p, c, pp) = truth();
        for k in 0..50 {
            let y = 0.37 * k as f64;
            let a = DVector::from_element(1, -2.0 + 0.13 * k as f64);
            assert!((pp.q_value(0.2, y, &a).unwrap() - c.exact_q(0.2, y, &a).unwrap()).abs() < 1e-12);
            assert!((pp.j_value(y).unwrap() - c.value(y).unwrap()).abs() < 1e-12);
            let ours = pp.policy_from_q(y).unwrap();
            let theirs = c.optimal_policy(&p, y).unwrap();
            assert!((ours.mean[0] - theirs.mean[0]).abs() < 1e-12);
            assert!((ours.cov[(0, 0)] - theirs.cov[(0, 0)]).abs() < 1e-12);
        }
        assert!((pp.psi3() - c.psi3_star).abs() < 1e-15);
    }

    #[test]
    fn neumann_and_xi_gradient() {
        let pp = PolicyParams::initial(1, 0.2).unwrap();
        assert_eq!(pp.j_value(0.0).unwrap(), 0.0);
        assert_eq!(pp.j_dy(0.0).unwrap(), 1.0);
        assert_eq!(pp.j_grad_xi(3.0).unwrap(), 1.0);
        assert!(pp.j_value(-1e-9).is_err());
    }

    #[test]
    fn flat_round_trip() {
        let psi2 = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, -0.1, 0.8]);
        let pp = PolicyParams::new(0.3, DVector::from_vec(vec![0.1, -0.4]), psi2, 0.1).unwrap();
        let back = PolicyParams::from_flat(2, 0.1, &pp.to_flat()).unwrap();
        assert_eq!(back, pp);
        let json = serde_json::to_string(&pp).unwrap();
        let parsed: PolicyParams = serde_json::from_str(&json).unwrap();
        assert_eq!(parsed, pp);
    }

    #[test]
    fn singular_psi2_rejected() {
        let psi2 = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(
            PolicyParams::new(0.0, DVector::zeros(2), psi2, 0.1),
            Err(Error::SingularPsi2)
        ));
    }

    #[test]
    fn gibbs_density_matches_quadrature() {
        // normalise exp(q/γ) on a grid and compare with the Gaussian pdf
        let psi2 = DMatrix::from_element(1, 1, 0.7);
        let pp = PolicyParams::new(0.1, DVector::from_element(1, 0.3), psi2, 0.2).unwrap();
        let y = 0.8;
        let (lo, hi, n) = (-15.0, 15.0, 60_001);
        let h = (hi - lo) / (n - 1) as f64;
        let grid: Vec<f64> = (0..n).map(|i| lo + i as f64 * h).collect();
        let w: Vec<f64> = grid
            .iter()
            .map(|&a| (pp.q_unchecked(0.2, y, &[a]) / 0.2).exp())
            .collect();
        let z: f64 = w.iter().sum::<f64>() * h;
        let g = pp.policy_from_q(y).unwrap();
        for i in (0..n).step_by(997) {
            let pdf = g.log_pdf(&DVector::from_element(1, grid[i])).unwrap().exp();
            assert!((w[i] / z - pdf).abs() < 1e-6);
        }
    }
}
