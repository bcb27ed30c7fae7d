//! Gaussian action laws whose mean scales with `(1 + y)` and whose covariance
//! scales with `(1 + y)^2`, which is the shape of every policy in this crate.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg;

/// A multivariate normal law at a fixed state.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GaussianSpec {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianSpec {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn log_pdf(&self, a: &DVector<f64>) -> Result<f64> {
        let chol = self.cov.clone().cholesky().ok_or(Error::SingularPsi2)?;
        let diff = a - &self.mean;
        let sol = chol.solve(&diff);
        let quad = diff.dot(&sol);
        let log_det = 2.0 * chol.l().diagonal().iter().map(|x| x.ln()).sum::<f64>();
        let d = self.dim() as f64;
        Ok(-0.5 * (quad + log_det + d * (2.0 * PI).ln()))
    }

    /// Differential entropy `½ ln((2πe)^d |Σ|)`.
    pub fn entropy(&self) -> f64 {
        let d = self.dim() as f64;
        0.5 * (d * (2.0 * PI * std::f64::consts::E).ln() + self.cov.determinant().ln())
    }
}

/// Sampler for `N(m (1+y), C (1+y)^2)`, stored through `m` and the Cholesky
/// factor of `C`.
#[derive(Debug, Clone)]
pub struct ScaledGaussian {
    mean_coef: DVector<f64>,
    chol_coef: DMatrix<f64>,
}

impl ScaledGaussian {
    pub fn new(mean_coef: DVector<f64>, cov_coef: &DMatrix<f64>) -> Result<Self> {
        if mean_coef.len() != cov_coef.nrows() {
            return Err(Error::InvalidParams("mean and covariance dimensions differ".into()));
        }
        let chol_coef = linalg::cholesky_lower(cov_coef).ok_or(Error::SingularPsi2)?;
        Ok(Self { mean_coef, chol_coef })
    }

    pub fn dim(&self) -> usize {
        self.mean_coef.len()
    }

    pub fn mean_coef(&self) -> &DVector<f64> {
        &self.mean_coef
    }

    pub fn at(&self, y: f64) -> GaussianSpec {
        let s = 1.0 + y;
        GaussianSpec {
            mean: &self.mean_coef * s,
            cov: (&self.chol_coef * self.chol_coef.transpose()) * (s * s),
        }
    }

    /// Writes one draw into `out`; `out.len()` must equal [`Self::dim`].
    pub fn sample_into<R: Rng + ?Sized>(&self, y: f64, rng: &mut R, out: &mut [f64]) {
        let s = 1.0 + y;
        let d = self.dim();
        let mut z = [0.0f64; 8];
        if d <= z.len() {
            for zi in z.iter_mut().take(d) {
                *zi = rng.sample(StandardNormal);
            }
            self.combine(s, &z[..d], out);
        } else {
            let z: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            self.combine(s, &z, out);
        }
    }

    fn combine(&self, s: f64, z: &[f64], out: &mut [f64]) {
        let d = self.dim();
        for i in 0..d {
            let mut acc = self.mean_coef[i];
            for (j, zj) in z.iter().enumerate().take(i + 1) {
                acc += self.chol_coef[(i, j)] * zj;
            }
            out[i] = s * acc;
        }
    }
}
