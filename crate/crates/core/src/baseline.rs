//! Plug-in baseline: maximum-likelihood GBM estimates from prices, fed into
//! the classical closed-form strategy.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::backtest::PriceSeries;
use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{ClassicalSolution, ModelParams};

/// GBM coefficients per unit of the observation step's time scale.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MleEstimate {
    pub mu: DVector<f64>,
    /// Lower Cholesky factor of the return covariance rate.
    pub sigma: DMatrix<f64>,
    pub sigma_z: f64,
    pub dt: f64,
    /// Number of log returns used.
    pub returns: usize,
}

fn log_returns(prices: &[f64]) -> Result<Vec<f64>> {
    for (row, &p) in prices.iter().enumerate() {
        if !(p > 0.0 && p.is_finite()) {
            return Err(Error::NonPositivePrice { row: row + 1, value: p });
        }
    }
    Ok(prices.windows(2).map(|w| (w[1] / w[0]).ln()).collect())
}

/// Log-return MLE: `Σ̂ = Cov(r)/dt` (divisor `n`), `μ̂ = mean(r)/dt + ½ diag Σ̂`,
/// and `σ̂_Z² = mean(r_Z²)/dt` with the benchmark drift fixed at zero.
pub fn mle_estimate(assets: &[Vec<f64>], benchmark: &[f64], dt: f64) -> Result<MleEstimate> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidConfig(format!("observation step must be positive, got {dt}")));
    }
    if assets.is_empty() {
        return Err(Error::MismatchedInputs("no asset series".into()));
    }
    let n = benchmark.len();
    if n < 3 {
        return Err(Error::InsufficientData { needed: 3, got: n });
    }
    if assets.iter().any(|a| a.len() != n) {
        return Err(Error::MismatchedInputs("asset and benchmark series differ in length".into()));
    }
    let d = assets.len();
    let rets: Vec<Vec<f64>> = assets.iter().map(|a| log_returns(a)).collect::<Result<_>>()?;
    let rz = log_returns(benchmark)?;
    let m = (n - 1) as f64;
    let means: Vec<f64> = rets.iter().map(|r| r.iter().sum::<f64>() / m).collect();
    let cov = DMatrix::from_fn(d, d, |i, j| {
        rets[i].iter().zip(&rets[j]).map(|(a, b)| (a - means[i]) * (b - means[j])).sum::<f64>() / m / dt
    });
    for i in 0..d {
        if !(cov[(i, i)] > 0.0) {
            return Err(Error::Degenerate(format!("asset {} has zero return variance", i + 1)));
        }
    }
    let sigma = linalg::cholesky_lower(&cov)
        .ok_or_else(|| Error::Degenerate("return covariance is not positive definite".into()))?;
    let mu = DVector::from_fn(d, |i, _| means[i] / dt + 0.5 * cov[(i, i)]);
    let sigma_z = (rz.iter().map(|r| r * r).sum::<f64>() / m / dt).sqrt();
    if !(sigma_z > 0.0) {
        return Err(Error::Degenerate("benchmark has zero return variance".into()));
    }
    Ok(MleEstimate { mu, sigma, sigma_z, dt, returns: n - 1 })
}

pub fn mle_from_series(series: &PriceSeries, dt: f64) -> Result<MleEstimate> {
    let assets: Vec<Vec<f64>> = (0..series.dim()).map(|i| series.asset_column(i)).collect();
    mle_estimate(&assets, series.benchmark(), dt)
}

/// Classical feedback strategy under the estimated market. With `κ = 1` the
/// benchmark is independent of the assets and `η` is irrelevant; it defaults
/// to the equal-weight direction.
pub fn classical_strategy(est: &MleEstimate, rho: f64, kappa: f64, eta: Option<DVector<f64>>) -> Result<ClassicalSolution> {
    let d = est.mu.len();
    let eta = eta.unwrap_or_else(|| DVector::from_element(d, 1.0 / (d as f64).sqrt()));
    let params = ModelParams::new(est.mu.clone(), est.sigma.clone(), est.sigma_z, kappa, eta, rho)?;
    ClassicalSolution::new(&params)
}
