use approx::assert_relative_eq;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use trackq::backtest::{read_prices, run_tracking, Strategy, TrackingConfig};
use trackq::baseline::{classical_strategy, mle_estimate, mle_from_series, MleEstimate};

fn scalar_estimate(mu: f64, sigma: f64, sigma_z: f64) -> MleEstimate {
    MleEstimate {
        mu: DVector::from_element(1, mu),
        sigma: DMatrix::from_element(1, 1, sigma),
        sigma_z,
        dt: 1.0,
        returns: 0,
    }
}

/// Estimates quoted for a daily equity series, plugged into the closed form.
/// Expected values come from bisection on the characteristic equation to
/// machine precision.
#[test]
fn strategy_at_daily_estimates() {
    let s = classical_strategy(&scalar_estimate(0.0012, 0.0324, 0.0126), 0.2, 1.0, None).unwrap();
    assert_relative_eq!(s.lambda, 0.980307855928616, max_relative = 1e-12);
    assert_relative_eq!(s.action(0, 0.0).unwrap()[0], 0.02251045275649746, max_relative = 1e-10);
    assert_relative_eq!(s.action(0, 1.0).unwrap()[0], 2.0 * 0.02251045275649746, max_relative = 1e-10);
}

fn gbm(mu: f64, sigma: f64, dt: f64, n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut p = vec![1.0];
    for _ in 1..n {
        let g: f64 = StandardNormal.sample(rng);
        let last = *p.last().unwrap();
        p.push(last * ((mu - 0.5 * sigma * sigma) * dt + sigma * dt.sqrt() * g).exp());
    }
    p
}

/// The volatility error shrinks like `n^{-1/2}`: its root mean square over
/// replications falls by about `√10` for ten times the data.
#[test]
fn volatility_estimate_is_root_n_consistent() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let rms = |n: usize, rng: &mut ChaCha8Rng| {
        let reps = 200;
        let sq: f64 = (0..reps)
            .map(|_| {
                let s = gbm(0.1, 0.3, 0.01, n + 1, rng);
                let z = gbm(0.0, 0.1, 0.01, n + 1, rng);
                (mle_estimate(&[s], &z, 0.01).unwrap().sigma[(0, 0)] - 0.3).powi(2)
            })
            .sum();
        (sq / reps as f64).sqrt()
    };
    let (small, large) = (rms(500, &mut rng), rms(5000, &mut rng));
    let slope = (large / small).log10();
    assert!((-0.62..=-0.38).contains(&slope), "slope {slope}");
}

#[test]
fn multi_asset_covariance_is_recovered() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (n, dt) = (50_001, 0.01f64);
    let l = DMatrix::from_row_slice(2, 2, &[0.3, 0.0, 0.12, 0.2]);
    let mut prices = vec![vec![1.0], vec![1.0]];
    for _ in 1..n {
        let g = DVector::<f64>::from_fn(2, |_, _| StandardNormal.sample(&mut rng));
        let shock = &l * g * dt.sqrt();
        for i in 0..2 {
            let var = (l.row(i) * l.row(i).transpose())[(0, 0)];
            let last = *prices[i].last().unwrap();
            prices[i].push(last * ((0.05 - 0.5 * var) * dt + shock[i]).exp());
        }
    }
    let z = gbm(0.0, 0.1, dt, n, &mut rng);
    let est = mle_estimate(&prices, &z, dt).unwrap();
    let cov = &est.sigma * est.sigma.transpose();
    let truth = &l * l.transpose();
    for (a, b) in cov.iter().zip(truth.iter()) {
        assert!((a - b).abs() < 0.003, "{cov} vs {truth}");
    }
    assert!(est.sigma[(0, 1)] == 0.0);
}

#[test]
fn baseline_runs_on_a_price_file() {
    let text = "# daily closes\ntimestamp,benchmark,a,b\n1,100,10,20\n2,101,10.2,19.8\n3,100.4,10.1,20.3\n4,102,10.4,20.1\n5,101.5,10.3,20.6\n";
    let series = read_prices(text.as_bytes()).unwrap();
    let est = mle_from_series(&series, 1.0).unwrap();
    assert_eq!(est.returns, 4);
    let strategy = classical_strategy(&est, 0.01, 1.0, None).unwrap();
    let r = run_tracking(&series, &strategy, TrackingConfig { v0: 100.0, rho: 0.01, dt: 1.0 }).unwrap();
    assert_eq!(r.injection[0], 0.0);
    for k in 0..series.len() {
        assert!(r.wealth[k] + r.injection[k] >= r.benchmark[k]);
    }
}
