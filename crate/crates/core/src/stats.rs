//! Small sample statistics used by the diagnostics and acceptance checks.

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanEstimate {
    pub mean: f64,
    /// Standard error `s / √n` with the unbiased sample variance.
    pub stderr: f64,
    pub n: usize,
}

/// Mean and standard error; `stderr` is `NaN` for fewer than two samples.
pub fn mean_estimate(xs: &[f64]) -> MeanEstimate {
    let n = xs.len();
    let nf = n as f64;
    let mean = xs.iter().sum::<f64>() / nf;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    MeanEstimate { mean, stderr: (var / nf).sqrt(), n }
}

/// Welford accumulator, mergeable for parallel reductions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Running {
    pub n: u64,
    pub mean: f64,
    m2: f64,
}

impl Running {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(self, other: Self) -> Self {
        if self.n == 0 {
            return other;
        }
        if other.n == 0 {
            return self;
        }
        let n = self.n + other.n;
        let delta = other.mean - self.mean;
        let mean = self.mean + delta * other.n as f64 / n as f64;
        let m2 = self.m2 + other.m2 + delta * delta * (self.n as f64) * (other.n as f64) / n as f64;
        Self { n, mean, m2 }
    }

    pub fn variance(&self) -> f64 {
        self.m2 / (self.n as f64 - 1.0)
    }

    pub fn stderr(&self) -> f64 {
        (self.variance() / self.n as f64).sqrt()
    }

    pub fn estimate(&self) -> MeanEstimate {
        MeanEstimate { mean: self.mean, stderr: self.stderr(), n: self.n as usize }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Two-sample Kolmogorov–Smirnov test with the asymptotic p-value and the
/// usual small-sample correction `(√nₑ + 0.12 + 0.11/√nₑ) D`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> KsResult {
    let mut a: Vec<f64> = a.to_vec();
    let mut b: Vec<f64> = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len(), b.len());
    let (mut i, mut j) = (0, 0);
    let mut d = 0.0f64;
    while i < n && j < m {
        let x = a[i].min(b[j]);
        while i < n && a[i] <= x {
            i += 1;
        }
        while j < m && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let en = ((n * m) as f64 / (n + m) as f64).sqrt();
    let lambda = (en + 0.12 + 0.11 / en) * d;
    KsResult { statistic: d, p_value: kolmogorov_survival(lambda) }
}

fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += sign * term;
        if term < 1e-16 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_and_stderr() {
        let e = mean_estimate(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(e.mean, 2.5);
        assert!((e.stderr - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn running_merge_matches_batch() {
        let xs: Vec<f64> = (0..100).map(|i| ((i * 37) % 11) as f64 * 0.3).collect();
        let mut left = Running::default();
        let mut right = Running::default();
        xs[..40].iter().for_each(|&x| left.push(x));
        xs[40..].iter().for_each(|&x| right.push(x));
        let merged = left.merge(right).estimate();
        let batch = mean_estimate(&xs);
        assert!((merged.mean - batch.mean).abs() < 1e-13);
        assert!((merged.stderr - batch.stderr).abs() < 1e-13);
    }

    #[test]
    fn ks_identical_and_disjoint() {
        let a: Vec<f64> = (0..500).map(|i| i as f64).collect();
        let same = ks_two_sample(&a, &a);
        assert_eq!(same.statistic, 0.0);
        assert_eq!(same.p_value, 1.0);
        let b: Vec<f64> = a.iter().map(|x| x + 1000.0).collect();
        let apart = ks_two_sample(&a, &b);
        assert_eq!(apart.statistic, 1.0);
        assert!(apart.p_value < 1e-10);
    }

    #[test]
    fn kolmogorov_reference_point() {
        // Q(1.36) is the classical 5% critical value
        assert!((kolmogorov_survival(1.358) - 0.05).abs() < 1e-3);
    }
}
