//! Tracking on price series: capital is injected whenever the fund would fall
//! below the benchmark, following the running-supremum rule
//! `A_t = A_0 ∨ sup_{s≤t}(Z_s − V_s)` with `A_0 = (z − v0)⁺`.

use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDate, NaiveDateTime};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ClassicalSolution;
use crate::qlearn::PolicyParams;
use crate::rng::StreamId;

/// Aligned benchmark and asset prices.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PriceSeries {
    timestamps: Vec<String>,
    benchmark: Vec<f64>,
    /// Row-major `len × dim`.
    assets: Vec<f64>,
    asset_names: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
enum TimeKey {
    Index(i64),
    Instant(i64),
}

fn parse_timestamp(s: &str) -> Option<TimeKey> {
    if let Ok(i) = s.parse::<i64>() {
        return Some(TimeKey::Index(i));
    }
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return t.timestamp_nanos_opt().map(TimeKey::Instant);
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f"] {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, fmt) {
            return t.and_utc().timestamp_nanos_opt().map(TimeKey::Instant);
        }
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .ok()
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .and_then(|t| t.and_utc().timestamp_nanos_opt())
        .map(TimeKey::Instant)
}

impl PriceSeries {
    /// `assets` holds one row of `dim` prices per timestamp. Row numbers in
    /// errors are 1-based data rows.
    pub fn new(timestamps: Vec<String>, benchmark: Vec<f64>, assets: Vec<Vec<f64>>) -> Result<Self> {
        let n = timestamps.len();
        if benchmark.len() != n || assets.len() != n {
            return Err(Error::MismatchedInputs("timestamps, benchmark and assets differ in length".into()));
        }
        if n == 0 {
            return Err(Error::InsufficientData { needed: 1, got: 0 });
        }
        let dim = assets[0].len();
        if dim == 0 {
            return Err(Error::Validation { row: 1, message: "no asset columns".into() });
        }
        let mut prev: Option<TimeKey> = None;
        let mut flat = Vec::with_capacity(n * dim);
        for (k, ts) in timestamps.iter().enumerate() {
            let row = k + 1;
            let key = parse_timestamp(ts.trim())
                .ok_or_else(|| Error::Parse { row, message: format!("unrecognised timestamp {ts:?}") })?;
            if let Some(p) = prev {
                if std::mem::discriminant(&p) != std::mem::discriminant(&key) {
                    return Err(Error::Validation { row, message: "timestamps mix indices and dates".into() });
                }
                if key <= p {
                    return Err(Error::Validation { row, message: "timestamps must be strictly increasing".into() });
                }
            }
            prev = Some(key);
            if assets[k].len() != dim {
                return Err(Error::Validation { row, message: format!("expected {dim} asset prices") });
            }
            for &p in std::iter::once(&benchmark[k]).chain(&assets[k]) {
                if !(p > 0.0 && p.is_finite()) {
                    return Err(Error::Validation { row, message: format!("price {p} is not positive") });
                }
            }
            flat.extend(&assets[k]);
        }
        let asset_names = (1..=dim).map(|i| format!("asset_{i}")).collect();
        Ok(Self { timestamps, benchmark, assets: flat, asset_names })
    }

    pub fn len(&self) -> usize {
        self.benchmark.len()
    }

    pub fn is_empty(&self) -> bool {
        self.benchmark.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.asset_names.len()
    }

    pub fn timestamps(&self) -> &[String] {
        &self.timestamps
    }

    pub fn benchmark(&self) -> &[f64] {
        &self.benchmark
    }

    pub fn asset_names(&self) -> &[String] {
        &self.asset_names
    }

    /// Prices of all assets at row `k`.
    pub fn assets_at(&self, k: usize) -> &[f64] {
        let d = self.dim();
        &self.assets[k * d..(k + 1) * d]
    }

    pub fn asset_column(&self, i: usize) -> Vec<f64> {
        (0..self.len()).map(|k| self.assets_at(k)[i]).collect()
    }

    /// Copy with every price multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            timestamps: self.timestamps.clone(),
            benchmark: self.benchmark.iter().map(|x| x * c).collect(),
            assets: self.assets.iter().map(|x| x * c).collect(),
            asset_names: self.asset_names.clone(),
        }
    }
}

/// Reads `timestamp,benchmark,asset_1[,asset_2,...]`. Lines starting with
/// `#` are ignored.
pub fn load_prices(path: impl AsRef<Path>) -> Result<PriceSeries> {
    read_prices(std::fs::File::open(path)?)
}

pub fn read_prices<R: Read>(input: R) -> Result<PriceSeries> {
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(input);
    let header = reader.headers()?.clone();
    if header.len() < 3 || &header[0] != "timestamp" || &header[1] != "benchmark" {
        return Err(Error::Parse {
            row: 0,
            message: "header must be timestamp,benchmark,asset_1[,asset_2,...]".into(),
        });
    }
    let names: Vec<String> = header.iter().skip(2).map(str::to_string).collect();
    let (mut ts, mut bench, mut assets) = (Vec::new(), Vec::new(), Vec::new());
    for (k, record) in reader.records().enumerate() {
        let row = k + 1;
        let record = record.map_err(|e| Error::Parse { row, message: e.to_string() })?;
        if record.len() != header.len() {
            return Err(Error::Parse { row, message: format!("expected {} fields, got {}", header.len(), record.len()) });
        }
        let num = |i: usize| -> Result<f64> {
            let cell = &record[i];
            if cell.is_empty() {
                return Err(Error::Parse { row, message: format!("missing value in column {}", &header[i]) });
            }
            cell.parse().map_err(|_| Error::Parse { row, message: format!("bad number {cell:?} in column {}", &header[i]) })
        };
        ts.push(record[0].to_string());
        bench.push(num(1)?);
        assets.push((2..header.len()).map(num).collect::<Result<Vec<_>>>()?);
    }
    let mut series = PriceSeries::new(ts, bench, assets)?;
    series.asset_names = names;
    Ok(series)
}

/// Maps a normalised state to an action per unit of benchmark.
pub trait Strategy: Sync {
    fn dim(&self) -> usize;

    /// `k` is the bar index, available to strategies that randomise.
    fn action(&self, k: usize, y: f64) -> Result<DVector<f64>>;
}

impl Strategy for ClassicalSolution {
    fn dim(&self) -> usize {
        self.params.dim()
    }

    fn action(&self, _k: usize, y: f64) -> Result<DVector<f64>> {
        self.policy(y)
    }
}

/// A learned Gaussian policy, executed through its mean by default.
#[derive(Debug, Clone)]
pub struct LearnedStrategy {
    pub params: PolicyParams,
    /// Draw from the policy instead of using its mean, on streams `(seed, k)`.
    pub sample: Option<u64>,
}

impl Strategy for LearnedStrategy {
    fn dim(&self) -> usize {
        self.params.dim()
    }

    fn action(&self, k: usize, y: f64) -> Result<DVector<f64>> {
        let pi = self.params.policy_from_q(y)?;
        match self.sample {
            None => Ok(pi.mean),
            Some(seed) => {
                let mut out = vec![0.0; self.dim()];
                let mut rng = StreamId::new(seed, k as u64).rng();
                self.params.sampler()?.sample_into(y, &mut rng, &mut out);
                Ok(DVector::from_vec(out))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackingConfig {
    pub v0: f64,
    pub rho: f64,
    /// Length of one bar in the time unit of `rho`.
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BacktestResult {
    pub config: TrackingConfig,
    pub timestamps: Vec<String>,
    pub benchmark: Vec<f64>,
    pub wealth: Vec<f64>,
    /// Cumulative injection `A`, including `A_0`.
    pub injection: Vec<f64>,
    pub state: Vec<f64>,
    pub dim: usize,
    /// Row-major cash amounts held on each bar `[t_k, t_{k+1})`.
    pub actions: Vec<f64>,
    pub initial_injection: f64,
    pub total_injection: f64,
    /// `A_0 + Σ e^{−ρt_k} ΔA_k`
    pub discounted_cost: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BacktestSummary {
    pub steps: usize,
    pub initial_injection: f64,
    pub total_injection: f64,
    pub discounted_cost: f64,
    pub final_wealth: f64,
}

impl BacktestResult {
    pub fn summary(&self) -> BacktestSummary {
        BacktestSummary {
            steps: self.benchmark.len().saturating_sub(1),
            initial_injection: self.initial_injection,
            total_injection: self.total_injection,
            discounted_cost: self.discounted_cost,
            final_wealth: *self.wealth.last().unwrap_or(&0.0),
        }
    }

    /// CSV with columns `t,Z,V,A,Y,theta_1..theta_d`; actions are empty on
    /// the last row.
    pub fn write_csv<W: Write>(&self, mut out: W, comment: Option<&str>) -> Result<()> {
        if let Some(c) = comment {
            writeln!(out, "# {c}")?;
        }
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string(), "Z".into(), "V".into(), "A".into(), "Y".into()];
        header.extend((1..=self.dim).map(|i| format!("theta_{i}")));
        w.write_record(&header)?;
        let n = self.benchmark.len();
        for k in 0..n {
            let mut row = vec![
                self.timestamps[k].clone(),
                self.benchmark[k].to_string(),
                self.wealth[k].to_string(),
                self.injection[k].to_string(),
                self.state[k].to_string(),
            ];
            if k + 1 < n {
                row.extend(self.actions[k * self.dim..(k + 1) * self.dim].iter().map(|a| a.to_string()));
            } else {
                row.extend(std::iter::repeat_n(String::new(), self.dim));
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Smallest `a ≥ candidate` with `v + a ≥ z` in floating point.
fn covering_injection(v: f64, z: f64, candidate: f64) -> f64 {
    let mut a = candidate;
    while v + a < z {
        a = a.next_up();
    }
    a
}

pub fn run_tracking<S: Strategy + ?Sized>(prices: &PriceSeries, strategy: &S, config: TrackingConfig) -> Result<BacktestResult> {
    if !(config.v0 >= 0.0 && config.v0.is_finite()) {
        return Err(Error::Domain { what: "initial wealth v0", expected: "non-negative", value: config.v0 });
    }
    if !(config.dt > 0.0) || !(config.rho >= 0.0) {
        return Err(Error::InvalidConfig("bar length must be positive and rho non-negative".into()));
    }
    let d = prices.dim();
    if strategy.dim() != d {
        return Err(Error::MismatchedInputs(format!("strategy has dimension {}, series has {d}", strategy.dim())));
    }
    let n = prices.len();
    let z = prices.benchmark();
    let a0 = covering_injection(config.v0, z[0], (z[0] - config.v0).max(0.0));
    let mut wealth = Vec::with_capacity(n);
    let mut injection = Vec::with_capacity(n);
    let mut state = Vec::with_capacity(n);
    let mut actions = Vec::with_capacity(n.saturating_sub(1) * d);
    let (mut v, mut a) = (config.v0, a0);
    let mut cost = a0;
    for k in 0..n {
        let y = ((v + a - z[k]) / z[k]).max(0.0);
        wealth.push(v);
        injection.push(a);
        state.push(y);
        if k + 1 == n {
            break;
        }
        let theta = strategy.action(k, y)? * z[k];
        let (s0, s1) = (prices.assets_at(k), prices.assets_at(k + 1));
        for i in 0..d {
            v += theta[i] * (s1[i] / s0[i] - 1.0);
        }
        if !v.is_finite() {
            return Err(Error::non_finite(format!("wealth at row {}", k + 2)));
        }
        actions.extend(theta.iter());
        let next = covering_injection(v, z[k + 1], a.max(z[k + 1] - v));
        cost += (-config.rho * (k + 1) as f64 * config.dt).exp() * (next - a);
        a = next;
    }
    Ok(BacktestResult {
        config,
        timestamps: prices.timestamps().to_vec(),
        benchmark: z.to_vec(),
        wealth,
        injection,
        state,
        dim: d,
        actions,
        initial_injection: a0,
        total_injection: a,
        discounted_cost: cost,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub name: String,
    pub total_injection: f64,
    pub discounted_cost: f64,
    /// `(x − ref)/ref` against the reference row.
    pub relative_total: f64,
    pub relative_cost: f64,
}

/// `(x − reference)/reference`, zero when the two agree.
pub fn relative_difference(x: f64, reference: f64) -> f64 {
    if x == reference {
        0.0
    } else {
        (x - reference) / reference
    }
}

/// Compares backtests on the same series and initial wealth against the
/// result at index `reference`.
pub fn compare(results: &[(&str, &BacktestResult)], reference: usize) -> Result<Vec<ComparisonRow>> {
    let (_, base) = results
        .get(reference)
        .ok_or_else(|| Error::MismatchedInputs(format!("no result at index {reference}")))?;
    for (name, r) in results {
        if r.benchmark != base.benchmark || r.timestamps != base.timestamps || r.config.v0 != base.config.v0 {
            return Err(Error::MismatchedInputs(format!("{name} was run on a different series or initial wealth")));
        }
    }
    Ok(results
        .iter()
        .map(|(name, r)| ComparisonRow {
            name: name.to_string(),
            total_injection: r.total_injection,
            discounted_cost: r.discounted_cost,
            relative_total: relative_difference(r.total_injection, base.total_injection),
            relative_cost: relative_difference(r.discounted_cost, base.discounted_cost),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Fixed(f64);

    impl Strategy for Fixed {
        fn dim(&self) -> usize {
            1
        }
        fn action(&self, _: usize, _: f64) -> Result<DVector<f64>> {
            Ok(DVector::from_element(1, self.0))
        }
    }

    fn series(z: &[f64], s: &[f64]) -> PriceSeries {
        PriceSeries::new(
            (0..z.len()).map(|i| i.to_string()).collect(),
            z.to_vec(),
            s.iter().map(|&x| vec![x]).collect(),
        )
        .unwrap()
    }

    const CFG: TrackingConfig = TrackingConfig { v0: 100.0, rho: 0.0, dt: 1.0 };

    #[test]
    fn reads_well_formed_file() {
        let csv = "# comment\ntimestamp,benchmark,asset_1\n0,100,10\n1,101,11\n2,99,10.5\n";
        let s = read_prices(csv.as_bytes()).unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s.assets_at(2), &[10.5]);
        let iso = "timestamp,benchmark,asset_1,asset_2\n2020-01-02,1,1,1\n2020-01-03T00:00:00Z,1,2,3\n";
        assert_eq!(read_prices(iso.as_bytes()).unwrap().dim(), 2);
    }

    #[test]
    fn rejects_bad_rows() {
        let bad = "timestamp,benchmark,asset_1\n0,100,10\n1,0,11\n";
        assert!(matches!(read_prices(bad.as_bytes()), Err(Error::Validation { row: 2, .. })));
        let unordered = "timestamp,benchmark,asset_1\n0,100,10\n2,100,10\n1,100,10\n";
        assert!(matches!(read_prices(unordered.as_bytes()), Err(Error::Validation { row: 3, .. })));
        let missing = "timestamp,benchmark,asset_1\n0,100,\n";
        assert!(matches!(read_prices(missing.as_bytes()), Err(Error::Parse { row: 1, .. })));
        let header = "time,benchmark,asset_1\n0,1,1\n";
        assert!(read_prices(header.as_bytes()).is_err());
    }

    #[test]
    fn rich_fund_never_injects() {
        let s = series(&[100.0, 105.0, 95.0, 110.0], &[1.0, 1.1, 0.9, 1.2]);
        let r = run_tracking(&s, &Fixed(0.0), TrackingConfig { v0: 1e6, ..CFG }).unwrap();
        assert!(r.injection.iter().all(|&a| a == 0.0));
        assert_eq!(r.discounted_cost, 0.0);
    }

    #[test]
    fn initial_shortfall_is_injected() {
        let s = series(&[100.0, 100.0], &[1.0, 1.0]);
        let r = run_tracking(&s, &Fixed(0.0), TrackingConfig { v0: 95.0, ..CFG }).unwrap();
        assert_eq!(r.initial_injection, 5.0);
        assert_eq!(r.total_injection, 5.0);
    }

    #[test]
    fn hand_computed_five_rows() {
        // cash only: V stays 100 while Z moves 100, 101, 102, 101, 100
        let s = series(&[100.0, 101.0, 102.0, 101.0, 100.0], &[1.0; 5]);
        let r = run_tracking(&s, &Fixed(0.0), CFG).unwrap();
        assert_eq!(r.injection, vec![0.0, 1.0, 2.0, 2.0, 2.0]);
        assert_eq!(r.state[3], 1.0 / 101.0);
    }

    #[test]
    fn comparison() {
        let s = series(&[100.0, 110.0], &[1.0, 1.0]);
        let a = run_tracking(&s, &Fixed(0.0), CFG).unwrap();
        let rows = compare(&[("a", &a), ("b", &a)], 0).unwrap();
        assert_eq!(rows[1].relative_total, 0.0);
        assert!((relative_difference(100.0, 110.0) + 0.0909).abs() < 1e-4);
        let other = run_tracking(&s, &Fixed(0.0), TrackingConfig { v0: 50.0, ..CFG }).unwrap();
        assert!(matches!(compare(&[("a", &a), ("b", &other)], 0), Err(Error::MismatchedInputs(_))));
    }
}
