//! The `solve`, `simulate`, `train`, `diagnose` and `backtest` commands.
//! Each writes CSV and JSON files into an output directory; every file
//! records the resolved configuration and seed.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::backtest::{compare, load_prices, run_tracking, BacktestResult, LearnedStrategy, TrackingConfig};
use crate::baseline::{classical_strategy, mle_from_series};
use crate::config::{PolicyChoice, RunConfig, Scheme};
use crate::error::{Error, Result};
use crate::gaussian::ScaledGaussian;
use crate::linalg;
use crate::model::{ClassicalSolution, ExploratoryConstants, ModelParams};
use crate::qlearn::{self, PolicyParams, TrainHistory};
use crate::rng::StreamId;
use crate::sde::{self, ActionSampler, EpisodePath, Feedback, ReflectedMarket};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Solve,
    Simulate,
    Train,
    Diagnose,
    Backtest,
}

/// Files written by a command and its JSON summary.
#[derive(Debug, Clone)]
pub struct Report {
    pub files: Vec<PathBuf>,
    pub summary: Value,
}

struct Output<'a> {
    dir: &'a Path,
    command: Command,
    config: &'a RunConfig,
    files: Vec<PathBuf>,
}

impl Output<'_> {
    fn meta(&self) -> Value {
        json!({
            "command": self.command,
            "seed": self.config.seed,
            "version": env!("CARGO_PKG_VERSION"),
            "config": self.config,
        })
    }

    fn comment(&self) -> String {
        format!("trackq {}", serde_json::to_string(&self.meta()).expect("config serialises"))
    }

    fn create(&mut self, name: &str) -> Result<BufWriter<File>> {
        let path = self.dir.join(name);
        let file = File::create(&path)?;
        self.files.push(path);
        Ok(BufWriter::new(file))
    }

    /// Writes `{"meta": ..., ...body}`.
    fn json(&mut self, name: &str, body: Value) -> Result<Value> {
        let mut doc = json!({ "meta": self.meta() });
        if let (Value::Object(d), Value::Object(b)) = (&mut doc, body) {
            d.extend(b);
        }
        serde_json::to_writer_pretty(self.create(name)?, &doc)?;
        Ok(doc)
    }
}

pub fn run(command: Command, config: &RunConfig, out: &Path) -> Result<Report> {
    config.validate()?;
    std::fs::create_dir_all(out)?;
    let mut o = Output { dir: out, command, config, files: Vec::new() };
    let summary = match command {
        Command::Solve => solve(&mut o)?,
        Command::Simulate => simulate(&mut o)?,
        Command::Train => train(&mut o)?,
        Command::Diagnose => diagnose(&mut o)?,
        Command::Backtest => backtest(&mut o)?,
    };
    Ok(Report { files: o.files, summary })
}

fn solve(o: &mut Output) -> Result<Value> {
    let params = o.config.params()?;
    let gamma = o.config.gamma(&params)?;
    let classical = ClassicalSolution::new(&params)?;
    let ex = ExploratoryConstants::new(&params, gamma)?;
    let derived = params.derived();
    let sc = &o.config.solve;
    let steps = (sc.y_max / sc.y_step + 1e-9).floor() as usize;
    let mut table = o.create("solve.csv")?;
    {
        use std::io::Write;
        writeln!(table, "# {}", o.comment())?;
    }
    let d = params.dim();
    let mut w = csv::Writer::from_writer(table);
    let mut header = vec!["y".to_string(), "u".into(), "u_y".into()];
    header.extend((1..=d).map(|i| format!("theta_{i}")));
    header.extend(["v".to_string(), "v_y".into()]);
    header.extend((1..=d).map(|i| format!("pi_mean_{i}")));
    w.write_record(&header)?;
    let mut rows = Vec::with_capacity(steps + 1);
    for k in 0..=steps {
        let y = k as f64 * sc.y_step;
        let theta = classical.policy(y)?;
        let pi = ex.optimal_policy(&params, y)?;
        let mut rec = vec![y, classical.value(y)?, classical.derivative(y)?];
        rec.extend(theta.iter());
        rec.extend([ex.value(y)?, ex.value_dy(y)?]);
        rec.extend(pi.mean.iter());
        w.write_record(rec.iter().map(|x| x.to_string()))?;
        rows.push(rec);
    }
    w.flush()?;
    let psi1: Vec<f64> = ex.psi1_star.iter().copied().collect();
    let kappa_term = -0.5 * params.sigma_z().powi(2) * params.kappa().powi(2);
    o.json(
        "solve.json",
        json!({
            "lambda": classical.lambda,
            "alpha": derived.alpha,
            "zeta": derived.zeta,
            "gamma": gamma,
            "exact_temperature": (gamma - params.rho() / d as f64).abs() <= 1e-12 * gamma,
            "xi_star": ex.xi_star,
            "psi1_star": psi1,
            "psi2_star": linalg::to_rows(&ex.psi2_star),
            "psi3_star": ex.psi3_star,
            "psi3_flag": {
                "source": "entropy-consistency condition",
                "tabulated_alternative": -0.0050,
                "kappa_term_only": kappa_term,
                "note": "a commonly tabulated value of -0.0050 equals -sigma_z^2 kappa^2 / 2 alone and does not satisfy the consistency condition",
            },
            "table_columns": header,
            "table": rows,
        }),
    )
}

fn simulate(o: &mut Output) -> Result<Value> {
    let params = o.config.params()?;
    let gamma = o.config.gamma(&params)?;
    let sc = o.config.simulate.clone();
    let seed = o.config.seed;
    let paths: Vec<EpisodePath> = if sc.paths == 0 {
        warn!("simulate: zero paths requested, writing empty output");
        Vec::new()
    } else {
        match sc.scheme {
            Scheme::Aggregated => (0..sc.paths)
                .into_par_iter()
                .map(|i| sde::simulate_aggregated(&params, gamma, sc.y0, sc.horizon, sc.dt, StreamId::new(seed, i)))
                .collect::<Result<_>>()?,
            Scheme::Reflected => {
                let env = ReflectedMarket::new(params.clone(), sc.measure);
                let policy = make_policy(sc.policy, &params, gamma)?;
                sde::simulate_batch(&env, &policy, sc.y0, sc.horizon, sc.dt, sc.action_limit, seed, sc.paths)?
            }
        }
    };
    let comment = o.comment();
    let dim = match sc.scheme {
        Scheme::Reflected => params.dim(),
        Scheme::Aggregated => 0,
    };
    sde::write_paths_csv(o.create("paths.csv")?, dim, &paths, Some(&comment))?;
    let clamp_events: usize = paths.iter().map(|p| p.clamp_events).sum();
    if clamp_events > 0 {
        warn!("simulate: {clamp_events} actions clamped to the norm bound {}", sc.action_limit);
    }
    let terminal: Vec<f64> = paths.iter().map(EpisodePath::terminal_state).collect();
    let discounted_l: Vec<f64> = paths
        .iter()
        .map(|p| (0..p.steps()).map(|k| (-params.rho() * p.times[k + 1]).exp() * p.dl(k)).sum())
        .collect();
    let oracle = if sc.oracle {
        Some(sde::oracle_comparison(&params, gamma, sc.y0, sc.horizon, sc.dt, sc.paths.max(1), seed)?)
    } else {
        None
    };
    let estimate = |xs: &[f64]| (!xs.is_empty()).then(|| crate::stats::mean_estimate(xs));
    let metadata = sde::PathMetadata {
        seed,
        params: &params,
        scheme: match sc.scheme {
            Scheme::Reflected => "projection-euler",
            Scheme::Aggregated => "projection-euler-aggregated",
        },
        measure: sc.measure,
        dt: sc.dt,
        horizon: sc.horizon,
        paths: paths.len(),
        clamp_events,
    };
    o.json(
        "simulate.json",
        json!({
            "paths": metadata,
            "terminal_state": estimate(&terminal),
            "discounted_local_time": estimate(&discounted_l),
            "oracle": oracle,
        }),
    )
}

fn make_policy(choice: PolicyChoice, params: &ModelParams, gamma: f64) -> Result<Box<dyn ActionSampler>> {
    Ok(match choice {
        PolicyChoice::Exploratory => {
            let sampler: ScaledGaussian = ExploratoryConstants::new(params, gamma)?.optimal_sampler(params)?;
            Box::new(sampler)
        }
        PolicyChoice::Classical => {
            let sol = ClassicalSolution::new(params)?;
            let d = params.dim();
            Box::new(Feedback::new(d, move |y, out: &mut [f64]| {
                let a = sol.policy(y).expect("states are non-negative");
                out.copy_from_slice(a.as_slice());
            }))
        }
        PolicyChoice::Zero => Box::new(Feedback::new(params.dim(), |_, out: &mut [f64]| out.fill(0.0))),
    })
}

impl ActionSampler for Box<dyn ActionSampler> {
    fn dim(&self) -> usize {
        self.as_ref().dim()
    }

    fn sample(&self, y: f64, rng: &mut crate::rng::StreamRng, out: &mut [f64]) {
        self.as_ref().sample(y, rng, out)
    }
}

fn train(o: &mut Output) -> Result<Value> {
    let params = o.config.params()?;
    let cfg = o.config.learn_config(&params)?;
    let env = ReflectedMarket::new(params.clone(), sde::Measure::RiskNeutral);
    let history = match &o.config.train.resume {
        Some(path) => {
            let previous: TrainHistory = serde_json::from_reader(std::io::BufReader::new(File::open(path)?))?;
            info!("resuming from {} after {} episodes", path.display(), previous.len());
            qlearn::resume(&env, &cfg, previous)?
        }
        None => qlearn::train(&env, &cfg)?,
    };
    let comment = o.comment();
    history.write_csv(o.create("history.csv")?, Some(&comment))?;
    serde_json::to_writer(o.create("history.json")?, &history)?;
    let exact = ExploratoryConstants::new(&params, cfg.gamma)?;
    o.json(
        "learned.json",
        json!({
            "params": history.final_params,
            "summary": history.summary(),
            "exact": exact,
        }),
    )
}

fn diagnose(o: &mut Output) -> Result<Value> {
    let params = o.config.params()?;
    let gamma = o.config.gamma(&params)?;
    let dc = o.config.diagnose.clone();
    if dc.sweep_dt.is_empty() || dc.sweep_horizon.is_empty() {
        return Err(Error::InvalidConfig("diagnose.sweep_dt and diagnose.sweep_horizon must be nonempty".into()));
    }
    let pp = match &dc.policy {
        Some(r) => PolicyParams::try_from(qlearn::PolicyRecord { gamma, ..r.clone() })?,
        None => PolicyParams::from_constants(&ExploratoryConstants::new(&params, gamma)?)?,
    };
    let env = ReflectedMarket::new(params.clone(), sde::Measure::RiskNeutral);
    let rho = params.rho();
    let base = o.config.study_config();
    let main = qlearn::orthogonality_study(&env, &pp, rho, &base)?;
    let shifted = qlearn::orthogonality_study(&env, &pp.with_xi(pp.xi() + dc.xi_shift)?, rho, &base)?;
    let sweep = qlearn::convergence_study(&env, &pp, rho, &dc.sweep_dt, &dc.sweep_horizon, &base)?;

    let comment = o.comment();
    let file = o.create("convergence.csv")?;
    {
        let mut file = file;
        use std::io::Write;
        writeln!(file, "# {comment}")?;
        let mut w = csv::Writer::from_writer(file);
        let labels = qlearn::statistic_labels(pp.dim());
        let mut header = vec!["dt".to_string(), "horizon".into()];
        for l in &labels {
            header.extend([format!("{l}_mean"), format!("{l}_stderr")]);
        }
        header.extend(["tail_mean".to_string(), "tail_stderr".into()]);
        w.write_record(&header)?;
        for row in &sweep {
            let mut rec = vec![row.dt, row.horizon];
            for e in &row.stats.estimates {
                rec.extend([e.mean, e.stderr]);
            }
            rec.extend([row.discounted_terminal.mean, row.discounted_terminal.stderr]);
            w.write_record(rec.iter().map(|x| x.to_string()))?;
        }
        w.flush()?;
    }
    let passes = main.stats.passes(3.0);
    let shifted_rejects = shifted.stats.z_scores()[0].abs() > 5.0;
    o.json(
        "diagnose.json",
        json!({
            "params": pp,
            "orthogonality": { "study": main, "z": main.stats.z_scores(), "passes_3_sigma": passes },
            "xi_shifted": { "shift": dc.xi_shift, "study": shifted, "z": shifted.stats.z_scores(), "rejected_5_sigma": shifted_rejects },
            "sweep": sweep,
        }),
    )
}

fn backtest(o: &mut Output) -> Result<Value> {
    let params = o.config.params()?;
    let bc = o
        .config
        .backtest
        .clone()
        .ok_or_else(|| Error::InvalidConfig("the backtest command needs a [backtest] section".into()))?;
    let prices = load_prices(&bc.prices)?;
    let estimation = match &bc.estimation_prices {
        Some(p) => load_prices(p)?,
        None => prices.clone(),
    };
    let rho = bc.rho.unwrap_or(params.rho());
    let est = mle_from_series(&estimation, bc.bar)?;
    let strategy = classical_strategy(&est, rho, bc.kappa, None)?;
    let tracking = TrackingConfig { v0: bc.v0, rho, dt: bc.bar };
    let mut results: Vec<(String, BacktestResult)> = vec![("mle".into(), run_tracking(&prices, &strategy, tracking)?)];
    if let Some(path) = &bc.learned {
        let doc: Value = serde_json::from_reader(std::io::BufReader::new(File::open(path)?))?;
        let pp: PolicyParams = serde_json::from_value(doc.get("params").cloned().unwrap_or(doc))?;
        let learned = LearnedStrategy { params: pp, sample: bc.sample.then_some(o.config.seed) };
        results.push(("learned".into(), run_tracking(&prices, &learned, tracking)?));
    }
    let comment = o.comment();
    for (name, r) in &results {
        r.write_csv(o.create(&format!("backtest_{name}.csv"))?, Some(&comment))?;
    }
    let refs: Vec<(&str, &BacktestResult)> = results.iter().map(|(n, r)| (n.as_str(), r)).collect();
    let comparison = compare(&refs, 0)?;
    let summaries: serde_json::Map<String, Value> =
        results.iter().map(|(n, r)| (n.clone(), serde_json::to_value(r.summary()).expect("summary serialises"))).collect();
    o.json(
        "backtest.json",
        json!({
            "estimate": est,
            "lambda": strategy.lambda,
            "results": summaries,
            "comparison": comparison,
        }),
    )
}
