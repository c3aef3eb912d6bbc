//! Seeded Monte Carlo harness: simulate, fit the pre-change model on a
//! training window, detect, and tabulate delay against `|ln alpha|`.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detect::{delay_bound, kl_divergence, DetectorState, GaussianModel, GeometricPrior};
use crate::error::{GridwatchError, Result};
use crate::grid::GridTopology;
use crate::simulate::{
    generate_from_regimes, split_seed, substream, InjectionModel, Mode, OutageScenario, OutageTime, Regimes,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSpec {
    pub alphas: Vec<f64>,
    pub rho: f64,
    pub replications: usize,
    pub seed: u64,
    pub mode: Mode,
    pub f_known: bool,
    /// Pre-change samples used to fit `g`, simulated before the detection
    /// window.
    pub train_window: usize,
    /// Samples simulated from the change onwards.
    pub post_window: usize,
    /// Per-bus injection increment variance.
    pub injection_variance: f64,
    /// `outage_time` is drawn per replication and counted from the start of
    /// the detection window.
    pub scenario: OutageScenario,
}

impl BenchmarkSpec {
    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(GridwatchError::InvalidInput("replications must be at least 1".into()));
        }
        if self.alphas.is_empty() || self.alphas.iter().any(|a| !(*a > 0.0 && *a < 1.0)) {
            return Err(GridwatchError::InvalidInput("alphas must be in (0,1)".into()));
        }
        if self.train_window < 2 {
            return Err(GridwatchError::InvalidInput("train_window must be at least 2".into()));
        }
        GeometricPrior::new(self.rho)?;
        Ok(())
    }
}

/// One replication at one `alpha`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRow {
    pub replication: usize,
    pub alpha: f64,
    /// Change index within the detection window.
    pub lambda: usize,
    pub tau: Option<usize>,
    pub delay: Option<usize>,
    pub false_alarm: bool,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaSummary {
    pub alpha: f64,
    pub abs_log_alpha: f64,
    pub runs: usize,
    pub detections: usize,
    pub false_alarms: usize,
    pub false_alarm_rate: f64,
    /// Mean of `tau - lambda` over detections at or after the change.
    pub mean_delay: f64,
    pub delay_over_log_alpha: f64,
    /// `1 / (-ln(1 - rho) + KL)`.
    pub bound_slope: f64,
    pub bound_delay: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub spec: BenchmarkSpec,
    /// `KL(f || g)` of the theoretical models at the reference base point.
    pub kl: f64,
    pub failures: usize,
    pub summary: Vec<AlphaSummary>,
    pub rows: Vec<ReplicationRow>,
}

/// Per-alpha aggregates of `rows`.
pub fn summarize(alphas: &[f64], rho: f64, kl: f64, rows: &[ReplicationRow]) -> Result<Vec<AlphaSummary>> {
    alphas
        .iter()
        .map(|&alpha| {
            let ok: Vec<&ReplicationRow> = rows.iter().filter(|r| r.alpha == alpha && r.error.is_none()).collect();
            let delays: Vec<f64> = ok.iter().filter_map(|r| r.delay).map(|d| d as f64).collect();
            let false_alarms = ok.iter().filter(|r| r.false_alarm).count();
            let mean_delay =
                if delays.is_empty() { f64::NAN } else { delays.iter().sum::<f64>() / delays.len() as f64 };
            let abs_log_alpha = alpha.ln().abs();
            let bound_delay = delay_bound(alpha, rho, kl)?;
            Ok(AlphaSummary {
                alpha,
                abs_log_alpha,
                runs: ok.len(),
                detections: ok.iter().filter(|r| r.tau.is_some()).count(),
                false_alarms,
                false_alarm_rate: if ok.is_empty() { f64::NAN } else { false_alarms as f64 / ok.len() as f64 },
                mean_delay,
                delay_over_log_alpha: mean_delay / abs_log_alpha,
                bound_slope: bound_delay / abs_log_alpha,
                bound_delay,
            })
        })
        .collect()
}

fn draw_relative_lambda(time: OutageTime, seed: u64) -> usize {
    match time {
        OutageTime::At(l) => l,
        OutageTime::Geometric { geometric } => {
            use rand::Rng;
            let mut rng = substream(seed, 3);
            let mut l = 1;
            while !rng.random_bool(geometric) {
                l += 1;
            }
            l
        }
    }
}

fn run_replication(
    topology: &GridTopology,
    spec: &BenchmarkSpec,
    model: &InjectionModel,
    replication: usize,
) -> std::result::Result<(usize, DetectorState), (usize, String)> {
    let seed = split_seed(spec.seed, replication as u64);
    let lambda = draw_relative_lambda(spec.scenario.outage_time, seed);
    let inner = || -> Result<DetectorState> {
        let regimes = Regimes::new(topology, &spec.scenario, seed)?;
        let detect_len = lambda - 1 + spec.post_window;
        let stream = generate_from_regimes(
            &regimes,
            &spec.scenario,
            model,
            spec.train_window + detect_len,
            spec.train_window + lambda,
            seed,
        )?;
        let channels = stream.channels(spec.mode);
        let (train, detect) = channels.split_at(spec.train_window);
        let g = GaussianModel::fit(train)?;
        let f = if spec.f_known { Some(regimes.post_model(model, spec.mode)?) } else { None };
        let alpha_min = spec.alphas.iter().copied().fold(1.0, f64::min);
        let mut state = DetectorState::new(alpha_min, GeometricPrior::new(spec.rho)?, g, f)?;
        state.detect(detect, Some(lambda))?;
        Ok(state)
    };
    inner().map(|s| (lambda, s)).map_err(|e| (lambda, e.to_string()))
}

/// Runs every replication in parallel; results are identical for any
/// thread count.
pub fn run_benchmark(topology: &GridTopology, spec: &BenchmarkSpec) -> Result<BenchmarkReport> {
    spec.validate()?;
    spec.scenario.validate(topology)?;
    let k = topology.bus_count() - 1;
    let model = InjectionModel::uniform(k, spec.injection_variance)?;
    let reference = Regimes::new(topology, &spec.scenario, spec.seed)?;
    let kl = kl_divergence(&reference.post_model(&model, spec.mode)?, &reference.pre_model(&model, spec.mode)?)?;

    let outcomes: Vec<_> =
        (0..spec.replications).into_par_iter().map(|r| run_replication(topology, spec, &model, r)).collect();

    let mut rows = Vec::with_capacity(spec.replications * spec.alphas.len());
    let mut failures = 0;
    for (replication, outcome) in outcomes.into_iter().enumerate() {
        if outcome.is_err() {
            failures += 1;
        }
        for &alpha in &spec.alphas {
            rows.push(match &outcome {
                Ok((lambda, state)) => {
                    let tau = state.first_crossing(alpha);
                    ReplicationRow {
                        replication,
                        alpha,
                        lambda: *lambda,
                        tau,
                        delay: tau.filter(|&t| t >= *lambda).map(|t| t - lambda),
                        false_alarm: tau.is_some_and(|t| t < *lambda),
                        error: None,
                    }
                }
                Err((lambda, message)) => ReplicationRow {
                    replication,
                    alpha,
                    lambda: *lambda,
                    tau: None,
                    delay: None,
                    false_alarm: false,
                    error: Some(message.clone()),
                },
            });
        }
    }
    let summary = summarize(&spec.alphas, spec.rho, kl, &rows)?;
    Ok(BenchmarkReport { spec: spec.clone(), kl, failures, summary, rows })
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

pub fn write_rows_csv<W: Write>(report: &BenchmarkReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| GridwatchError::Io(std::io::Error::other(e));
    w.write_record(["replication", "alpha", "lambda", "tau", "delay", "false_alarm", "error"]).map_err(io)?;
    for r in &report.rows {
        w.write_record(&[
            r.replication.to_string(),
            format!("{:e}", r.alpha),
            r.lambda.to_string(),
            opt(r.tau),
            opt(r.delay),
            r.false_alarm.to_string(),
            r.error.clone().unwrap_or_default(),
        ])
        .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary_csv<W: Write>(report: &BenchmarkReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| GridwatchError::Io(std::io::Error::other(e));
    w.write_record([
        "alpha",
        "abs_log_alpha",
        "runs",
        "detections",
        "false_alarm_rate",
        "mean_delay",
        "delay_over_log_alpha",
        "bound_slope",
        "bound_delay",
    ])
    .map_err(io)?;
    for s in &report.summary {
        w.write_record(&[
            format!("{:e}", s.alpha),
            s.abs_log_alpha.to_string(),
            s.runs.to_string(),
            s.detections.to_string(),
            s.false_alarm_rate.to_string(),
            s.mean_delay.to_string(),
            s.delay_over_log_alpha.to_string(),
            s.bound_slope.to_string(),
            s.bound_delay.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}
