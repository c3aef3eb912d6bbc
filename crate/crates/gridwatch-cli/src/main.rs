//! `gridwatch` command line: simulate meter streams, run the detector,
//! localize outages and benchmark detection delay.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gridwatch::benchmark::{run_benchmark, write_rows_csv, write_summary_csv, BenchmarkSpec};
use gridwatch::detect::{
    complementary_from_log_odds, delay_bound, kl_divergence, posterior_from_log_odds, DetectionResult, DetectorConfig,
    DetectorState, GaussianModel, GeometricPrior, MleEstimate, MleEstimator,
};
use gridwatch::grid::{catalog, BusId, GridTopology};
use gridwatch::localize::{localize, real_part_block, write_heatmap_csv, CovarianceSource, LocalizeOptions};
use gridwatch::simulate::{
    generate_stream, read_measurements_csv, resample, write_measurements_csv, InjectionModel, Mode, OutageScenario,
    Regimes,
};
use gridwatch::{GridwatchError, Result};
use serde::{Deserialize, Serialize};

const DEFAULT_VARIANCE: f64 = 4e-6;

#[derive(Parser)]
#[command(name = "gridwatch", version, about = "Outage detection and localization from smart meter voltages")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a meter stream; writes measurements.csv and truth.json.
    Simulate(SimulateArgs),
    /// Run the detector on a measurement file; writes posterior.csv and result.json.
    Detect(DetectArgs),
    /// Localize the outage behind a detection; writes report.json and heatmap.csv.
    Localize(LocalizeArgs),
    /// Monte Carlo delay benchmark; writes benchmark.json, rows.csv and summary.csv.
    Benchmark(BenchmarkArgs),
    /// Print the asymptotic detection delay bound.
    Bound(BoundArgs),
}

#[derive(Args)]
struct GridArg {
    /// Catalog name or grid JSON file.
    #[arg(long, default_value = "eight-bus-loop")]
    grid: String,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    grid: GridArg,
    /// Outage scenario JSON file.
    #[arg(long)]
    scenario: PathBuf,
    /// Increments to simulate.
    #[arg(long, default_value_t = 100)]
    steps: usize,
    /// Master seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// File format: complex readings or magnitudes.
    #[arg(long, default_value = "complex")]
    mode: Mode,
    /// Overrides the scenario's meter error bound.
    #[arg(long)]
    noise_pct: Option<f64>,
    /// Keep every n-th reading.
    #[arg(long, default_value_t = 1)]
    resample: usize,
    /// Per-bus injection increment variance.
    #[arg(long, default_value_t = DEFAULT_VARIANCE)]
    variance: f64,
    /// Output directory.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct DetectArgs {
    /// Measurement CSV.
    #[arg(long)]
    measurements: PathBuf,
    /// Detector config JSON; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// False-alarm budget (default 1e-6).
    #[arg(long)]
    alpha: Option<f64>,
    /// Geometric prior rate (default 1e-3).
    #[arg(long)]
    rho: Option<f64>,
    /// Channels: complex or magnitude (default magnitude).
    #[arg(long)]
    mode: Option<Mode>,
    /// Leading increments used to fit the pre-change model. Defaults to
    /// 10 x buses, or 0 with --truth (pre-change model taken from it).
    #[arg(long)]
    train: Option<usize>,
    /// Use the post-change model from --truth instead of learning it.
    #[arg(long)]
    f_known: bool,
    /// truth.json from `simulate`.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Slack bus column dropped from the channels (default 1, or the truth's slack).
    #[arg(long)]
    slack: Option<usize>,
    /// Samples after the alarm added to the learned post-change estimate
    /// handed to `localize`.
    #[arg(long, default_value_t = 30)]
    post_samples: usize,
    /// Output directory.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct LocalizeArgs {
    /// result.json from `detect`.
    #[arg(long)]
    result: PathBuf,
    /// truth.json from `simulate`; supplies the true post-change covariance.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Pre-change covariance: the detector's fitted model or the truth.
    #[arg(long, default_value = "fitted")]
    sigma0: SigmaSource,
    /// Post-change covariance; defaults to the learned estimate when present.
    #[arg(long)]
    sigma1: Option<SigmaSource>,
    /// Minimum pre-change |rho| of a candidate branch.
    #[arg(long, default_value_t = gridwatch::localize::DEFAULT_EPS_CONN)]
    eps_conn: f64,
    /// Maximum post-change |rho| of a candidate branch.
    #[arg(long, default_value_t = gridwatch::localize::DEFAULT_EPS_ZERO)]
    eps_zero: f64,
    /// Localize even without a detection.
    #[arg(long)]
    force: bool,
    /// Output directory.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
enum SigmaSource {
    Fitted,
    Truth,
}

#[derive(Args)]
struct BenchmarkArgs {
    #[command(flatten)]
    grid: GridArg,
    /// Full benchmark spec JSON; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Outage scenario JSON file (required without --config).
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Comma-separated false-alarm budgets.
    #[arg(long, value_delimiter = ',')]
    alpha: Option<Vec<f64>>,
    /// Geometric prior rate.
    #[arg(long)]
    rho: Option<f64>,
    /// Replications.
    #[arg(long)]
    reps: Option<usize>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Channels: complex or magnitude.
    #[arg(long)]
    mode: Option<Mode>,
    /// Use the true post-change model instead of learning it.
    #[arg(long)]
    f_known: bool,
    /// Training increments for the pre-change fit.
    #[arg(long)]
    train: Option<usize>,
    /// Increments simulated after the change.
    #[arg(long)]
    post: Option<usize>,
    /// Per-bus injection increment variance.
    #[arg(long)]
    variance: Option<f64>,
    /// Meter error bound.
    #[arg(long)]
    noise_pct: Option<f64>,
    /// Output directory.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct BoundArgs {
    /// False-alarm budget.
    #[arg(long)]
    alpha: f64,
    /// Geometric prior rate.
    #[arg(long)]
    rho: f64,
    /// KL(f || g); computed from --grid and --scenario when omitted.
    #[arg(long)]
    kl: Option<f64>,
    #[command(flatten)]
    grid: GridArg,
    /// Outage scenario JSON file.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Channels used for the KL divergence.
    #[arg(long, default_value = "magnitude")]
    mode: Mode,
    /// Per-bus injection increment variance.
    #[arg(long, default_value_t = DEFAULT_VARIANCE)]
    variance: f64,
    /// Seed of the base operating point.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Ground truth written next to a simulated stream.
#[derive(Serialize, Deserialize)]
struct Truth {
    grid: String,
    slack: usize,
    labels: Vec<usize>,
    seed: u64,
    steps: usize,
    resample: usize,
    lambda: Option<usize>,
    sample_period: f64,
    injection_variance: f64,
    scenario: OutageScenario,
    models: TruthModels,
}

#[derive(Serialize, Deserialize)]
struct TruthModels {
    complex: ModelPair,
    magnitude: ModelPair,
}

#[derive(Serialize, Deserialize)]
struct ModelPair {
    pre: GaussianModel,
    post: GaussianModel,
}

impl Truth {
    fn models(&self, mode: Mode) -> &ModelPair {
        match mode {
            Mode::Complex => &self.models.complex,
            Mode::Magnitude => &self.models.magnitude,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct DetectReport {
    measurements: PathBuf,
    mode: Mode,
    alpha: f64,
    rho: f64,
    train_window: usize,
    f_known: bool,
    slack: usize,
    labels: Vec<usize>,
    detected: bool,
    tau: Option<usize>,
    lambda_true: Option<usize>,
    delay: Option<usize>,
    false_alarm: bool,
    final_posterior: Option<f64>,
    posterior_trace: PathBuf,
    g: GaussianModel,
    f: Option<GaussianModel>,
    learned: Option<MleEstimate>,
}

fn load_grid(name: &str) -> Result<GridTopology> {
    match catalog::by_name(name) {
        Some(t) => Ok(t),
        None if Path::new(name).exists() => GridTopology::read_json(Path::new(name)),
        None => Err(GridwatchError::InvalidInput(format!(
            "grid '{name}' is neither a file nor one of {}",
            catalog::NAMES.join(", ")
        ))),
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text =
        fs::read_to_string(path).map_err(|e| GridwatchError::InvalidInput(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| GridwatchError::InvalidInput(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    std::io::Write::write_all(&mut w, b"\n")?;
    Ok(())
}

fn scale_model(m: &GaussianModel, factor: usize) -> Result<GaussianModel> {
    let f = factor as f64;
    GaussianModel::regularized(m.mean() * f, m.cov() * f)
}

fn cmd_simulate(a: SimulateArgs) -> Result<()> {
    let topo = load_grid(&a.grid.grid)?;
    let mut scenario: OutageScenario = read_json(&a.scenario)?;
    if let Some(p) = a.noise_pct {
        scenario.noise_pct = p;
    }
    for w in scenario.validate(&topo)? {
        eprintln!("warning: {w}");
    }
    let model = InjectionModel::uniform(topo.bus_count() - 1, a.variance)?;
    let stream = generate_stream(&topo, &scenario, &model, a.steps, a.seed)?;
    let stream = resample(&stream, a.resample)?;
    let regimes = Regimes::new(&topo, &scenario, a.seed)?;
    let pair = |mode| -> Result<ModelPair> {
        Ok(ModelPair {
            pre: scale_model(&regimes.pre_model(&model, mode)?, a.resample)?,
            post: scale_model(&regimes.post_model(&model, mode)?, a.resample)?,
        })
    };
    let truth = Truth {
        grid: a.grid.grid.clone(),
        slack: topo.slack().0,
        labels: topo.non_slack().iter().map(|b| b.0).collect(),
        seed: a.seed,
        steps: stream.len(),
        resample: a.resample,
        lambda: stream.lambda,
        sample_period: stream.sample_period,
        injection_variance: a.variance,
        models: TruthModels { complex: pair(Mode::Complex)?, magnitude: pair(Mode::Magnitude)? },
        scenario,
    };
    fs::create_dir_all(&a.out_dir)?;
    write_measurements_csv(&stream, a.mode, BufWriter::new(File::create(a.out_dir.join("measurements.csv"))?))?;
    write_json(&a.out_dir.join("truth.json"), &truth)?;
    println!("{} readings, change at {:?}", stream.voltages.len(), stream.lambda);
    Ok(())
}

fn cmd_detect(a: DetectArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => read_json::<DetectorConfig>(p)?,
        None => DetectorConfig {
            alpha: 1e-6,
            rho: 1e-3,
            train_window: None,
            f_known: false,
            mode: Mode::Magnitude,
            slack: None,
        },
    };
    cfg.alpha = a.alpha.unwrap_or(cfg.alpha);
    cfg.rho = a.rho.unwrap_or(cfg.rho);
    cfg.mode = a.mode.unwrap_or(cfg.mode);
    cfg.train_window = a.train.or(cfg.train_window);
    cfg.f_known |= a.f_known;
    cfg.slack = a.slack.or(cfg.slack);

    let truth: Option<Truth> = a.truth.as_deref().map(read_json).transpose()?;
    let meas = read_measurements_csv(File::open(&a.measurements)?)?;
    let slack = cfg.slack.or(truth.as_ref().map(|t| t.slack)).unwrap_or(1);
    let xs = meas.channels(cfg.mode, BusId(slack))?;
    let labels: Vec<usize> = (1..=meas.bus_count).filter(|&b| b != slack).collect();
    let train = cfg.train_window.unwrap_or(if truth.is_some() { 0 } else { 10 * meas.bus_count });
    if train >= xs.len() {
        return Err(GridwatchError::InvalidInput(format!(
            "train window {train} leaves no samples out of {}",
            xs.len()
        )));
    }
    let g = match (train, &truth) {
        (0, Some(t)) => t.models(cfg.mode).pre.clone(),
        (0, None) => {
            return Err(GridwatchError::InvalidInput("--train 0 needs --truth for the pre-change model".into()))
        }
        (1, _) => return Err(GridwatchError::InvalidInput("train window must be at least 2".into())),
        _ => GaussianModel::fit(&xs[..train])?,
    };
    let f = if cfg.f_known {
        let t = truth
            .as_ref()
            .ok_or_else(|| GridwatchError::InvalidInput("--f-known needs --truth for the post-change model".into()))?;
        Some(t.models(cfg.mode).post.clone())
    } else {
        None
    };
    let lambda_true = truth.as_ref().and_then(|t| t.lambda);
    if lambda_true.is_some_and(|l| l <= train) {
        eprintln!("warning: change at {} falls inside the training window", lambda_true.unwrap_or(0));
    }

    let mut det = DetectorState::new(cfg.alpha, GeometricPrior::new(cfg.rho)?, g.clone(), f.clone())?;
    det.detect(&xs[train..], None)?;
    let tau = det.tau().map(|t| t + train);
    let result = DetectionResult::new(tau, lambda_true, &[]);
    let learned = match (det.tau(), cfg.f_known) {
        (Some(t), false) => {
            let end = (train + t + a.post_samples).min(xs.len());
            let mut mle = MleEstimator::new(*det.prior(), xs[0].len());
            for x in &xs[train..end] {
                mle.mle_update(x)?;
            }
            Some(mle.estimate()?)
        }
        _ => det.estimate().cloned(),
    };

    fs::create_dir_all(&a.out_dir)?;
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(a.out_dir.join("posterior.csv"))?));
    let io = |e: csv::Error| GridwatchError::Io(std::io::Error::other(e));
    w.write_record(["step", "posterior", "complementary"]).map_err(io)?;
    for (i, &lo) in det.log_odds_trace().iter().enumerate() {
        w.write_record(&[
            (train + i + 1).to_string(),
            format!("{:?}", posterior_from_log_odds(lo)),
            format!("{:?}", complementary_from_log_odds(lo)),
        ])
        .map_err(io)?;
    }
    w.flush()?;

    let report = DetectReport {
        measurements: a.measurements.clone(),
        mode: cfg.mode,
        alpha: cfg.alpha,
        rho: cfg.rho,
        train_window: train,
        f_known: cfg.f_known,
        slack,
        labels,
        detected: result.detected,
        tau,
        lambda_true,
        delay: result.delay,
        false_alarm: result.false_alarm,
        final_posterior: det.log_odds_trace().last().map(|&lo| posterior_from_log_odds(lo)),
        posterior_trace: PathBuf::from("posterior.csv"),
        g,
        f,
        learned,
    };
    write_json(&a.out_dir.join("result.json"), &report)?;
    match tau {
        Some(t) => println!("outage detected at step {t}"),
        None => println!("no outage detected in {} steps", xs.len() - train),
    }
    Ok(())
}

fn cmd_localize(a: LocalizeArgs) -> Result<()> {
    let result: DetectReport = read_json(&a.result)?;
    if !result.detected && !a.force {
        return Err(GridwatchError::InvalidInput("no detection in result; pass --force to localize anyway".into()));
    }
    let truth: Option<Truth> = a.truth.as_deref().map(read_json).transpose()?;
    let need_truth = || {
        truth.as_ref().ok_or_else(|| {
            GridwatchError::InvalidInput("true covariances requested; pass --truth truth.json from simulate".into())
        })
    };
    let sigma0 = match a.sigma0 {
        SigmaSource::Fitted => result.g.cov().clone(),
        SigmaSource::Truth => need_truth()?.models(result.mode).pre.cov().clone(),
    };
    let (sigma1, source) = match (a.sigma1, &result.learned) {
        (None | Some(SigmaSource::Fitted), Some(est)) => {
            (est.model.cov().clone(), CovarianceSource::EstimatedSigma1 { samples: est.samples })
        }
        (Some(SigmaSource::Fitted), None) => {
            return Err(GridwatchError::InvalidInput(
                "result has no learned post-change estimate (detector ran with known f); use --sigma1 truth".into(),
            ))
        }
        (None | Some(SigmaSource::Truth), _) => match &truth {
            Some(t) => (t.models(result.mode).post.cov().clone(), CovarianceSource::TrueSigma1),
            None => {
                return Err(GridwatchError::InvalidInput(
                    "no post-change covariance: rerun detect without --f-known, or pass --truth truth.json".into(),
                ))
            }
        },
    };
    let (sigma0, sigma1) = match result.mode {
        Mode::Complex => (real_part_block(&sigma0), real_part_block(&sigma1)),
        Mode::Magnitude => (sigma0, sigma1),
    };
    let opts =
        LocalizeOptions { eps_conn: a.eps_conn, eps_zero: a.eps_zero, labels: Some(result.labels.clone()), source };
    let report = localize(&sigma0, &sigma1, &opts)?;
    fs::create_dir_all(&a.out_dir)?;
    write_json(&a.out_dir.join("report.json"), &report)?;
    write_heatmap_csv(&report, BufWriter::new(File::create(a.out_dir.join("heatmap.csv"))?))?;
    if report.candidates.is_empty() {
        let top = &report.ranking[..report.ranking.len().min(2)];
        println!("no branch passed the thresholds; largest correlation drops {top:?}");
    } else {
        println!("candidate branches: {:?}", report.candidates);
    }
    Ok(())
}

fn cmd_benchmark(a: BenchmarkArgs) -> Result<()> {
    let topo = load_grid(&a.grid.grid)?;
    let mut spec = match (&a.config, &a.scenario) {
        (Some(p), _) => read_json::<BenchmarkSpec>(p)?,
        (None, Some(s)) => BenchmarkSpec {
            alphas: vec![1e-2, 1e-4, 1e-6, 1e-8],
            rho: 1e-3,
            replications: 100,
            seed: 0,
            mode: Mode::Magnitude,
            f_known: false,
            train_window: 10 * topo.bus_count(),
            post_window: 200,
            injection_variance: DEFAULT_VARIANCE,
            scenario: read_json(s)?,
        },
        (None, None) => return Err(GridwatchError::InvalidInput("benchmark needs --config or --scenario".into())),
    };
    if let (Some(_), Some(s)) = (&a.config, &a.scenario) {
        spec.scenario = read_json(s)?;
    }
    spec.alphas = a.alpha.unwrap_or(spec.alphas);
    spec.rho = a.rho.unwrap_or(spec.rho);
    spec.replications = a.reps.unwrap_or(spec.replications);
    spec.seed = a.seed.unwrap_or(spec.seed);
    spec.mode = a.mode.unwrap_or(spec.mode);
    spec.f_known |= a.f_known;
    spec.train_window = a.train.unwrap_or(spec.train_window);
    spec.post_window = a.post.unwrap_or(spec.post_window);
    spec.injection_variance = a.variance.unwrap_or(spec.injection_variance);
    if let Some(p) = a.noise_pct {
        spec.scenario.noise_pct = p;
    }
    let report = run_benchmark(&topo, &spec)?;
    fs::create_dir_all(&a.out_dir)?;
    write_json(&a.out_dir.join("benchmark.json"), &report)?;
    write_rows_csv(&report, BufWriter::new(File::create(a.out_dir.join("rows.csv"))?))?;
    write_summary_csv(&report, BufWriter::new(File::create(a.out_dir.join("summary.csv"))?))?;
    if report.failures > 0 {
        eprintln!("warning: {} of {} replications failed", report.failures, spec.replications);
    }
    println!("alpha,mean_delay,bound_delay,false_alarm_rate");
    for s in &report.summary {
        println!("{:e},{},{},{}", s.alpha, s.mean_delay, s.bound_delay, s.false_alarm_rate);
    }
    Ok(())
}

fn cmd_bound(a: BoundArgs) -> Result<()> {
    let kl = match (a.kl, &a.scenario) {
        (Some(kl), _) => kl,
        (None, Some(path)) => {
            let topo = load_grid(&a.grid.grid)?;
            let scenario: OutageScenario = read_json(path)?;
            let model = InjectionModel::uniform(topo.bus_count() - 1, a.variance)?;
            let r = Regimes::new(&topo, &scenario, a.seed)?;
            kl_divergence(&r.post_model(&model, a.mode)?, &r.pre_model(&model, a.mode)?)?
        }
        (None, None) => return Err(GridwatchError::InvalidInput("bound needs --kl or --scenario".into())),
    };
    let bound = delay_bound(a.alpha, a.rho, kl)?;
    println!("{}", serde_json::json!({ "alpha": a.alpha, "rho": a.rho, "kl": kl, "bound": bound }));
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Detect(a) => cmd_detect(a),
        Command::Localize(a) => cmd_localize(a),
        Command::Benchmark(a) => cmd_benchmark(a),
        Command::Bound(a) => cmd_bound(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
