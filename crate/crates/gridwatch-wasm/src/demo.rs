//! Plain Rust entry points behind the browser bindings. Each takes and
//! returns JSON so the page needs no schema beyond what it draws.

use gridwatch::detect::{delay_bound, kl_divergence, DetectionResult, DetectorState, GeometricPrior};
use gridwatch::grid::{catalog, GridTopology};
use gridwatch::localize::{localize, real_part_block, CovarianceSource, LocalizationReport, LocalizeOptions};
use gridwatch::simulate::{generate_stream, InjectionModel, Mode, OutageScenario, Regimes};
use gridwatch::{GridwatchError, Result};
use serde::Serialize;

/// Injection variance per bus used by every demo operation.
pub const VARIANCE: f64 = 4e-6;
/// Longest stream the page may request; learned `f` is quadratic in it.
pub const MAX_STEPS: usize = 2000;

fn grid(name: &str) -> Result<GridTopology> {
    catalog::by_name(name).ok_or_else(|| GridwatchError::InvalidInput(format!("unknown grid '{name}'")))
}

fn scenario(json: &str, topo: &GridTopology) -> Result<OutageScenario> {
    let s: OutageScenario = serde_json::from_str(json)?;
    s.validate(topo)?;
    Ok(s)
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    Ok(serde_json::to_string(v)?)
}

#[derive(Serialize)]
struct GridInfo {
    name: String,
    bus_count: usize,
    slack: usize,
    branches: Vec<(usize, usize)>,
}

/// Catalog names as a JSON array.
pub fn grid_names() -> String {
    serde_json::to_string(&catalog::NAMES).expect("static names")
}

/// Bus count, slack and branch list of a catalog grid.
pub fn grid_info(name: &str) -> Result<String> {
    let topo = grid(name)?;
    to_json(&GridInfo {
        name: name.to_string(),
        bus_count: topo.bus_count(),
        slack: topo.slack().0,
        branches: topo.branches().iter().map(|b| b.key()).collect(),
    })
}

#[derive(Serialize)]
struct DetectionTrace {
    #[serde(flatten)]
    result: DetectionResult,
    kl: f64,
    bound: f64,
    /// Magnitude readings per step, non-slack buses only.
    magnitudes: Vec<Vec<f64>>,
    labels: Vec<usize>,
}

/// Simulates a magnitude stream and runs the detector with `g` known and
/// `f` either known or learned.
pub fn run_detection(
    grid_name: &str,
    scenario_json: &str,
    steps: usize,
    seed: u64,
    alpha: f64,
    rho: f64,
    f_known: bool,
) -> Result<String> {
    if steps == 0 || steps > MAX_STEPS {
        return Err(GridwatchError::InvalidInput(format!("steps must be in 1..={MAX_STEPS}")));
    }
    let topo = grid(grid_name)?;
    let scen = scenario(scenario_json, &topo)?;
    let model = InjectionModel::uniform(topo.bus_count() - 1, VARIANCE)?;
    let stream = generate_stream(&topo, &scen, &model, steps, seed)?;
    let regimes = Regimes::new(&topo, &scen, seed)?;
    let g = regimes.pre_model(&model, Mode::Magnitude)?;
    let f = regimes.post_model(&model, Mode::Magnitude)?;
    let kl = kl_divergence(&f, &g)?;
    let bound = delay_bound(alpha, rho, kl)?;
    let mut det = DetectorState::new(alpha, GeometricPrior::new(rho)?, g, f_known.then_some(f))?;
    let result = det.detect(&stream.channels(Mode::Magnitude), stream.lambda)?;
    let slack = topo.slack().index();
    let magnitudes = stream
        .magnitudes
        .iter()
        .map(|m| m.iter().enumerate().filter(|&(i, _)| i != slack).map(|(_, &v)| v).collect())
        .collect();
    to_json(&DetectionTrace { result, kl, bound, magnitudes, labels: topo.non_slack().iter().map(|b| b.0).collect() })
}

/// Localization report from the exact pre- and post-change covariances.
pub fn localize_outage(
    grid_name: &str,
    scenario_json: &str,
    seed: u64,
    eps_conn: f64,
    eps_zero: f64,
) -> Result<String> {
    let topo = grid(grid_name)?;
    let scen = scenario(scenario_json, &topo)?;
    let model = InjectionModel::uniform(topo.bus_count() - 1, VARIANCE)?;
    let regimes = Regimes::new(&topo, &scen, seed)?;
    let s0 = real_part_block(regimes.pre_model(&model, Mode::Complex)?.cov());
    let s1 = real_part_block(regimes.post_model(&model, Mode::Complex)?.cov());
    let options = LocalizeOptions {
        eps_conn,
        eps_zero,
        labels: Some(topo.non_slack().iter().map(|b| b.0).collect()),
        source: CovarianceSource::TrueSigma1,
    };
    let report: LocalizationReport = localize(&s0, &s1, &options)?;
    to_json(&report)
}

/// Asymptotic delay bound `|ln alpha| / (-ln(1 - rho) + kl)`.
pub fn detection_delay_bound(alpha: f64, rho: f64, kl: f64) -> Result<f64> {
    delay_bound(alpha, rho, kl)
}
