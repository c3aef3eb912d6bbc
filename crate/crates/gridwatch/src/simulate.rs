//! Voltage stream generation under pre- and post-outage regimes.
//!
//! Increments follow the linear injection model `dv = Z dI` with circular
//! complex Gaussian `dI`, accumulated around an AC power flow base point.
//! Meters read the accumulated complex voltage; magnitudes are taken from
//! those readings.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::detect::GaussianModel;
use crate::error::{GridwatchError, Result};
use crate::grid::{apply_outage, BusId, GridTopology};
use crate::powerflow::{
    island_sensitivity, linear_sensitivity, solve_ac, IslandSensitivity, PowerInjection, DEFAULT_MAX_ITER, DEFAULT_TOL,
};

/// Which meter quantity the detector sees.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Real and imaginary parts stacked, `[Re dv; Im dv]`.
    Complex,
    /// Magnitude increments `d|v|`.
    Magnitude,
}

impl std::str::FromStr for Mode {
    type Err = GridwatchError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "complex" => Ok(Self::Complex),
            "magnitude" => Ok(Self::Magnitude),
            _ => Err(GridwatchError::InvalidInput(format!("mode must be complex or magnitude, got {s:?}"))),
        }
    }
}

/// Independent RNG for `(seed, stream)`; ChaCha stream ids split one seed
/// into non-overlapping sequences.
#[must_use]
pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Seed for replication `index`, independent of execution order.
#[must_use]
pub fn split_seed(seed: u64, index: u64) -> u64 {
    substream(seed, index.wrapping_add(1 << 32)).next_u64()
}

// ---------------------------------------------------------------------------
// Injection model
// ---------------------------------------------------------------------------

/// Per non-slack bus current injection increments, independent across buses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InjectionModel {
    variance: Vec<f64>,
    mean: Vec<f64>,
}

impl InjectionModel {
    /// Zero-mean model; every variance must be positive.
    pub fn new(variance: Vec<f64>) -> Result<Self> {
        let mean = vec![0.0; variance.len()];
        Self::with_mean(variance, mean)
    }

    pub fn with_mean(variance: Vec<f64>, mean: Vec<f64>) -> Result<Self> {
        if variance.is_empty() || variance.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(GridwatchError::InvalidInput("injection variances must be positive".into()));
        }
        if mean.len() != variance.len() || mean.iter().any(|m| !m.is_finite()) {
            return Err(GridwatchError::DimensionMismatch { expected: variance.len(), got: mean.len() });
        }
        Ok(Self { variance, mean })
    }

    pub fn uniform(buses: usize, variance: f64) -> Result<Self> {
        Self::new(vec![variance; buses])
    }

    #[must_use]
    pub fn variance(&self) -> &[f64] {
        &self.variance
    }

    #[must_use]
    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    #[must_use]
    pub fn len(&self) -> usize {
        self.variance.len()
    }

    #[must_use]
    pub fn is_empty(&self) -> bool {
        self.variance.is_empty()
    }
}

fn draw_injections(model: &InjectionModel, n_steps: usize, rng: &mut ChaCha8Rng) -> DMatrix<Complex64> {
    let k = model.len();
    let scale: Vec<f64> = model.variance.iter().map(|v| (v / 2.0).sqrt()).collect();
    let mut out = DMatrix::from_element(n_steps, k, Complex64::new(0.0, 0.0));
    for n in 0..n_steps {
        for b in 0..k {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            out[(n, b)] = Complex64::new(model.mean[b] + scale[b] * re, scale[b] * im);
        }
    }
    out
}

/// `n_steps x K` circular complex Gaussian increments with
/// `E|dI - mean|^2 = variance`.
pub fn sample_injections(model: &InjectionModel, n_steps: usize, seed: u64) -> Result<DMatrix<Complex64>> {
    if n_steps == 0 {
        return Err(GridwatchError::InvalidInput("n_steps must be at least 1".into()));
    }
    Ok(draw_injections(model, n_steps, &mut ChaCha8Rng::seed_from_u64(seed)))
}

// ---------------------------------------------------------------------------
// Scenario
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    /// Outage leaves every bus connected to the slack.
    Mesh,
    /// Islands holding a DER bus stay energized.
    RadialWithDer,
    /// Islands without a source read zero.
    RadialDeadIsland,
    /// Topology unchanged; magnitudes at fault buses drop by `fault_drop`.
    MeanShiftFault,
}

/// Change time: fixed step or drawn from a geometric prior.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OutageTime {
    At(usize),
    Geometric { geometric: f64 },
}

fn default_period() -> f64 {
    1.0
}

fn default_base_load() -> f64 {
    0.01
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutageScenario {
    pub outage_time: OutageTime,
    pub outage_branches: Vec<(BusId, BusId)>,
    pub scenario_kind: ScenarioKind,
    /// Multiplicative meter error bound, e.g. 0.002 for 0.2%.
    #[serde(default)]
    pub noise_pct: f64,
    /// Seconds between samples.
    #[serde(default = "default_period")]
    pub sample_period: f64,
    /// Mean base-point load per bus, p.u.
    #[serde(default = "default_base_load")]
    pub base_load: f64,
    #[serde(default)]
    pub der_buses: Vec<BusId>,
    /// Source admittance of an island's reference DER; defaults to the mean
    /// in-service branch admittance.
    #[serde(default)]
    pub der_admittance: Option<Complex64>,
    #[serde(default)]
    pub fault_drop: f64,
    /// Defaults to the non-slack endpoints of `outage_branches`.
    #[serde(default)]
    pub fault_buses: Option<Vec<BusId>>,
}

impl OutageScenario {
    #[must_use]
    pub fn new(outage_time: OutageTime, outage_branches: Vec<(BusId, BusId)>, scenario_kind: ScenarioKind) -> Self {
        Self {
            outage_time,
            outage_branches,
            scenario_kind,
            noise_pct: 0.0,
            sample_period: 1.0,
            base_load: default_base_load(),
            der_buses: Vec::new(),
            der_admittance: None,
            fault_drop: 0.0,
            fault_buses: None,
        }
    }

    /// Structural checks; returns warnings for tolerated oddities.
    pub fn validate(&self, topology: &GridTopology) -> Result<Vec<String>> {
        if let OutageTime::At(0) = self.outage_time {
            return Err(GridwatchError::InvalidInput("outage time must be >= 1".into()));
        }
        if let OutageTime::Geometric { geometric } = self.outage_time {
            if !(geometric > 0.0 && geometric < 1.0) {
                return Err(GridwatchError::InvalidInput(format!("geometric rate must be in (0,1), got {geometric}")));
            }
        }
        if !(self.noise_pct >= 0.0 && self.noise_pct < 1.0) {
            return Err(GridwatchError::InvalidInput(format!("noise_pct must be in [0,1), got {}", self.noise_pct)));
        }
        if !(self.sample_period > 0.0 && self.sample_period.is_finite()) {
            return Err(GridwatchError::InvalidInput("sample_period must be positive".into()));
        }
        if !(self.base_load >= 0.0 && self.base_load.is_finite()) {
            return Err(GridwatchError::InvalidInput("base_load must be non-negative".into()));
        }
        apply_outage(topology, &self.outage_branches)?;
        for b in self.der_buses.iter().chain(self.fault_buses.iter().flatten()) {
            if b.0 == 0 || b.0 > topology.bus_count() {
                return Err(GridwatchError::InvalidInput(format!("bus {b} out of range")));
            }
        }
        let mut warnings = Vec::new();
        if self.noise_pct > 0.01 {
            warnings.push(format!("noise_pct {} exceeds the 1% meter accuracy class", self.noise_pct));
        }
        Ok(warnings)
    }

    fn fault_buses(&self, topology: &GridTopology) -> Vec<BusId> {
        let mut buses = self
            .fault_buses
            .clone()
            .unwrap_or_else(|| self.outage_branches.iter().flat_map(|&(a, b)| [a, b]).collect());
        buses.retain(|&b| b != topology.slack());
        buses.sort();
        buses.dedup();
        buses
    }
}

// ---------------------------------------------------------------------------
// Regimes and theoretical models
// ---------------------------------------------------------------------------

/// Base point and sensitivities of both regimes for one scenario.
#[derive(Clone, Debug)]
pub struct Regimes {
    pub base: DVector<Complex64>,
    pub z_pre: DMatrix<Complex64>,
    pub post: IslandSensitivity,
    pub slack: BusId,
    pub fault_buses: Vec<BusId>,
}

/// AC base point with loads `base_load * U(0.5, 1.5)` at power factor
/// `U(0.8, 1)`; DER buses inject instead of consume.
pub fn base_point(
    topology: &GridTopology,
    scenario: &OutageScenario,
    rng: &mut ChaCha8Rng,
) -> Result<DVector<Complex64>> {
    let mut inj = vec![PowerInjection::default(); topology.bus_count()];
    for b in topology.non_slack() {
        let p = scenario.base_load * rng.random_range(0.5..1.5);
        let pf: f64 = rng.random_range(0.8..1.0);
        let q = p * pf.acos().tan();
        inj[b.index()] =
            if scenario.der_buses.contains(&b) { PowerInjection { p, q: 0.0 } } else { PowerInjection::load(p, q) };
    }
    Ok(solve_ac(topology, &inj, DEFAULT_TOL, DEFAULT_MAX_ITER)?.phasors())
}

fn mean_admittance(topology: &GridTopology) -> Complex64 {
    let (sum, count) =
        topology.in_service().fold((Complex64::new(0.0, 0.0), 0.0), |(s, c), b| (s + b.admittance, c + 1.0));
    sum / count
}

impl Regimes {
    /// Base point from `substream(seed, 0)`, pre-outage sensitivity and the
    /// post-outage sensitivity for the scenario kind.
    pub fn new(topology: &GridTopology, scenario: &OutageScenario, seed: u64) -> Result<Self> {
        scenario.validate(topology)?;
        let base = base_point(topology, scenario, &mut substream(seed, 0))?;
        let z_pre = linear_sensitivity(topology)?;
        let post_topology = apply_outage(topology, &scenario.outage_branches)?;
        let der_adm = scenario.der_admittance.unwrap_or_else(|| mean_admittance(topology));
        let post = match scenario.scenario_kind {
            ScenarioKind::Mesh => {
                let s = island_sensitivity(&post_topology, &[], der_adm)?;
                if !s.dead.is_empty() {
                    return Err(GridwatchError::DeadIsland(s.dead.iter().map(|b| b.0).collect()));
                }
                s
            }
            ScenarioKind::RadialWithDer => island_sensitivity(&post_topology, &scenario.der_buses, der_adm)?,
            ScenarioKind::RadialDeadIsland => island_sensitivity(&post_topology, &[], der_adm)?,
            ScenarioKind::MeanShiftFault => island_sensitivity(topology, &[], der_adm)?,
        };
        let fault_buses = if scenario.scenario_kind == ScenarioKind::MeanShiftFault {
            scenario.fault_buses(topology)
        } else {
            Vec::new()
        };
        Ok(Self { base, z_pre, post, slack: topology.slack(), fault_buses })
    }

    /// Gaussian law of one increment before the outage.
    pub fn pre_model(&self, model: &InjectionModel, mode: Mode) -> Result<GaussianModel> {
        theoretical_model(&self.z_pre, model, mode, &self.channel_base())
    }

    /// Gaussian law of one increment after the outage.
    pub fn post_model(&self, model: &InjectionModel, mode: Mode) -> Result<GaussianModel> {
        theoretical_model(&self.post.z, model, mode, &self.channel_base())
    }

    fn channel_base(&self) -> DVector<Complex64> {
        self.base.clone().remove_row(self.slack.index())
    }
}

/// Increment law implied by `dv = Z dI`. Complex mode stacks real and
/// imaginary parts; magnitude mode linearises `d|v|` around the unit phasors
/// of `base` (non-slack buses). Zero-variance channels are regularized.
pub fn theoretical_model(
    z: &DMatrix<Complex64>,
    model: &InjectionModel,
    mode: Mode,
    base: &DVector<Complex64>,
) -> Result<GaussianModel> {
    let k = z.nrows();
    if model.len() != k || base.len() != k {
        return Err(GridwatchError::DimensionMismatch { expected: k, got: model.len().min(base.len()) });
    }
    let d =
        DMatrix::from_diagonal(&DVector::from_iterator(k, model.variance().iter().map(|&v| Complex64::new(v, 0.0))));
    let mu = DVector::from_iterator(k, model.mean().iter().map(|&m| Complex64::new(m, 0.0)));
    match mode {
        Mode::Complex => {
            let c = z * &d * z.adjoint();
            let mean_c = z * mu;
            let cov = DMatrix::from_fn(2 * k, 2 * k, |i, j| {
                let (bi, bj) = (i / k, j / k);
                let v = c[(i % k, j % k)];
                0.5 * match (bi, bj) {
                    (0, 0) | (1, 1) => v.re,
                    (0, 1) => -v.im,
                    _ => v.im,
                }
            });
            let mean = DVector::from_fn(2 * k, |i, _| if i < k { mean_c[i].re } else { mean_c[i - k].im });
            GaussianModel::regularized(mean, cov)
        }
        Mode::Magnitude => {
            let a = DMatrix::from_fn(k, k, |i, j| {
                let u = if base[i].norm() > 0.0 { base[i] / base[i].norm() } else { Complex64::new(0.0, 0.0) };
                u.conj() * z[(i, j)]
            });
            let c = &a * &d * a.adjoint();
            let cov = c.map(|v| 0.5 * v.re);
            let mean = (&a * mu).map(|v| v.re);
            GaussianModel::regularized(mean, cov)
        }
    }
}

// ---------------------------------------------------------------------------
// Streams
// ---------------------------------------------------------------------------

/// Meter readings `v[0..=N]` at every bus and the increments they imply.
#[derive(Clone, Debug, PartialEq)]
pub struct IncrementStream {
    /// Complex readings, one vector of `M` per time index.
    pub voltages: Vec<DVector<Complex64>>,
    /// `|v|` of the complex readings.
    pub magnitudes: Vec<DVector<f64>>,
    pub sample_period: f64,
    /// Increment index of the change, if inside the stream.
    pub lambda: Option<usize>,
    pub slack: BusId,
}

impl IncrementStream {
    /// Number of increments `N`.
    #[must_use]
    pub fn len(&self) -> usize {
        self.voltages.len().saturating_sub(1)
    }

    #[must_use]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[must_use]
    pub fn bus_count(&self) -> usize {
        self.voltages.first().map_or(0, |v| v.len())
    }

    /// `dv[n] = v[n] - v[n-1]` for `n = 1..=N`, every bus.
    #[must_use]
    pub fn complex_increments(&self) -> Vec<DVector<Complex64>> {
        self.voltages.windows(2).map(|w| &w[1] - &w[0]).collect()
    }

    /// `d|v|[n] = |v[n]| - |v[n-1]|`, every bus.
    #[must_use]
    pub fn magnitude_increments(&self) -> Vec<DVector<f64>> {
        self.magnitudes.windows(2).map(|w| &w[1] - &w[0]).collect()
    }

    /// Detector input: slack excluded; complex mode stacks `[Re; Im]`.
    #[must_use]
    pub fn channels(&self, mode: Mode) -> Vec<DVector<f64>> {
        match mode {
            Mode::Magnitude => channel_increments_real(&self.magnitudes, self.slack),
            Mode::Complex => channel_increments_complex(&self.voltages, self.slack),
        }
    }
}

fn channel_increments_real(series: &[DVector<f64>], slack: BusId) -> Vec<DVector<f64>> {
    series.windows(2).map(|w| (&w[1] - &w[0]).remove_row(slack.index())).collect()
}

fn channel_increments_complex(series: &[DVector<Complex64>], slack: BusId) -> Vec<DVector<f64>> {
    series
        .windows(2)
        .map(|w| {
            let d = (&w[1] - &w[0]).remove_row(slack.index());
            let k = d.len();
            DVector::from_fn(2 * k, |i, _| if i < k { d[i].re } else { d[i - k].im })
        })
        .collect()
}

fn draw_lambda(time: OutageTime, rng: &mut ChaCha8Rng) -> Result<usize> {
    match time {
        OutageTime::At(l) => Ok(l),
        OutageTime::Geometric { geometric } => {
            let dist =
                Geometric::new(geometric).map_err(|e| GridwatchError::InvalidInput(format!("geometric rate: {e}")))?;
            Ok(usize::try_from(dist.sample(rng)).unwrap_or(usize::MAX - 1) + 1)
        }
    }
}

/// Simulates `n_steps` increments. RNG streams of `seed`: 0 base point,
/// 1 injections, 2 meter noise, 3 change time.
pub fn generate_stream(
    topology_pre: &GridTopology,
    scenario: &OutageScenario,
    model: &InjectionModel,
    n_steps: usize,
    seed: u64,
) -> Result<IncrementStream> {
    let regimes = Regimes::new(topology_pre, scenario, seed)?;
    let lambda = draw_lambda(scenario.outage_time, &mut substream(seed, 3))?;
    generate_from_regimes(&regimes, scenario, model, n_steps, lambda, seed)
}

/// [`generate_stream`] with precomputed regimes and a given change index.
pub fn generate_from_regimes(
    regimes: &Regimes,
    scenario: &OutageScenario,
    model: &InjectionModel,
    n_steps: usize,
    lambda: usize,
    seed: u64,
) -> Result<IncrementStream> {
    let k = regimes.z_pre.nrows();
    if model.len() != k {
        return Err(GridwatchError::DimensionMismatch { expected: k, got: model.len() });
    }
    if n_steps == 0 || lambda == 0 {
        return Err(GridwatchError::InvalidInput("n_steps and lambda must be at least 1".into()));
    }
    let slack = regimes.slack;
    let injections = draw_injections(model, n_steps, &mut substream(seed, 1));
    let mut noise_rng = substream(seed, 2);
    let dead: Vec<usize> = regimes.post.dead.iter().map(|b| b.index()).collect();
    let fault: Vec<usize> = regimes.fault_buses.iter().map(|b| b.index()).collect();
    let channel_bus: Vec<usize> = (0..=k).filter(|&i| i != slack.index()).collect();

    let mut state = regimes.base.clone();
    let mut voltages = Vec::with_capacity(n_steps + 1);
    let mut magnitudes = Vec::with_capacity(n_steps + 1);
    for n in 0..=n_steps {
        let post = n >= lambda;
        if n > 0 {
            let z = if post { &regimes.post.z } else { &regimes.z_pre };
            let dv = z * injections.row(n - 1).transpose();
            for (c, &bus) in channel_bus.iter().enumerate() {
                state[bus] += dv[c];
            }
            if post {
                for &bus in &dead {
                    state[bus] = Complex64::new(0.0, 0.0);
                }
            }
        }
        let mut reading = state.clone();
        if post {
            for &bus in &fault {
                let mag = reading[bus].norm();
                if mag > 0.0 {
                    reading[bus] *= (mag - scenario.fault_drop).max(0.0) / mag;
                }
            }
        }
        if scenario.noise_pct > 0.0 {
            for v in reading.iter_mut() {
                *v *= 1.0 + noise_rng.random_range(-scenario.noise_pct..=scenario.noise_pct);
            }
        }
        magnitudes.push(reading.map(|c| c.norm()));
        voltages.push(reading);
    }
    Ok(IncrementStream {
        voltages,
        magnitudes,
        sample_period: scenario.sample_period,
        lambda: (lambda <= n_steps).then_some(lambda),
        slack,
    })
}

/// Keeps readings `v[0], v[f], v[2f], ...` and re-differences. The number of
/// readings `N + 1` must be a multiple of `factor`.
pub fn resample(stream: &IncrementStream, factor: usize) -> Result<IncrementStream> {
    let len = stream.voltages.len();
    if factor == 0 || !len.is_multiple_of(factor) {
        return Err(GridwatchError::InvalidInput(format!(
            "resample factor {factor} does not divide the {len} readings"
        )));
    }
    let keep = |i: &usize| i.is_multiple_of(factor);
    let voltages: Vec<_> = (0..len).filter(keep).map(|i| stream.voltages[i].clone()).collect();
    let magnitudes: Vec<_> = (0..len).filter(keep).map(|i| stream.magnitudes[i].clone()).collect();
    let new_len = voltages.len() - 1;
    Ok(IncrementStream {
        voltages,
        magnitudes,
        sample_period: stream.sample_period * factor as f64,
        lambda: stream.lambda.map(|l| l.div_ceil(factor)).filter(|&l| l <= new_len),
        slack: stream.slack,
    })
}

// ---------------------------------------------------------------------------
// Measurement CSV
// ---------------------------------------------------------------------------

/// Writes `time,bus_1,...` magnitudes or `time,bus_1_re,bus_1_im,...` readings.
pub fn write_measurements_csv<W: Write>(stream: &IncrementStream, mode: Mode, out: W) -> Result<()> {
    let m = stream.bus_count();
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["time".to_string()];
    for b in 1..=m {
        match mode {
            Mode::Magnitude => header.push(format!("bus_{b}")),
            Mode::Complex => {
                header.push(format!("bus_{b}_re"));
                header.push(format!("bus_{b}_im"));
            }
        }
    }
    w.write_record(&header).map_err(csv_error)?;
    for (n, (v, mag)) in stream.voltages.iter().zip(&stream.magnitudes).enumerate() {
        let mut row = vec![format!("{}", n as f64 * stream.sample_period)];
        for b in 0..m {
            match mode {
                Mode::Magnitude => row.push(format!("{}", mag[b])),
                Mode::Complex => {
                    row.push(format!("{}", v[b].re));
                    row.push(format!("{}", v[b].im));
                }
            }
        }
        w.write_record(&row).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_error(e: csv::Error) -> GridwatchError {
    let row = e.position().map_or(0, |p| p.line() as usize);
    GridwatchError::MalformedRow { row, message: e.to_string() }
}

/// Parsed measurement file.
#[derive(Clone, Debug, PartialEq)]
pub struct Measurements {
    pub mode: Mode,
    pub bus_count: usize,
    pub times: Vec<f64>,
    /// Magnitude mode: `|v|` per bus. Complex mode: complex reading per bus.
    pub readings: Vec<DVector<Complex64>>,
}

impl Measurements {
    /// Seconds between the first two rows, 1 if fewer rows.
    #[must_use]
    pub fn sample_period(&self) -> f64 {
        if self.times.len() >= 2 {
            self.times[1] - self.times[0]
        } else {
            1.0
        }
    }

    /// Detector input in `mode`, excluding `slack`. Magnitude mode on a
    /// complex file takes `|v|` of each reading first.
    pub fn channels(&self, mode: Mode, slack: BusId) -> Result<Vec<DVector<f64>>> {
        if slack.0 == 0 || slack.0 > self.bus_count {
            return Err(GridwatchError::InvalidInput(format!("slack bus {slack} not in file")));
        }
        match (mode, self.mode) {
            (Mode::Magnitude, _) => {
                let mags: Vec<DVector<f64>> = self.readings.iter().map(|r| r.map(|c| c.norm())).collect();
                Ok(channel_increments_real(&mags, slack))
            }
            (Mode::Complex, Mode::Complex) => Ok(channel_increments_complex(&self.readings, slack)),
            (Mode::Complex, Mode::Magnitude) => {
                Err(GridwatchError::InvalidInput("complex mode needs a complex measurement file".into()))
            }
        }
    }
}

/// Reads a measurement CSV; errors name the offending line.
pub fn read_measurements_csv<R: Read>(input: R) -> Result<Measurements> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = r.headers().map_err(csv_error)?.clone();
    let cols: Vec<&str> = header.iter().collect();
    if cols.first() != Some(&"time") || cols.len() < 2 {
        return Err(GridwatchError::MalformedRow { row: 1, message: "header must start with time".into() });
    }
    let mode = if cols[1].ends_with("_re") { Mode::Complex } else { Mode::Magnitude };
    let bus_count = match mode {
        Mode::Magnitude => cols.len() - 1,
        Mode::Complex => (cols.len() - 1) / 2,
    };
    let expected_header: Vec<String> = (1..=bus_count)
        .flat_map(|b| match mode {
            Mode::Magnitude => vec![format!("bus_{b}")],
            Mode::Complex => vec![format!("bus_{b}_re"), format!("bus_{b}_im")],
        })
        .collect();
    if cols[1..] != expected_header.iter().map(String::as_str).collect::<Vec<_>>()[..] {
        return Err(GridwatchError::MalformedRow { row: 1, message: "unexpected bus columns".into() });
    }
    let mut times = Vec::new();
    let mut readings = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_error)?;
        let row = rec.position().map_or(0, |p| p.line() as usize);
        let values: Vec<f64> = rec
            .iter()
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| GridwatchError::MalformedRow { row, message: format!("bad number: {e}") })?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(GridwatchError::MalformedRow { row, message: "non-finite value".into() });
        }
        times.push(values[0]);
        readings.push(match mode {
            Mode::Magnitude => DVector::from_iterator(bus_count, values[1..].iter().map(|&v| Complex64::new(v, 0.0))),
            Mode::Complex => DVector::from_fn(bus_count, |b, _| Complex64::new(values[1 + 2 * b], values[2 + 2 * b])),
        });
    }
    if readings.len() < 2 {
        return Err(GridwatchError::MalformedRow {
            row: readings.len() + 1,
            message: "need at least two readings".into(),
        });
    }
    Ok(Measurements { mode, bus_count, times, readings })
}
