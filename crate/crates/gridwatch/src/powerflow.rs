//! AC power flow and the linear voltage sensitivity to current injections.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{GridwatchError, Result};
use crate::grid::{build_admittance, reduced_admittance, BusId, GridTopology};

/// Net complex power injected into the grid at a bus, p.u. Loads are negative.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PowerInjection {
    pub p: f64,
    pub q: f64,
}

impl PowerInjection {
    /// Injection of a load consuming `p + jq`.
    #[must_use]
    pub fn load(p: f64, q: f64) -> Self {
        Self { p: -p, q: -q }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexVoltage {
    pub magnitude: f64,
    pub angle: f64,
}

impl ComplexVoltage {
    #[must_use]
    pub fn phasor(&self) -> Complex64 {
        Complex64::from_polar(self.magnitude, self.angle)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerFlowSolution {
    pub voltages: Vec<ComplexVoltage>,
    pub iterations: usize,
    pub max_mismatch: f64,
}

impl PowerFlowSolution {
    #[must_use]
    pub fn phasors(&self) -> DVector<Complex64> {
        DVector::from_iterator(self.voltages.len(), self.voltages.iter().map(ComplexVoltage::phasor))
    }
}

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 50;

/// Newton-Raphson in polar coordinates from a flat start. Every non-slack bus
/// is PQ. `iterations` counts mismatch evaluations, so a flat-start solution
/// reports 1.
pub fn solve_ac(
    topology: &GridTopology,
    injections: &[PowerInjection],
    tol: f64,
    max_iter: usize,
) -> Result<PowerFlowSolution> {
    let m = topology.bus_count();
    if injections.len() != m {
        return Err(GridwatchError::DimensionMismatch { expected: m, got: injections.len() });
    }
    if injections.iter().any(|s| !(s.p.is_finite() && s.q.is_finite())) {
        return Err(GridwatchError::InvalidInput("non-finite power injection".into()));
    }
    let ybus = build_admittance(topology)?.nodal();
    // Fails on any island without the slack bus.
    reduced_admittance(&build_admittance(topology)?, topology.slack())?;

    let pq: Vec<usize> = topology.non_slack().iter().map(|b| b.index()).collect();
    let k = pq.len();
    let mut vm = vec![1.0; m];
    let mut va = vec![0.0; m];
    let mut iterations = 0;
    let mut mismatch = f64::INFINITY;

    while iterations < max_iter {
        iterations += 1;
        let v = DVector::from_fn(m, |i, _| Complex64::from_polar(vm[i], va[i]));
        let ibus = &ybus * &v;
        let s_calc = DVector::from_fn(m, |i, _| v[i] * ibus[i].conj());
        let mut f = DVector::zeros(2 * k);
        for (r, &i) in pq.iter().enumerate() {
            f[r] = injections[i].p - s_calc[i].re;
            f[k + r] = injections[i].q - s_calc[i].im;
        }
        mismatch = f.amax();
        if !mismatch.is_finite() {
            break;
        }
        if mismatch <= tol {
            let voltages = (0..m).map(|i| ComplexVoltage { magnitude: vm[i], angle: va[i] }).collect();
            return Ok(PowerFlowSolution { voltages, iterations, max_mismatch: mismatch });
        }
        if iterations == max_iter {
            break;
        }
        let jac = jacobian(&ybus, &v, &ibus, &pq);
        let dx = jac.lu().solve(&f).ok_or_else(|| GridwatchError::Singular("power flow Jacobian".into()))?;
        for (r, &i) in pq.iter().enumerate() {
            va[i] += dx[r];
            vm[i] += dx[k + r];
        }
    }
    Err(GridwatchError::NotConverged { iterations, mismatch })
}

/// Jacobian of `[P; Q]` with respect to `[angle; magnitude]` at the PQ buses.
fn jacobian(
    ybus: &DMatrix<Complex64>,
    v: &DVector<Complex64>,
    ibus: &DVector<Complex64>,
    pq: &[usize],
) -> DMatrix<f64> {
    let k = pq.len();
    let j = Complex64::new(0.0, 1.0);
    let mut jac = DMatrix::zeros(2 * k, 2 * k);
    for (r, &i) in pq.iter().enumerate() {
        for (c, &n) in pq.iter().enumerate() {
            let unit = v[n] / v[n].norm();
            let mut ds_da = -j * v[i] * (ybus[(i, n)] * v[n]).conj();
            let mut ds_dm = v[i] * (ybus[(i, n)] * unit).conj();
            if i == n {
                ds_da += j * v[i] * ibus[i].conj();
                ds_dm += ibus[i].conj() * unit;
            }
            jac[(r, c)] = ds_da.re;
            jac[(k + r, c)] = ds_da.im;
            jac[(r, k + c)] = ds_dm.re;
            jac[(k + r, k + c)] = ds_dm.im;
        }
    }
    jac
}

/// `Z = Y_red^-1` for a grid whose every bus is connected to the slack.
pub fn linear_sensitivity(topology: &GridTopology) -> Result<DMatrix<Complex64>> {
    let yred = reduced_admittance(&build_admittance(topology)?, topology.slack())?;
    yred.try_inverse().ok_or_else(|| GridwatchError::Singular("reduced admittance matrix".into()))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Island {
    pub buses: Vec<BusId>,
    /// Slack bus or designated DER reference; `None` for a dead island.
    pub reference: Option<BusId>,
}

/// Sensitivity of a possibly islanded grid, indexed like
/// [`GridTopology::non_slack`]. Rows and columns of dead buses are zero.
#[derive(Clone, Debug, PartialEq)]
pub struct IslandSensitivity {
    pub z: DMatrix<Complex64>,
    pub islands: Vec<Island>,
    pub dead: Vec<BusId>,
}

/// Per-island sensitivity. An island without the slack bus is referenced at
/// its lowest-numbered DER bus in `der_buses`, modelled as a source behind
/// `der_admittance`; islands with no DER are dead.
pub fn island_sensitivity(
    topology: &GridTopology,
    der_buses: &[BusId],
    der_admittance: Complex64,
) -> Result<IslandSensitivity> {
    let slack = topology.slack();
    let mut yred = build_admittance(topology)?.nodal().remove_row(slack.index()).remove_column(slack.index());
    let mut islands = Vec::new();
    let mut dead = Vec::new();
    for comp in topology.components() {
        let reference =
            if comp.contains(&slack) { Some(slack) } else { comp.iter().copied().find(|b| der_buses.contains(b)) };
        match reference {
            Some(r) if r != slack => {
                if der_admittance == Complex64::new(0.0, 0.0) {
                    return Err(GridwatchError::InvalidInput("DER reference admittance is zero".into()));
                }
                let c = topology.channel(r).expect("non-slack");
                yred[(c, c)] += der_admittance;
            }
            Some(_) => {}
            None => dead.extend(comp.iter().copied()),
        }
        islands.push(Island { buses: comp, reference });
    }
    let alive: Vec<usize> = topology
        .non_slack()
        .iter()
        .filter(|b| !dead.contains(b))
        .map(|&b| topology.channel(b).expect("non-slack"))
        .collect();
    let sub = yred.select_rows(&alive).select_columns(&alive);
    let zsub = sub.try_inverse().ok_or_else(|| GridwatchError::Singular("islanded admittance matrix".into()))?;
    let k = topology.bus_count() - 1;
    let mut z = DMatrix::from_element(k, k, Complex64::new(0.0, 0.0));
    for (a, &i) in alive.iter().enumerate() {
        for (b, &j) in alive.iter().enumerate() {
            z[(i, j)] = zsub[(a, b)];
        }
    }
    Ok(IslandSensitivity { z, islands, dead })
}
