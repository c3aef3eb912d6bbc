//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::VecDeque;

use gridwatch::detect::GeometricPrior;
use gridwatch::grid::{BusId, GridTopology};
use gridwatch::powerflow::PowerInjection;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random symmetric positive-definite matrix `A A^T + c I`.
pub fn random_spd(rng: &mut ChaCha8Rng, n: usize, c: f64) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    &a * a.transpose() + DMatrix::identity(n, n) * c
}

pub fn random_vector(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-scale..scale))
}

/// Standard normal via Box-Muller, independent of the library's sampler.
pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.random_range(f64::EPSILON..1.0);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Draw from `N(mean, cov)` through a dense Cholesky factor.
pub fn gaussian_draw(rng: &mut ChaCha8Rng, mean: &DVector<f64>, cov: &DMatrix<f64>) -> DVector<f64> {
    let l = cov.clone().cholesky().expect("spd").l();
    let z = DVector::from_fn(mean.len(), |_, _| normal(rng));
    mean + l * z
}

/// Log-density by determinant and explicit inverse.
pub fn dense_log_density(mean: &DVector<f64>, cov: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    let k = mean.len() as f64;
    let inv = cov.clone().try_inverse().expect("invertible");
    let d = x - mean;
    let q = (d.transpose() * inv * &d)[(0, 0)];
    -0.5 * (k * (2.0 * std::f64::consts::PI).ln() + cov.determinant().ln() + q)
}

/// Post-change MLE written as the double sums over change times.
pub fn mle_double_sum(prior: &GeometricPrior, xs: &[DVector<f64>]) -> (DVector<f64>, DMatrix<f64>) {
    let n = xs.len();
    let d = xs[0].len();
    let pi = |k: usize| prior.rho() * (1.0 - prior.rho()).powi(k as i32 - 1);
    let mut num = DVector::zeros(d);
    let mut den = 0.0;
    for k in 1..=n {
        for x in &xs[k - 1..] {
            num += x * pi(k);
        }
        den += pi(k) * (n - k + 1) as f64;
    }
    let mu = num / den;
    let mut s = DMatrix::zeros(d, d);
    for k in 1..=n {
        for x in &xs[k - 1..] {
            let c = x - &mu;
            s += &c * c.transpose() * pi(k);
        }
    }
    (mu, s / den)
}

/// Hop distances over in-service branches; `usize::MAX` when unreachable.
pub fn hop_distances(topology: &GridTopology) -> Vec<Vec<usize>> {
    let m = topology.bus_count();
    let mut adj = vec![Vec::new(); m];
    for b in topology.in_service() {
        adj[b.from.index()].push(b.to.index());
        adj[b.to.index()].push(b.from.index());
    }
    (0..m)
        .map(|s| {
            let mut dist = vec![usize::MAX; m];
            dist[s] = 0;
            let mut q = VecDeque::from([s]);
            while let Some(u) = q.pop_front() {
                for &v in &adj[u] {
                    if dist[v] == usize::MAX {
                        dist[v] = dist[u] + 1;
                        q.push_back(v);
                    }
                }
            }
            dist
        })
        .collect()
}

/// True when `i` and `k` share a neighbour other than the slack bus.
pub fn common_non_slack_neighbour(topology: &GridTopology, i: BusId, k: BusId) -> bool {
    let nb = |x: BusId| -> Vec<usize> {
        topology
            .in_service()
            .filter_map(|b| {
                if b.from == x {
                    Some(b.to.0)
                } else if b.to == x {
                    Some(b.from.0)
                } else {
                    None
                }
            })
            .collect()
    };
    let ni = nb(i);
    nb(k).iter().any(|e| ni.contains(e) && *e != topology.slack().0)
}

/// Nodal admittance by explicit neighbour summation.
pub fn nodal_by_neighbours(topology: &GridTopology) -> DMatrix<Complex64> {
    let m = topology.bus_count();
    DMatrix::from_fn(m, m, |i, k| {
        let (bi, bk) = (BusId(i + 1), BusId(k + 1));
        if i == k {
            topology.in_service().filter(|b| b.from == bi || b.to == bi).map(|b| b.admittance).sum()
        } else {
            topology.branch(bi, bk).filter(|b| b.in_service).map_or(Complex64::new(0.0, 0.0), |b| -b.admittance)
        }
    })
}

/// Gauss-Seidel fixed point `V_i = (conj(S_i / V_i) - sum_{k != i} Y_ik V_k) / Y_ii`.
pub fn gauss_seidel(topology: &GridTopology, injections: &[PowerInjection]) -> Vec<Complex64> {
    let y = nodal_by_neighbours(topology);
    let m = topology.bus_count();
    let slack = topology.slack().index();
    let mut v = vec![Complex64::new(1.0, 0.0); m];
    for _ in 0..100_000 {
        let mut change: f64 = 0.0;
        for i in 0..m {
            if i == slack {
                continue;
            }
            let s = Complex64::new(injections[i].p, injections[i].q);
            let mut acc = (s / v[i]).conj();
            for k in 0..m {
                if k != i {
                    acc -= y[(i, k)] * v[k];
                }
            }
            let new = acc / y[(i, i)];
            change = change.max((new - v[i]).norm());
            v[i] = new;
        }
        if change < 1e-14 {
            break;
        }
    }
    v
}

/// Relative max-norm difference with a floor on the denominator.
pub fn rel_diff(a: &DMatrix<f64>, b: &DMatrix<f64>, floor: f64) -> f64 {
    (a - b).amax() / b.amax().max(floor)
}
