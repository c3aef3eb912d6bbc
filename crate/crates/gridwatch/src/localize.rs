//! Outage localization from the collapse of conditional correlations.
//!
//! For a pair `I = {i, j}` and the remaining meters `J`, the conditional
//! covariance is the Schur complement `S_II - S_IJ S_JJ^-1 S_JI`. A branch
//! whose endpoints go from correlated to uncorrelated is reported as out of
//! service. No topology is needed.

use std::io::Write;

use nalgebra::{Cholesky, DMatrix, Dyn, Matrix2};
use serde::{Deserialize, Serialize};

use crate::error::{GridwatchError, Result};

pub const DEFAULT_EPS_CONN: f64 = 0.1;
pub const DEFAULT_EPS_ZERO: f64 = 0.02;
/// Relative variance below which a channel counts as dead.
pub const DEAD_VARIANCE: f64 = 1e-6;

/// Where a covariance came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CovarianceSource {
    Sigma0,
    TrueSigma1,
    EstimatedSigma1 { samples: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConditionalCovariance {
    /// Channel indices, `i < j`.
    pub pair: (usize, usize),
    pub matrix: Matrix2<f64>,
    pub source: CovarianceSource,
}

fn cholesky_regularized(m: DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    if let Some(c) = Cholesky::new(m.clone()) {
        return Ok(c);
    }
    let n = m.nrows().max(1);
    let trace = m.trace();
    let mut jitter = if trace > 0.0 { 1e-8 * trace / n as f64 } else { f64::MIN_POSITIVE.sqrt() };
    for _ in 0..8 {
        if let Some(c) = Cholesky::new(&m + DMatrix::identity(n, n) * jitter) {
            return Ok(c);
        }
        jitter *= 10.0;
    }
    Err(GridwatchError::Singular(format!("{n}x{n} conditioning block")))
}

fn check_square(sigma: &DMatrix<f64>) -> Result<()> {
    if sigma.nrows() != sigma.ncols() {
        return Err(GridwatchError::DimensionMismatch { expected: sigma.nrows(), got: sigma.ncols() });
    }
    if sigma.iter().any(|v| !v.is_finite()) {
        return Err(GridwatchError::InvalidInput("non-finite covariance".into()));
    }
    Ok(())
}

/// Schur complement of the pair `(i, j)` given every other channel.
pub fn conditional_cov(
    sigma: &DMatrix<f64>,
    pair: (usize, usize),
    source: CovarianceSource,
) -> Result<ConditionalCovariance> {
    check_square(sigma)?;
    let n = sigma.nrows();
    let (i, j) = (pair.0.min(pair.1), pair.0.max(pair.1));
    if i == j || j >= n {
        return Err(GridwatchError::InvalidInput(format!("invalid pair ({i}, {j}) for {n} channels")));
    }
    let rest: Vec<usize> = (0..n).filter(|&c| c != i && c != j).collect();
    let s_ii = Matrix2::new(sigma[(i, i)], sigma[(i, j)], sigma[(j, i)], sigma[(j, j)]);
    let matrix = if rest.is_empty() {
        s_ii
    } else {
        let s_jj = sigma.select_rows(&rest).select_columns(&rest);
        let s_ji = sigma.select_rows(&rest).select_columns(&[i, j]);
        let solved = cholesky_regularized(s_jj)?.solve(&s_ji);
        let corr = s_ji.transpose() * solved;
        s_ii - Matrix2::new(corr[(0, 0)], corr[(0, 1)], corr[(1, 0)], corr[(1, 1)])
    };
    let matrix = (matrix + matrix.transpose()) * 0.5;
    Ok(ConditionalCovariance { pair: (i, j), matrix, source })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ConditionalCorrelation {
    pub rho: f64,
    /// A conditional variance was not positive (dead meter); `rho` is 0.
    pub dead: bool,
}

#[must_use]
pub fn conditional_corr(cc: &ConditionalCovariance) -> ConditionalCorrelation {
    let (a, b) = (cc.matrix[(0, 0)], cc.matrix[(1, 1)]);
    if !(a > 0.0 && b > 0.0) {
        return ConditionalCorrelation { rho: 0.0, dead: true };
    }
    ConditionalCorrelation { rho: (cc.matrix[(0, 1)] / (a * b).sqrt()).clamp(-1.0, 1.0), dead: false }
}

/// Leading `K x K` block (real parts) of a stacked `[Re; Im]` covariance.
#[must_use]
pub fn real_part_block(sigma: &DMatrix<f64>) -> DMatrix<f64> {
    let k = sigma.nrows() / 2;
    sigma.view((0, 0), (k, k)).into_owned()
}

/// All conditional correlations at once, `rho_ij = -P_ij / sqrt(P_ii P_jj)`
/// with `P = S^-1`, which equals the Schur-complement route pair by pair.
/// Channels whose variance is below `DEAD_VARIANCE` of the largest are
/// dropped before inversion and reported as dead; this also catches dead
/// channels that only carry regularization jitter.
#[allow(clippy::neg_cmp_op_on_partial_ord)] // NaN variance counts as dead
pub fn partial_correlations(sigma: &DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<bool>)> {
    check_square(sigma)?;
    let n = sigma.nrows();
    let max_var = sigma.diagonal().amax();
    let dead: Vec<bool> = (0..n).map(|i| !(sigma[(i, i)] > DEAD_VARIANCE * max_var)).collect();
    let alive: Vec<usize> = (0..n).filter(|&i| !dead[i]).collect();
    let mut rho = DMatrix::zeros(n, n);
    if alive.len() >= 2 {
        let sub = sigma.select_rows(&alive).select_columns(&alive);
        let sub = (&sub + sub.transpose()) * 0.5;
        let p = cholesky_regularized(sub)?.inverse();
        for (a, &i) in alive.iter().enumerate() {
            for (b, &j) in alive.iter().enumerate() {
                if a != b {
                    rho[(i, j)] = (-p[(a, b)] / (p[(a, a)] * p[(b, b)]).sqrt()).clamp(-1.0, 1.0);
                }
            }
        }
    }
    for i in 0..n {
        rho[(i, i)] = 1.0;
    }
    Ok((rho, dead))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalizeOptions {
    pub eps_conn: f64,
    pub eps_zero: f64,
    /// Bus number per channel; defaults to `1..=K`.
    pub labels: Option<Vec<usize>>,
    pub source: CovarianceSource,
}

impl Default for LocalizeOptions {
    fn default() -> Self {
        Self {
            eps_conn: DEFAULT_EPS_CONN,
            eps_zero: DEFAULT_EPS_ZERO,
            labels: None,
            source: CovarianceSource::TrueSigma1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairCorrelation {
    pub bus_i: usize,
    pub bus_j: usize,
    pub rho_pre: f64,
    pub rho_post: f64,
    pub dead: bool,
}

impl PairCorrelation {
    #[must_use]
    pub fn drop(&self) -> f64 {
        self.rho_pre.abs() - self.rho_post.abs()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalizationReport {
    pub eps_conn: f64,
    pub eps_zero: f64,
    pub source: CovarianceSource,
    pub labels: Vec<usize>,
    /// Every pair in lexicographic order.
    pub pairs: Vec<PairCorrelation>,
    /// Pairs with `|rho_pre| > eps_conn` and `|rho_post| < eps_zero`, largest
    /// drop first.
    pub candidates: Vec<(usize, usize)>,
    /// Every pair ordered by `|rho_pre| - |rho_post|`, largest first.
    pub ranking: Vec<(usize, usize)>,
    /// Channels with zero post-change variance.
    pub dead_buses: Vec<usize>,
    /// Groups of buses linked by non-negligible post-change correlation;
    /// more than one group signals islanding.
    pub post_groups: Vec<Vec<usize>>,
}

pub fn localize(sigma0: &DMatrix<f64>, sigma1: &DMatrix<f64>, options: &LocalizeOptions) -> Result<LocalizationReport> {
    let n = sigma0.nrows();
    if sigma1.nrows() != n {
        return Err(GridwatchError::DimensionMismatch { expected: n, got: sigma1.nrows() });
    }
    let labels = options.labels.clone().unwrap_or_else(|| (1..=n).collect());
    if labels.len() != n {
        return Err(GridwatchError::DimensionMismatch { expected: n, got: labels.len() });
    }
    let (pre, dead_pre) = partial_correlations(sigma0)?;
    let (post, dead_post) = partial_correlations(sigma1)?;

    let mut pairs = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            pairs.push(PairCorrelation {
                bus_i: labels[i],
                bus_j: labels[j],
                rho_pre: pre[(i, j)],
                rho_post: post[(i, j)],
                dead: dead_pre[i] || dead_pre[j] || dead_post[i] || dead_post[j],
            });
        }
    }
    let mut order: Vec<&PairCorrelation> = pairs.iter().collect();
    order.sort_by(|a, b| b.drop().total_cmp(&a.drop()).then((a.bus_i, a.bus_j).cmp(&(b.bus_i, b.bus_j))));
    let ranking: Vec<(usize, usize)> = order.iter().map(|p| (p.bus_i, p.bus_j)).collect();
    let candidates = order
        .iter()
        .filter(|p| p.rho_pre.abs() > options.eps_conn && p.rho_post.abs() < options.eps_zero)
        .map(|p| (p.bus_i, p.bus_j))
        .collect();

    let mut group: Vec<usize> = (0..n).collect();
    fn root(g: &mut [usize], mut x: usize) -> usize {
        while g[x] != x {
            g[x] = g[g[x]];
            x = g[x];
        }
        x
    }
    for i in 0..n {
        for j in i + 1..n {
            if !dead_post[i] && !dead_post[j] && post[(i, j)].abs() >= options.eps_zero {
                let (a, b) = (root(&mut group, i), root(&mut group, j));
                group[a.max(b)] = a.min(b);
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for (i, &label) in labels.iter().enumerate() {
        let r = root(&mut group, i);
        groups.entry(r).or_default().push(label);
    }

    Ok(LocalizationReport {
        eps_conn: options.eps_conn,
        eps_zero: options.eps_zero,
        source: options.source,
        dead_buses: (0..n).filter(|&i| dead_post[i]).map(|i| labels[i]).collect(),
        post_groups: groups.into_values().collect(),
        labels,
        pairs,
        candidates,
        ranking,
    })
}

/// Heatmap rows `bus_i,bus_j,abs_rho_pre,abs_rho_post` for every pair.
pub fn write_heatmap_csv<W: Write>(report: &LocalizationReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| GridwatchError::Io(std::io::Error::other(e));
    w.write_record(["bus_i", "bus_j", "abs_rho_pre", "abs_rho_post"]).map_err(io)?;
    for p in &report.pairs {
        w.write_record(&[
            p.bus_i.to_string(),
            p.bus_j.to_string(),
            format!("{}", p.rho_pre.abs()),
            format!("{}", p.rho_post.abs()),
        ])
        .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}
