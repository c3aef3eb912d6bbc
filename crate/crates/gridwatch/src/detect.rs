//! Bayesian quickest change detection with a geometric prior on the change
//! time, a `1 - alpha` posterior stopping rule and an online maximum
//! likelihood estimate of the post-change Gaussian.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::digamma;

use crate::error::{GridwatchError, Result};
use crate::simulate::Mode;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

// ---------------------------------------------------------------------------
// Gaussian model
// ---------------------------------------------------------------------------

/// Multivariate normal with a cached Cholesky factor.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "GaussianModelData", into = "GaussianModelData")]
pub struct GaussianModel {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    log_det: f64,
    jitter: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct GaussianModelData {
    mean: Vec<f64>,
    cov: Vec<Vec<f64>>,
    #[serde(default)]
    jitter: f64,
}

impl TryFrom<GaussianModelData> for GaussianModel {
    type Error = GridwatchError;

    fn try_from(d: GaussianModelData) -> Result<Self> {
        let n = d.mean.len();
        if d.cov.len() != n || d.cov.iter().any(|r| r.len() != n) {
            return Err(GridwatchError::InvalidInput("covariance shape does not match mean".into()));
        }
        let cov = DMatrix::from_fn(n, n, |i, j| d.cov[i][j]);
        Self::with_jitter(DVector::from_vec(d.mean), cov, d.jitter)
    }
}

impl From<GaussianModel> for GaussianModelData {
    fn from(m: GaussianModel) -> Self {
        let n = m.dim();
        let base = &m.cov - DMatrix::identity(n, n) * m.jitter;
        Self {
            mean: m.mean.iter().copied().collect(),
            cov: (0..n).map(|i| base.row(i).iter().copied().collect()).collect(),
            jitter: m.jitter,
        }
    }
}

impl GaussianModel {
    /// Fails unless `cov` is symmetric positive definite.
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        Self::with_jitter(mean, cov, 0.0)
    }

    fn with_jitter(mean: DVector<f64>, cov: DMatrix<f64>, jitter: f64) -> Result<Self> {
        let n = mean.len();
        if n == 0 || cov.nrows() != n || cov.ncols() != n {
            return Err(GridwatchError::DimensionMismatch { expected: n, got: cov.nrows() });
        }
        if mean.iter().chain(cov.iter()).any(|v| !v.is_finite()) {
            return Err(GridwatchError::InvalidInput("non-finite Gaussian parameters".into()));
        }
        let scale = cov.amax().max(f64::MIN_POSITIVE);
        if (&cov - cov.transpose()).amax() > 1e-9 * scale {
            return Err(GridwatchError::NotPositiveDefinite("covariance is not symmetric".into()));
        }
        let mut cov = (&cov + cov.transpose()) * 0.5;
        cov += DMatrix::identity(n, n) * jitter;
        let chol = Cholesky::new(cov.clone())
            .ok_or_else(|| GridwatchError::NotPositiveDefinite(format!("{n}x{n} covariance")))?;
        let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        Ok(Self { mean, cov, chol, log_det, jitter })
    }

    /// Adds a diagonal jitter of `1e-8 * trace / d` (growing tenfold while
    /// needed) when `cov` is not positive definite.
    pub fn regularized(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        if let Ok(m) = Self::new(mean.clone(), cov.clone()) {
            return Ok(m);
        }
        let n = cov.nrows().max(1);
        let trace = cov.trace();
        let mut jitter = if trace > 0.0 { 1e-8 * trace / n as f64 } else { f64::MIN_POSITIVE.sqrt() };
        for _ in 0..8 {
            if let Ok(m) = Self::with_jitter(mean.clone(), cov.clone(), jitter) {
                return Ok(m);
            }
            jitter *= 10.0;
        }
        Err(GridwatchError::NotPositiveDefinite("covariance even after regularization".into()))
    }

    /// Sample mean and (1/n) sample covariance, regularized if needed.
    pub fn fit(samples: &[DVector<f64>]) -> Result<Self> {
        let mut acc = WeightedMoments::new(
            samples.first().ok_or_else(|| GridwatchError::InvalidInput("no samples to fit".into()))?.len(),
        );
        for x in samples {
            acc.push(x, 1.0)?;
        }
        Self::regularized(acc.mean().clone(), acc.covariance())
    }

    #[must_use]
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    #[must_use]
    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    /// Covariance including any regularization jitter.
    #[must_use]
    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// Diagonal jitter added by [`GaussianModel::regularized`], 0 if none.
    #[must_use]
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    #[must_use]
    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    #[must_use]
    pub fn precision(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }

    /// `L^-1 v` for the lower Cholesky factor `L`.
    fn whiten(&self, v: &DVector<f64>) -> DVector<f64> {
        self.chol.l_dirty().solve_lower_triangular(v).expect("Cholesky diagonal is positive")
    }

    pub fn log_density(&self, x: &DVector<f64>) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(GridwatchError::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        let z = self.whiten(&(x - &self.mean));
        Ok(-0.5 * (self.dim() as f64 * LN_2PI + self.log_det + z.norm_squared()))
    }
}

pub fn log_density(model: &GaussianModel, x: &DVector<f64>) -> Result<f64> {
    model.log_density(x)
}

/// Closed-form `KL(f || g)` between Gaussians.
pub fn kl_divergence(f: &GaussianModel, g: &GaussianModel) -> Result<f64> {
    let k = f.dim();
    if g.dim() != k {
        return Err(GridwatchError::DimensionMismatch { expected: k, got: g.dim() });
    }
    let lf = f.chol.l();
    let a = g.chol.l_dirty().solve_lower_triangular(&lf).expect("Cholesky diagonal is positive");
    let m = g.whiten(&(f.mean() - g.mean()));
    let kl = 0.5 * (a.norm_squared() + m.norm_squared() - k as f64 + g.log_det - f.log_det);
    Ok(kl.max(0.0))
}

/// Asymptotic detection delay `|ln alpha| / (-ln(1 - rho) + kl)`.
#[allow(clippy::neg_cmp_op_on_partial_ord)] // rejects NaN
pub fn delay_bound(alpha: f64, rho: f64, kl: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) || !(rho > 0.0 && rho < 1.0) || !(kl >= 0.0) {
        return Err(GridwatchError::InvalidInput(format!(
            "delay bound needs alpha, rho in (0,1) and kl >= 0; got {alpha}, {rho}, {kl}"
        )));
    }
    let denom = -(-rho).ln_1p() + kl;
    Ok(if denom > 0.0 { alpha.ln().abs() / denom } else { f64::INFINITY })
}

// ---------------------------------------------------------------------------
// Prior and posterior
// ---------------------------------------------------------------------------

/// `pi(k) = rho (1 - rho)^(k - 1)` for `k >= 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometricPrior {
    rho: f64,
}

impl GeometricPrior {
    pub fn new(rho: f64) -> Result<Self> {
        if rho > 0.0 && rho < 1.0 {
            Ok(Self { rho })
        } else {
            Err(GridwatchError::InvalidInput(format!("rho must be in (0,1), got {rho}")))
        }
    }

    #[must_use]
    pub fn rho(&self) -> f64 {
        self.rho
    }

    fn ln_keep(&self) -> f64 {
        (-self.rho).ln_1p()
    }

    #[must_use]
    pub fn ln_pmf(&self, k: usize) -> f64 {
        self.rho.ln() + (k as f64 - 1.0) * self.ln_keep()
    }

    /// `P(lambda <= n)`.
    #[must_use]
    pub fn cdf(&self, n: usize) -> f64 {
        -(n as f64 * self.ln_keep()).exp_m1()
    }

    /// `ln P(lambda > n)`.
    #[must_use]
    pub fn ln_survival(&self, n: usize) -> f64 {
        n as f64 * self.ln_keep()
    }

    /// Log-odds of the prior CDF at `n`.
    #[must_use]
    pub fn ln_odds(&self, n: usize) -> f64 {
        if n == 0 {
            return f64::NEG_INFINITY;
        }
        self.cdf(n).ln() - self.ln_survival(n)
    }
}

fn log_sum_exp(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Posterior `P(lambda <= N)` from its log-odds.
#[must_use]
pub fn posterior_from_log_odds(lo: f64) -> f64 {
    (-softplus(-lo)).exp()
}

/// `P(lambda > N)` from the log-odds, accurate when it is tiny.
#[must_use]
pub fn complementary_from_log_odds(lo: f64) -> f64 {
    (-softplus(lo)).exp()
}

/// Stopping threshold on the log-odds for false-alarm budget `alpha`.
#[must_use]
pub fn stop_threshold(alpha: f64) -> f64 {
    (-alpha).ln_1p() - alpha.ln()
}

fn log_densities(model: &GaussianModel, xs: &[DVector<f64>]) -> Result<Vec<f64>> {
    xs.iter().map(|x| model.log_density(x)).collect()
}

/// Unnormalised log-weights of `lambda = k` for `k = 1..=N+1`; the last entry
/// is the no-change hypothesis with prior mass `P(lambda > N)`.
fn hypothesis_log_weights(prior: &GeometricPrior, lg: &[f64], lf: &[f64]) -> Vec<f64> {
    let n = lg.len();
    let mut weights = Vec::with_capacity(n + 1);
    let g_total: f64 = lg.iter().sum();
    // Prefix of g plus suffix of f, built from the back.
    let mut suffix_f = 0.0;
    let mut suffix = vec![0.0; n + 1];
    for k in (0..n).rev() {
        suffix_f += lf[k];
        suffix[k] = suffix_f;
    }
    let mut prefix_g = 0.0;
    for k in 0..n {
        weights.push(prior.ln_pmf(k + 1) + prefix_g + suffix[k]);
        prefix_g += lg[k];
    }
    weights.push(prior.ln_survival(n) + g_total);
    weights
}

/// Log-odds `ln P(lambda <= N | x) - ln P(lambda > N | x)` by direct summation.
pub fn log_odds_direct(
    prior: &GeometricPrior,
    g: &GaussianModel,
    f: &GaussianModel,
    xs: &[DVector<f64>],
) -> Result<f64> {
    let w = hypothesis_log_weights(prior, &log_densities(g, xs)?, &log_densities(f, xs)?);
    let n = xs.len();
    Ok(log_sum_exp(w[..n].iter().copied()) - w[n])
}

/// `P(lambda <= N | x_1..x_N)` by direct summation over every change time.
pub fn posterior_direct(
    prior: &GeometricPrior,
    g: &GaussianModel,
    f: &GaussianModel,
    xs: &[DVector<f64>],
) -> Result<f64> {
    if xs.is_empty() {
        return Err(GridwatchError::InvalidInput("posterior needs at least one sample".into()));
    }
    Ok(posterior_from_log_odds(log_odds_direct(prior, g, f, xs)?))
}

/// Full posterior `P(lambda = k | x)` for `k = 1..=N+1`.
pub fn posterior_vector(
    prior: &GeometricPrior,
    g: &GaussianModel,
    f: &GaussianModel,
    xs: &[DVector<f64>],
) -> Result<Vec<f64>> {
    let w = hypothesis_log_weights(prior, &log_densities(g, xs)?, &log_densities(f, xs)?);
    let total = log_sum_exp(w.iter().copied());
    Ok(w.iter().map(|v| (v - total).exp()).collect())
}

// ---------------------------------------------------------------------------
// Post-change MLE
// ---------------------------------------------------------------------------

/// Weighted mean and comoment, updated one sample at a time.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedMoments {
    weight_sum: f64,
    weight_sq_sum: f64,
    mean: DVector<f64>,
    comoment: DMatrix<f64>,
    count: usize,
}

impl WeightedMoments {
    #[must_use]
    pub fn new(dim: usize) -> Self {
        Self {
            weight_sum: 0.0,
            weight_sq_sum: 0.0,
            mean: DVector::zeros(dim),
            comoment: DMatrix::zeros(dim, dim),
            count: 0,
        }
    }

    pub fn push(&mut self, x: &DVector<f64>, w: f64) -> Result<()> {
        if x.len() != self.mean.len() {
            return Err(GridwatchError::DimensionMismatch { expected: self.mean.len(), got: x.len() });
        }
        self.count += 1;
        if w <= 0.0 {
            return Ok(());
        }
        self.weight_sum += w;
        self.weight_sq_sum += w * w;
        let delta = x - &self.mean;
        let share = w / self.weight_sum;
        self.mean.axpy(share, &delta, 1.0);
        self.comoment.ger(w * (1.0 - share), &delta, &delta, 1.0);
        Ok(())
    }

    #[must_use]
    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    /// Weighted covariance normalised by the weight sum.
    #[must_use]
    pub fn covariance(&self) -> DMatrix<f64> {
        if self.weight_sum > 0.0 {
            &self.comoment / self.weight_sum
        } else {
            self.comoment.clone()
        }
    }

    #[must_use]
    pub fn weight_sum(&self) -> f64 {
        self.weight_sum
    }

    /// Kish effective sample size `(sum w)^2 / sum w^2`.
    #[must_use]
    pub fn effective_samples(&self) -> f64 {
        if self.weight_sq_sum > 0.0 {
            self.weight_sum * self.weight_sum / self.weight_sq_sum
        } else {
            0.0
        }
    }

    #[must_use]
    pub fn count(&self) -> usize {
        self.count
    }
}

/// Current post-change estimate.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MleEstimate {
    pub model: GaussianModel,
    pub samples: usize,
    pub effective_samples: f64,
    /// Too few effective samples for a full-rank covariance.
    pub immature: bool,
}

/// Online MLE of the post-change mean and covariance. Sample `n` gets weight
/// `P(lambda <= n)`, which collapses the double sums over change times into
/// single weighted sums.
#[derive(Clone, Debug)]
pub struct MleEstimator {
    prior: GeometricPrior,
    moments: WeightedMoments,
}

impl MleEstimator {
    #[must_use]
    pub fn new(prior: GeometricPrior, dim: usize) -> Self {
        Self { prior, moments: WeightedMoments::new(dim) }
    }

    pub fn mle_update(&mut self, x: &DVector<f64>) -> Result<MleEstimate> {
        let n = self.moments.count() + 1;
        self.moments.push(x, self.prior.cdf(n))?;
        self.estimate()
    }

    #[must_use]
    pub fn mean(&self) -> &DVector<f64> {
        self.moments.mean()
    }

    #[must_use]
    pub fn covariance(&self) -> DMatrix<f64> {
        self.moments.covariance()
    }

    #[must_use]
    pub fn moments(&self) -> &WeightedMoments {
        &self.moments
    }

    pub fn estimate(&self) -> Result<MleEstimate> {
        let d = self.moments.mean().len();
        let ess = self.moments.effective_samples();
        Ok(MleEstimate {
            model: GaussianModel::regularized(self.moments.mean().clone(), self.moments.covariance())?,
            samples: self.moments.count(),
            effective_samples: ess,
            immature: ess <= (d + 1) as f64,
        })
    }
}

/// Expected in-sample log-likelihood gain of a `d`-dimensional Gaussian MLE
/// fitted to `n` samples: `(n/2) [d ln(n/2) - sum_{i=1..d} psi((n-i)/2)]`.
/// Infinite when `n <= d + 1`.
#[must_use]
pub fn optimism(n: f64, d: usize) -> f64 {
    if n <= (d + 1) as f64 {
        return f64::INFINITY;
    }
    let psi: f64 = (1..=d).map(|i| digamma((n - i as f64) / 2.0)).sum();
    0.5 * n * (d as f64 * (n / 2.0).ln() - psi)
}

// ---------------------------------------------------------------------------
// Streaming detector
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub alpha: f64,
    pub rho: f64,
    /// Training samples used to fit the pre-change model; `None` means `10 * M`.
    #[serde(default)]
    pub train_window: Option<usize>,
    pub f_known: bool,
    pub mode: Mode,
    /// Slack bus excluded from the channels (default 1).
    #[serde(default)]
    pub slack: Option<usize>,
}

#[derive(Clone, Debug)]
enum PostChange {
    Known(GaussianModel),
    Learned(Learned),
}

#[derive(Clone, Debug)]
struct Learned {
    mle: MleEstimator,
    samples: Vec<DVector<f64>>,
    lg: Vec<f64>,
    estimate: Option<MleEstimate>,
}

/// Streaming detector. Known `f` costs one density evaluation per step. With
/// learned `f` every step refreshes the MLE first, then re-scores the stored
/// stream under the new estimate, penalising each change hypothesis by the
/// estimate's expected in-sample gain.
#[derive(Clone, Debug)]
pub struct DetectorState {
    alpha: f64,
    prior: GeometricPrior,
    g: GaussianModel,
    post: PostChange,
    n: usize,
    log_odds: f64,
    trace: Vec<f64>,
    eligible: Vec<bool>,
    tau: Option<usize>,
}

impl DetectorState {
    /// `f = None` learns the post-change model from the stream.
    pub fn new(alpha: f64, prior: GeometricPrior, g: GaussianModel, f: Option<GaussianModel>) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(GridwatchError::InvalidInput(format!("alpha must be in (0,1), got {alpha}")));
        }
        let post = match f {
            Some(f) => {
                if f.dim() != g.dim() {
                    return Err(GridwatchError::DimensionMismatch { expected: g.dim(), got: f.dim() });
                }
                PostChange::Known(f)
            }
            None => PostChange::Learned(Learned {
                mle: MleEstimator::new(prior, g.dim()),
                samples: Vec::new(),
                lg: Vec::new(),
                estimate: None,
            }),
        };
        Ok(Self {
            alpha,
            prior,
            g,
            post,
            n: 0,
            log_odds: f64::NEG_INFINITY,
            trace: Vec::new(),
            eligible: Vec::new(),
            tau: None,
        })
    }

    #[must_use]
    pub fn steps(&self) -> usize {
        self.n
    }

    #[must_use]
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    #[must_use]
    pub fn prior(&self) -> &GeometricPrior {
        &self.prior
    }

    #[must_use]
    pub fn g(&self) -> &GaussianModel {
        &self.g
    }

    #[must_use]
    pub fn tau(&self) -> Option<usize> {
        self.tau
    }

    #[must_use]
    pub fn log_odds(&self) -> f64 {
        self.log_odds
    }

    #[must_use]
    pub fn posterior(&self) -> f64 {
        posterior_from_log_odds(self.log_odds)
    }

    /// Log-odds after every consumed step.
    #[must_use]
    pub fn log_odds_trace(&self) -> &[f64] {
        &self.trace
    }

    /// First step at which the rule with budget `alpha` would have stopped.
    /// Exact for every `alpha >= self.alpha()`.
    #[must_use]
    pub fn first_crossing(&self, alpha: f64) -> Option<usize> {
        let thr = stop_threshold(alpha);
        self.trace.iter().zip(&self.eligible).position(|(&lo, &ok)| ok && lo >= thr).map(|i| i + 1)
    }

    /// Latest post-change estimate when `f` is learned.
    #[must_use]
    pub fn estimate(&self) -> Option<&MleEstimate> {
        match &self.post {
            PostChange::Learned(l) => l.estimate.as_ref(),
            PostChange::Known(_) => None,
        }
    }

    /// Consumes one sample and returns the updated posterior `P(lambda <= N)`.
    pub fn posterior_step(&mut self, x: &DVector<f64>) -> Result<f64> {
        if let Some(t) = self.tau {
            return Err(GridwatchError::DetectorStopped(t));
        }
        let lg = self.g.log_density(x)?;
        let n = self.n + 1;
        let (lo, mature) = match &mut self.post {
            PostChange::Known(f) => {
                let llr = f.log_density(x)? - lg;
                let lo = log_add_exp(self.log_odds, self.prior.rho().ln()) - self.prior.ln_survival(1) + llr;
                (lo, true)
            }
            PostChange::Learned(l) => {
                let est = l.mle.mle_update(x)?;
                l.samples.push(x.clone());
                l.lg.push(lg);
                let out = if est.immature {
                    (self.prior.ln_odds(n), false)
                } else {
                    (learned_log_odds(&self.prior, &est, &l.samples, &l.lg)?, true)
                };
                l.estimate = Some(est);
                out
            }
        };
        self.n = n;
        self.log_odds = lo;
        self.trace.push(lo);
        self.eligible.push(mature);
        if mature && lo >= stop_threshold(self.alpha) {
            self.tau = Some(n);
        }
        Ok(self.posterior())
    }

    /// Runs until detection or the end of `stream`.
    pub fn detect(&mut self, stream: &[DVector<f64>], lambda_true: Option<usize>) -> Result<DetectionResult> {
        for x in stream {
            if self.tau.is_some() {
                break;
            }
            self.posterior_step(x)?;
        }
        Ok(DetectionResult::new(self.tau, lambda_true, &self.trace))
    }
}

/// Penalised plug-in log-odds for a learned post-change estimate.
fn learned_log_odds(prior: &GeometricPrior, est: &MleEstimate, xs: &[DVector<f64>], lg: &[f64]) -> Result<f64> {
    let n = xs.len();
    let d = est.model.dim();
    let gain = optimism(est.effective_samples, d);
    let weights: Vec<f64> = (1..=n).map(|k| prior.cdf(k)).collect();
    let total_weight: f64 = weights.iter().sum();
    let mut terms = vec![0.0; n];
    let mut suffix_lr = 0.0;
    let mut suffix_w = 0.0;
    for k in (0..n).rev() {
        suffix_lr += est.model.log_density(&xs[k])? - lg[k];
        suffix_w += weights[k];
        terms[k] = prior.ln_pmf(k + 1) + suffix_lr - gain * suffix_w / total_weight;
    }
    Ok(log_sum_exp(terms.into_iter()) - prior.ln_survival(n))
}

/// Outcome of running a detector over a stream.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionResult {
    pub detected: bool,
    pub tau: Option<usize>,
    pub lambda_true: Option<usize>,
    /// `tau - lambda` when detected on or after the change.
    pub delay: Option<usize>,
    /// Detected before the change.
    pub false_alarm: bool,
    pub posterior: Vec<f64>,
    pub complementary: Vec<f64>,
}

impl DetectionResult {
    #[must_use]
    pub fn new(tau: Option<usize>, lambda_true: Option<usize>, log_odds: &[f64]) -> Self {
        let false_alarm = matches!((tau, lambda_true), (Some(t), Some(l)) if t < l);
        let delay = match (tau, lambda_true) {
            (Some(t), Some(l)) if t >= l => Some(t - l),
            _ => None,
        };
        Self {
            detected: tau.is_some(),
            tau,
            lambda_true,
            delay,
            false_alarm,
            posterior: log_odds.iter().map(|&lo| posterior_from_log_odds(lo)).collect(),
            complementary: log_odds.iter().map(|&lo| complementary_from_log_odds(lo)).collect(),
        }
    }
}
