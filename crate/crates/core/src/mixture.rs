//! Univariate Gaussian mixtures: EM fitting, BIC order selection, density
//! evaluation and seeded sampling.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed::{derive_seed, rng_from_seed, tags};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MixtureError {
    #[error("sample is empty")]
    EmptySample,
    #[error("all {0} observations are identical; cannot fit more than one component")]
    DegenerateSample(usize),
    #[error("mixture order must be at least 1")]
    InvalidOrder,
    #[error("sample of size {n} is too small for order {order}")]
    TooFewObservations { n: usize, order: usize },
    #[error("sample contains a non-finite value at index {0}")]
    NonFinite(usize),
    #[error("invalid mixture: {0}")]
    InvalidMixture(String),
}

pub type Result<T> = std::result::Result<T, MixtureError>;

/// Settings shared by every EM fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmConfig {
    /// Stop once the log-likelihood improves by less than this.
    pub tol: f64,
    pub max_iter: usize,
    /// Number of k-means++ seeded restarts; the best by log-likelihood wins.
    pub restarts: usize,
    /// Variance floor as a fraction of the sample variance.
    pub variance_floor_rel: f64,
    /// Absolute lower bound on the variance floor.
    pub variance_floor_abs: f64,
    pub seed: u64,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 500,
            restarts: 5,
            variance_floor_rel: 1e-6,
            variance_floor_abs: 1e-12,
            seed: 0x5EED,
        }
    }
}

impl EmConfig {
    pub fn variance_floor(&self, sample_variance: f64) -> f64 {
        (self.variance_floor_rel * sample_variance).max(self.variance_floor_abs)
    }
}

/// A finite mixture of univariate normals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixture {
    weights: Vec<f64>,
    means: Vec<f64>,
    variances: Vec<f64>,
}

impl GaussianMixture {
    pub fn new(weights: Vec<f64>, means: Vec<f64>, variances: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(MixtureError::InvalidOrder);
        }
        if weights.len() != means.len() || weights.len() != variances.len() {
            return Err(MixtureError::InvalidMixture(format!(
                "length mismatch: {} weights, {} means, {} variances",
                weights.len(),
                means.len(),
                variances.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(MixtureError::InvalidMixture("weights must be finite and nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(MixtureError::InvalidMixture(format!("weights sum to {total}, not 1")));
        }
        if means.iter().any(|m| !m.is_finite()) {
            return Err(MixtureError::InvalidMixture("means must be finite".into()));
        }
        if variances.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(MixtureError::InvalidMixture("variances must be finite and positive".into()));
        }
        Ok(Self { weights, means, variances })
    }

    pub fn single(mean: f64, variance: f64) -> Result<Self> {
        Self::new(vec![1.0], vec![mean], vec![variance])
    }

    pub fn order(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    pub fn mean(&self) -> f64 {
        self.weights.iter().zip(&self.means).map(|(w, m)| w * m).sum()
    }

    pub fn variance(&self) -> f64 {
        let mu = self.mean();
        self.weights.iter().zip(&self.means).zip(&self.variances).map(|((w, m), v)| w * (v + (m - mu) * (m - mu))).sum()
    }

    /// Mixture density at `x`.
    pub fn density(&self, x: f64) -> f64 {
        self.weights.iter().zip(&self.means).zip(&self.variances).map(|((w, m), v)| w * normal_pdf(x, *m, *v)).sum()
    }

    /// Log density at `x`, stabilized with log-sum-exp.
    pub fn log_density(&self, x: f64) -> f64 {
        let mut terms = [0.0f64; 16];
        let mut heap;
        let buf: &mut [f64] = if self.order() <= terms.len() {
            &mut terms[..self.order()]
        } else {
            heap = vec![0.0; self.order()];
            &mut heap
        };
        for (k, t) in buf.iter_mut().enumerate() {
            let d = x - self.means[k];
            *t = self.weights[k].ln() - 0.5 * (LN_2PI + self.variances[k].ln()) - d * d / (2.0 * self.variances[k]);
        }
        log_sum_exp(buf)
    }

    /// Sum of log densities over `sample`.
    pub fn log_likelihood(&self, sample: &[f64]) -> Result<f64> {
        if sample.is_empty() {
            return Err(MixtureError::EmptySample);
        }
        Ok(sample.iter().map(|&x| self.log_density(x)).sum())
    }

    /// Draw `n` values; identical output for identical `seed`.
    pub fn sample(&self, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = rng_from_seed(seed);
        let sds: Vec<f64> = self.variances.iter().map(|v| v.sqrt()).collect();
        (0..n)
            .map(|_| {
                let u: f64 = rng.random();
                let k = pick_component(&self.weights, u);
                let z: f64 = rng.sample(StandardNormal);
                self.means[k] + sds[k] * z
            })
            .collect()
    }
}

fn pick_component(weights: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (k, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return k;
        }
    }
    // u landed in the rounding gap above the cumulative sum
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(weights.len() - 1)
}

pub fn normal_pdf(x: f64, mean: f64, variance: f64) -> f64 {
    let d = x - mean;
    (-d * d / (2.0 * variance)).exp() / (2.0 * PI * variance).sqrt()
}

pub fn log_sum_exp(terms: &[f64]) -> f64 {
    let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln()
}

pub fn density(mixture: &GaussianMixture, x: f64) -> f64 {
    mixture.density(x)
}

pub fn log_likelihood(mixture: &GaussianMixture, sample: &[f64]) -> Result<f64> {
    mixture.log_likelihood(sample)
}

pub fn sample(mixture: &GaussianMixture, n: usize, seed: u64) -> Vec<f64> {
    mixture.sample(n, seed)
}

/// Outcome of one EM fit (best restart).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub mixture: GaussianMixture,
    pub loglik: f64,
    pub n_iter: usize,
    pub converged: bool,
    /// Set when the sample was a single repeated value and the fit is a point
    /// mass with floored variance.
    pub degenerate: bool,
    /// Log-likelihood after each E-step of the winning restart.
    #[serde(skip)]
    pub trace: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BicEntry {
    pub order: usize,
    pub loglik: f64,
    pub penalized: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderSelection {
    pub best: FitResult,
    pub best_order: usize,
    pub bic_trace: Vec<BicEntry>,
}

/// `0.5 * ln(n) * (3p - 1)`: free parameters of a p-component univariate mixture.
pub fn bic_penalty(n: usize, order: usize) -> f64 {
    0.5 * (n as f64).ln() * (3 * order - 1) as f64
}

struct SampleSummary {
    mean: f64,
    variance: f64,
    min: f64,
    max: f64,
}

fn summarize(sample: &[f64]) -> Result<SampleSummary> {
    if sample.is_empty() {
        return Err(MixtureError::EmptySample);
    }
    if let Some(i) = sample.iter().position(|x| !x.is_finite()) {
        return Err(MixtureError::NonFinite(i));
    }
    let n = sample.len() as f64;
    let mean = sample.iter().sum::<f64>() / n;
    let variance = sample.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let (min, max) = sample.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    Ok(SampleSummary { mean, variance, min, max })
}

/// Fit a `order`-component mixture by EM with k-means++ seeded restarts.
pub fn fit_em(sample: &[f64], order: usize, config: &EmConfig) -> Result<FitResult> {
    if order == 0 {
        return Err(MixtureError::InvalidOrder);
    }
    let summary = summarize(sample)?;
    if sample.len() < order {
        return Err(MixtureError::TooFewObservations { n: sample.len(), order });
    }
    let floor = config.variance_floor(summary.variance);
    if summary.min == summary.max {
        if order > 1 {
            return Err(MixtureError::DegenerateSample(sample.len()));
        }
        let mixture = GaussianMixture::single(summary.mean, floor)?;
        let loglik = mixture.log_likelihood(sample)?;
        return Ok(FitResult { mixture, loglik, n_iter: 0, converged: true, degenerate: true, trace: vec![loglik] });
    }
    if order == 1 {
        // closed-form MLE
        let mixture = GaussianMixture::single(summary.mean, summary.variance.max(floor))?;
        let loglik = mixture.log_likelihood(sample)?;
        return Ok(FitResult { mixture, loglik, n_iter: 1, converged: true, degenerate: false, trace: vec![loglik] });
    }

    let restarts = config.restarts.max(1);
    let mut best: Option<FitResult> = None;
    for r in 0..restarts {
        let seed = derive_seed(config.seed, &[tags::EM_RESTART, order as u64, r as u64]);
        let init = kmeans_pp_init(sample, order, floor, summary.variance, seed);
        let fit = run_em(sample, init, floor, config)?;
        if best.as_ref().is_none_or(|b| fit.loglik > b.loglik) {
            best = Some(fit);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Run EM once from `start` instead of seeded restarts. Starting variances
/// below the floor are raised to it.
pub fn fit_em_from(sample: &[f64], start: &GaussianMixture, config: &EmConfig) -> Result<FitResult> {
    let summary = summarize(sample)?;
    let floor = config.variance_floor(summary.variance);
    let init = Params {
        weights: start.weights().to_vec(),
        means: start.means().to_vec(),
        variances: start.variances().iter().map(|v| v.max(floor)).collect(),
    };
    run_em(sample, init, floor, config)
}

/// Initial (weights, means, variances) from k-means++ style seeding followed
/// by a hard nearest-center assignment.
fn kmeans_pp_init(sample: &[f64], order: usize, floor: f64, sample_var: f64, seed: u64) -> Params {
    let mut rng = rng_from_seed(seed);
    let n = sample.len();
    let mut centers = Vec::with_capacity(order);
    centers.push(sample[rng.random_range(0..n)]);
    let mut d2: Vec<f64> = sample.iter().map(|x| (x - centers[0]).powi(2)).collect();
    while centers.len() < order {
        let total: f64 = d2.iter().sum();
        let idx = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, d) in d2.iter().enumerate() {
                acc += d;
                if acc > target {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let c = sample[idx];
        centers.push(c);
        for (d, x) in d2.iter_mut().zip(sample) {
            *d = d.min((x - c).powi(2));
        }
    }

    let mut counts = vec![0usize; order];
    let mut sq = vec![0.0; order];
    for &x in sample {
        let k = nearest(&centers, x);
        counts[k] += 1;
        sq[k] += (x - centers[k]).powi(2);
    }
    let total = (n + counts.iter().filter(|&&c| c == 0).count()) as f64;
    let weights = counts.iter().map(|&c| c.max(1) as f64 / total).collect();
    let variances = counts
        .iter()
        .zip(&sq)
        .map(|(&c, &s)| if c >= 2 && s > 0.0 { (s / c as f64).max(floor) } else { sample_var.max(floor) })
        .collect();
    Params { weights, means: centers, variances }
}

fn nearest(centers: &[f64], x: f64) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (k, c) in centers.iter().enumerate() {
        let d = (x - c).abs();
        if d < best_d {
            best_d = d;
            best = k;
        }
    }
    best
}

struct Params {
    weights: Vec<f64>,
    means: Vec<f64>,
    variances: Vec<f64>,
}

/// Sufficient statistics from one E-step.
struct EStep {
    loglik: f64,
    resp_sum: Vec<f64>,
    // first and second moments about the current component means
    m1: Vec<f64>,
    m2: Vec<f64>,
}

fn e_step(sample: &[f64], p: &Params, buf: &mut [f64]) -> EStep {
    let order = p.weights.len();
    let a: Vec<f64> = (0..order)
        .map(|k| {
            if p.weights[k] > 0.0 {
                p.weights[k].ln() - 0.5 * (LN_2PI + p.variances[k].ln())
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();
    let b: Vec<f64> = p.variances.iter().map(|v| 0.5 / v).collect();
    let mut out = EStep { loglik: 0.0, resp_sum: vec![0.0; order], m1: vec![0.0; order], m2: vec![0.0; order] };
    for &x in sample {
        let mut m = f64::NEG_INFINITY;
        for k in 0..order {
            let d = x - p.means[k];
            buf[k] = a[k] - b[k] * d * d;
            m = m.max(buf[k]);
        }
        let mut s = 0.0;
        for t in buf.iter_mut() {
            *t = (*t - m).exp();
            s += *t;
        }
        out.loglik += m + s.ln();
        let inv = 1.0 / s;
        for k in 0..order {
            let r = buf[k] * inv;
            let d = x - p.means[k];
            out.resp_sum[k] += r;
            out.m1[k] += r * d;
            out.m2[k] += r * d * d;
        }
    }
    out
}

fn m_step(p: &mut Params, e: &EStep, floor: f64) {
    let total: f64 = e.resp_sum.iter().sum();
    for k in 0..p.weights.len() {
        let nk = e.resp_sum[k];
        p.weights[k] = nk / total;
        if nk > 1e-8 {
            let shift = e.m1[k] / nk;
            p.means[k] += shift;
            let var = e.m2[k] / nk - shift * shift;
            p.variances[k] = var.max(floor);
        }
    }
}

fn run_em(sample: &[f64], mut params: Params, floor: f64, config: &EmConfig) -> Result<FitResult> {
    let mut buf = vec![0.0; params.weights.len()];
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iter = 0;
    loop {
        let e = e_step(sample, &params, &mut buf);
        if let Some(&prev) = trace.last() {
            if e.loglik - prev < config.tol {
                trace.push(e.loglik);
                converged = true;
                break;
            }
        }
        trace.push(e.loglik);
        if iter >= config.max_iter {
            break;
        }
        m_step(&mut params, &e, floor);
        iter += 1;
    }
    let mixture = finalize(params)?;
    let loglik = mixture.log_likelihood(sample)?;
    Ok(FitResult { mixture, loglik, n_iter: iter, converged, degenerate: false, trace })
}

fn finalize(mut p: Params) -> Result<GaussianMixture> {
    let total: f64 = p.weights.iter().sum();
    for w in &mut p.weights {
        *w /= total;
    }
    // keep the sum within 1e-12 after division
    let drift: f64 = 1.0 - p.weights.iter().sum::<f64>();
    if let Some(k) = p.weights.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map(|(k, _)| k) {
        p.weights[k] += drift;
    }
    GaussianMixture::new(p.weights, p.means, p.variances)
}

/// Choose the order in `1..=p_max` maximizing `loglik - 0.5 ln(n) (3p - 1)`.
/// Ties go to the smaller order.
pub fn select_order_bic(sample: &[f64], p_max: usize, config: &EmConfig) -> Result<OrderSelection> {
    select_order_with_penalty_n(sample, p_max, sample.len(), config)
}

/// As [`select_order_bic`] but with the penalty computed for an explicit `n`.
pub fn select_order_with_penalty_n(
    sample: &[f64],
    p_max: usize,
    penalty_n: usize,
    config: &EmConfig,
) -> Result<OrderSelection> {
    if p_max == 0 {
        return Err(MixtureError::InvalidOrder);
    }
    if sample.is_empty() {
        return Err(MixtureError::EmptySample);
    }
    if sample.len() < p_max {
        return Err(MixtureError::TooFewObservations { n: sample.len(), order: p_max });
    }
    let mut bic_trace = Vec::with_capacity(p_max);
    let mut best: Option<(FitResult, f64)> = None;
    for order in 1..=p_max {
        let fit = fit_em(sample, order, config)?;
        let penalized = fit.loglik - bic_penalty(penalty_n, order);
        bic_trace.push(BicEntry { order, loglik: fit.loglik, penalized });
        if best.as_ref().is_none_or(|(_, score)| penalized > *score) {
            best = Some((fit, penalized));
        }
    }
    let (best, _) = best.expect("p_max >= 1");
    Ok(OrderSelection { best_order: best.mixture.order(), best, bic_trace })
}
