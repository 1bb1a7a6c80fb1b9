//! Frequency-band likelihood-ratio (FLR) one-vs-K test.
//!
//! For a case sample and a control sample the statistic is the maximized
//! mixture log-likelihood of the pooled sample minus those of the two samples
//! fitted separately; each fit picks its own order by BIC. Statistics are
//! turned into an indicator-average p-value at threshold `ln(1 - c0)`, that
//! p-value is calibrated against parametric-bootstrap replicas of the
//! controls, and `c0` is chosen on a grid by minimizing the sum of the two.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mixture::{self, EmConfig, GaussianMixture, MixtureError};
use crate::seed::{derive_seed, tags};
use crate::spectrum::BandPowerMatrix;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlrError {
    #[error("critical value c0 = {0} must lie strictly between 0 and 1")]
    InvalidC0(f64),
    #[error("invalid c0 range: need 0 < c_min ({c_min}) < c_max ({c_max}) < 1 and grid_size ({grid_size}) >= 2")]
    InvalidRange { c_min: f64, c_max: f64, grid_size: usize },
    #[error("at least one control is required")]
    NoControls,
    #[error("bootstrap replicas per control must be at least 1")]
    NoReplicas,
    #[error("{what}: expected {expected}, got {got}")]
    ShapeMismatch { what: &'static str, expected: usize, got: usize },
    #[error(transparent)]
    Mixture(#[from] MixtureError),
}

pub type Result<T> = std::result::Result<T, FlrError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlrConfig {
    pub em: EmConfig,
    /// Largest mixture order considered by BIC.
    pub p_max: usize,
    /// Fit every sample with exactly this order instead of selecting by BIC.
    pub fixed_order: Option<usize>,
    pub c_min: f64,
    pub c_max: f64,
    pub grid_size: usize,
    /// Bootstrap replicas drawn per control.
    pub bootstrap_reps: usize,
}

impl Default for FlrConfig {
    fn default() -> Self {
        Self {
            em: EmConfig::default(),
            p_max: 9,
            fixed_order: None,
            c_min: 0.5,
            c_max: 0.999,
            grid_size: 50,
            bootstrap_reps: 1,
        }
    }
}

impl FlrConfig {
    pub fn validate_range(&self) -> Result<()> {
        let ok = self.c_min > 0.0 && self.c_min < self.c_max && self.c_max < 1.0 && self.grid_size >= 2;
        if ok {
            Ok(())
        } else {
            Err(FlrError::InvalidRange { c_min: self.c_min, c_max: self.c_max, grid_size: self.grid_size })
        }
    }

    /// Uniform grid over `[c_min, c_max]` with both ends included.
    pub fn c0_grid(&self) -> Vec<f64> {
        let step = (self.c_max - self.c_min) / (self.grid_size - 1) as f64;
        (0..self.grid_size)
            .map(|i| if i + 1 == self.grid_size { self.c_max } else { self.c_min + step * i as f64 })
            .collect()
    }
}

/// A sample with its maximized log-likelihood under the selected order.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedSample {
    pub data: Vec<f64>,
    pub mixture: GaussianMixture,
    pub loglik: f64,
    pub order: usize,
}

fn fit_with_penalty(data: &[f64], penalty_n: usize, config: &FlrConfig) -> Result<mixture::FitResult> {
    match config.fixed_order {
        Some(order) => Ok(mixture::fit_em(data, order, &config.em)?),
        None => {
            let p_max = config.p_max.min(data.len()).max(1);
            Ok(mixture::select_order_with_penalty_n(data, p_max, penalty_n, &config.em)?.best)
        }
    }
}

impl FittedSample {
    pub fn fit(data: Vec<f64>, config: &FlrConfig) -> Result<Self> {
        let fit = fit_with_penalty(&data, data.len(), config)?;
        Ok(Self { order: fit.mixture.order(), loglik: fit.loglik, mixture: fit.mixture, data })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlrStat {
    /// pooled - case - control log-likelihood
    pub value: f64,
    pub case_loglik: f64,
    pub control_loglik: f64,
    pub pooled_loglik: f64,
    pub case_order: usize,
    pub control_order: usize,
    pub pooled_order: usize,
}

impl FlrStat {
    /// Pairwise p-value `min(1, exp(value))`, the chi-square(2) tail of
    /// `-2 value`. Passes the `c0` threshold exactly when it is at least `1 - c0`.
    pub fn pair_pvalue(&self) -> f64 {
        self.value.min(0.0).exp()
    }
}

/// Statistic for two already fitted samples; the pooled fit is penalized
/// with the pooled size.
pub fn pair_statistic(case: &FittedSample, control: &FittedSample, config: &FlrConfig) -> Result<FlrStat> {
    let pooled: Vec<f64> = case.data.iter().chain(&control.data).copied().collect();
    let fit = fit_with_penalty(&pooled, pooled.len(), config)?;
    Ok(FlrStat {
        value: fit.loglik - case.loglik - control.loglik,
        case_loglik: case.loglik,
        control_loglik: control.loglik,
        pooled_loglik: fit.loglik,
        case_order: case.order,
        control_order: control.order,
        pooled_order: fit.mixture.order(),
    })
}

pub fn flr_statistic(case: &[f64], control: &[f64], config: &FlrConfig) -> Result<FlrStat> {
    let case = FittedSample::fit(case.to_vec(), config)?;
    let control = FittedSample::fit(control.to_vec(), config)?;
    pair_statistic(&case, &control, config)
}

/// `ln(1 - c0)`, the pass threshold for a statistic.
pub fn threshold(c0: f64) -> f64 {
    (1.0 - c0).ln()
}

fn count_passing(values: &[f64], c0: f64) -> usize {
    let t = threshold(c0);
    values.iter().filter(|&&v| v >= t).count()
}

fn check_c0(c0: f64) -> Result<()> {
    if c0 > 0.0 && c0 < 1.0 {
        Ok(())
    } else {
        Err(FlrError::InvalidC0(c0))
    }
}

/// Fitted controls plus, optionally, the statistics of bootstrap replicas of
/// each control against every control. Nothing here depends on the case, so
/// one pool serves any number of cases tested against the same controls.
#[derive(Debug, Clone)]
pub struct ControlPool {
    controls: Vec<FittedSample>,
    /// `[k][b][m]`: replica b of control k against control m
    replica_values: Vec<Vec<Vec<f64>>>,
}

impl ControlPool {
    pub fn fit(controls: &[Vec<f64>], config: &FlrConfig) -> Result<Self> {
        if controls.is_empty() {
            return Err(FlrError::NoControls);
        }
        let controls = controls.par_iter().map(|c| FittedSample::fit(c.clone(), config)).collect::<Result<Vec<_>>>()?;
        Ok(Self { controls, replica_values: Vec::new() })
    }

    pub fn with_bootstrap(controls: &[Vec<f64>], config: &FlrConfig, seed: u64) -> Result<Self> {
        if config.bootstrap_reps == 0 {
            return Err(FlrError::NoReplicas);
        }
        let mut pool = Self::fit(controls, config)?;
        let jobs: Vec<(usize, usize)> =
            (0..pool.controls.len()).flat_map(|k| (0..config.bootstrap_reps).map(move |b| (k, b))).collect();
        let values = jobs
            .par_iter()
            .map(|&(k, b)| {
                let source = &pool.controls[k];
                let replica =
                    source.mixture.sample(source.data.len(), derive_seed(seed, &[tags::BOOTSTRAP, k as u64, b as u64]));
                let replica = FittedSample::fit(replica, config)?;
                pool.controls.iter().map(|m| pair_statistic(&replica, m, config).map(|s| s.value)).collect()
            })
            .collect::<Result<Vec<Vec<f64>>>>()?;
        let mut it = values.into_iter();
        pool.replica_values = (0..pool.controls.len())
            .map(|_| (0..config.bootstrap_reps).map(|_| it.next().expect("one entry per job")).collect())
            .collect();
        Ok(pool)
    }

    pub fn len(&self) -> usize {
        self.controls.len()
    }

    pub fn is_empty(&self) -> bool {
        self.controls.is_empty()
    }

    pub fn controls(&self) -> &[FittedSample] {
        &self.controls
    }

    pub fn has_bootstrap(&self) -> bool {
        !self.replica_values.is_empty()
    }

    /// Statistics of `case` against every control, in control order.
    pub fn case_stats(&self, case: &[f64], config: &FlrConfig) -> Result<Vec<FlrStat>> {
        let case = FittedSample::fit(case.to_vec(), config)?;
        self.controls.par_iter().map(|c| pair_statistic(&case, c, config)).collect()
    }

    /// Symmetric matrix of [`FlrStat::pair_pvalue`] between controls, unit
    /// diagonal. Each unordered pair is fitted once, lower index first.
    pub fn pairwise_pvalues(&self, config: &FlrConfig) -> Result<Vec<Vec<f64>>> {
        let n = self.controls.len();
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
        let values = pairs
            .par_iter()
            .map(|&(i, j)| pair_statistic(&self.controls[i], &self.controls[j], config).map(|s| s.pair_pvalue()))
            .collect::<Result<Vec<_>>>()?;
        let mut m = vec![vec![1.0; n]; n];
        for (&(i, j), p) in pairs.iter().zip(values) {
            m[i][j] = p;
            m[j][i] = p;
        }
        Ok(m)
    }

    /// Bind a case's statistics to this pool for threshold sweeps.
    pub fn calibration<'a>(&'a self, case_stats: &'a [FlrStat]) -> Calibration<'a> {
        Calibration { case_values: case_stats.iter().map(|s| s.value).collect(), stats: case_stats, pool: self }
    }
}

/// Case statistics and replica statistics against the same controls; every
/// quantity below depends on `c0` only through indicator thresholds.
#[derive(Debug, Clone)]
pub struct Calibration<'a> {
    case_values: Vec<f64>,
    stats: &'a [FlrStat],
    pool: &'a ControlPool,
}

impl Calibration<'_> {
    /// Fraction of controls whose statistic with the case passes `ln(1 - c0)`.
    pub fn p_raw(&self, c0: f64) -> f64 {
        count_passing(&self.case_values, c0) as f64 / self.case_values.len() as f64
    }

    /// Share of bootstrap replicas whose own p-value is at most the case's.
    pub fn p_cv(&self, c0: f64) -> f64 {
        let case_count = count_passing(&self.case_values, c0);
        let k = self.pool.replica_values.len();
        let total: f64 = self
            .pool
            .replica_values
            .iter()
            .map(|reps| {
                let hits = reps.iter().filter(|vals| count_passing(vals, c0) <= case_count).count();
                hits as f64 / reps.len() as f64
            })
            .sum();
        total / k as f64
    }

    pub fn objective(&self, c0: f64) -> f64 {
        self.p_raw(c0) + self.p_cv(c0)
    }

    /// Minimize `p_raw + p_cv` over the configured grid; ties go to the
    /// smaller `c0`.
    pub fn select(&self, config: &FlrConfig) -> Result<FlrResult> {
        config.validate_range()?;
        let mut best: Option<(f64, f64)> = None;
        for c0 in config.c0_grid() {
            let obj = self.objective(c0);
            if best.is_none_or(|(_, b)| obj < b - 1e-12) {
                best = Some((c0, obj));
            }
        }
        let (c0, objective) = best.expect("grid has at least two points");
        Ok(FlrResult {
            p_raw: self.p_raw(c0),
            p_cv: self.p_cv(c0),
            c0,
            objective,
            per_control_stats: self.stats.to_vec(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlrResult {
    pub p_raw: f64,
    pub p_cv: f64,
    pub c0: f64,
    pub objective: f64,
    pub per_control_stats: Vec<FlrStat>,
}

/// Indicator-average p-value at a fixed `c0`, with the per-control statistics.
pub fn flr_pvalue(case: &[f64], controls: &[Vec<f64>], c0: f64, config: &FlrConfig) -> Result<(f64, Vec<FlrStat>)> {
    check_c0(c0)?;
    let pool = ControlPool::fit(controls, config)?;
    let stats = pool.case_stats(case, config)?;
    let values: Vec<f64> = stats.iter().map(|s| s.value).collect();
    Ok((count_passing(&values, c0) as f64 / values.len() as f64, stats))
}

/// Bootstrap cross-validated p-value at a fixed `c0`.
pub fn bootstrap_cv_pvalue(case: &[f64], controls: &[Vec<f64>], c0: f64, config: &FlrConfig, seed: u64) -> Result<f64> {
    check_c0(c0)?;
    let pool = ControlPool::with_bootstrap(controls, config, seed)?;
    let stats = pool.case_stats(case, config)?;
    Ok(pool.calibration(&stats).p_cv(c0))
}

/// Full FLR test: statistics, bootstrap calibration and `c0` selection.
pub fn select_c0(case: &[f64], controls: &[Vec<f64>], config: &FlrConfig, seed: u64) -> Result<FlrResult> {
    config.validate_range()?;
    let pool = ControlPool::with_bootstrap(controls, config, seed)?;
    let stats = pool.case_stats(case, config)?;
    pool.calibration(&stats).select(config)
}

/// Run [`select_c0`] independently for every region (row).
pub fn flr_study(
    case: &BandPowerMatrix,
    controls: &[BandPowerMatrix],
    config: &FlrConfig,
    seed: u64,
) -> Result<Vec<FlrResult>> {
    if controls.is_empty() {
        return Err(FlrError::NoControls);
    }
    let regions = case.n_regions();
    if let Some(bad) = controls.iter().find(|c| c.n_regions() != regions) {
        return Err(FlrError::ShapeMismatch { what: "regions", expected: regions, got: bad.n_regions() });
    }
    (0..regions)
        .into_par_iter()
        .map(|a| {
            let rows: Vec<Vec<f64>> = controls.iter().map(|c| c.row(a).to_vec()).collect();
            select_c0(case.row(a), &rows, config, region_seed(seed, a))
        })
        .collect()
}

pub(crate) fn region_seed(seed: u64, region: usize) -> u64 {
    derive_seed(seed, &[tags::REGION, region as u64])
}
