//! Synthetic settings, the replicated experiment runner and two checks of
//! the asymptotic theory (chi-square null calibration, BIC order consistency).

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared as ChiSquaredDist, ContinuousCDF};
use thiserror::Error;

use crate::adfamily::{self, AdError, CpadPool, CpadTail};
use crate::correction::{compute_metrics, CorrectionError, Metrics, DEFAULT_F_WEIGHTS};
use crate::flr::{self, ControlPool, FlrConfig, FlrError};
use crate::mixture::{self, EmConfig, GaussianMixture, MixtureError};
use crate::seed::{derive_seed, rng_from_seed, tags};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("unknown setting '{0}'")]
    UnknownSetting(String),
    #[error("settings in block {0} do not share their control laws")]
    MixedControls(String),
    #[error("at least {needed} replicates are required, got {got}")]
    TooFewReplicates { needed: usize, got: usize },
    #[error("sample size and control count must be positive")]
    InvalidSize,
    #[error("degrees of freedom must be positive")]
    InvalidDf,
    #[error(transparent)]
    Mixture(#[from] MixtureError),
    #[error(transparent)]
    Flr(#[from] FlrError),
    #[error(transparent)]
    Ad(#[from] AdError),
    #[error(transparent)]
    Correction(#[from] CorrectionError),
}

pub type Result<T> = std::result::Result<T, SimError>;

/// Distribution of one subject's epoch values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Law {
    NormalMixture(GaussianMixture),
    /// `exp(Z)` with `Z ~ N(mu, sigma^2)`.
    LogNormal {
        mu: f64,
        sigma: f64,
    },
    /// `(Z + ncp) / sqrt(V / df)` with `V ~ chi-square(df)`.
    NoncentralT {
        df: f64,
        ncp: f64,
    },
}

impl Law {
    pub fn mixture(weights: &[f64], means: &[f64], variances: &[f64]) -> Self {
        Law::NormalMixture(
            GaussianMixture::new(weights.to_vec(), means.to_vec(), variances.to_vec()).expect("valid built-in mixture"),
        )
    }

    pub fn sample(&self, n: usize, seed: u64) -> Vec<f64> {
        match self {
            Law::NormalMixture(m) => m.sample(n, seed),
            Law::LogNormal { mu, sigma } => {
                let mut rng = rng_from_seed(seed);
                (0..n)
                    .map(|_| {
                        let z: f64 = rng.sample(StandardNormal);
                        (mu + sigma * z).exp()
                    })
                    .collect()
            }
            Law::NoncentralT { df, ncp } => {
                let mut rng = rng_from_seed(seed);
                let chi = ChiSquared::new(*df).expect("positive df");
                (0..n)
                    .map(|_| {
                        let z: f64 = rng.sample(StandardNormal);
                        let v: f64 = chi.sample(&mut rng);
                        (z + ncp) / (v / df).sqrt()
                    })
                    .collect()
            }
        }
    }

    /// Population mean, when finite.
    pub fn mean(&self) -> Option<f64> {
        match self {
            Law::NormalMixture(m) => Some(m.mean()),
            Law::LogNormal { mu, sigma } => Some((mu + 0.5 * sigma * sigma).exp()),
            Law::NoncentralT { df, ncp } => (*df > 1.0).then(|| {
                use statrs::function::gamma::ln_gamma;
                ncp * (df / 2.0).sqrt() * (ln_gamma((df - 1.0) / 2.0) - ln_gamma(df / 2.0)).exp()
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettingSpec {
    pub setting_id: String,
    pub case: Law,
    pub controls: Vec<Law>,
    /// Epochs per subject.
    pub n: usize,
    /// True when the case law is one of the control laws.
    pub is_null: bool,
}

impl SettingSpec {
    fn new(id: &str, case: Law, controls: Vec<Law>, n: usize) -> Self {
        let is_null = controls.contains(&case);
        Self { setting_id: id.to_string(), case, controls, n, is_null }
    }

    pub fn k(&self) -> usize {
        self.controls.len()
    }

    /// Block label, the part of the id before the first dot.
    pub fn block(&self) -> &str {
        self.setting_id.split('.').next().unwrap_or(&self.setting_id)
    }

    /// Same laws with `n` epochs and `k` controls; runs of equal control laws
    /// are rescaled proportionally.
    pub fn resized(&self, n: usize, k: usize) -> Result<Self> {
        if n == 0 || k == 0 {
            return Err(SimError::InvalidSize);
        }
        let mut runs: Vec<(Law, usize)> = Vec::new();
        for law in &self.controls {
            match runs.last_mut() {
                Some((l, c)) if l == law => *c += 1,
                _ => runs.push((law.clone(), 1)),
            }
        }
        let old_k = self.controls.len();
        let mut controls = Vec::with_capacity(k);
        let mut used = 0;
        for (i, (law, count)) in runs.iter().enumerate() {
            let take =
                if i + 1 == runs.len() { k - used } else { ((count * k) as f64 / old_k as f64).round() as usize }
                    .min(k - used);
            controls.extend(std::iter::repeat_n(law.clone(), take));
            used += take;
        }
        Ok(Self::new(&self.setting_id, self.case.clone(), controls, n))
    }
}

pub const DEFAULT_N: usize = 100;
pub const DEFAULT_K: usize = 54;

/// Settings 1.1-1.5, 2.1-2.3 and 3.1-3.3 with `N = 100` and `K = 54`.
/// Setting 3 uses controls t(5) and cases t(5, ncp) with ncp 0, 2 and 1.
pub fn builtin_settings() -> Vec<SettingSpec> {
    let n = DEFAULT_N;
    let minority = Law::mixture(&[0.2, 0.8], &[0.0, 1.0], &[1.0, 1.0]);
    let majority = Law::mixture(&[0.4, 0.6], &[0.0, 1.0], &[1.0, 1.0]);
    let mut s1 = vec![minority; 10];
    s1.extend(std::iter::repeat_n(majority.clone(), DEFAULT_K - 10));
    let s2 = vec![Law::mixture(&[1.0], &[0.0], &[1.0]); DEFAULT_K];
    let s3 = vec![Law::NoncentralT { df: 5.0, ncp: 0.0 }; DEFAULT_K];
    vec![
        SettingSpec::new("1.1", Law::mixture(&[0.2, 0.8], &[0.0, 2.0], &[1.0, 1.0]), s1.clone(), n),
        SettingSpec::new("1.2", majority, s1.clone(), n),
        SettingSpec::new("1.3", Law::mixture(&[0.1, 0.9], &[0.0, 1.0], &[1.5, 1.0]), s1.clone(), n),
        SettingSpec::new("1.4", Law::mixture(&[0.4, 0.6], &[0.0, 1.0], &[2.0, 2.0]), s1.clone(), n),
        SettingSpec::new("1.5", Law::mixture(&[0.2, 0.8], &[-1.0, 3.0], &[1.0, 1.0]), s1, n),
        SettingSpec::new("2.1", Law::LogNormal { mu: 0.0, sigma: 1.0 }, s2.clone(), n),
        SettingSpec::new("2.2", Law::LogNormal { mu: 0.5, sigma: 1.0 }, s2.clone(), n),
        SettingSpec::new("2.3", Law::LogNormal { mu: 1.0, sigma: 1.0 }, s2, n),
        SettingSpec::new("3.1", Law::NoncentralT { df: 5.0, ncp: 0.0 }, s3.clone(), n),
        SettingSpec::new("3.2", Law::NoncentralT { df: 5.0, ncp: 2.0 }, s3.clone(), n),
        SettingSpec::new("3.3", Law::NoncentralT { df: 5.0, ncp: 1.0 }, s3, n),
    ]
}

pub fn setting(id: &str) -> Result<SettingSpec> {
    builtin_settings().into_iter().find(|s| s.setting_id == id).ok_or_else(|| SimError::UnknownSetting(id.to_string()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub case: Vec<f64>,
    pub controls: Vec<Vec<f64>>,
}

/// Controls depend only on the control laws and the seed, so settings that
/// share controls get identical control samples from the same seed.
pub fn generate_controls(spec: &SettingSpec, seed: u64) -> Vec<Vec<f64>> {
    spec.controls
        .iter()
        .enumerate()
        .map(|(k, law)| law.sample(spec.n, derive_seed(seed, &[tags::CONTROL_DATA, k as u64])))
        .collect()
}

pub fn generate_case(spec: &SettingSpec, seed: u64) -> Vec<f64> {
    spec.case.sample(spec.n, derive_seed(seed, &[tags::CASE_DATA]))
}

pub fn generate_dataset(spec: &SettingSpec, seed: u64) -> Dataset {
    Dataset { case: generate_case(spec, seed), controls: generate_controls(spec, seed) }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Method {
    Flr,
    Cflr,
    Pad,
    Cpad,
    Pmad,
    Adm,
}

impl Method {
    pub const ALL: [Method; 6] = [Method::Flr, Method::Cflr, Method::Pad, Method::Cpad, Method::Pmad, Method::Adm];

    pub fn name(self) -> &'static str {
        match self {
            Method::Flr => "FLR",
            Method::Cflr => "CFLR",
            Method::Pad => "PAD",
            Method::Cpad => "CPAD",
            Method::Pmad => "PMAD",
            Method::Adm => "ADM",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown method '{s}' (expected one of FLR, CFLR, PAD, CPAD, PMAD, ADM)"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub flr: FlrConfig,
    pub n_perm: usize,
    /// PMAD subsets; `None` uses the case length.
    pub pmad_subsets: Option<usize>,
    pub cpad_tail: CpadTail,
    /// A p-value at or below this counts as a rejection.
    pub alpha: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self { flr: FlrConfig::default(), n_perm: 999, pmad_subsets: None, cpad_tail: CpadTail::AtMost, alpha: 0.05 }
    }
}

impl SimConfig {
    /// Reduced EM effort for runs on a single workstation.
    pub fn desk() -> Self {
        Self {
            flr: FlrConfig {
                p_max: 3,
                em: EmConfig { restarts: 2, tol: 1e-5, max_iter: 100, ..EmConfig::default() },
                ..FlrConfig::default()
            },
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRecord {
    pub setting: String,
    pub replicate: usize,
    pub method: Method,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettingRow {
    pub setting: String,
    pub is_null: bool,
    /// Rejection rate per method; absent with no replicates.
    pub rates: BTreeMap<Method, Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockRow {
    pub block: String,
    pub metrics: BTreeMap<Method, Metrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub alpha: f64,
    pub replicates: usize,
    pub settings: Vec<SettingRow>,
    pub blocks: Vec<BlockRow>,
    /// Same tables after dropping p-values outside 1.5 IQR of their
    /// (setting, method) column.
    pub screened_settings: Vec<SettingRow>,
    pub screened_blocks: Vec<BlockRow>,
}

impl ExperimentSummary {
    pub fn rate(&self, setting: &str, method: Method) -> Option<f64> {
        find_rate(&self.settings, setting, method)
    }

    pub fn metrics(&self, block: &str, method: Method) -> Option<&Metrics> {
        self.blocks.iter().find(|b| b.block == block)?.metrics.get(&method)
    }
}

fn find_rate(rows: &[SettingRow], setting: &str, method: Method) -> Option<f64> {
    *rows.iter().find(|r| r.setting == setting)?.rates.get(&method)?
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Experiment {
    pub raw: Vec<RawRecord>,
    pub summary: ExperimentSummary,
}

fn replicate_seed(root: u64, block: &str, rep: usize) -> u64 {
    let block_tag = block.bytes().fold(0u64, |h, b| h.wrapping_mul(131).wrapping_add(b as u64));
    derive_seed(root, &[tags::REPLICATE, block_tag, rep as u64])
}

/// P-values of every method for every setting of one block and replicate.
/// Control-side work (FLR bootstrap pool, CPAD pool) is done once and
/// shared by all settings of the block.
fn run_block_replicate(
    specs: &[SettingSpec],
    methods: &[Method],
    rep: usize,
    seed: u64,
    config: &SimConfig,
) -> Result<Vec<RawRecord>> {
    let controls = generate_controls(&specs[0], seed);
    let wants = |m: Method| methods.contains(&m);
    let method_seed = |m: Method| derive_seed(seed, &[tags::METHOD, m as u64]);
    let flr_pool = if wants(Method::Flr) || wants(Method::Cflr) {
        Some(ControlPool::with_bootstrap(&controls, &config.flr, method_seed(Method::Flr))?)
    } else {
        None
    };
    let cpad_pool = if wants(Method::Cpad) {
        Some(CpadPool::build(&controls, config.n_perm, method_seed(Method::Cpad))?)
    } else {
        None
    };
    let mut out = Vec::new();
    for spec in specs {
        let case = generate_case(spec, seed);
        let flr_result = match &flr_pool {
            Some(pool) => {
                let stats = pool.case_stats(&case, &config.flr)?;
                Some(pool.calibration(&stats).select(&config.flr)?)
            }
            None => None,
        };
        let case_pad = if wants(Method::Pad) || wants(Method::Cpad) {
            Some(adfamily::pad(&case, &controls, config.n_perm, method_seed(Method::Pad))?.p_value)
        } else {
            None
        };
        for &method in methods {
            let p = match method {
                Method::Flr => flr_result.as_ref().expect("pool built").p_raw,
                Method::Cflr => flr_result.as_ref().expect("pool built").p_cv,
                Method::Pad => case_pad.expect("pad computed"),
                Method::Cpad => {
                    cpad_pool
                        .as_ref()
                        .expect("pool built")
                        .calibrate(case_pad.expect("pad computed"), config.cpad_tail)
                        .p_value
                }
                Method::Pmad => {
                    let subsets = config.pmad_subsets.unwrap_or(case.len());
                    adfamily::pmad(&case, &controls, subsets, config.n_perm, method_seed(Method::Pmad))?.p_value
                }
                Method::Adm => adfamily::adm(&case, &controls, config.n_perm, method_seed(Method::Adm))?.p_value,
            };
            out.push(RawRecord { setting: spec.setting_id.clone(), replicate: rep, method, p });
        }
    }
    Ok(out)
}

/// Run `replicates` datasets of each setting through each method.
///
/// Settings of the same block share their controls within a replicate.
/// Rows come out ordered by setting (as given), replicate, then method.
pub fn run_experiment(
    setting_ids: &[&str],
    methods: &[Method],
    replicates: usize,
    n: usize,
    k: usize,
    root_seed: u64,
    config: &SimConfig,
) -> Result<Experiment> {
    let specs = setting_ids.iter().map(|id| setting(id)?.resized(n, k)).collect::<Result<Vec<_>>>()?;
    let mut blocks: Vec<(String, Vec<SettingSpec>)> = Vec::new();
    for spec in &specs {
        match blocks.iter_mut().find(|(b, _)| b == spec.block()) {
            Some((_, v)) => v.push(spec.clone()),
            None => blocks.push((spec.block().to_string(), vec![spec.clone()])),
        }
    }
    for (block, v) in &blocks {
        if v.iter().any(|s| s.controls != v[0].controls) {
            return Err(SimError::MixedControls(block.clone()));
        }
    }
    let jobs: Vec<(usize, usize)> = (0..blocks.len()).flat_map(|b| (0..replicates).map(move |r| (b, r))).collect();
    let chunks = jobs
        .par_iter()
        .map(|&(b, rep)| {
            let (name, specs) = &blocks[b];
            run_block_replicate(specs, methods, rep, replicate_seed(root_seed, name, rep), config)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut raw: Vec<RawRecord> = chunks.into_iter().flatten().collect();
    let setting_pos = |s: &str| setting_ids.iter().position(|id| *id == s).unwrap_or(usize::MAX);
    let method_pos = |m: Method| methods.iter().position(|x| *x == m).unwrap_or(usize::MAX);
    raw.sort_by_key(|r| (setting_pos(&r.setting), r.replicate, method_pos(r.method)));
    let summary = summarize(&raw, &specs, methods, replicates, config.alpha)?;
    Ok(Experiment { raw, summary })
}

/// Quartiles by linear interpolation between order statistics.
fn quartiles(values: &[f64]) -> (f64, f64) {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let h = (v.len() - 1) as f64 * p;
        let lo = h.floor() as usize;
        let hi = h.ceil() as usize;
        v[lo] + (h - lo as f64) * (v[hi] - v[lo])
    };
    (q(0.25), q(0.75))
}

/// Keep-mask for the 1.5 IQR boxplot rule applied per (setting, method).
pub fn iqr_screen(raw: &[RawRecord]) -> Vec<bool> {
    let mut keep = vec![true; raw.len()];
    let mut columns: Vec<((String, Method), Vec<usize>)> = Vec::new();
    for (i, r) in raw.iter().enumerate() {
        let key = (r.setting.clone(), r.method);
        match columns.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(i),
            None => columns.push((key, vec![i])),
        }
    }
    for (_, idx) in columns {
        let ps: Vec<f64> = idx.iter().map(|&i| raw[i].p).collect();
        let (q1, q3) = quartiles(&ps);
        let iqr = q3 - q1;
        for &i in &idx {
            keep[i] = raw[i].p >= q1 - 1.5 * iqr && raw[i].p <= q3 + 1.5 * iqr;
        }
    }
    keep
}

fn tables(
    rows: &[&RawRecord],
    specs: &[SettingSpec],
    methods: &[Method],
    alpha: f64,
) -> Result<(Vec<SettingRow>, Vec<BlockRow>)> {
    let settings = specs
        .iter()
        .map(|spec| SettingRow {
            setting: spec.setting_id.clone(),
            is_null: spec.is_null,
            rates: methods
                .iter()
                .map(|&m| {
                    let ps: Vec<f64> =
                        rows.iter().filter(|r| r.setting == spec.setting_id && r.method == m).map(|r| r.p).collect();
                    let rate =
                        (!ps.is_empty()).then(|| ps.iter().filter(|&&p| p <= alpha).count() as f64 / ps.len() as f64);
                    (m, rate)
                })
                .collect(),
        })
        .collect();
    let mut block_names: Vec<&str> = Vec::new();
    for s in specs {
        if !block_names.contains(&s.block()) {
            block_names.push(s.block());
        }
    }
    let blocks = block_names
        .into_iter()
        .map(|block| {
            let metrics = methods
                .iter()
                .map(|&m| {
                    let (claims, truth): (Vec<bool>, Vec<bool>) = rows
                        .iter()
                        .filter(|r| r.method == m)
                        .filter_map(|r| {
                            let spec = specs.iter().find(|s| s.setting_id == r.setting)?;
                            (spec.block() == block).then_some((r.p <= alpha, !spec.is_null))
                        })
                        .unzip();
                    compute_metrics(&claims, &truth, &DEFAULT_F_WEIGHTS).map(|x| (m, x))
                })
                .collect::<std::result::Result<BTreeMap<_, _>, _>>()?;
            Ok(BlockRow { block: block.to_string(), metrics })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((settings, blocks))
}

/// Rejection rates per setting and pooled precision/recall/F per block,
/// with truth taken from each setting's `is_null`.
pub fn summarize(
    raw: &[RawRecord],
    specs: &[SettingSpec],
    methods: &[Method],
    replicates: usize,
    alpha: f64,
) -> Result<ExperimentSummary> {
    let all: Vec<&RawRecord> = raw.iter().collect();
    let (settings, blocks) = tables(&all, specs, methods, alpha)?;
    let keep = iqr_screen(raw);
    let kept: Vec<&RawRecord> = raw.iter().zip(&keep).filter(|(_, k)| **k).map(|(r, _)| r).collect();
    let (screened_settings, screened_blocks) = tables(&kept, specs, methods, alpha)?;
    Ok(ExperimentSummary { alpha, replicates, settings, blocks, screened_settings, screened_blocks })
}

/// `-2 l` for `replicates` pairs of independent N(0, 1) samples of size `n`,
/// each fitted with a single Gaussian.
pub fn null_lr_statistics(n: usize, replicates: usize, seed: u64) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(SimError::InvalidSize);
    }
    let cfg = FlrConfig { fixed_order: Some(1), ..FlrConfig::default() };
    let law = GaussianMixture::single(0.0, 1.0)?;
    (0..replicates)
        .into_par_iter()
        .map(|r| {
            let x = law.sample(n, derive_seed(seed, &[tags::CASE_DATA, r as u64]));
            let y = law.sample(n, derive_seed(seed, &[tags::CONTROL_DATA, r as u64]));
            Ok(-2.0 * flr::flr_statistic(&x, &y, &cfg)?.value)
        })
        .collect()
}

/// Asymptotic Kolmogorov-Smirnov p-value of `values` against chi-square(d),
/// with the small-sample correction `(sqrt(n) + 0.12 + 0.11 / sqrt(n)) D`.
pub fn ks_chisq_pvalue(values: &[f64], d: f64) -> Result<f64> {
    let dist = ChiSquaredDist::new(d).map_err(|_| SimError::InvalidDf)?;
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let stat = v
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = dist.cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max);
    let lambda = (n.sqrt() + 0.12 + 0.11 / n.sqrt()) * stat;
    Ok(kolmogorov_tail(lambda))
}

/// `P(K > lambda)` for the Kolmogorov distribution.
pub fn kolmogorov_tail(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for j in 1..=200 {
        let jf = j as f64;
        let term = (-2.0 * jf * jf * lambda * lambda).exp();
        sum += if j % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

pub const MIN_NULL_REPLICATES: usize = 50;

/// Goodness-of-fit p-value of the simulated `-2 l` null sample against
/// chi-square(d). Data always come from the two-parameter Gaussian family,
/// so `d = 2` is the matching reference.
pub fn chisq_null_check(d: usize, n: usize, replicates: usize, seed: u64) -> Result<f64> {
    if replicates < MIN_NULL_REPLICATES {
        return Err(SimError::TooFewReplicates { needed: MIN_NULL_REPLICATES, got: replicates });
    }
    if d == 0 {
        return Err(SimError::InvalidDf);
    }
    ks_chisq_pvalue(&null_lr_statistics(n, replicates, seed)?, d as f64)
}

/// Share of replicates whose BIC-selected order equals the true order, per
/// sample size.
pub fn order_consistency_check(
    truth: &GaussianMixture,
    n_grid: &[usize],
    replicates: usize,
    p_max: usize,
    em: &EmConfig,
    seed: u64,
) -> Result<Vec<(usize, f64)>> {
    n_grid
        .iter()
        .enumerate()
        .map(|(gi, &n)| {
            let hits = (0..replicates)
                .into_par_iter()
                .map(|r| {
                    let x = truth.sample(n, derive_seed(seed, &[tags::META, gi as u64, r as u64]));
                    Ok(mixture::select_order_bic(&x, p_max, em)?.best_order == truth.order())
                })
                .collect::<Result<Vec<bool>>>()?;
            let frac =
                if replicates == 0 { 0.0 } else { hits.iter().filter(|&&h| h).count() as f64 / replicates as f64 };
            Ok((n, frac))
        })
        .collect()
}
