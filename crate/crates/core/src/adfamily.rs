//! Two-sample Anderson-Darling tests and the one-vs-K variants built on them.
//!
//! The statistic is the k = 2 case of the Scholz-Stephens rank statistic in
//! its midrank form (`A2akN`), so ties are handled exactly and the value only
//! depends on the pooled ordering. P-values come from label permutations:
//! exhaustive when the number of distinct assignments is within the
//! permutation budget, sampled with the add-one estimator otherwise.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed::{derive_seed, rng_from_seed, tags};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AdError {
    #[error("sample is empty")]
    EmptySample,
    #[error("sample contains a non-finite value")]
    NonFinite,
    #[error("at least 99 permutations are required, got {0}")]
    TooFewPermutations(usize),
    #[error("{method} needs at least {needed} controls, got {got}")]
    TooFewControls { method: &'static str, needed: usize, got: usize },
    #[error("pooled controls hold {pooled} values, fewer than the subset size {subset}")]
    PoolTooSmall { pooled: usize, subset: usize },
}

pub type Result<T> = std::result::Result<T, AdError>;

/// Relative tolerance when comparing a permuted statistic with the observed one.
/// Mirror-image assignments give the same value up to summation order.
pub const STAT_TIE_TOL: f64 = 1e-10;

pub fn at_least(stat: f64, observed: f64) -> bool {
    stat >= observed - STAT_TIE_TOL * observed.abs().max(1.0)
}

/// Pooled sample reduced to tie groups, with precomputed per-group weights.
#[derive(Debug, Clone)]
pub struct PooledRanks {
    n: usize,
    /// tie-group index of each pooled observation, in input order (x then y)
    group_of: Vec<usize>,
    /// number of observations in each tie group
    group_size: Vec<usize>,
    /// `B_j - l_j / 2`
    b_mid: Vec<f64>,
    /// `l_j / (B_aj (N - B_aj) - N l_j / 4)`, zero where the denominator vanishes
    weight: Vec<f64>,
}

impl PooledRanks {
    pub fn new(pooled: &[f64]) -> Result<Self> {
        if pooled.iter().any(|v| !v.is_finite()) {
            return Err(AdError::NonFinite);
        }
        let n = pooled.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| pooled[a].total_cmp(&pooled[b]));
        let mut group_of = vec![0usize; n];
        let mut group_size: Vec<usize> = Vec::new();
        let mut prev = f64::NAN;
        for &i in &order {
            if group_size.is_empty() || pooled[i] != prev {
                group_size.push(0);
                prev = pooled[i];
            }
            let g = group_size.len() - 1;
            group_size[g] += 1;
            group_of[i] = g;
        }
        let nf = n as f64;
        let mut cum = 0usize;
        let mut b_mid = Vec::with_capacity(group_size.len());
        let mut weight = Vec::with_capacity(group_size.len());
        for &l in &group_size {
            cum += l;
            let lf = l as f64;
            let ba = cum as f64 - lf / 2.0;
            let den = ba * (nf - ba) - nf * lf / 4.0;
            b_mid.push(ba);
            weight.push(if den > 1e-12 { lf / den } else { 0.0 });
        }
        Ok(Self { n, group_of, group_size, b_mid, weight })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Statistic for a labelling given as per-group counts of first-sample
    /// observations; `nx` is the first sample's size.
    pub fn statistic_from_counts(&self, counts: &[usize], nx: usize) -> f64 {
        let nf = self.n as f64;
        let nxf = nx as f64;
        let nyf = nf - nxf;
        let mut cum = 0usize;
        let mut total = 0.0;
        for (j, &f) in counts.iter().enumerate() {
            cum += f;
            let m_mid = cum as f64 - f as f64 / 2.0;
            let d = nf * m_mid - nxf * self.b_mid[j];
            total += self.weight[j] * d * d;
        }
        (nf - 1.0) / (nf * nf) * (1.0 / nxf + 1.0 / nyf) * total
    }

    fn counts_for(&self, members: impl Iterator<Item = usize>, counts: &mut [usize]) {
        counts.iter_mut().for_each(|c| *c = 0);
        for i in members {
            counts[self.group_of[i]] += 1;
        }
    }
}

/// Two-sample Anderson-Darling rank statistic of `x` versus `y`.
pub fn ad2_statistic(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.is_empty() || y.is_empty() {
        return Err(AdError::EmptySample);
    }
    let pooled: Vec<f64> = x.iter().chain(y).copied().collect();
    let ranks = PooledRanks::new(&pooled)?;
    let mut counts = vec![0; ranks.group_size.len()];
    ranks.counts_for(0..x.len(), &mut counts);
    Ok(ranks.statistic_from_counts(&counts, x.len()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdOutcome {
    pub statistic: f64,
    /// `(1 + #{permuted >= observed}) / (1 + n_perm)`
    pub p_value: f64,
    /// Number of non-identity relabelings the p-value is based on.
    pub n_perm: usize,
    /// True when every distinct assignment was enumerated.
    pub exhaustive: bool,
}

/// `C(n, k)` saturating at `u64::MAX`.
pub fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > u64::MAX as u128 {
            return u64::MAX;
        }
    }
    acc as u64
}

/// Permutation p-value for the two-sample statistic. Deterministic in `seed`.
pub fn ad2_pvalue(x: &[f64], y: &[f64], n_perm: usize, seed: u64) -> Result<AdOutcome> {
    if n_perm < 99 {
        return Err(AdError::TooFewPermutations(n_perm));
    }
    if x.is_empty() || y.is_empty() {
        return Err(AdError::EmptySample);
    }
    let pooled: Vec<f64> = x.iter().chain(y).copied().collect();
    let ranks = PooledRanks::new(&pooled)?;
    let nx = x.len();
    let n = pooled.len();
    let mut counts = vec![0; ranks.group_size.len()];
    ranks.counts_for(0..nx, &mut counts);
    let observed = ranks.statistic_from_counts(&counts, nx);

    let assignments = binomial(n, nx);
    if assignments - 1 <= n_perm as u64 {
        let (hits, total) = enumerate_assignments(&ranks, nx, observed, &mut counts);
        return Ok(AdOutcome {
            statistic: observed,
            p_value: hits as f64 / total as f64,
            n_perm: (total - 1) as usize,
            exhaustive: true,
        });
    }

    let mut rng = rng_from_seed(seed);
    let mut idx: Vec<usize> = (0..n).collect();
    // draw the smaller side; the statistic is symmetric in the two samples
    let draw = nx.min(n - nx);
    let mut hits = 0usize;
    for _ in 0..n_perm {
        for i in 0..draw {
            let j = rng.random_range(i..n);
            idx.swap(i, j);
        }
        ranks.counts_for(idx[..draw].iter().copied(), &mut counts);
        if at_least(ranks.statistic_from_counts(&counts, draw), observed) {
            hits += 1;
        }
    }
    Ok(AdOutcome { statistic: observed, p_value: (1 + hits) as f64 / (1 + n_perm) as f64, n_perm, exhaustive: false })
}

/// Count assignments of `nx` pooled positions whose statistic is at least
/// `observed`. Returns (hits, number of assignments).
fn enumerate_assignments(ranks: &PooledRanks, nx: usize, observed: f64, counts: &mut [usize]) -> (u64, u64) {
    let n = ranks.len();
    let mut comb: Vec<usize> = (0..nx).collect();
    let mut hits = 0u64;
    let mut total = 0u64;
    loop {
        ranks.counts_for(comb.iter().copied(), counts);
        if at_least(ranks.statistic_from_counts(counts, nx), observed) {
            hits += 1;
        }
        total += 1;
        // next combination in lexicographic order
        let mut i = nx;
        while i > 0 && comb[i - 1] == n - nx + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return (hits, total);
        }
        comb[i - 1] += 1;
        for j in i..nx {
            comb[j] = comb[j - 1] + 1;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum AdMethod {
    Pad,
    Cpad,
    Pmad,
    Adm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OkAdResult {
    pub method: AdMethod,
    pub p_value: f64,
    /// Constituent p-values: pairwise (PAD), leave-one-out control PADs (CPAD),
    /// per-subset (PMAD) or the single mean-shift test (ADM).
    pub components: Vec<f64>,
}

/// Which side of the case PAD counts as "at least as extreme" in CPAD.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CpadTail {
    /// Fraction of control PADs at most the case PAD; small means significant.
    #[default]
    AtMost,
    /// Fraction of control PADs at least the case PAD.
    AtLeast,
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn case_pair_seed(seed: u64, k: usize) -> u64 {
    derive_seed(seed, &[tags::CASE_PAIR, k as u64])
}

/// Average of the K case-versus-control permutation p-values.
pub fn pad(case: &[f64], controls: &[Vec<f64>], n_perm: usize, seed: u64) -> Result<OkAdResult> {
    if controls.is_empty() {
        return Err(AdError::TooFewControls { method: "PAD", needed: 1, got: 0 });
    }
    let components = controls
        .iter()
        .enumerate()
        .map(|(k, c)| ad2_pvalue(case, c, n_perm, case_pair_seed(seed, k)).map(|o| o.p_value))
        .collect::<Result<Vec<_>>>()?;
    Ok(OkAdResult { method: AdMethod::Pad, p_value: mean(&components), components })
}

/// Symmetric matrix of pairwise AD p-values between samples, unit diagonal.
/// Entry (i, j), i < j, tests sample i against sample j with a seed derived
/// from the unordered pair.
pub fn pairwise_pvalues(samples: &[Vec<f64>], n_perm: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    use rayon::prelude::*;
    let n = samples.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let values = pairs
        .par_iter()
        .map(|&(i, j)| {
            ad2_pvalue(&samples[i], &samples[j], n_perm, derive_seed(seed, &[tags::CONTROL_PAIR, i as u64, j as u64]))
                .map(|o| o.p_value)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut m = vec![vec![1.0; n]; n];
    for (&(i, j), p) in pairs.iter().zip(values) {
        m[i][j] = p;
        m[j][i] = p;
    }
    Ok(m)
}

/// Leave-one-out PAD values of the controls, reusable across cases.
#[derive(Debug, Clone)]
pub struct CpadPool {
    control_pads: Vec<f64>,
    pairwise: Vec<Vec<f64>>,
}

impl CpadPool {
    pub fn build(controls: &[Vec<f64>], n_perm: usize, seed: u64) -> Result<Self> {
        let k = controls.len();
        if k < 2 {
            return Err(AdError::TooFewControls { method: "CPAD", needed: 2, got: k });
        }
        let m = pairwise_pvalues(controls, n_perm, seed)?;
        let control_pads =
            (0..k).map(|i| (0..k).filter(|&j| j != i).map(|j| m[i][j]).sum::<f64>() / (k - 1) as f64).collect();
        Ok(Self { control_pads, pairwise: m })
    }

    pub fn control_pads(&self) -> &[f64] {
        &self.control_pads
    }

    /// Control-versus-control p-values from [`pairwise_pvalues`].
    pub fn pairwise(&self) -> &[Vec<f64>] {
        &self.pairwise
    }

    /// Calibrate an already computed case PAD value.
    pub fn calibrate(&self, case_pad: f64, tail: CpadTail) -> OkAdResult {
        let hits = self
            .control_pads
            .iter()
            .filter(|&&p| match tail {
                CpadTail::AtMost => p <= case_pad,
                CpadTail::AtLeast => p >= case_pad,
            })
            .count();
        OkAdResult {
            method: AdMethod::Cpad,
            p_value: hits as f64 / self.control_pads.len() as f64,
            components: self.control_pads.clone(),
        }
    }
}

/// One-out-of-K calibration of PAD: the share of controls whose own PAD
/// against the other K-1 controls is at most the case PAD.
pub fn cpad(case: &[f64], controls: &[Vec<f64>], n_perm: usize, seed: u64, tail: CpadTail) -> Result<OkAdResult> {
    let pool = CpadPool::build(controls, n_perm, seed)?;
    let case_pad = pad(case, controls, n_perm, seed)?.p_value;
    Ok(pool.calibrate(case_pad, tail))
}

/// Pooled-permutation AD: test the case against `n_subsets` random subsets
/// (each the size of one control sample, drawn without replacement from the
/// pooled controls) and average the p-values.
pub fn pmad(case: &[f64], controls: &[Vec<f64>], n_subsets: usize, n_perm: usize, seed: u64) -> Result<OkAdResult> {
    if controls.is_empty() {
        return Err(AdError::TooFewControls { method: "PMAD", needed: 1, got: 0 });
    }
    if n_subsets == 0 {
        return Err(AdError::EmptySample);
    }
    let pooled: Vec<f64> = controls.iter().flatten().copied().collect();
    let subset_size = controls[0].len();
    if pooled.len() < subset_size || subset_size == 0 {
        return Err(AdError::PoolTooSmall { pooled: pooled.len(), subset: subset_size });
    }
    let mut components = Vec::with_capacity(n_subsets);
    let mut idx: Vec<usize> = (0..pooled.len()).collect();
    for s in 0..n_subsets {
        let mut rng = rng_from_seed(derive_seed(seed, &[tags::PMAD_SUBSET, s as u64]));
        for i in 0..subset_size {
            let j = rng.random_range(i..idx.len());
            idx.swap(i, j);
        }
        let subset: Vec<f64> = idx[..subset_size].iter().map(|&i| pooled[i]).collect();
        let p = ad2_pvalue(case, &subset, n_perm, derive_seed(seed, &[tags::PMAD_TEST, s as u64]))?.p_value;
        components.push(p);
    }
    Ok(OkAdResult { method: AdMethod::Pmad, p_value: mean(&components), components })
}

/// Mean-shift AD: the case epoch mean (one value) against the K control
/// epoch means.
pub fn adm(case: &[f64], controls: &[Vec<f64>], n_perm: usize, seed: u64) -> Result<OkAdResult> {
    if controls.len() < 2 {
        return Err(AdError::TooFewControls { method: "ADM", needed: 2, got: controls.len() });
    }
    if case.is_empty() || controls.iter().any(|c| c.is_empty()) {
        return Err(AdError::EmptySample);
    }
    let case_mean = [mean(case)];
    let control_means: Vec<f64> = controls.iter().map(|c| mean(c)).collect();
    let out = ad2_pvalue(&case_mean, &control_means, n_perm, derive_seed(seed, &[tags::ADM]))?;
    Ok(OkAdResult { method: AdMethod::Adm, p_value: out.p_value, components: vec![out.p_value] })
}
