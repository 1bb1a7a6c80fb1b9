//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use oktest_core::adfamily::STAT_TIE_TOL;

/// Step-up adjustment evaluated straight from its definition: the rank of
/// each value is counted, not sorted, and every adjusted value is the
/// minimum of the scaled values at equal or higher rank.
pub fn bh_oracle(raw: &[f64]) -> Vec<f64> {
    let m = raw.len();
    let rank = |i: usize| 1 + (0..m).filter(|&j| raw[j] < raw[i] || (raw[j] == raw[i] && j < i)).count();
    let ranks: Vec<usize> = (0..m).map(rank).collect();
    (0..m)
        .map(|i| {
            (0..m)
                .filter(|&l| ranks[l] >= ranks[i])
                .map(|l| (raw[l] * m as f64 / ranks[l] as f64).min(1.0))
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

/// Two-sample midrank Anderson-Darling statistic summed over both samples.
pub fn ad2_oracle(x: &[f64], y: &[f64]) -> f64 {
    let mut pooled: Vec<f64> = x.iter().chain(y).copied().collect();
    pooled.sort_by(f64::total_cmp);
    pooled.dedup();
    let n = (x.len() + y.len()) as f64;
    let mut total = 0.0;
    for sample in [x, y] {
        let ni = sample.len() as f64;
        let mut inner = 0.0;
        for &z in &pooled {
            let l = x.iter().chain(y).filter(|&&v| v == z).count() as f64;
            let below = x.iter().chain(y).filter(|&&v| v < z).count() as f64;
            let b = below + l / 2.0;
            let f = sample.iter().filter(|&&v| v == z).count() as f64;
            let m = sample.iter().filter(|&&v| v < z).count() as f64 + f / 2.0;
            let denom = b * (n - b) - n * l / 4.0;
            if denom > 0.0 {
                inner += l * (n * m - ni * b).powi(2) / denom;
            }
        }
        total += inner / ni;
    }
    total * (n - 1.0) / (n * n)
}

/// Exact permutation p-value by visiting every split of the pooled sample
/// into groups of the original sizes (bitmask enumeration), scored with
/// [`ad2_oracle`].
pub fn ad_exhaustive_oracle(x: &[f64], y: &[f64]) -> f64 {
    let pooled: Vec<f64> = x.iter().chain(y).copied().collect();
    let n = pooled.len();
    let observed = ad2_oracle(x, y);
    let (mut hits, mut total) = (0u64, 0u64);
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != x.len() {
            continue;
        }
        let (a, b): (Vec<f64>, Vec<f64>) = {
            let mut a = Vec::new();
            let mut b = Vec::new();
            for (i, &v) in pooled.iter().enumerate() {
                if mask >> i & 1 == 1 {
                    a.push(v)
                } else {
                    b.push(v)
                }
            }
            (a, b)
        };
        let s = ad2_oracle(&a, &b);
        total += 1;
        if s >= observed - STAT_TIE_TOL * observed.abs().max(1.0) {
            hits += 1;
        }
    }
    hits as f64 / total as f64
}

/// Direct O(J^2) DFT magnitudes for bins 0..=J/2.
pub fn naive_dft(series: &[f64]) -> Vec<f64> {
    let j = series.len();
    (0..=j / 2)
        .map(|m| {
            let (mut re, mut im) = (0.0, 0.0);
            for (t, &b) in series.iter().enumerate() {
                let angle = -2.0 * std::f64::consts::PI * (m * t % j) as f64 / j as f64;
                re += b * angle.cos();
                im += b * angle.sin();
            }
            re.hypot(im)
        })
        .collect()
}
