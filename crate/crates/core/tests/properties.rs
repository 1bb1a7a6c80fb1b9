mod common;

use oktest_core::adfamily::{self, ad2_pvalue, ad2_statistic};
use oktest_core::correction::{bh_adjust, f_score};
use oktest_core::flr::{ControlPool, FlrConfig};
use oktest_core::hetero::{self, average_linkage, cut, hc_approved, SimilarityMatrix};
use oktest_core::mixture::{self, bic_penalty, fit_em, fit_em_from, select_order_bic, EmConfig, GaussianMixture};
use oktest_core::spectrum::{dft_magnitudes, EpochTimeSeries};
use proptest::prelude::*;

fn sample_strategy(min: usize, max: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-50.0f64..50.0, min..max)
}

fn mixture_strategy(max_order: usize) -> impl Strategy<Value = GaussianMixture> {
    (1..=max_order).prop_flat_map(|p| {
        (
            prop::collection::vec(0.05f64..1.0, p),
            prop::collection::vec(-5.0f64..5.0, p),
            prop::collection::vec(0.1f64..4.0, p),
        )
            .prop_map(|(w, m, v)| {
                let s: f64 = w.iter().sum();
                let mut w: Vec<f64> = w.iter().map(|x| x / s).collect();
                let drift = 1.0 - w.iter().sum::<f64>();
                w[0] += drift;
                GaussianMixture::new(w, m, v).unwrap()
            })
    })
}

fn similarity_strategy(max_n: usize) -> impl Strategy<Value = SimilarityMatrix> {
    (2..=max_n).prop_flat_map(|n| {
        prop::collection::vec(0.0f64..1.0, n * (n - 1) / 2).prop_map(move |upper| {
            let mut m = vec![vec![1.0; n]; n];
            let mut it = upper.into_iter();
            for i in 0..n {
                for j in i + 1..n {
                    let v = it.next().unwrap();
                    m[i][j] = v;
                    m[j][i] = v;
                }
            }
            SimilarityMatrix::new(m).unwrap()
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn em_loglik_never_decreases(truth in mixture_strategy(3), start in mixture_strategy(3), seed in any::<u64>()) {
        let x = truth.sample(150, seed);
        let fit = fit_em_from(&x, &start, &EmConfig { max_iter: 200, ..EmConfig::default() }).unwrap();
        for w in fit.trace.windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-8, "{} -> {}", w[0], w[1]);
        }
        prop_assert!((fit.loglik - fit.mixture.log_likelihood(&x).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn order_one_is_closed_form(x in sample_strategy(2, 60)) {
        prop_assume!(x.iter().any(|v| *v != x[0]));
        let fit = fit_em(&x, 1, &EmConfig::default()).unwrap();
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        prop_assert!((fit.mixture.means()[0] - mean).abs() < 1e-9);
        prop_assert!((fit.mixture.variances()[0] - var).abs() < 1e-9 * var.max(1.0));
    }

    #[test]
    fn mixture_label_permutation(m in mixture_strategy(4), x in sample_strategy(1, 30), shift in 0usize..4) {
        let p = m.order();
        let idx: Vec<usize> = (0..p).map(|k| (k + shift) % p).collect();
        let perm = GaussianMixture::new(
            idx.iter().map(|&k| m.weights()[k]).collect(),
            idx.iter().map(|&k| m.means()[k]).collect(),
            idx.iter().map(|&k| m.variances()[k]).collect(),
        );
        // renormalized weights can differ in the last ulp
        if let Ok(perm) = perm {
            let a = m.log_likelihood(&x).unwrap();
            let b = perm.log_likelihood(&x).unwrap();
            prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
            prop_assert!((m.density(x[0]) - perm.density(x[0])).abs() <= 1e-12);
        }
    }

    #[test]
    fn bic_trace_is_exact(truth in mixture_strategy(2), seed in any::<u64>()) {
        let x = truth.sample(80, seed);
        let sel = select_order_bic(&x, 3, &EmConfig { restarts: 2, ..EmConfig::default() }).unwrap();
        prop_assert_eq!(sel.bic_trace.len(), 3);
        for e in &sel.bic_trace {
            prop_assert_eq!(e.penalized, e.loglik - bic_penalty(80, e.order));
        }
        let best = sel.bic_trace.iter().map(|e| e.penalized).fold(f64::NEG_INFINITY, f64::max);
        let first = sel.bic_trace.iter().find(|e| e.penalized == best).unwrap();
        prop_assert_eq!(first.order, sel.best_order);
    }

    #[test]
    fn variance_floor_holds_with_point_mass(x in sample_strategy(5, 40), reps in 5usize..30) {
        let mut data = x.clone();
        data.extend(std::iter::repeat_n(x[0], reps));
        let cfg = EmConfig { restarts: 2, ..EmConfig::default() };
        let n = data.len() as f64;
        let mean = data.iter().sum::<f64>() / n;
        let var = data.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        prop_assume!(var > 0.0);
        let fit = fit_em(&data, 3, &cfg).unwrap();
        prop_assert!(fit.loglik.is_finite());
        for &v in fit.mixture.variances() {
            prop_assert!(v >= cfg.variance_floor(var));
        }
    }

    #[test]
    fn bh_matches_oracle_and_step_up_rule(raw in prop::collection::vec(0.0f64..=1.0, 1..60), alpha in 0.001f64..0.5) {
        let adj = bh_adjust(&raw).unwrap();
        prop_assert_eq!(&adj.adjusted, &common::bh_oracle(&raw));
        for (a, r) in adj.adjusted.iter().zip(&raw) {
            // p * m / m may round one ulp low
            prop_assert!(*a >= r * (1.0 - 4.0 * f64::EPSILON));
        }
        // Rejecting adjusted <= alpha is the step-up rule at level alpha.
        let m = raw.len();
        let mut sorted = raw.clone();
        sorted.sort_by(f64::total_cmp);
        let cutoff = (1..=m).rev().find(|&i| sorted[i - 1] <= alpha * i as f64 / m as f64).map(|i| sorted[i - 1]);
        for (a, r) in adj.adjusted.iter().zip(&raw) {
            prop_assert_eq!(*a <= alpha, cutoff.is_some_and(|c| *r <= c));
        }
    }

    #[test]
    fn bh_commutes_with_permutation(raw in prop::collection::vec(0.0f64..=1.0, 1..40), rot in 0usize..40) {
        let r = rot % raw.len();
        let mut rotated = raw.clone();
        rotated.rotate_left(r);
        let mut expect = bh_adjust(&raw).unwrap().adjusted;
        expect.rotate_left(r);
        prop_assert_eq!(bh_adjust(&rotated).unwrap().adjusted, expect);
    }

    #[test]
    fn f_score_is_monotone(p in 0.01f64..1.0, r in 0.01f64..1.0, dp in 0.0f64..0.5, w in 0.1f64..4.0) {
        let base = f_score(p, r, w).unwrap();
        prop_assert!(f_score((p + dp).min(1.0), r, w).unwrap() >= base - 1e-15);
        prop_assert!(f_score(p, (r + dp).min(1.0), w).unwrap() >= base - 1e-15);
        let f1 = f_score(p, r, 1.0).unwrap();
        prop_assert!((f1 - 2.0 * p * r / (p + r)).abs() < 1e-12);
    }

    #[test]
    fn ad_statistic_matches_formula(x in sample_strategy(1, 12), y in sample_strategy(1, 12), round in any::<bool>()) {
        let (x, y): (Vec<f64>, Vec<f64>) = if round {
            (x.iter().map(|v| v.round()).collect(), y.iter().map(|v| v.round()).collect())
        } else {
            (x, y)
        };
        let a = ad2_statistic(&x, &y).unwrap();
        let b = common::ad2_oracle(&x, &y);
        prop_assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0), "{} vs {}", a, b);
    }

    #[test]
    fn ad_rank_invariance(x in sample_strategy(2, 20), y in sample_strategy(2, 20), seed in any::<u64>()) {
        let ex = |v: &[f64]| v.iter().map(|t| (t / 10.0).exp()).collect::<Vec<_>>();
        let a = ad2_pvalue(&x, &y, 199, seed).unwrap();
        let b = ad2_pvalue(&ex(&x), &ex(&y), 199, seed).unwrap();
        prop_assert!((a.statistic - b.statistic).abs() <= 1e-9 * a.statistic.max(1.0));
        prop_assert_eq!(a.p_value, b.p_value);
    }

    #[test]
    fn ad_pvalue_bounds(x in sample_strategy(3, 15), y in sample_strategy(3, 15), seed in any::<u64>()) {
        let o = ad2_pvalue(&x, &y, 99, seed).unwrap();
        prop_assert!(o.p_value <= 1.0 && o.p_value >= 1.0 / (o.n_perm as f64 + 1.0));
    }

    #[test]
    fn upgma_heights_and_cuts(sim in similarity_strategy(9), h in 0.0f64..=1.0) {
        let d = average_linkage(&sim);
        prop_assert_eq!(d.merges.len(), sim.size() - 1);
        for w in d.merges.windows(2) {
            prop_assert!(w[1].height >= w[0].height);
        }
        let parts = cut(&d, h).unwrap();
        let mut all: Vec<usize> = parts.concat();
        all.sort_unstable();
        prop_assert_eq!(all, (1..=sim.size()).collect::<Vec<_>>());
        let back = hetero::parse_newick(&hetero::export_newick(&d)).unwrap();
        prop_assert_eq!(back.n_leaves, d.n_leaves);
        let mut heights: Vec<f64> = back.merges.iter().map(|m| m.height).collect();
        let mut orig: Vec<f64> = d.merges.iter().map(|m| m.height).collect();
        heights.sort_by(f64::total_cmp);
        orig.sort_by(f64::total_cmp);
        for (a, b) in heights.iter().zip(&orig) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn hc_verdict_ignores_control_labels(sim in similarity_strategy(8), rot in 1usize..8) {
        let n = sim.size();
        prop_assume!(n >= 3);
        // rotate control labels 2..=n, keep the case at leaf 1
        let k = n - 1;
        let map = |i: usize| if i == 0 { 0 } else { 1 + (i - 1 + rot) % k };
        let mut m = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                m[map(i)][map(j)] = sim.get(i, j);
            }
        }
        let relabeled = SimilarityMatrix::new(m).unwrap();
        // generic similarities avoid exact ties, where labels would matter
        let a = hc_approved(&average_linkage(&sim), 1).unwrap();
        let b = hc_approved(&average_linkage(&relabeled), 1).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn dft_matches_naive(series in prop::collection::vec(-10.0f64..10.0, 2..=256)) {
        let epoch = EpochTimeSeries::new(vec![series.clone()], 100.0).unwrap();
        let fast = &dft_magnitudes(&epoch)[0];
        let slow = common::naive_dft(&series);
        prop_assert_eq!(fast.len(), slow.len());
        for (a, b) in fast.iter().zip(&slow) {
            prop_assert!((a - b).abs() < 1e-9 * (1.0 + b.abs()), "{} vs {}", a, b);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn p_raw_nondecreasing_in_c0(seed in any::<u64>()) {
        let cfg = FlrConfig { fixed_order: Some(1), bootstrap_reps: 1, ..FlrConfig::default() };
        let law = GaussianMixture::single(0.0, 1.0).unwrap();
        let controls: Vec<Vec<f64>> = (0..6).map(|k| law.sample(40, seed ^ k)).collect();
        let pool = ControlPool::with_bootstrap(&controls, &cfg, seed).unwrap();
        let stats = pool.case_stats(&law.sample(40, seed.wrapping_add(99)), &cfg).unwrap();
        let cal = pool.calibration(&stats);
        let grid = cfg.c0_grid();
        for w in grid.windows(2) {
            prop_assert!(cal.p_raw(w[1]) >= cal.p_raw(w[0]));
        }
        for &c0 in &grid {
            let k = cal.p_cv(c0) * 6.0;
            prop_assert!((k - k.round()).abs() < 1e-12);
        }
    }

    #[test]
    fn pad_is_exchangeable(seed in any::<u64>()) {
        let law = GaussianMixture::single(0.0, 1.0).unwrap();
        let case = law.sample(20, seed);
        let controls: Vec<Vec<f64>> = (0..3).map(|k| law.sample(20, seed ^ (k + 1))).collect();
        let mut swapped = controls.clone();
        swapped.swap(0, 2);
        // a pair's seed follows its position, so compare exhaustive-size inputs
        let small_case = &case[..4];
        let small: Vec<Vec<f64>> = controls.iter().map(|c| c[..4].to_vec()).collect();
        let small_swapped: Vec<Vec<f64>> = swapped.iter().map(|c| c[..4].to_vec()).collect();
        let a = adfamily::pad(small_case, &small, 99, seed).unwrap();
        let b = adfamily::pad(small_case, &small_swapped, 99, seed).unwrap();
        prop_assert!((a.p_value - b.p_value).abs() < 1e-12);
        prop_assert_eq!(a.components[0], b.components[2]);
        prop_assert_eq!(a.components[2], b.components[0]);
    }
}

#[test]
fn sample_mean_converges() {
    let m = GaussianMixture::new(vec![0.2, 0.8], vec![-1.0, 3.0], vec![1.0, 1.0]).unwrap();
    let x = mixture::sample(&m, 100_000, 17);
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    assert!((mean - 2.2).abs() < 0.05, "{mean}");
}
