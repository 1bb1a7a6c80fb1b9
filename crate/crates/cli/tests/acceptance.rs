//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Pass criterion numbers as arguments to run a subset.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use oktest_core::adfamily::ad2_pvalue;
use oktest_core::correction::bh_adjust;
use oktest_core::hetero::{approve, similarity_matrix, HcRule, PairTest};
use oktest_core::mixture::{fit_em, EmConfig, GaussianMixture};
use oktest_core::seed::{derive_seed, rng_from_seed};
use oktest_core::simlab::{self, chisq_null_check, order_consistency_check, Method, SimConfig};
use oktest_core::spectrum::{dft_magnitudes, EpochTimeSeries};
use rand::Rng;

const ROOT_SEED: u64 = 20_240_601;

type Check = fn() -> Outcome;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self { pass, detail: detail.into() }
    }
}

fn within(value: Option<f64>, target: f64, tol: f64) -> bool {
    value.is_some_and(|v| (v - target).abs() <= tol)
}

fn fmt(v: Option<f64>) -> String {
    v.map_or("undefined".to_string(), |v| format!("{v:.3}"))
}

fn f1(e: &simlab::Experiment, block: &str, m: Method) -> Option<f64> {
    e.summary.metrics(block, m).and_then(|x| x.f(1.0))
}

fn setting_one(methods: &[Method]) -> (simlab::Experiment, Duration) {
    let start = Instant::now();
    let e = simlab::run_experiment(
        &["1.1", "1.2", "1.3", "1.4", "1.5"],
        methods,
        20,
        simlab::DEFAULT_N,
        simlab::DEFAULT_K,
        ROOT_SEED,
        &SimConfig::desk(),
    )
    .expect("setting 1 runs");
    (e, start.elapsed())
}

fn table_setting_one(e: &simlab::Experiment, elapsed: Duration) -> Outcome {
    let flr = f1(e, "1", Method::Flr);
    let pad = f1(e, "1", Method::Pad);
    let fast = elapsed <= Duration::from_secs(30 * 60);
    Outcome::new(
        within(flr, 0.84, 0.12) && within(pad, 0.63, 0.12) && fast,
        format!(
            "FLR F1 {} (0.84 +/- 0.12), PAD F1 {} (0.63 +/- 0.12), {:.0} s",
            fmt(flr),
            fmt(pad),
            elapsed.as_secs_f64()
        ),
    )
}

fn table_setting_two() -> Outcome {
    let e = simlab::run_experiment(
        &["2.1", "2.2", "2.3"],
        &[Method::Flr, Method::Adm],
        20,
        simlab::DEFAULT_N,
        simlab::DEFAULT_K,
        ROOT_SEED,
        &SimConfig::desk(),
    )
    .expect("setting 2 runs");
    let flr = f1(&e, "2", Method::Flr);
    let adm_recall = e.summary.metrics("2", Method::Adm).and_then(|m| m.recall);
    Outcome::new(
        within(flr, 0.79, 0.12) && adm_recall.is_some_and(|r| r <= 0.3),
        format!("FLR F1 {} (0.79 +/- 0.12), ADM recall {} (<= 0.3)", fmt(flr), fmt(adm_recall)),
    )
}

fn size_control(e: &simlab::Experiment) -> Outcome {
    let flr_null = e.summary.rate("1.2", Method::Flr);
    let pmad = e.summary.rate("1.1", Method::Pmad);
    Outcome::new(
        flr_null.is_some_and(|r| (0.0..=0.25).contains(&r)) && pmad.is_some_and(|r| r >= 0.9),
        format!("1.2 FLR rate {} (in [0, 0.25]), 1.1 PMAD rate {} (>= 0.9)", fmt(flr_null), fmt(pmad)),
    )
}

fn chisq_calibration() -> Outcome {
    let (mut matched, mut rejected) = (0, 0);
    for s in 0..20u64 {
        let seed = derive_seed(ROOT_SEED, &[4, s]);
        matched += usize::from(chisq_null_check(2, 500, 500, seed).expect("null check") > 0.01);
        rejected += usize::from(chisq_null_check(5, 500, 500, seed).expect("null check") < 0.01);
    }
    Outcome::new(
        matched >= 18 && rejected >= 18,
        format!("d=2 p > 0.01 in {matched}/20 (>= 18), d=5 p < 0.01 in {rejected}/20 (>= 18)"),
    )
}

fn order_consistency() -> Outcome {
    let em = EmConfig::default();
    let two = GaussianMixture::new(vec![0.5, 0.5], vec![-3.0, 3.0], vec![1.0, 1.0]).unwrap();
    let one = GaussianMixture::single(0.0, 1.0).unwrap();
    let two_rate = order_consistency_check(&two, &[2000], 50, 5, &em, derive_seed(ROOT_SEED, &[5, 2])).unwrap()[0].1;
    let one_rate = order_consistency_check(&one, &[1000], 50, 5, &em, derive_seed(ROOT_SEED, &[5, 1])).unwrap()[0].1;
    Outcome::new(
        two_rate >= 0.9 && one_rate >= 0.9,
        format!("two components at n=2000: {two_rate:.2}, one component at n=1000: {one_rate:.2} (both >= 0.90)"),
    )
}

fn em_suite() -> Outcome {
    let mut rng = rng_from_seed(derive_seed(ROOT_SEED, &[6]));
    let mut worst_drop = 0.0f64;
    let mut worst_closed = 0.0f64;
    for i in 0..1000u64 {
        let p = rng.random_range(1..=3);
        let w: Vec<f64> = (0..p).map(|_| rng.random_range(0.1..1.0)).collect();
        let total: f64 = w.iter().sum();
        let mut w: Vec<f64> = w.iter().map(|x| x / total).collect();
        w[0] += 1.0 - w.iter().sum::<f64>();
        let means = (0..p).map(|_| rng.random_range(-5.0..5.0)).collect();
        let vars = (0..p).map(|_| rng.random_range(0.2..3.0)).collect();
        let truth = GaussianMixture::new(w, means, vars).unwrap();
        let x = truth.sample(rng.random_range(30..300), derive_seed(ROOT_SEED, &[6, i]));
        let cfg = EmConfig { seed: i, restarts: 2, ..EmConfig::default() };
        let fit = fit_em(&x, rng.random_range(1..=4), &cfg).unwrap();
        for pair in fit.trace.windows(2) {
            worst_drop = worst_drop.max(pair[0] - pair[1]);
        }
        let single = fit_em(&x, 1, &cfg).unwrap();
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let loglik = -0.5 * n * ((2.0 * std::f64::consts::PI * var).ln() + 1.0);
        let errs = [
            (single.mixture.means()[0] - mean).abs(),
            (single.mixture.variances()[0] - var).abs(),
            (single.loglik - loglik).abs(),
        ];
        worst_closed = errs.iter().copied().fold(worst_closed, f64::max);
    }
    Outcome::new(
        worst_drop <= 1e-8 && worst_closed <= 1e-9,
        format!(
            "1000 fits: largest loglik drop {worst_drop:.2e} (<= 1e-8), order-1 error {worst_closed:.2e} (<= 1e-9)"
        ),
    )
}

fn ad_oracle() -> Outcome {
    let mut rng = rng_from_seed(derive_seed(ROOT_SEED, &[7]));
    let (mut exact, mut invariant) = (0, 0);
    for i in 0..200u64 {
        let total = rng.random_range(2..=8);
        let nx = rng.random_range(1..total);
        let tied = rng.random_bool(0.5);
        let mut draw = |n: usize| -> Vec<f64> {
            (0..n).map(|_| if tied { rng.random_range(1..=4) as f64 } else { rng.random_range(0.1..10.0) }).collect()
        };
        let x = draw(nx);
        let y = draw(total - nx);
        let out = ad2_pvalue(&x, &y, 999, i).unwrap();
        if out.exhaustive && out.p_value == common::ad_exhaustive_oracle(&x, &y) {
            exact += 1;
        }
        let ex: Vec<f64> = x.iter().map(|v| v.exp()).collect();
        let ey: Vec<f64> = y.iter().map(|v| v.exp()).collect();
        let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
        let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
        let p_exp = ad2_pvalue(&ex, &ey, 999, i).unwrap().p_value;
        let p_log = ad2_pvalue(&lx, &ly, 999, i).unwrap().p_value;
        if p_exp == out.p_value && p_log == out.p_value {
            invariant += 1;
        }
    }
    Outcome::new(
        exact == 200 && invariant == 200,
        format!("exhaustive p equals oracle in {exact}/200, exp/log invariant in {invariant}/200"),
    )
}

fn bh_oracle() -> Outcome {
    let mut rng = rng_from_seed(derive_seed(ROOT_SEED, &[8]));
    let (mut matched, mut idempotent) = (0, 0);
    for _ in 0..1000 {
        let m = rng.random_range(1..=100);
        let raw: Vec<f64> = (0..m)
            .map(|_| if rng.random_bool(0.2) { rng.random_range(0..20) as f64 / 20.0 } else { rng.random::<f64>() })
            .collect();
        let adj = bh_adjust(&raw).unwrap().adjusted;
        if adj == common::bh_oracle(&raw) {
            matched += 1;
        }
        let again = bh_adjust(&adj).unwrap().adjusted;
        idempotent += usize::from(again == adj);
    }
    let mut detail = format!("oracle match {matched}/1000, idempotent on own output {idempotent}/1000");
    if idempotent < 1000 {
        let adj = bh_adjust(&[0.25, 0.75]).unwrap().adjusted;
        let again = bh_adjust(&adj).unwrap().adjusted;
        detail.push_str(&format!("; e.g. [0.25, 0.75] -> {adj:?} -> {again:?}"));
    }
    Outcome::new(matched == 1000 && idempotent == 1000, detail)
}

fn hc_behavior() -> Outcome {
    let mut approved = [0usize; 2];
    let mut monotone = true;
    for (slot, id) in ["1.5", "1.2"].into_iter().enumerate() {
        let spec = simlab::setting(id).unwrap();
        for s in 0..20u64 {
            let seed = derive_seed(ROOT_SEED, &[9, slot as u64, s]);
            let d = simlab::generate_dataset(&spec, seed);
            let subjects: Vec<Vec<f64>> = std::iter::once(d.case).chain(d.controls).collect();
            let sim = similarity_matrix(&subjects, &PairTest::Ad { n_perm: 999 }, seed).unwrap();
            let (ok, dendro) = approve(&sim, HcRule::LastMerge);
            approved[slot] += usize::from(ok);
            monotone &= dendro.merges.windows(2).all(|w| w[1].height >= w[0].height);
        }
    }
    Outcome::new(
        approved[0] >= 18 && approved[1] <= 4 && monotone,
        format!(
            "1.5 approved {}/20 (>= 18), 1.2 approved {}/20 (<= 4), heights nondecreasing: {monotone}",
            approved[0], approved[1]
        ),
    )
}

fn spectrum_suite() -> Outcome {
    let mut worst_analytic = 0.0f64;
    for j in [16usize, 64, 100, 128] {
        let dc = EpochTimeSeries::new(vec![vec![1.75; j]], j as f64).unwrap();
        let mags = &dft_magnitudes(&dc)[0];
        worst_analytic = worst_analytic.max((mags[0] - 1.75 * j as f64).abs());
        worst_analytic = mags[1..].iter().fold(worst_analytic, |w, m| w.max(m.abs()));
        let bin = j / 4;
        let amp = 2.5;
        let tone: Vec<f64> =
            (0..j).map(|t| amp * (2.0 * std::f64::consts::PI * (bin * t) as f64 / j as f64).cos()).collect();
        let mags = &dft_magnitudes(&EpochTimeSeries::new(vec![tone], j as f64).unwrap())[0];
        for (m, v) in mags.iter().enumerate() {
            let expected = if m == bin { amp * j as f64 / 2.0 } else { 0.0 };
            worst_analytic = worst_analytic.max((v - expected).abs());
        }
    }
    let mut rng = rng_from_seed(derive_seed(ROOT_SEED, &[10]));
    let mut worst_naive = 0.0f64;
    let mut worst_parseval = 0.0f64;
    for _ in 0..50 {
        let j = rng.random_range(2..=256);
        let series: Vec<f64> = (0..j).map(|_| rng.random_range(-3.0..3.0)).collect();
        let mags = dft_magnitudes(&EpochTimeSeries::new(vec![series.clone()], 100.0).unwrap()).remove(0);
        let naive = common::naive_dft(&series);
        let scale = naive.iter().fold(1.0f64, |a, b| a.max(*b));
        worst_naive = mags.iter().zip(&naive).fold(worst_naive, |w, (a, b)| w.max((a - b).abs() / scale));
        let energy: f64 = series.iter().map(|v| v * v).sum();
        let spectral: f64 = (0..j).map(|m| mags[m.min(j - m)].powi(2)).sum::<f64>() / j as f64;
        worst_parseval = worst_parseval.max((spectral - energy).abs() / energy);
    }
    Outcome::new(
        worst_analytic <= 1e-9 && worst_naive <= 1e-9 && worst_parseval <= 1e-6,
        format!(
            "analytic error {worst_analytic:.1e} (<= 1e-9), naive DFT error {worst_naive:.1e}, Parseval error {worst_parseval:.1e} (<= 1e-6)"
        ),
    )
}

fn run_cli(args: &[&str]) -> bool {
    Command::new(env!("CARGO_BIN_EXE_oktest"))
        .args(args)
        .env_remove("OKTEST_SEED")
        .output()
        .is_ok_and(|o| o.status.success())
}

fn same_files(a: &Path, b: &Path, names: &[&str]) -> bool {
    names.iter().all(|n| matches!((fs::read(a.join(n)), fs::read(b.join(n))), (Ok(x), Ok(y)) if x == y))
}

fn determinism() -> Outcome {
    let dir = std::env::temp_dir().join(format!("oktest-acceptance-{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    let path = |p: &str| dir.join(p).to_string_lossy().into_owned();

    let sim = |out: &str| {
        run_cli(&[
            "simulate",
            "--settings",
            "1.1,1.2,2.3",
            "--methods",
            "FLR,CFLR,PAD,CPAD,PMAD,ADM",
            "--reps",
            "2",
            "--n",
            "50",
            "--k",
            "6",
            "--desk",
            "--n-perm",
            "199",
            "--seed",
            "11",
            "--out",
            &path(out),
        ])
    };
    let sim_ok = sim("sim-a")
        && sim("sim-b")
        && same_files(&dir.join("sim-a"), &dir.join("sim-b"), &["raw.tsv", "summary.json"]);

    let spec = simlab::setting("1.5").unwrap().resized(60, 6).unwrap();
    let write = |name: &str, rows: Vec<Vec<f64>>| {
        let m = oktest_core::spectrum::BandPowerMatrix::new("alpha", rows).unwrap();
        let mut buf = Vec::new();
        m.write_csv(&mut buf, &[]).unwrap();
        fs::write(dir.join(name), buf).unwrap();
    };
    let regions: Vec<simlab::Dataset> = (0..3).map(|a| simlab::generate_dataset(&spec, 100 + a)).collect();
    write("case.csv", regions.iter().map(|d| d.case.clone()).collect());
    let controls: Vec<String> = (0..6)
        .map(|k| {
            let name = format!("control-{k}.csv");
            write(&name, regions.iter().map(|d| d.controls[k].clone()).collect());
            name
        })
        .collect();
    let manifest = serde_json::json!({
        "case": "case.csv", "controls": controls, "methods": ["FLR", "CFLR", "PAD", "CPAD", "PMAD", "ADM"],
        "seed": 5, "config": { "p_max": 2, "em_restarts": 1, "n_perm": 199, "alpha": 0.05 },
    });
    fs::write(dir.join("manifest.json"), manifest.to_string()).unwrap();
    let test = |out: &str| run_cli(&["test", "--manifest", &path("manifest.json"), "--out", &path(out)]);
    let mut test_ok =
        test("test-a") && test("test-b") && same_files(&dir.join("test-a"), &dir.join("test-b"), &["report.json"]);
    if test_ok {
        let names: Vec<String> = fs::read_dir(dir.join("test-a/dendrograms"))
            .map(|it| it.filter_map(|e| e.ok()).map(|e| e.file_name().to_string_lossy().into_owned()).collect())
            .unwrap_or_default();
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        test_ok = same_files(&dir.join("test-a/dendrograms"), &dir.join("test-b/dendrograms"), &refs);
    }
    let _ = fs::remove_dir_all(&dir);
    Outcome::new(sim_ok && test_ok, format!("simulate identical: {sim_ok}, test identical: {test_ok}"))
}

fn guarded(f: impl FnOnce() -> Outcome) -> Outcome {
    match panic::catch_unwind(AssertUnwindSafe(f)) {
        Ok(o) => o,
        Err(e) => {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Outcome::new(false, format!("panicked: {msg}"))
        }
    }
}

fn main() {
    let wanted: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let run = |n: usize| wanted.is_empty() || wanted.contains(&n);
    let mut failures = 0;
    let mut emit = |n: usize, title: &str, o: Outcome| {
        println!("{} criterion {n:>2} {title}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failures += usize::from(!o.pass);
    };

    if run(1) || run(3) {
        let (e, elapsed) = setting_one(&[Method::Flr, Method::Pad, Method::Pmad]);
        if run(1) {
            emit(1, "setting 1 table", guarded(|| table_setting_one(&e, elapsed)));
        }
        if run(3) {
            emit(3, "size control", guarded(|| size_control(&e)));
        }
    }
    let rest: [(usize, &str, Check); 8] = [
        (2, "setting 2 table", table_setting_two),
        (4, "chi-square null calibration", chisq_calibration),
        (5, "BIC order consistency", order_consistency),
        (6, "EM properties", em_suite),
        (7, "AD exhaustive oracle", ad_oracle),
        (8, "BH oracle", bh_oracle),
        (9, "HC behavior", hc_behavior),
        (10, "spectrum", spectrum_suite),
    ];
    for (n, title, f) in rest {
        if run(n) {
            emit(n, title, guarded(f));
        }
    }
    if run(11) {
        emit(11, "end-to-end determinism", guarded(determinism));
    }
    if failures > 0 {
        println!("{failures} criterion(s) failed");
        std::process::exit(1);
    }
}
