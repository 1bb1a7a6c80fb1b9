use std::collections::hash_map::Entry;
use std::collections::HashMap;
use std::fs;
use std::path::Path;

use anyhow::Context;
use oktest_core::adfamily::{self, CpadPool};
use oktest_core::correction::bh_adjust;
use oktest_core::flr::{ControlPool, FlrResult};
use oktest_core::hetero::{self, Dendrogram, PairTest};
use oktest_core::seed::derive_seed;
use oktest_core::simlab::Method;
use serde::Serialize;

use crate::manifest::{self, Study, StudyConfig};
use crate::meta::{resolve_seed, RunMeta};
use crate::regions::region_name;
use crate::{usage, CliResult, ClusterArgs, TestArgs};

#[derive(Debug, Serialize)]
struct MethodResult {
    method: Method,
    p_raw: f64,
    p_adjusted: f64,
    significant: bool,
    /// Only set for significant regions.
    hc_approved: Option<bool>,
    /// Newick sidecar, relative to the report.
    dendrogram: Option<String>,
    /// Selected critical value (FLR and CFLR).
    c0: Option<f64>,
}

#[derive(Debug, Serialize)]
struct RegionReport {
    index: usize,
    name: String,
    results: Vec<MethodResult>,
}

#[derive(Debug, Serialize)]
struct TestReport {
    meta: RunMeta<StudyConfig>,
    band: String,
    n_regions: usize,
    n_controls: usize,
    n_epochs: usize,
    methods: Vec<Method>,
    regions: Vec<RegionReport>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Family {
    Ad,
    Flr,
}

fn family(m: Method) -> Family {
    match m {
        Method::Flr | Method::Cflr => Family::Flr,
        _ => Family::Ad,
    }
}

fn pair_test(f: Family, cfg: &StudyConfig) -> PairTest {
    match f {
        Family::Ad => PairTest::Ad { n_perm: cfg.n_perm },
        Family::Flr => PairTest::Flr(cfg.flr),
    }
}

fn region_seed(seed: u64, region: usize) -> u64 {
    derive_seed(seed, &[region as u64])
}

fn method_seed(region_seed: u64, m: Method) -> u64 {
    derive_seed(region_seed, &[1, m as u64])
}

/// Raw p-values of every requested method for one 0-based region.
fn region_pvalues(study: &Study, region: usize, seed: u64) -> anyhow::Result<Vec<(f64, Option<f64>)>> {
    let cfg = &study.config;
    let case = study.case.row(region);
    let controls = study.control_rows(region);
    let rs = region_seed(seed, region);
    let wants = |m: Method| study.methods.contains(&m);
    let flr: Option<FlrResult> = if wants(Method::Flr) || wants(Method::Cflr) {
        let pool = ControlPool::with_bootstrap(&controls, &cfg.flr, method_seed(rs, Method::Flr))?;
        let stats = pool.case_stats(case, &cfg.flr)?;
        Some(pool.calibration(&stats).select(&cfg.flr)?)
    } else {
        None
    };
    let case_pad = if wants(Method::Pad) || wants(Method::Cpad) {
        Some(adfamily::pad(case, &controls, cfg.n_perm, method_seed(rs, Method::Pad))?.p_value)
    } else {
        None
    };
    study
        .methods
        .iter()
        .map(|&m| {
            Ok(match m {
                Method::Flr => {
                    let r = flr.as_ref().expect("computed");
                    (r.p_raw, Some(r.c0))
                }
                Method::Cflr => {
                    let r = flr.as_ref().expect("computed");
                    (r.p_cv, Some(r.c0))
                }
                Method::Pad => (case_pad.expect("computed"), None),
                Method::Cpad => {
                    let pool = CpadPool::build(&controls, cfg.n_perm, method_seed(rs, Method::Cpad))?;
                    (pool.calibrate(case_pad.expect("computed"), cfg.cpad_tail).p_value, None)
                }
                Method::Pmad => {
                    let subsets = cfg.pmad_subsets.unwrap_or(case.len());
                    (adfamily::pmad(case, &controls, subsets, cfg.n_perm, method_seed(rs, Method::Pmad))?.p_value, None)
                }
                Method::Adm => {
                    (adfamily::adm(case, &controls, cfg.n_perm, method_seed(rs, Method::Adm))?.p_value, None)
                }
            })
        })
        .collect()
}

fn cluster_region(study: &Study, region: usize, fam: Family, seed: u64) -> anyhow::Result<(bool, Dendrogram)> {
    let sim = hetero::similarity_matrix(
        &study.subjects(region),
        &pair_test(fam, &study.config),
        derive_seed(region_seed(seed, region), &[2, fam as u64]),
    )?;
    Ok(hetero::approve(&sim, study.config.hc_rule))
}

fn write_newick<C: Serialize>(path: &Path, meta: &RunMeta<C>, dendro: &Dendrogram) -> anyhow::Result<()> {
    let text = format!("[{}]\n{}\n", meta.one_line(), hetero::export_newick(dendro));
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn check_config(cfg: &StudyConfig) -> CliResult<()> {
    if let Err(e) = cfg.flr.validate_range() {
        return usage(e.to_string());
    }
    if cfg.n_perm < 99 {
        return usage(format!("n_perm must be at least 99, got {}", cfg.n_perm));
    }
    if !(cfg.alpha > 0.0 && cfg.alpha < 1.0) {
        return usage(format!("alpha must lie in (0, 1), got {}", cfg.alpha));
    }
    Ok(())
}

pub fn cmd_test(args: &TestArgs) -> CliResult<()> {
    let study = manifest::load(&args.manifest)?;
    check_config(&study.config)?;
    let seed = resolve_seed(args.seed.seed, study.seed)?;
    let n_regions = study.n_regions();
    let meta = RunMeta::new("test", seed, study.config.clone());

    let raw = (0..n_regions)
        .map(|a| region_pvalues(&study, a, seed).with_context(|| format!("region {}", a + 1)))
        .collect::<anyhow::Result<Vec<_>>>()?;

    let dendro_dir = args.out.join("dendrograms");
    fs::create_dir_all(&dendro_dir).with_context(|| format!("cannot create {}", dendro_dir.display()))?;

    let mut results: Vec<Vec<MethodResult>> = (0..n_regions).map(|_| Vec::new()).collect();
    let mut clusters: HashMap<(usize, Family), (bool, Dendrogram)> = HashMap::new();
    for (mi, &method) in study.methods.iter().enumerate() {
        let ps: Vec<f64> = raw.iter().map(|r| r[mi].0).collect();
        let adjusted = bh_adjust(&ps)?.adjusted;
        for a in 0..n_regions {
            let significant = adjusted[a] <= study.config.alpha;
            let (hc_approved, dendrogram) = if significant {
                let fam = family(method);
                let (ok, dendro) = match clusters.entry((a, fam)) {
                    Entry::Occupied(e) => e.into_mut(),
                    Entry::Vacant(e) => e.insert(
                        cluster_region(&study, a, fam, seed).with_context(|| format!("clustering region {}", a + 1))?,
                    ),
                };
                let rel = format!("dendrograms/region-{:02}-{}.nwk", a + 1, method.name().to_ascii_lowercase());
                write_newick(&args.out.join(&rel), &meta, dendro)?;
                (Some(*ok), Some(rel))
            } else {
                (None, None)
            };
            results[a].push(MethodResult {
                method,
                p_raw: ps[a],
                p_adjusted: adjusted[a],
                significant,
                hc_approved,
                dendrogram,
                c0: raw[a][mi].1,
            });
        }
    }
    let report = TestReport {
        band: study.case.band().to_string(),
        n_regions,
        n_controls: study.controls.len(),
        n_epochs: study.case.n_epochs(),
        methods: study.methods.clone(),
        regions: results
            .into_iter()
            .enumerate()
            .map(|(a, results)| RegionReport { index: a + 1, name: region_name(a + 1, n_regions), results })
            .collect(),
        meta,
    };
    write_json(&args.out.join("report.json"), &report)?;
    let flagged = report.regions.iter().filter(|r| r.results.iter().any(|m| m.hc_approved == Some(true))).count();
    println!("{n_regions} regions tested, {flagged} significant and HC-approved; report in {}", args.out.display());
    Ok(())
}

#[derive(Debug, Serialize)]
struct ClusterConfig {
    test: PairTest,
    hc_rule: oktest_core::hetero::HcRule,
}

#[derive(Debug, Serialize)]
struct ClusterReport {
    meta: RunMeta<ClusterConfig>,
    region: usize,
    name: String,
    hc_approved: bool,
    /// Leaf `i` (1-based) is `leaves[i - 1]`.
    leaves: Vec<String>,
    dendrogram: Dendrogram,
}

pub fn cmd_cluster(args: &ClusterArgs) -> CliResult<()> {
    let study = manifest::load(&args.manifest)?;
    check_config(&study.config)?;
    let n_regions = study.n_regions();
    if args.region == 0 || args.region > n_regions {
        return usage(format!("region {} is not in 1..={n_regions}", args.region));
    }
    let fam = match args.test.to_ascii_lowercase().as_str() {
        "ad" => Family::Ad,
        "flr" => Family::Flr,
        other => return usage(format!("unknown pairwise test '{other}' (expected ad or flr)")),
    };
    let seed = resolve_seed(args.seed.seed, study.seed)?;
    let a = args.region - 1;
    let (ok, dendro) = cluster_region(&study, a, fam, seed)?;
    let meta = RunMeta::new(
        "cluster",
        seed,
        ClusterConfig { test: pair_test(fam, &study.config), hc_rule: study.config.hc_rule },
    );
    fs::create_dir_all(&args.out).with_context(|| format!("cannot create {}", args.out.display()))?;
    let stem = format!("region-{:02}", args.region);
    write_newick(&args.out.join(format!("{stem}.nwk")), &meta, &dendro)?;
    let leaves =
        std::iter::once("case".to_string()).chain((1..=study.controls.len()).map(|k| format!("control-{k}"))).collect();
    let report = ClusterReport {
        meta,
        region: args.region,
        name: region_name(args.region, n_regions),
        hc_approved: ok,
        leaves,
        dendrogram: dendro,
    };
    write_json(&args.out.join(format!("{stem}.json")), &report)?;
    println!("region {} ({}): hc_approved = {ok}", args.region, report.name);
    Ok(())
}
