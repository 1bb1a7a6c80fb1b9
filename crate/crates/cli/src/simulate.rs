use std::fmt::Write as _;
use std::fs;

use anyhow::Context;
use oktest_core::simlab::{self, ExperimentSummary, Method, SimConfig};
use serde::Serialize;

use crate::meta::{resolve_seed, RunMeta};
use crate::{usage, CliResult, SimulateArgs};

#[derive(Debug, Serialize)]
struct SimulateConfig {
    settings: Vec<String>,
    methods: Vec<Method>,
    replicates: usize,
    n: usize,
    k: usize,
    sim: SimConfig,
}

#[derive(Debug, Serialize)]
struct SummaryFile<'a> {
    meta: &'a RunMeta<SimulateConfig>,
    summary: &'a ExperimentSummary,
}

fn parse_inputs(args: &SimulateArgs) -> CliResult<(Vec<String>, Vec<Method>)> {
    let settings: Vec<String> = args.settings.iter().map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
    if settings.is_empty() {
        return usage("no settings given");
    }
    for s in &settings {
        if simlab::setting(s).is_err() {
            let known: Vec<String> = simlab::builtin_settings().into_iter().map(|s| s.setting_id).collect();
            return usage(format!("unknown setting '{s}' (known: {})", known.join(", ")));
        }
    }
    let mut methods = Vec::new();
    for m in args.methods.iter().map(|m| m.trim()).filter(|m| !m.is_empty()) {
        let m: Method = match m.parse() {
            Ok(m) => m,
            Err(e) => return usage(e),
        };
        if !methods.contains(&m) {
            methods.push(m);
        }
    }
    if methods.is_empty() {
        return usage("no methods given");
    }
    Ok((settings, methods))
}

pub fn cmd_simulate(args: &SimulateArgs) -> CliResult<()> {
    let (settings, methods) = parse_inputs(args)?;
    if args.reps == 0 {
        return usage("--reps must be at least 1");
    }
    if args.n < 2 || args.k == 0 {
        return usage("--n must be at least 2 and --k at least 1");
    }
    let mut sim = if args.desk { SimConfig::desk() } else { SimConfig::default() };
    if let Some(v) = args.n_perm {
        sim.n_perm = v;
    }
    if let Some(v) = args.p_max {
        if v == 0 {
            return usage("--p-max must be at least 1");
        }
        sim.flr.p_max = v;
    }
    let seed = resolve_seed(args.seed.seed, None)?;
    let ids: Vec<&str> = settings.iter().map(String::as_str).collect();
    let experiment = simlab::run_experiment(&ids, &methods, args.reps, args.n, args.k, seed, &sim)?;

    let meta = RunMeta::new(
        "simulate",
        seed,
        SimulateConfig { settings, methods, replicates: args.reps, n: args.n, k: args.k, sim },
    );
    fs::create_dir_all(&args.out).with_context(|| format!("cannot create {}", args.out.display()))?;

    let mut tsv = format!("# meta {}\nsetting\treplicate\tmethod\tp\n", meta.one_line());
    for r in &experiment.raw {
        writeln!(tsv, "{}\t{}\t{}\t{:e}", r.setting, r.replicate, r.method, r.p).expect("write to string");
    }
    let raw_path = args.out.join("raw.tsv");
    fs::write(&raw_path, tsv).with_context(|| format!("cannot write {}", raw_path.display()))?;

    let mut json = serde_json::to_string_pretty(&SummaryFile { meta: &meta, summary: &experiment.summary })?;
    json.push('\n');
    let summary_path = args.out.join("summary.json");
    fs::write(&summary_path, json).with_context(|| format!("cannot write {}", summary_path.display()))?;

    for row in &experiment.summary.settings {
        let rates: Vec<String> = row
            .rates
            .iter()
            .map(|(m, r)| format!("{m}={}", r.map_or("-".to_string(), |r| format!("{r:.3}"))))
            .collect();
        println!("{}{}: {}", row.setting, if row.is_null { " (null)" } else { "" }, rates.join(" "));
    }
    Ok(())
}
