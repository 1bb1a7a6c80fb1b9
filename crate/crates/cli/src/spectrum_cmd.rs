use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use oktest_core::spectrum::{self, Band, BandAggregation, EpochTimeSeries, SpectrumConfig};
use serde::Serialize;

use crate::meta::RunMeta;
use crate::{usage, CliResult, SpectrumArgs};

#[derive(Debug, Serialize)]
struct SpectrumRunConfig {
    band: Band,
    n_regions: usize,
    n_epochs: usize,
    spectrum: SpectrumConfig,
}

fn parse_band(text: &str) -> CliResult<Band> {
    let parts: Vec<&str> = text.split(':').collect();
    match parts.as_slice() {
        [name] => Band::named(name).or_else(|e| usage(e.to_string())),
        [name, low, high] => {
            let parse = |s: &str| s.trim().parse::<f64>().ok();
            match (parse(low), parse(high)) {
                (Some(l), Some(h)) if !name.trim().is_empty() => Ok(Band::new(name.trim(), l, h)),
                _ => usage(format!("band '{text}' is not NAME:LOW:HIGH")),
            }
        }
        _ => usage(format!("band '{text}' is neither a band name nor NAME:LOW:HIGH")),
    }
}

fn read_region_map(path: &Path) -> CliResult<Vec<usize>> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let mut map = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let t = line.split('#').next().unwrap_or("").trim();
        if t.is_empty() {
            continue;
        }
        match t.parse::<usize>() {
            Ok(r) if r >= 1 => map.push(r),
            _ => return usage(format!("{}:{}: expected a 1-based region index, got '{t}'", path.display(), i + 1)),
        }
    }
    if map.is_empty() {
        return usage(format!("{}: empty region map", path.display()));
    }
    Ok(map)
}

enum EpochFormat {
    Csv,
    Binary,
}

fn epoch_files(dir: &Path) -> CliResult<Vec<(PathBuf, EpochFormat)>> {
    let entries = fs::read_dir(dir).with_context(|| format!("cannot read directory {}", dir.display()))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry?.path();
        let format = match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
            Some("csv") => EpochFormat::Csv,
            Some("okep") => EpochFormat::Binary,
            _ => continue,
        };
        files.push((path, format));
    }
    if files.is_empty() {
        return usage(format!("{} holds no *.csv or *.okep epoch files", dir.display()));
    }
    files.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(files)
}

fn read_epoch(path: &Path, format: &EpochFormat, sample_rate: Option<f64>) -> CliResult<EpochTimeSeries> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    let reader = BufReader::new(file);
    let epoch = match format {
        EpochFormat::Csv => {
            let Some(rate) = sample_rate else {
                return usage(format!("{} is CSV; --sample-rate is required", path.display()));
            };
            EpochTimeSeries::read_csv(reader, rate)
        }
        EpochFormat::Binary => EpochTimeSeries::read_binary(reader),
    };
    Ok(epoch.with_context(|| format!("in {}", path.display()))?)
}

pub fn cmd_spectrum(args: &SpectrumArgs) -> CliResult<()> {
    let band = parse_band(&args.band)?;
    let region_map = read_region_map(&args.regions)?;
    let max_region = region_map.iter().copied().max().unwrap_or(0);
    let n_regions = args.n_regions.unwrap_or(max_region);
    if n_regions < max_region {
        return usage(format!("--n-regions {n_regions} is below the largest mapped region {max_region}"));
    }
    let epochs = epoch_files(&args.epochs)?
        .iter()
        .map(|(p, f)| read_epoch(p, f, args.sample_rate))
        .collect::<CliResult<Vec<_>>>()?;
    if let Err(e) = band.validate(epochs[0].sample_rate()) {
        return usage(e.to_string());
    }
    if epochs[0].n_series() != region_map.len() {
        return usage(format!(
            "region map lists {} sources but epochs hold {} series",
            region_map.len(),
            epochs[0].n_series()
        ));
    }
    let config = SpectrumConfig {
        aggregation: if args.power { BandAggregation::MeanPower } else { BandAggregation::MeanMagnitude },
        ..SpectrumConfig::default()
    };
    let matrix = spectrum::build_band_power_matrix(&epochs, &band, &region_map, n_regions, &config)?;

    let meta =
        RunMeta::new("spectrum", 0, SpectrumRunConfig { band, n_regions, n_epochs: epochs.len(), spectrum: config });
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("cannot create {}", parent.display()))?;
    }
    let file = File::create(&args.out).with_context(|| format!("cannot create {}", args.out.display()))?;
    let mut w = BufWriter::new(file);
    matrix.write_csv(&mut w, &[format!("meta {}", meta.one_line())])?;
    w.flush()?;
    println!("{matrix}; written to {}", args.out.display());
    Ok(())
}
