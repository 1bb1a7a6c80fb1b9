//! Spectral preprocessing: per-epoch DFT magnitudes, band aggregation,
//! region averaging and the log band-power matrix.

use std::fmt;
use std::io::{BufRead, Read, Write};

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SpectrumError {
    #[error("epoch needs at least 2 time points, got {0}")]
    TooShort(usize),
    #[error("sample rate must be positive, got {0}")]
    BadSampleRate(f64),
    #[error("series {series} has {got} time points, expected {expected}")]
    Ragged { series: usize, got: usize, expected: usize },
    #[error("band {name} [{low}, {high}] Hz is invalid for sample rate {sample_rate} Hz")]
    InvalidBand { name: String, low: f64, high: f64, sample_rate: f64 },
    #[error("no frequency bin falls in band {0}")]
    EmptyBand(String),
    #[error("unknown band name {0:?}")]
    UnknownBand(String),
    #[error("region {0} has no sources")]
    EmptyRegion(usize),
    #[error("source {source_index} maps to region {region}, outside 1..={regions}")]
    BadRegion { source_index: usize, region: usize, regions: usize },
    #[error("{what}: expected {expected}, got {got}")]
    ShapeMismatch { what: &'static str, expected: usize, got: usize },
    #[error("no epochs supplied")]
    NoEpochs,
    #[error("value at row {row}, column {column} is not finite")]
    NonFinite { row: usize, column: usize },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, SpectrumError>;

/// One epoch of multichannel (or multi-source) time series.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochTimeSeries {
    samples: Vec<Vec<f64>>,
    sample_rate: f64,
}

impl EpochTimeSeries {
    pub fn new(samples: Vec<Vec<f64>>, sample_rate: f64) -> Result<Self> {
        if !(sample_rate > 0.0 && sample_rate.is_finite()) {
            return Err(SpectrumError::BadSampleRate(sample_rate));
        }
        let j = samples.first().map_or(0, Vec::len);
        if j < 2 {
            return Err(SpectrumError::TooShort(j));
        }
        for (series, row) in samples.iter().enumerate() {
            if row.len() != j {
                return Err(SpectrumError::Ragged { series, got: row.len(), expected: j });
            }
            if let Some(column) = row.iter().position(|v| !v.is_finite()) {
                return Err(SpectrumError::NonFinite { row: series, column });
            }
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn n_series(&self) -> usize {
        self.samples.len()
    }

    pub fn n_time(&self) -> usize {
        self.samples[0].len()
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn samples(&self) -> &[Vec<f64>] {
        &self.samples
    }

    /// Frequency in Hz of DFT bin `m`.
    pub fn bin_frequency(&self, m: usize) -> f64 {
        m as f64 * self.sample_rate / self.n_time() as f64
    }

    /// Parse an epoch from CSV text: one row per series, comma-separated.
    /// Blank lines and lines starting with `#` are skipped.
    pub fn read_csv<R: BufRead>(reader: R, sample_rate: f64) -> Result<Self> {
        let mut rows = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let row = trimmed
                .split(',')
                .map(|f| {
                    f.trim().parse::<f64>().map_err(|e| SpectrumError::Parse {
                        line: i + 1,
                        message: format!("bad number {:?}: {e}", f.trim()),
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        Self::new(rows, sample_rate)
    }

    /// Binary container: magic `OKEP`, u32 series count, u32 time points,
    /// f64 sample rate, then row-major f64 values; all little-endian.
    pub fn read_binary<R: Read>(mut reader: R) -> Result<Self> {
        let mut head = [0u8; 20];
        reader.read_exact(&mut head)?;
        if &head[..4] != BINARY_MAGIC {
            return Err(SpectrumError::Parse { line: 0, message: "missing OKEP magic".into() });
        }
        let n_series = u32::from_le_bytes(head[4..8].try_into().unwrap()) as usize;
        let n_time = u32::from_le_bytes(head[8..12].try_into().unwrap()) as usize;
        let sample_rate = f64::from_le_bytes(head[12..20].try_into().unwrap());
        let mut buf = vec![0u8; n_series * n_time * 8];
        reader.read_exact(&mut buf)?;
        let values: Vec<f64> = buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        let samples = values.chunks(n_time.max(1)).take(n_series).map(<[f64]>::to_vec).collect();
        Self::new(samples, sample_rate)
    }

    pub fn write_binary<W: Write>(&self, mut writer: W) -> Result<()> {
        writer.write_all(BINARY_MAGIC)?;
        writer.write_all(&(self.n_series() as u32).to_le_bytes())?;
        writer.write_all(&(self.n_time() as u32).to_le_bytes())?;
        writer.write_all(&self.sample_rate.to_le_bytes())?;
        for row in &self.samples {
            for v in row {
                writer.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }
}

const BINARY_MAGIC: &[u8; 4] = b"OKEP";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub name: String,
    pub low_hz: f64,
    pub high_hz: f64,
}

impl Band {
    pub fn new(name: impl Into<String>, low_hz: f64, high_hz: f64) -> Self {
        Self { name: name.into(), low_hz, high_hz }
    }

    /// Standard bands: delta 1-4, theta 5-7, alpha 8-12, beta 15-29, gamma 30-80 Hz.
    pub fn named(name: &str) -> Result<Self> {
        let (low, high) = match name.to_ascii_lowercase().as_str() {
            "delta" => (1.0, 4.0),
            "theta" => (5.0, 7.0),
            "alpha" => (8.0, 12.0),
            "beta" => (15.0, 29.0),
            "gamma" => (30.0, 80.0),
            _ => return Err(SpectrumError::UnknownBand(name.to_string())),
        };
        Ok(Self::new(name.to_ascii_lowercase(), low, high))
    }

    pub fn validate(&self, sample_rate: f64) -> Result<()> {
        let ok = self.low_hz >= 0.0 && self.low_hz < self.high_hz && self.high_hz <= sample_rate / 2.0;
        if ok {
            Ok(())
        } else {
            Err(SpectrumError::InvalidBand {
                name: self.name.clone(),
                low: self.low_hz,
                high: self.high_hz,
                sample_rate,
            })
        }
    }

    /// Inclusive membership test for a bin frequency.
    pub fn contains(&self, freq: f64) -> bool {
        let eps = 1e-9 * self.high_hz.max(1.0);
        freq >= self.low_hz - eps && freq <= self.high_hz + eps
    }
}

/// How magnitudes within a band are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandAggregation {
    #[default]
    MeanMagnitude,
    MeanPower,
}

/// `|F_m|` for bins `m = 0..=J/2`, one row per series.
pub fn dft_magnitudes(epoch: &EpochTimeSeries) -> Vec<Vec<f64>> {
    let j = epoch.n_time();
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(j);
    let mut buf = vec![Complex::new(0.0, 0.0); j];
    epoch
        .samples()
        .iter()
        .map(|row| {
            for (b, &v) in buf.iter_mut().zip(row) {
                *b = Complex::new(v, 0.0);
            }
            fft.process(&mut buf);
            buf[..=j / 2].iter().map(|c| c.norm()).collect()
        })
        .collect()
}

/// Mean magnitude (or power) over bins whose frequency lies in `band`.
pub fn band_power(
    magnitudes: &[Vec<f64>],
    band: &Band,
    sample_rate: f64,
    n_time: usize,
    aggregation: BandAggregation,
) -> Result<Vec<f64>> {
    band.validate(sample_rate)?;
    let n_bins = n_time / 2 + 1;
    let bins: Vec<usize> = (0..n_bins).filter(|&m| band.contains(m as f64 * sample_rate / n_time as f64)).collect();
    if bins.is_empty() {
        return Err(SpectrumError::EmptyBand(band.name.clone()));
    }
    magnitudes
        .iter()
        .map(|row| {
            if row.len() != n_bins {
                return Err(SpectrumError::ShapeMismatch { what: "frequency bins", expected: n_bins, got: row.len() });
            }
            let total: f64 = bins
                .iter()
                .map(|&m| match aggregation {
                    BandAggregation::MeanMagnitude => row[m],
                    BandAggregation::MeanPower => row[m] * row[m],
                })
                .sum();
            Ok(total / bins.len() as f64)
        })
        .collect()
}

/// Mean of per-source values within each region. `region_map[s]` is the
/// 1-based region of source `s`.
pub fn region_average(per_source: &[f64], region_map: &[usize], regions: usize) -> Result<Vec<f64>> {
    if per_source.len() != region_map.len() {
        return Err(SpectrumError::ShapeMismatch {
            what: "region map entries",
            expected: per_source.len(),
            got: region_map.len(),
        });
    }
    let mut sums = vec![0.0; regions];
    let mut counts = vec![0usize; regions];
    for (source_index, (&v, &r)) in per_source.iter().zip(region_map).enumerate() {
        if r == 0 || r > regions {
            return Err(SpectrumError::BadRegion { source_index, region: r, regions });
        }
        sums[r - 1] += v;
        counts[r - 1] += 1;
    }
    if let Some(empty) = counts.iter().position(|&c| c == 0) {
        return Err(SpectrumError::EmptyRegion(empty + 1));
    }
    Ok(sums.iter().zip(&counts).map(|(s, &c)| s / c as f64).collect())
}

/// Log band power, regions by epochs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandPowerMatrix {
    band: String,
    values: Vec<Vec<f64>>,
}

impl BandPowerMatrix {
    pub fn new(band: impl Into<String>, values: Vec<Vec<f64>>) -> Result<Self> {
        let cols = values.first().map_or(0, Vec::len);
        for (row, r) in values.iter().enumerate() {
            if r.len() != cols {
                return Err(SpectrumError::Ragged { series: row, got: r.len(), expected: cols });
            }
            if let Some(column) = r.iter().position(|v| !v.is_finite()) {
                return Err(SpectrumError::NonFinite { row, column });
            }
        }
        Ok(Self { band: band.into(), values })
    }

    pub fn band(&self) -> &str {
        &self.band
    }

    pub fn n_regions(&self) -> usize {
        self.values.len()
    }

    pub fn n_epochs(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    /// Epoch values of region `a` (0-based).
    pub fn row(&self, a: usize) -> &[f64] {
        &self.values[a]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.values
    }

    /// CSV layout: a `regions,epochs,band` header line with the values, any
    /// number of `#` comment lines, then one comma-separated row per region.
    pub fn write_csv<W: Write>(&self, mut w: W, comments: &[String]) -> std::io::Result<()> {
        writeln!(w, "{},{},{}", self.n_regions(), self.n_epochs(), self.band)?;
        for c in comments {
            writeln!(w, "# {c}")?;
        }
        for row in &self.values {
            let line: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(reader: R) -> Result<Self> {
        let mut header: Option<(usize, usize, String)> = None;
        let mut rows = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let parse_err = |message: String| SpectrumError::Parse { line: i + 1, message };
            if header.is_none() {
                let parts: Vec<&str> = t.split(',').map(str::trim).collect();
                if parts.len() != 3 {
                    return Err(parse_err(format!("expected header `regions,epochs,band`, got {t:?}")));
                }
                let regions = parts[0].parse().map_err(|e| parse_err(format!("bad region count: {e}")))?;
                let epochs = parts[1].parse().map_err(|e| parse_err(format!("bad epoch count: {e}")))?;
                header = Some((regions, epochs, parts[2].to_string()));
                continue;
            }
            let row = t
                .split(',')
                .map(|f| f.trim().parse::<f64>().map_err(|e| parse_err(format!("bad number {:?}: {e}", f.trim()))))
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        let (regions, epochs, band) =
            header.ok_or_else(|| SpectrumError::Parse { line: 0, message: "missing header".into() })?;
        if rows.len() != regions {
            return Err(SpectrumError::ShapeMismatch { what: "region rows", expected: regions, got: rows.len() });
        }
        if let Some(bad) = rows.iter().find(|r| r.len() != epochs) {
            return Err(SpectrumError::ShapeMismatch { what: "epoch columns", expected: epochs, got: bad.len() });
        }
        Self::new(band, rows)
    }
}

impl fmt::Display for BandPowerMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} band power, {} regions x {} epochs", self.band, self.n_regions(), self.n_epochs())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumConfig {
    pub aggregation: BandAggregation,
    /// Powers are floored at `log_floor_rel * max power` before taking logs.
    pub log_floor_rel: f64,
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        Self { aggregation: BandAggregation::MeanMagnitude, log_floor_rel: 1e-12 }
    }
}

/// Region-averaged band power of one epoch (before the log).
pub fn epoch_region_powers(
    epoch: &EpochTimeSeries,
    band: &Band,
    region_map: &[usize],
    regions: usize,
    aggregation: BandAggregation,
) -> Result<Vec<f64>> {
    let mags = dft_magnitudes(epoch);
    let per_source = band_power(&mags, band, epoch.sample_rate(), epoch.n_time(), aggregation)?;
    region_average(&per_source, region_map, regions)
}

/// Natural-log band power matrix: column `n` holds epoch `n`.
pub fn build_band_power_matrix(
    epochs: &[EpochTimeSeries],
    band: &Band,
    region_map: &[usize],
    regions: usize,
    config: &SpectrumConfig,
) -> Result<BandPowerMatrix> {
    let first = epochs.first().ok_or(SpectrumError::NoEpochs)?;
    for e in epochs {
        if e.n_series() != first.n_series() {
            return Err(SpectrumError::ShapeMismatch {
                what: "series per epoch",
                expected: first.n_series(),
                got: e.n_series(),
            });
        }
        if e.n_time() != first.n_time() {
            return Err(SpectrumError::ShapeMismatch {
                what: "time points per epoch",
                expected: first.n_time(),
                got: e.n_time(),
            });
        }
        if e.sample_rate() != first.sample_rate() {
            return Err(SpectrumError::BadSampleRate(e.sample_rate()));
        }
    }
    let columns = epochs
        .iter()
        .map(|e| epoch_region_powers(e, band, region_map, regions, config.aggregation))
        .collect::<Result<Vec<_>>>()?;
    let max_power = columns.iter().flatten().copied().fold(0.0f64, f64::max);
    let floor = (config.log_floor_rel * max_power).max(f64::MIN_POSITIVE);
    let values = (0..regions).map(|a| columns.iter().map(|col| col[a].max(floor).ln()).collect()).collect();
    BandPowerMatrix::new(band.name.clone(), values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(j: usize, m0: usize, amp: f64) -> Vec<f64> {
        (0..j).map(|t| amp * (2.0 * std::f64::consts::PI * (m0 * t) as f64 / j as f64).cos()).collect()
    }

    #[test]
    fn dc_only_spectrum() {
        let e = EpochTimeSeries::new(vec![vec![-2.5; 64]], 64.0).unwrap();
        let mags = dft_magnitudes(&e);
        assert!((mags[0][0] - 64.0 * 2.5).abs() < 1e-9);
        assert!(mags[0][1..].iter().all(|m| m.abs() < 1e-9));
    }

    #[test]
    fn single_tone_band_power() {
        let j = 128;
        let e = EpochTimeSeries::new(vec![tone(j, 10, 1.0)], 128.0).unwrap();
        let mags = dft_magnitudes(&e);
        assert!((mags[0][10] - j as f64 / 2.0).abs() < 1e-9);
        let band = Band::new("alpha", 8.0, 12.0);
        // bins 8..=12 at 1 Hz spacing
        let p = band_power(&mags, &band, 128.0, j, BandAggregation::MeanMagnitude).unwrap();
        assert!((p[0] - 64.0 / 5.0).abs() < 1e-9);
        let outside =
            band_power(&mags, &Band::named("beta").unwrap(), 128.0, j, BandAggregation::MeanMagnitude).unwrap();
        assert!(outside[0].abs() < 1e-9);
    }

    #[test]
    fn band_edge_errors() {
        let mags = vec![vec![0.0; 5]];
        assert!(matches!(
            band_power(&mags, &Band::new("x", 1.2, 1.8), 8.0, 8, BandAggregation::MeanMagnitude),
            Err(SpectrumError::EmptyBand(_))
        ));
        assert!(Band::new("x", 1.0, 5.0).validate(8.0).is_err());
        assert!(Band::named("kappa").is_err());
    }

    #[test]
    fn region_average_cases() {
        assert_eq!(region_average(&[1.0, 2.0, 3.0], &[1, 2, 3], 3).unwrap(), vec![1.0, 2.0, 3.0]);
        assert_eq!(region_average(&[2.0, 4.0], &[1, 1], 1).unwrap(), vec![3.0]);
        assert!(matches!(region_average(&[2.0, 4.0], &[1, 1], 2), Err(SpectrumError::EmptyRegion(2))));
        assert!(matches!(region_average(&[2.0], &[3], 2), Err(SpectrumError::BadRegion { .. })));
    }

    #[test]
    fn single_epoch_matrix_and_scaling() {
        let j = 64;
        let band = Band::new("b", 3.5, 4.5);
        let base = EpochTimeSeries::new(vec![tone(j, 4, 1.0)], 64.0).unwrap();
        let m = build_band_power_matrix(&[base], &band, &[1], 1, &SpectrumConfig::default()).unwrap();
        assert_eq!(m.n_regions(), 1);
        assert!((m.row(0)[0] - 32f64.ln()).abs() < 1e-9);
        let scaled = EpochTimeSeries::new(vec![tone(j, 4, 3.0)], 64.0).unwrap();
        let m3 = build_band_power_matrix(&[scaled], &band, &[1], 1, &SpectrumConfig::default()).unwrap();
        assert!((m3.row(0)[0] - m.row(0)[0] - 3f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn epoch_validation() {
        assert!(matches!(EpochTimeSeries::new(vec![vec![1.0]], 10.0), Err(SpectrumError::TooShort(1))));
        assert!(EpochTimeSeries::new(vec![vec![1.0, 2.0]], 0.0).is_err());
        assert!(EpochTimeSeries::new(vec![vec![1.0, 2.0], vec![1.0]], 10.0).is_err());
    }

    #[test]
    fn csv_and_binary_roundtrip() {
        let m = BandPowerMatrix::new("delta", vec![vec![0.5, -1.25], vec![3.0, 1e-7]]).unwrap();
        let mut buf = Vec::new();
        m.write_csv(&mut buf, &["seed=1".into()]).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("2,2,delta\n# seed=1\n"));
        assert_eq!(BandPowerMatrix::read_csv(&buf[..]).unwrap(), m);

        let e = EpochTimeSeries::new(vec![vec![1.0, 2.0, 3.0], vec![0.0, -1.0, 0.5]], 250.0).unwrap();
        let mut bin = Vec::new();
        e.write_binary(&mut bin).unwrap();
        assert_eq!(EpochTimeSeries::read_binary(&bin[..]).unwrap(), e);
        let csv = "1,2,3\n# note\n0,-1,0.5\n";
        assert_eq!(EpochTimeSeries::read_csv(csv.as_bytes(), 250.0).unwrap(), e);
    }
}
