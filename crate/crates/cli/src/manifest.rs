use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::Context;
use oktest_core::adfamily::CpadTail;
use oktest_core::flr::FlrConfig;
use oktest_core::hetero::HcRule;
use oktest_core::simlab::Method;
use oktest_core::spectrum::BandPowerMatrix;
use serde::{Deserialize, Serialize};

use crate::{usage, CliResult};

/// Optional knobs a manifest may override; everything else keeps its default.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    pub c_min: Option<f64>,
    pub c_max: Option<f64>,
    pub grid_size: Option<usize>,
    pub p_max: Option<usize>,
    pub n_perm: Option<usize>,
    #[serde(alias = "B")]
    pub bootstrap_reps: Option<usize>,
    pub alpha: Option<f64>,
    pub em_restarts: Option<usize>,
    pub em_tol: Option<f64>,
    pub em_max_iter: Option<usize>,
    pub pmad_subsets: Option<usize>,
    pub cpad_tail: Option<CpadTail>,
    pub hc_rule: Option<HcRule>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestFile {
    case: PathBuf,
    controls: Vec<PathBuf>,
    band: Option<String>,
    methods: Vec<String>,
    seed: Option<u64>,
    #[serde(default)]
    config: Overrides,
}

/// Resolved settings of a study run.
#[derive(Debug, Clone, Serialize)]
pub struct StudyConfig {
    pub flr: FlrConfig,
    pub n_perm: usize,
    pub alpha: f64,
    pub pmad_subsets: Option<usize>,
    pub cpad_tail: CpadTail,
    pub hc_rule: HcRule,
}

impl StudyConfig {
    fn from_overrides(o: &Overrides) -> Self {
        let mut flr = FlrConfig::default();
        if let Some(v) = o.c_min {
            flr.c_min = v;
        }
        if let Some(v) = o.c_max {
            flr.c_max = v;
        }
        if let Some(v) = o.grid_size {
            flr.grid_size = v;
        }
        if let Some(v) = o.p_max {
            flr.p_max = v;
        }
        if let Some(v) = o.bootstrap_reps {
            flr.bootstrap_reps = v;
        }
        if let Some(v) = o.em_restarts {
            flr.em.restarts = v;
        }
        if let Some(v) = o.em_tol {
            flr.em.tol = v;
        }
        if let Some(v) = o.em_max_iter {
            flr.em.max_iter = v;
        }
        Self {
            flr,
            n_perm: o.n_perm.unwrap_or(999),
            alpha: o.alpha.unwrap_or(0.01),
            pmad_subsets: o.pmad_subsets,
            cpad_tail: o.cpad_tail.unwrap_or_default(),
            hc_rule: o.hc_rule.unwrap_or_default(),
        }
    }
}

#[derive(Debug)]
pub struct Study {
    pub case: BandPowerMatrix,
    pub controls: Vec<BandPowerMatrix>,
    pub methods: Vec<Method>,
    pub seed: Option<u64>,
    pub config: StudyConfig,
}

impl Study {
    pub fn n_regions(&self) -> usize {
        self.case.n_regions()
    }

    /// Case row followed by every control row for one 0-based region.
    pub fn subjects(&self, region: usize) -> Vec<Vec<f64>> {
        std::iter::once(&self.case).chain(&self.controls).map(|m| m.row(region).to_vec()).collect()
    }

    pub fn control_rows(&self, region: usize) -> Vec<Vec<f64>> {
        self.controls.iter().map(|m| m.row(region).to_vec()).collect()
    }
}

fn read_matrix(path: &Path) -> anyhow::Result<BandPowerMatrix> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    BandPowerMatrix::read_csv(BufReader::new(file)).with_context(|| format!("in {}", path.display()))
}

pub fn load(path: &Path) -> CliResult<Study> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read manifest {}", path.display()))?;
    let file: ManifestFile = match serde_json::from_str(&text) {
        Ok(f) => f,
        Err(e) => return usage(format!("{}:{}:{}: {e}", path.display(), e.line(), e.column())),
    };
    if file.controls.is_empty() {
        return usage(format!("{}: at least one control is required", path.display()));
    }
    if file.methods.is_empty() {
        return usage(format!("{}: no methods requested", path.display()));
    }
    let methods = file
        .methods
        .iter()
        .map(|m| m.parse::<Method>())
        .collect::<Result<Vec<_>, _>>()
        .or_else(|e| usage(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let case_path = base.join(&file.case);
    let case = read_matrix(&case_path)?;
    let controls = file.controls.iter().map(|c| read_matrix(&base.join(c))).collect::<anyhow::Result<Vec<_>>>()?;
    for (c, m) in file.controls.iter().zip(&controls) {
        if m.n_regions() != case.n_regions() {
            return Err(anyhow::anyhow!(
                "{}: {} regions, case has {}",
                base.join(c).display(),
                m.n_regions(),
                case.n_regions()
            )
            .into());
        }
    }
    if let Some(band) = &file.band {
        if !case.band().eq_ignore_ascii_case(band) {
            return usage(format!(
                "{}: band '{}' does not match manifest band '{band}'",
                case_path.display(),
                case.band()
            ));
        }
    }
    Ok(Study { case, controls, methods, seed: file.seed, config: StudyConfig::from_overrides(&file.config) })
}
