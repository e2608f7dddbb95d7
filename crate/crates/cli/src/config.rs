//! Resolved run configurations. Each one is echoed into the JSON sidecar
//! of every file it produces and can be replayed from there.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use polyspec::rmt::Ensemble;
use polyspec::{NcPolynomial, SpectralMeasure};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum RunConfig {
    Linearize(LinearizeConfig),
    Density(DensityConfig),
    Simulate(SimulateConfig),
    Compare(CompareConfig),
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LinearizeConfig {
    pub poly: String,
    pub nvars: usize,
    /// Number of random verification trials; none skips verification.
    pub verify: Option<usize>,
    pub verify_dim: usize,
    pub verify_tol: f64,
    pub seed: u64,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DensityConfig {
    pub poly: String,
    pub nvars: usize,
    /// Law of each variable, in index order.
    pub vars: Vec<Binding>,
    pub grid: GridSpec,
    pub eps: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub richardson: bool,
    pub chunk: usize,
    pub allow_gaps: bool,
    pub out: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SimulateConfig {
    pub poly: String,
    pub nvars: usize,
    /// Ensemble of each variable, in index order.
    pub ensembles: Vec<Binding>,
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
    pub out: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CompareConfig {
    pub curve: PathBuf,
    pub eigs: PathBuf,
    pub oracle: bool,
    pub moments: u32,
    pub bins: usize,
    pub out: PathBuf,
    pub report: Option<PathBuf>,
}

/// `k=spec` from the command line.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct Binding {
    pub var: usize,
    pub spec: String,
}

/// Splits `k=text` bindings and checks that variables `1..=nvars` are each
/// bound exactly once.
pub fn parse_bindings(raw: &[String], nvars: usize, flag: &str) -> CliResult<Vec<Binding>> {
    let mut out = BTreeMap::new();
    for item in raw {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--{flag} expects k=<spec>, got '{item}'")))?;
        let k: usize = k
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("--{flag}: '{k}' is not a variable index")))?;
        if k == 0 || k > nvars {
            return Err(CliError::Usage(format!("--{flag}: variable {k} is outside 1..={nvars}")));
        }
        if out.insert(k, v.trim().to_string()).is_some() {
            return Err(CliError::Usage(format!("--{flag}: variable {k} is bound twice")));
        }
    }
    if let Some(missing) = (1..=nvars).find(|k| !out.contains_key(k)) {
        return Err(CliError::Usage(format!("--{flag}: variable {missing} is not bound")));
    }
    Ok(out.into_iter().map(|(var, spec)| Binding { var, spec }).collect())
}

/// `lo:hi:count`.
pub fn parse_grid(text: &str) -> CliResult<GridSpec> {
    let bad = || CliError::Usage(format!("--grid expects lo:hi:count, got '{text}'"));
    let parts: Vec<&str> = text.split(':').map(str::trim).collect();
    let [lo, hi, count] = parts.as_slice() else {
        return Err(bad());
    };
    let grid = GridSpec {
        lo: lo.parse().map_err(|_| bad())?,
        hi: hi.parse().map_err(|_| bad())?,
        count: count.parse().map_err(|_| bad())?,
    };
    if !(grid.lo < grid.hi) || grid.count < 2 {
        return Err(CliError::Usage(format!("--grid needs lo < hi and count ≥ 2, got '{text}'")));
    }
    Ok(grid)
}

pub fn parse_poly(text: &str, nvars: usize) -> CliResult<NcPolynomial> {
    NcPolynomial::parse(text, nvars).map_err(|e| CliError::parse(format!("polynomial '{text}'"), e))
}

pub fn parse_measures(vars: &[Binding]) -> CliResult<Vec<SpectralMeasure>> {
    vars.iter()
        .map(|Binding { var: k, spec: text }| {
            text.parse::<SpectralMeasure>()
                .map_err(|e| CliError::parse(format!("measure for x{k} '{text}'"), e))
        })
        .collect()
}

pub fn parse_ensembles(vars: &[Binding]) -> CliResult<Vec<Ensemble>> {
    vars.iter()
        .map(|Binding { var: k, spec: text }| {
            text.parse::<Ensemble>()
                .map_err(|e| CliError::parse(format!("ensemble for x{k} '{text}'"), e))
        })
        .collect()
}

/// `<path>.json`, next to the artifact it describes.
pub fn sidecar_path(artifact: &Path) -> PathBuf {
    let mut name = artifact.as_os_str().to_owned();
    name.push(".json");
    PathBuf::from(name)
}
