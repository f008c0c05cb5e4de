//! Run configuration: a TOML file with dotted sections, unknown keys rejected.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use pmlab_core::coeffs::{make_coefficients, CoefficientField};
use pmlab_core::geometry::ParabolicCube;
use serde::{Deserialize, Serialize};

pub const PIPELINES: [&str; 10] = ["measure", "ainfty", "doubling", "bp", "hodge", "squares", "setf", "sawtooth", "audit", "all"];

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn bad(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CoeffsSection {
    pub name: String,
    pub params: BTreeMap<String, f64>,
}

impl Default for CoeffsSection {
    fn default() -> Self {
        CoeffsSection { name: "identity".into(), params: BTreeMap::new() }
    }
}

/// Resolution for the measure pipelines (`h`, `min_cells`, box factors),
/// for the boundary lab (`lab_h`) and for the interior audit (`audit_h`).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub h: f64,
    pub min_cells: usize,
    pub lmax_factor: f64,
    pub xext_factor: f64,
    pub lab_h: f64,
    pub audit_h: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection { h: 1.0 / 64.0, min_cells: 4, lmax_factor: 2.0, xext_factor: 24.0, lab_h: 1.0 / 32.0, audit_h: 1.0 / 64.0 }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CubeSection {
    pub x0: f64,
    pub t0: f64,
    pub r: f64,
}

impl Default for CubeSection {
    fn default() -> Self {
        CubeSection { x0: 0.0, t0: 4.0 / 1024.0, r: 1.0 / 32.0 }
    }
}

impl CubeSection {
    pub fn cube(&self) -> ParabolicCube {
        ParabolicCube::new(self.x0, self.t0, self.r)
    }
}

/// Separate cube for the lab-based pipelines, which need r ≥ 2 lab_h.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LabSection {
    pub x0: f64,
    pub t0: f64,
    pub r: f64,
    pub per_decade: usize,
}

impl Default for LabSection {
    fn default() -> Self {
        LabSection { x0: 0.0, t0: 0.0, r: 1.0 / 16.0, per_decade: 32 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AuditSection {
    pub eta: Vec<f64>,
    pub eps: Vec<f64>,
    /// Audit cube (x0, t0, r); t0 must be at least 4 r².
    pub x0: f64,
    pub t0: f64,
    pub r: f64,
    /// Lab resolution for the set F fed to the audit.
    pub lab_h: f64,
}

impl Default for AuditSection {
    fn default() -> Self {
        AuditSection { eta: vec![0.5], eps: vec![1.0 / 32.0, 3.0 / 64.0], x0: 0.0, t0: 0.5, r: 0.25, lab_h: 1.0 / 16.0 }
    }
}

/// Cutoff parameters for the sawtooth pipeline; ε is given in units of lab.r.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SawtoothSection {
    pub eta: Vec<f64>,
    pub eps_over_r: Vec<f64>,
}

impl Default for SawtoothSection {
    fn default() -> Self {
        SawtoothSection { eta: vec![0.25, 0.5, 0.75], eps_over_r: vec![1.0 / 16.0, 1.0 / 8.0, 1.0 / 5.0] }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "lowercase", tag = "mode")]
pub enum KappaSection {
    Fixed { value: f64 },
    Calibrate { target: f64 },
}

impl Default for KappaSection {
    fn default() -> Self {
        KappaSection::Calibrate { target: 1e-3 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub total_mass_min: f64,
    pub doubling_max: f64,
    pub ainfty_delta: f64,
    pub ainfty_eps_max: f64,
    pub bp_max: f64,
    pub hodge_residual: f64,
    pub tech_mass_slack: f64,
    pub square_ratio_max: f64,
    pub density_max: f64,
    pub conservation: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            total_mass_min: 0.999,
            doubling_max: 64.0,
            ainfty_delta: 1e-3,
            ainfty_eps_max: 0.5,
            bp_max: 10.0,
            hodge_residual: 1e-8,
            tech_mass_slack: 1.05,
            square_ratio_max: 1e3,
            density_max: 1e-3,
            conservation: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub pipeline: Option<String>,
    pub seed: Option<u64>,
    pub depth: Option<usize>,
    pub coeffs: CoeffsSection,
    pub grid: GridSection,
    pub cube: CubeSection,
    pub lab: LabSection,
    pub audit: AuditSection,
    pub sawtooth: SawtoothSection,
    pub kappa: KappaSection,
    pub tolerances: Tolerances,
    pub output: OutputSection,
}

/// Parsed config plus the exact text it came from.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub text: String,
}

pub fn load(path: Option<&Path>) -> Result<LoadedConfig, ConfigError> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| bad(format!("{}: {e}", p.display())))?;
            parse(&text)
        }
        None => {
            let config = RunConfig::default();
            let text = toml::to_string(&config).map_err(|e| bad(e.to_string()))?;
            Ok(LoadedConfig { config, text })
        }
    }
}

pub fn parse(text: &str) -> Result<LoadedConfig, ConfigError> {
    let config: RunConfig = toml::from_str(text).map_err(|e| bad(e.to_string()))?;
    Ok(LoadedConfig { config, text: text.to_string() })
}

/// Everything a pipeline needs, checked before any solve.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub coeffs: CoefficientField,
    pub seed: u64,
    pub workers: usize,
    pub depth: usize,
    pub out: PathBuf,
    pub config: RunConfig,
}

fn positive(v: f64, what: &str) -> Result<(), ConfigError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(bad(format!("{what} must be positive and finite, got {v}")))
    }
}

pub fn resolve(
    mut config: RunConfig,
    pipeline: &str,
    out: Option<PathBuf>,
    seed: Option<u64>,
    workers: Option<usize>,
) -> Result<Resolved, ConfigError> {
    if !PIPELINES.contains(&pipeline) {
        return Err(bad(format!("unknown pipeline `{pipeline}`")));
    }
    if let Some(p) = &config.pipeline {
        if p != pipeline {
            return Err(bad(format!("config names pipeline `{p}` but `{pipeline}` was requested")));
        }
    }
    config.pipeline = Some(pipeline.to_string());
    let coeffs = make_coefficients(&config.coeffs.name, &config.coeffs.params).map_err(|e| bad(e.to_string()))?;
    let g = &config.grid;
    for (v, w) in [(g.h, "grid.h"), (g.lab_h, "grid.lab_h"), (g.audit_h, "grid.audit_h"), (g.lmax_factor, "grid.lmax_factor"), (g.xext_factor, "grid.xext_factor")] {
        positive(v, w)?;
    }
    positive(config.cube.r, "cube.r")?;
    positive(config.lab.r, "lab.r")?;
    positive(config.audit.r, "audit.r")?;
    positive(config.audit.lab_h, "audit.lab_h")?;
    for &e in &config.sawtooth.eta {
        if !(e > 0.0 && e <= 1.0) {
            return Err(bad(format!("sawtooth.eta = {e} outside (0, 1]")));
        }
    }
    for &e in &config.sawtooth.eps_over_r {
        if !(e > 0.0 && e < 0.25) {
            return Err(bad(format!("sawtooth.eps_over_r = {e} outside (0, 1/4)")));
        }
    }
    if config.lab.r < 2.0 * g.lab_h {
        return Err(bad(format!("lab.r = {} is below two lab cells ({})", config.lab.r, 2.0 * g.lab_h)));
    }
    if config.audit.t0 < 4.0 * config.audit.r * config.audit.r {
        return Err(bad("audit.t0 must be at least 4 audit.r^2"));
    }
    if config.audit.eta.is_empty() || config.audit.eps.is_empty() {
        return Err(bad("audit.eta and audit.eps must be non-empty"));
    }
    for &e in &config.audit.eta {
        if !(e > 0.0 && e <= 1.0) {
            return Err(bad(format!("audit.eta = {e} outside (0, 1]")));
        }
    }
    for &e in &config.audit.eps {
        positive(e, "audit.eps")?;
        if e >= config.audit.r / 4.0 {
            return Err(bad(format!("audit.eps = {e} must be below audit.r/4")));
        }
    }
    match config.kappa {
        KappaSection::Fixed { value } => positive(value, "kappa.value")?,
        KappaSection::Calibrate { target } => {
            if !(target > 0.0 && target < 1.0) {
                return Err(bad(format!("kappa.target = {target} outside (0, 1)")));
            }
        }
    }
    let workers = workers.unwrap_or(1);
    if workers == 0 {
        return Err(bad("--workers must be at least 1"));
    }
    let out = out.or_else(|| config.output.dir.clone()).unwrap_or_else(|| PathBuf::from("pmlab-out"));
    Ok(Resolved {
        coeffs,
        seed: seed.or(config.seed).unwrap_or(0),
        workers,
        depth: config.depth.unwrap_or(2),
        out,
        config,
    })
}
