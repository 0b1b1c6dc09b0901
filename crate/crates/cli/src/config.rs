//! TOML configuration with `--override key.path=value` patches.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use homog::ensemble::EnsembleSpec;
use homog::solver::SolverSettings;

use crate::CliError;

/// Parsed config document before it is bound to a command's schema.
pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Table, CliError> {
    let mut doc = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
            text.parse::<Table>().map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
        }
        None => Table::new(),
    };
    for o in overrides {
        apply_override(&mut doc, o)?;
    }
    Ok(doc)
}

/// Sets `a.b.c = value`, creating intermediate tables. The value is read as
/// a TOML literal, falling back to a bare string.
pub fn apply_override(doc: &mut Table, spec: &str) -> Result<(), CliError> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("override {spec:?} is not KEY=VALUE")))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(CliError::Usage(format!("override key {key:?} is malformed")));
    }
    let value = parse_value(raw.trim());
    let mut table = doc;
    for part in &path[..path.len() - 1] {
        let entry = table.entry(part.to_string()).or_insert_with(|| Value::Table(Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Usage(format!("override {key:?} descends into non-table {part:?}")))?;
    }
    table.insert(path[path.len() - 1].to_string(), value);
    Ok(())
}

fn parse_value(raw: &str) -> Value {
    format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

pub fn bind<T: DeserializeOwned>(doc: Table) -> Result<T, CliError> {
    T::deserialize(Value::Table(doc)).map_err(|e| CliError::Config(e.to_string()))
}

fn zero() -> u64 {
    0
}
fn binary() -> DumpFormat {
    DumpFormat::Binary
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DumpFormat {
    Binary,
    Csv,
}

/// `homog sample`: one realization on a centered box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleConfig {
    pub ensemble: EnsembleSpec,
    /// Half-width of the box.
    pub radius: f64,
    pub spacing: f64,
    #[serde(default = "zero")]
    pub sample_index: u64,
    #[serde(default = "binary")]
    pub format: DumpFormat,
}

/// `homog solve`: corrector (and optionally the energy estimate) on one
/// realization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveConfig {
    pub ensemble: EnsembleSpec,
    pub radius: f64,
    pub spacing: f64,
    #[serde(rename = "T")]
    pub massive: f64,
    pub xi: Vec<f64>,
    /// Direction of the adjoint corrector; defaults to `xi`.
    #[serde(default)]
    pub xi_prime: Option<Vec<f64>>,
    /// Mask radius `L` of the energy estimate; skipped when absent.
    #[serde(rename = "L", default)]
    pub mask_radius: Option<f64>,
    #[serde(default = "zero")]
    pub sample_index: u64,
    #[serde(default = "binary")]
    pub format: DumpFormat,
    #[serde(default)]
    pub solver: SolverSettings,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GreenMode {
    Quenched,
    Annealed,
}

fn quenched() -> GreenMode {
    GreenMode::Quenched
}
fn p_sweep() -> Vec<f64> {
    vec![1.0, 1.5, 2.0]
}
fn fifty() -> usize {
    50
}

/// `homog green`: quenched column probe or annealed gradient probe.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GreenConfig {
    pub ensemble: EnsembleSpec,
    #[serde(default = "quenched")]
    pub mode: GreenMode,
    #[serde(rename = "T")]
    pub massive: f64,
    pub box_radius: f64,
    pub spacing: f64,
    pub radii: Vec<f64>,
    #[serde(default = "p_sweep")]
    pub p_sweep: Vec<f64>,
    #[serde(default = "zero")]
    pub sample_index: u64,
    #[serde(default = "fifty")]
    pub n_samples: usize,
    #[serde(default)]
    pub solver: SolverSettings,
}

fn quarter() -> f64 {
    0.25
}
fn one() -> f64 {
    1.0
}
fn q_values() -> Vec<u32> {
    vec![1, 2]
}

/// `homog sgcheck`: the bundled enumerable battery.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SgConfig {
    #[serde(default = "quarter")]
    pub contrast: f64,
    /// Radius of the resampled balls.
    #[serde(default = "one")]
    pub ell: f64,
    #[serde(default = "q_values")]
    pub q_values: Vec<u32>,
    #[serde(default)]
    pub solver: SolverSettings,
}
