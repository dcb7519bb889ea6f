//! Run configuration, CSV ingestion and the JSON report.

mod config;
mod csv;

pub use self::config::{
    LoadedData, McOptions, Mode, OracleOptions, PopulationData, PopulationSource, RunConfig,
    SensitivityOptions,
};
pub use self::csv::{load_observed_csv, load_population_csv, write_population_csv, ObservedData};

use std::path::Path;

use serde::Serialize;

use crate::error::Result;
use crate::montecarlo::SimulationSummary;

/// One named comparison with its residual and the tolerance it must meet.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleCheck {
    pub name: String,
    pub residual: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl OracleCheck {
    pub fn new(name: impl Into<String>, residual: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            residual,
            threshold,
            passed: residual <= threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    pub support_size: usize,
    pub checks: Vec<OracleCheck>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PopulationSummary {
    pub n: usize,
    pub n1: usize,
    pub n0: usize,
    pub observed_only: bool,
}

/// Summary of the inclusion profile; the full vector is not written.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InclusionSummary {
    pub sum_pi: f64,
    pub min_pi: f64,
    pub max_pi: f64,
    pub normalization_residual: f64,
}

/// The single JSON document a run produces. Blocks a command does not
/// compute are omitted.
#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    /// Seconds since the Unix epoch; the only field that changes between
    /// identical runs.
    pub generated_unix_time: u64,
    pub config: RunConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub population: Option<PopulationSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inclusion: Option<InclusionSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub estimate: Option<serde_json::Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theory: Option<serde_json::Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mc: Option<SimulationSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sensitivity: Option<serde_json::Value>,
}

impl Report {
    pub fn new(command: impl Into<String>, config: RunConfig) -> Self {
        let generated_unix_time = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Self {
            tool: "designinf",
            version: env!("CARGO_PKG_VERSION"),
            command: command.into(),
            generated_unix_time,
            config,
            population: None,
            inclusion: None,
            estimate: None,
            theory: None,
            oracle: None,
            mc: None,
            sensitivity: None,
        }
    }
}

/// Serializes any value as pretty JSON. Floats use the shortest decimal that
/// reads back to the same `f64`.
pub fn to_json<T: Serialize>(value: &T) -> Result<serde_json::Value> {
    Ok(serde_json::to_value(value)?)
}

pub fn write_report(report: &Report, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(report)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}
