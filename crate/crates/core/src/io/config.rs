use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::csv::{load_observed_csv, load_population_csv, ObservedData};
use crate::error::{Error, Result};
use crate::estimators::DEFAULT_LEVEL;
use crate::population::{
    make_iv_population, make_panel_population, make_population, FinitePopulation, GeneratorSpec,
    IVPopulation, IvGeneratorSpec, PanelGeneratorSpec, PanelPopulation,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Sdim,
    Did,
    Tsls,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Sdim => "sdim",
            Mode::Did => "did",
            Mode::Tsls => "tsls",
        }
    }
}

/// Where the population comes from. Generator and inline bodies are read
/// according to the run mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum PopulationSource {
    Generator {
        spec: serde_json::Value,
    },
    Inline {
        data: serde_json::Value,
    },
    /// Potential outcomes in CSV.
    Csv {
        path: PathBuf,
    },
    /// Observed data only; supports estimation and sensitivity, no theory.
    ObservedCsv {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McOptions {
    pub replications: usize,
    pub master_seed: u64,
    /// Standardize the normality check by the exact randomization variance
    /// (quadratic in population size) instead of the empirical variance.
    #[serde(default)]
    pub exact_standardization: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensitivityOptions {
    pub cov_bounds: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleOptions {
    #[serde(default)]
    pub enabled: bool,
}

fn default_level() -> f64 {
    DEFAULT_LEVEL
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    pub population: PopulationSource,
    /// Treated units (instrument-on units in tsls mode). Ignored for observed data.
    #[serde(default)]
    pub n1: Option<usize>,
    #[serde(default = "default_level")]
    pub level: f64,
    /// Replace the population by a copy with zero covariance between the
    /// inclusion probabilities and untreated outcomes (trends in did mode).
    #[serde(default)]
    pub orthogonalize: bool,
    /// Seed for the single assignment drawn by `analyze` on a simulated population.
    #[serde(default)]
    pub analysis_seed: Option<u64>,
    #[serde(default)]
    pub mc: Option<McOptions>,
    #[serde(default)]
    pub sensitivity: Option<SensitivityOptions>,
    #[serde(default)]
    pub oracle: OracleOptions,
}

/// A population with potential outcomes, by mode.
#[derive(Debug, Clone, PartialEq)]
pub enum PopulationData {
    Cross(FinitePopulation),
    Panel(PanelPopulation),
    Iv(IVPopulation),
}

impl PopulationData {
    pub fn n(&self) -> usize {
        match self {
            PopulationData::Cross(p) => p.n(),
            PopulationData::Panel(p) => p.n(),
            PopulationData::Iv(p) => p.n(),
        }
    }

    /// Probabilities driving the random draw.
    pub fn probabilities(&self) -> &[f64] {
        match self {
            PopulationData::Cross(p) => p.p(),
            PopulationData::Panel(p) => p.p(),
            PopulationData::Iv(p) => p.pz(),
        }
    }

    pub fn mode(&self) -> Mode {
        match self {
            PopulationData::Cross(_) => Mode::Sdim,
            PopulationData::Panel(_) => Mode::Did,
            PopulationData::Iv(_) => Mode::Tsls,
        }
    }
}

/// Either potential outcomes (simulation) or one realized dataset.
#[derive(Debug, Clone, PartialEq)]
pub enum LoadedData {
    Population(PopulationData),
    Observed(ObservedData),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct InlineCross {
    p: Vec<f64>,
    y0: Vec<f64>,
    y1: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct InlinePanel {
    p: Vec<f64>,
    first_period: i32,
    /// One row per unit, one entry per period.
    y0: Vec<Vec<f64>>,
    y1: Vec<Vec<f64>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct InlineIv {
    pz: Vec<f64>,
    d0: Vec<bool>,
    d1: Vec<bool>,
    y0: Vec<f64>,
    y1: Vec<f64>,
}

fn matrix(rows: &[Vec<f64>], name: &str) -> Result<DMatrix<f64>> {
    let t = rows.first().map(|r| r.len()).unwrap_or(0);
    if let Some(i) = rows.iter().position(|r| r.len() != t) {
        return Err(Error::Row {
            row: i + 1,
            message: format!("{name} has {} periods, expected {t}", rows[i].len()),
        });
    }
    Ok(DMatrix::from_fn(rows.len(), t, |i, j| rows[i][j]))
}

fn body<T: serde::de::DeserializeOwned>(v: &serde_json::Value, what: &str) -> Result<T> {
    serde_json::from_value(v.clone()).map_err(|e| Error::validation(format!("{what}: {e}")))
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| Error::validation(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::validation(format!(
                "level must lie in (0, 1), got {}",
                self.level
            )));
        }
        if let Some(mc) = &self.mc {
            if mc.replications < 2 {
                return Err(Error::validation(format!(
                    "mc.replications must be at least 2, got {}",
                    mc.replications
                )));
            }
        }
        if let Some(s) = &self.sensitivity {
            if let Some(m) = s.cov_bounds.iter().find(|m| !(**m >= 0.0 && m.is_finite())) {
                return Err(Error::validation(format!(
                    "sensitivity.cov_bounds must be finite and nonnegative, got {m}"
                )));
            }
        }
        let observed = matches!(self.population, PopulationSource::ObservedCsv { .. });
        if !observed && self.n1.is_none() {
            return Err(Error::validation(
                "n1 is required unless the population is observed data",
            ));
        }
        Ok(())
    }

    /// Loads the population. Relative CSV paths resolve against `base_dir`.
    pub fn load(&self, base_dir: &Path) -> Result<LoadedData> {
        let resolve = |p: &PathBuf| {
            if p.is_absolute() {
                p.clone()
            } else {
                base_dir.join(p)
            }
        };
        let pop = match (&self.population, self.mode) {
            (PopulationSource::Generator { spec }, Mode::Sdim) => {
                PopulationData::Cross(make_population(&body::<GeneratorSpec>(spec, "generator")?)?)
            }
            (PopulationSource::Generator { spec }, Mode::Did) => PopulationData::Panel(
                make_panel_population(&body::<PanelGeneratorSpec>(spec, "generator")?)?,
            ),
            (PopulationSource::Generator { spec }, Mode::Tsls) => PopulationData::Iv(
                make_iv_population(&body::<IvGeneratorSpec>(spec, "generator")?)?,
            ),
            (PopulationSource::Inline { data }, Mode::Sdim) => {
                let d: InlineCross = body(data, "inline population")?;
                PopulationData::Cross(FinitePopulation::new(d.p, d.y0, d.y1)?)
            }
            (PopulationSource::Inline { data }, Mode::Did) => {
                let d: InlinePanel = body(data, "inline population")?;
                PopulationData::Panel(PanelPopulation::new(
                    d.p,
                    matrix(&d.y0, "y0")?,
                    matrix(&d.y1, "y1")?,
                    d.first_period,
                )?)
            }
            (PopulationSource::Inline { data }, Mode::Tsls) => {
                let d: InlineIv = body(data, "inline population")?;
                let iv = IVPopulation::new(d.pz, d.d0, d.d1, d.y0, d.y1)?;
                iv.ensure_monotone()?;
                PopulationData::Iv(iv)
            }
            (PopulationSource::Csv { path }, mode) => load_population_csv(&resolve(path), mode)?,
            (PopulationSource::ObservedCsv { path }, mode) => {
                return Ok(LoadedData::Observed(load_observed_csv(
                    &resolve(path),
                    mode,
                )?))
            }
        };
        Ok(LoadedData::Population(pop))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const REFERENCE: &str = r#"{
        "mode": "sdim",
        "population": {"source": "inline", "data": {"p": [0.8, 0.6, 0.4, 0.2], "y0": [1, 2, 3, 4], "y1": [1, 2, 3, 4]}},
        "n1": 2
    }"#;

    #[test]
    fn inline_reference() {
        let cfg = RunConfig::from_json(REFERENCE).unwrap();
        assert_eq!(cfg.level, 0.95);
        match cfg.load(Path::new(".")).unwrap() {
            LoadedData::Population(PopulationData::Cross(p)) => {
                assert_eq!(p.y0(), &[1.0, 2.0, 3.0, 4.0])
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn zero_replications_rejected() {
        let text = REFERENCE.replace(
            "\"n1\": 2",
            "\"n1\": 2, \"mc\": {\"replications\": 0, \"master_seed\": 1}",
        );
        assert!(matches!(
            RunConfig::from_json(&text),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn unknown_field_rejected() {
        let text = REFERENCE.replace("\"n1\": 2", "\"n1\": 2, \"bogus\": 1");
        assert!(RunConfig::from_json(&text).is_err());
    }

    #[test]
    fn generator_by_mode() {
        let text = r#"{
            "mode": "tsls", "n1": 10,
            "population": {"source": "generator", "spec": {
                "n": 20, "seed": 3, "always_taker_share": 0.1, "never_taker_share": 0.2,
                "y0": {"law": "normal", "mean": 0, "sd": 1},
                "effect": {"law": "two_point", "low": 0, "high": 2, "prob_high": 0.5},
                "probability": {"link": "tiled", "pattern": [0.3, 0.7]}
            }}
        }"#;
        let cfg = RunConfig::from_json(text).unwrap();
        assert!(matches!(
            cfg.load(Path::new(".")).unwrap(),
            LoadedData::Population(PopulationData::Iv(_))
        ));
    }

    #[test]
    fn inline_defier_rejected() {
        let text = r#"{
            "mode": "tsls", "n1": 1,
            "population": {"source": "inline", "data": {
                "pz": [0.5, 0.5], "d0": [true, false], "d1": [false, false], "y0": [0, 0], "y1": [1, 1]
            }}
        }"#;
        let cfg = RunConfig::from_json(text).unwrap();
        assert!(matches!(
            cfg.load(Path::new(".")),
            Err(Error::MonotonicityViolated(_))
        ));
    }
}
