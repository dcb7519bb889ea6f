//! Subcommands of the `designinf` binary, callable without a process.
//!
//! Every command takes a validated [`RunConfig`] and returns a [`Report`];
//! the binary only parses flags, writes the report and maps errors to exit
//! codes.

use std::path::Path;

use designinf_core::assignment::{
    enumerate_assignments, exact_linear_covariance, inclusion_probabilities, AssignmentDraw,
    InclusionProfile, Sampler,
};
use designinf_core::estimators::{did_event_study, sdim, tsls};
use designinf_core::io::{
    to_json, InclusionSummary, LoadedData, ObservedData, OracleCheck, OracleReport, PopulationData,
    PopulationSummary, Report, RunConfig,
};
use designinf_core::montecarlo::{
    replication_rng, run_replications, DidExperiment, RunOptions, SdimExperiment, TslsExperiment,
};
use designinf_core::population::{
    orthogonalize_iv_outcomes, orthogonalize_outcomes, orthogonalize_trends,
};
use designinf_core::sensitivity::{bias_adjusted_range, standardized_bound, SensitivityBand};
use designinf_core::theory::{did_theory, theory_report, tsls_estimand};
use designinf_core::{Error, Result};
use nalgebra::DMatrix;
use serde::Serialize;
use serde_json::Value;

pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_CHECK_FAILED: i32 = 2;
pub const EXIT_IO: i32 = 3;

/// Tolerance for every oracle comparison.
pub const ORACLE_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Analyze,
    Sensitivity,
    OracleCheck,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Analyze => "analyze",
            Command::Sensitivity => "sensitivity",
            Command::OracleCheck => "oracle-check",
        }
    }
}

/// Command-line values that replace config values.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Overrides {
    /// Replaces `mc.master_seed` and `analysis_seed`.
    pub seed: Option<u64>,
    /// Replaces `mc.replications`.
    pub reps: Option<usize>,
}

pub fn apply_overrides(cfg: &mut RunConfig, o: Overrides) -> Result<()> {
    if let Some(seed) = o.seed {
        cfg.analysis_seed = Some(seed);
        if let Some(mc) = cfg.mc.as_mut() {
            mc.master_seed = seed;
        }
    }
    if let Some(reps) = o.reps {
        match cfg.mc.as_mut() {
            Some(mc) => mc.replications = reps,
            None => {
                return Err(Error::Validation(
                    "--reps given but the config has no mc block".into(),
                ))
            }
        }
    }
    cfg.validate()
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_io() {
        EXIT_IO
    } else {
        EXIT_VALIDATION
    }
}

/// A report plus whether every numeric check in it passed.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub report: Report,
    pub passed: bool,
}

/// Loads the data named by `cfg` (relative paths resolve against
/// `base_dir`) and runs `command`.
pub fn run(command: Command, cfg: &RunConfig, base_dir: &Path) -> Result<Outcome> {
    log::info!("{}: loading {} data", command.name(), cfg.mode.as_str());
    let data = cfg.load(base_dir)?;
    match command {
        Command::Simulate => simulate(cfg, population(data, command)?),
        Command::Analyze => analyze(cfg, data, false),
        Command::Sensitivity => analyze(cfg, data, true),
        Command::OracleCheck => oracle_check(cfg, population(data, command)?, |_| {}),
    }
}

fn population(data: LoadedData, command: Command) -> Result<PopulationData> {
    match data {
        LoadedData::Population(p) => Ok(p),
        LoadedData::Observed(_) => Err(Error::Validation(format!(
            "{} needs potential outcomes, not observed data",
            command.name()
        ))),
    }
}

fn required_n1(cfg: &RunConfig) -> Result<usize> {
    cfg.n1
        .ok_or_else(|| Error::Validation("n1 is required".into()))
}

fn inclusion_summary(profile: &InclusionProfile) -> InclusionSummary {
    let pi = &profile.pi;
    InclusionSummary {
        sum_pi: pi.iter().sum(),
        min_pi: pi.iter().copied().fold(f64::INFINITY, f64::min),
        max_pi: pi.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        normalization_residual: profile.normalization_residual,
    }
}

fn population_summary(n: usize, n1: usize, observed_only: bool) -> PopulationSummary {
    PopulationSummary {
        n,
        n1,
        n0: n - n1,
        observed_only,
    }
}

/// Applies `orthogonalize` when requested.
fn prepare(
    cfg: &RunConfig,
    data: PopulationData,
    profile: &InclusionProfile,
) -> Result<PopulationData> {
    if !cfg.orthogonalize {
        return Ok(data);
    }
    log::info!("orthogonalizing outcomes against inclusion probabilities");
    Ok(match data {
        PopulationData::Cross(p) => PopulationData::Cross(orthogonalize_outcomes(&p, &profile.pi)?),
        PopulationData::Panel(p) => PopulationData::Panel(orthogonalize_trends(&p, &profile.pi)?),
        PopulationData::Iv(p) => PopulationData::Iv(orthogonalize_iv_outcomes(&p, &profile.pi)?),
    })
}

fn theory_block(data: &PopulationData, profile: &InclusionProfile) -> Result<Value> {
    match data {
        PopulationData::Cross(p) => to_json(&theory_report(profile, p)?),
        PopulationData::Panel(p) => to_json(&did_theory(profile, p)?),
        PopulationData::Iv(p) => to_json(&tsls_estimand(profile, p)?),
    }
}

/// Population, inclusion probabilities, theory and Monte Carlo.
pub fn simulate(cfg: &RunConfig, data: PopulationData) -> Result<Outcome> {
    let n1 = required_n1(cfg)?;
    let mc = cfg
        .mc
        .as_ref()
        .ok_or_else(|| Error::Validation("simulate needs an mc block".into()))?;
    let profile = inclusion_probabilities(data.probabilities(), n1)?;
    let data = prepare(cfg, data, &profile)?;
    let mut report = Report::new(Command::Simulate.name(), cfg.clone());
    report.population = Some(population_summary(data.n(), n1, false));
    report.inclusion = Some(inclusion_summary(&profile));
    let mut options = RunOptions {
        replications: mc.replications,
        master_seed: mc.master_seed,
        level: cfg.level,
        reference_variance: None,
    };
    log::info!(
        "running {} replications with n = {}, n1 = {n1}",
        mc.replications,
        data.n()
    );
    let summary = match data {
        PopulationData::Cross(p) => {
            let exp = SdimExperiment::new(p, n1)?;
            if mc.exact_standardization {
                options.reference_variance = Some(vec![exp.exact_variance()?]);
            }
            report.theory = Some(to_json(exp.theory())?);
            run_replications(&exp, n1, &options)?
        }
        PopulationData::Panel(p) => {
            let exp = DidExperiment::new(p, n1)?;
            if mc.exact_standardization {
                let cov = exp.exact_covariance()?;
                options.reference_variance = Some(cov.diagonal().iter().copied().collect());
            }
            report.theory = Some(to_json(exp.theory())?);
            run_replications(&exp, n1, &options)?
        }
        PopulationData::Iv(p) => {
            if mc.exact_standardization {
                return Err(Error::Validation(
                    "exact_standardization is not available in tsls mode".into(),
                ));
            }
            let exp = TslsExperiment::new(p, n1)?;
            report.theory = Some(to_json(exp.estimand())?);
            run_replications(&exp, n1, &options)?
        }
    };
    log::info!("{} replications excluded", summary.excluded);
    report.mc = Some(summary);
    Ok(Outcome {
        report,
        passed: true,
    })
}

/// Draws the single assignment analyzed on a simulated population.
fn draw_once(data: &PopulationData, n1: usize, seed: u64) -> Result<ObservedData> {
    let sampler = Sampler::new(data.probabilities(), n1)?;
    let d = sampler.draw(&mut replication_rng(seed, 0));
    Ok(match data {
        PopulationData::Cross(p) => ObservedData::Cross {
            y: p.observed(&d),
            d,
        },
        PopulationData::Panel(p) => ObservedData::Panel {
            y: p.observed(&d),
            first_period: p.first_period(),
            d,
        },
        PopulationData::Iv(p) => {
            let (dd, y) = p.observed(&d);
            ObservedData::Iv { z: d, d: dd, y }
        }
    })
}

fn assignment(obs: &ObservedData) -> &AssignmentDraw {
    match obs {
        ObservedData::Cross { d, .. } | ObservedData::Panel { d, .. } => d,
        ObservedData::Iv { z, .. } => z,
    }
}

#[derive(Debug, Clone, Serialize)]
struct SensitivityEntry {
    label: String,
    /// The bound on the correlation scale; needs inclusion probabilities.
    standardized_bound: Option<f64>,
    #[serde(flatten)]
    band: SensitivityBand,
}

/// Outcomes whose covariance with π drives the bias of each coordinate.
fn sensitivity_outcomes(obs: &ObservedData) -> Vec<Vec<f64>> {
    match obs {
        ObservedData::Cross { y, .. } => vec![y.clone()],
        ObservedData::Panel {
            y, first_period, ..
        } => {
            let base = (-first_period) as usize;
            (0..y.ncols())
                .filter(|&c| c != base)
                .map(|c| (0..y.nrows()).map(|i| y[(i, c)] - y[(i, base)]).collect())
                .collect()
        }
        ObservedData::Iv { .. } => Vec::new(),
    }
}

fn sensitivity_block(
    cfg: &RunConfig,
    obs: &ObservedData,
    labels: &[String],
    estimates: &[f64],
    pi: Option<&[f64]>,
) -> Result<Value> {
    let grid = &cfg
        .sensitivity
        .as_ref()
        .ok_or_else(|| Error::Validation("sensitivity needs a sensitivity block".into()))?
        .cov_bounds;
    let d = assignment(obs);
    let (n, n1) = (d.len(), d.n1());
    let outcomes = sensitivity_outcomes(obs);
    let mut entries = Vec::new();
    for &m in grid {
        for (j, (label, &e)) in labels.iter().zip(estimates).enumerate() {
            let standardized = match pi {
                Some(pi) => standardized_bound(m, pi, &outcomes[j])?,
                None => None,
            };
            entries.push(SensitivityEntry {
                label: label.clone(),
                standardized_bound: standardized,
                band: bias_adjusted_range(e, n, n1, n - n1, m)?,
            });
        }
    }
    to_json(&entries)
}

/// Estimates on one dataset: the observed data, or one draw from a simulated
/// population (which also yields the theory block). With `bands`, adds the
/// covariance sensitivity bands.
pub fn analyze(cfg: &RunConfig, data: LoadedData, bands: bool) -> Result<Outcome> {
    let command = if bands {
        Command::Sensitivity
    } else {
        Command::Analyze
    };
    if bands && cfg.mode == designinf_core::io::Mode::Tsls {
        return Err(Error::Validation(
            "sensitivity bands are defined for sdim and did modes".into(),
        ));
    }
    let mut report = Report::new(command.name(), cfg.clone());
    let (obs, profile) = match data {
        LoadedData::Observed(obs) => {
            if cfg.orthogonalize {
                return Err(Error::Validation(
                    "orthogonalize needs potential outcomes".into(),
                ));
            }
            let d = assignment(&obs);
            report.population = Some(population_summary(d.len(), d.n1(), true));
            (obs, None)
        }
        LoadedData::Population(pop) => {
            let n1 = required_n1(cfg)?;
            let profile = inclusion_probabilities(pop.probabilities(), n1)?;
            let pop = prepare(cfg, pop, &profile)?;
            report.population = Some(population_summary(pop.n(), n1, false));
            report.inclusion = Some(inclusion_summary(&profile));
            report.theory = Some(theory_block(&pop, &profile)?);
            let seed = cfg.analysis_seed.unwrap_or(0);
            log::info!("drawing one assignment with seed {seed}");
            (draw_once(&pop, n1, seed)?, Some(profile))
        }
    };
    let (labels, estimates, value) = match &obs {
        ObservedData::Cross { d, y } => {
            let r = sdim(y, d, cfg.level)?;
            (r.labels.clone(), r.estimate.clone(), to_json(&r)?)
        }
        ObservedData::Panel { d, y, first_period } => {
            let r = did_event_study(y, *first_period, d, cfg.level)?;
            (r.labels.clone(), r.estimate.clone(), to_json(&r)?)
        }
        ObservedData::Iv { z, d, y } => {
            let r = tsls(y, d, z, cfg.level)?;
            (vec!["beta_2sls".into()], vec![r.estimate], to_json(&r)?)
        }
    };
    report.estimate = Some(value);
    if bands {
        let pi = profile.as_ref().map(|p| p.pi.as_slice());
        report.sensitivity = Some(sensitivity_block(cfg, &obs, &labels, &estimates, pi)?);
    }
    Ok(Outcome {
        report,
        passed: true,
    })
}

/// `|a - b| / max(1, |b|)`
fn residual(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

fn max_residual(a: impl IntoIterator<Item = f64>, b: impl IntoIterator<Item = f64>) -> f64 {
    a.into_iter()
        .zip(b)
        .map(|(x, y)| residual(x, y))
        .fold(0.0, f64::max)
}

/// Weighted mean vector and covariance matrix of `stats` under `w`.
fn support_moments(stats: &[Vec<f64>], w: &[f64]) -> (Vec<f64>, DMatrix<f64>) {
    let k = stats[0].len();
    let mut mean = vec![0.0; k];
    for (s, &wi) in stats.iter().zip(w) {
        for j in 0..k {
            mean[j] += wi * s[j];
        }
    }
    let mut cov = DMatrix::zeros(k, k);
    for (s, &wi) in stats.iter().zip(w) {
        for a in 0..k {
            for b in 0..k {
                cov[(a, b)] += wi * (s[a] - mean[a]) * (s[b] - mean[b]);
            }
        }
    }
    (mean, cov)
}

/// Coefficients of `Σ_i a_i D_i` in the difference in means between
/// outcomes `treated` and `control` (the outcome each unit shows in each arm).
fn linear_form(treated: &[f64], control: &[f64], n1: usize, n0: usize) -> Vec<f64> {
    treated
        .iter()
        .zip(control)
        .map(|(a, b)| a / n1 as f64 + b / n0 as f64)
        .collect()
}

/// Compares the analytic machinery with full enumeration of the design.
/// `corrupt` may alter the inclusion profile before it is used, so tests can
/// confirm that a wrong profile is caught.
pub fn oracle_check(
    cfg: &RunConfig,
    data: PopulationData,
    corrupt: impl FnOnce(&mut InclusionProfile),
) -> Result<Outcome> {
    let n1 = required_n1(cfg)?;
    let p = data.probabilities().to_vec();
    let mut profile = inclusion_probabilities(&p, n1)?;
    let data = prepare(cfg, data, &profile)?;
    corrupt(&mut profile);
    let support = enumerate_assignments(&p, n1)?;
    log::info!("enumerated {} assignments", support.len());
    let n = p.len();
    let n0 = n - n1;
    let w: Vec<f64> = support.iter().map(|(_, w)| *w).collect();

    let mut enum_pi = vec![0.0; n];
    for (d, wi) in &support {
        for (i, e) in enum_pi.iter_mut().enumerate() {
            if d.is_treated(i) {
                *e += wi;
            }
        }
    }
    let mut checks = vec![
        OracleCheck::new(
            "inclusion_probabilities",
            max_residual(profile.pi.iter().copied(), enum_pi.iter().copied()),
            ORACLE_TOLERANCE,
        ),
        OracleCheck::new(
            "inclusion_total",
            residual(profile.pi.iter().sum(), n1 as f64),
            ORACLE_TOLERANCE,
        ),
    ];

    let mut report = Report::new(Command::OracleCheck.name(), cfg.clone());
    report.population = Some(population_summary(n, n1, false));
    report.inclusion = Some(inclusion_summary(&profile));
    report.theory = Some(theory_block(&data, &profile)?);

    match &data {
        PopulationData::Cross(pop) => {
            let theory = theory_report(&profile, pop)?;
            let stats = support
                .iter()
                .map(|(d, _)| Ok(sdim(&pop.observed(d), d, cfg.level)?.estimate))
                .collect::<Result<Vec<_>>>()?;
            let (mean, cov) = support_moments(&stats, &w);
            let a = linear_form(pop.y1(), pop.y0(), n1, n0);
            let exact = exact_linear_covariance(&p, n1, &[a])?;
            checks.push(OracleCheck::new(
                "expected_sdim",
                residual(theory.expected_sdim, mean[0]),
                ORACLE_TOLERANCE,
            ));
            checks.push(OracleCheck::new(
                "exact_variance",
                residual(exact[(0, 0)], cov[(0, 0)]),
                ORACLE_TOLERANCE,
            ));
        }
        PopulationData::Panel(panel) => {
            let theory = did_theory(&profile, panel)?;
            let stats = support
                .iter()
                .map(|(d, _)| {
                    Ok(
                        did_event_study(&panel.observed(d), panel.first_period(), d, cfg.level)?
                            .estimate,
                    )
                })
                .collect::<Result<Vec<_>>>()?;
            let (mean, cov) = support_moments(&stats, &w);
            let base = panel.base_index();
            let (y0, y1) = (panel.y0(), panel.y1());
            let forms: Vec<Vec<f64>> = (0..panel.num_periods())
                .filter(|&c| c != base)
                .map(|c| {
                    let t: Vec<f64> = (0..n).map(|i| y1[(i, c)] - y1[(i, base)]).collect();
                    let u: Vec<f64> = (0..n).map(|i| y0[(i, c)] - y0[(i, base)]).collect();
                    linear_form(&t, &u, n1, n0)
                })
                .collect();
            let exact = exact_linear_covariance(&p, n1, &forms)?;
            checks.push(OracleCheck::new(
                "expected_event_study",
                max_residual(theory.expected.iter().copied(), mean),
                ORACLE_TOLERANCE,
            ));
            checks.push(OracleCheck::new(
                "exact_covariance",
                max_residual(exact.iter().copied(), cov.iter().copied()),
                ORACLE_TOLERANCE,
            ));
        }
        PopulationData::Iv(iv) => {
            let estimand = tsls_estimand(&profile, iv)?;
            let stats = support
                .iter()
                .map(|(z, _)| {
                    let (d, y) = iv.observed(z);
                    Ok(vec![
                        sdim(&y, z, cfg.level)?.estimate[0],
                        sdim(&d, z, cfg.level)?.estimate[0],
                    ])
                })
                .collect::<Result<Vec<_>>>()?;
            let (mean, cov) = support_moments(&stats, &w);
            let on = AssignmentDraw::new(vec![true; n]);
            let off = AssignmentDraw::new(vec![false; n]);
            let (d_on, y_on) = iv.observed(&on);
            let (d_off, y_off) = iv.observed(&off);
            let forms = vec![
                linear_form(&y_on, &y_off, n1, n0),
                linear_form(&d_on, &d_off, n1, n0),
            ];
            let exact = exact_linear_covariance(&p, n1, &forms)?;
            checks.push(OracleCheck::new(
                "expected_reduced_form",
                residual(estimand.rf_expectation, mean[0]),
                ORACLE_TOLERANCE,
            ));
            checks.push(OracleCheck::new(
                "expected_first_stage",
                residual(estimand.fs_expectation, mean[1]),
                ORACLE_TOLERANCE,
            ));
            checks.push(OracleCheck::new(
                "exact_component_covariance",
                max_residual(exact.iter().copied(), cov.iter().copied()),
                ORACLE_TOLERANCE,
            ));
        }
    }
    let passed = checks.iter().all(|c| c.passed);
    for c in checks.iter().filter(|c| !c.passed) {
        log::warn!(
            "check {} failed: residual {:e} > {:e}",
            c.name,
            c.residual,
            c.threshold
        );
    }
    report.oracle = Some(OracleReport {
        support_size: support.len(),
        checks,
        passed,
    });
    Ok(Outcome { report, passed })
}
