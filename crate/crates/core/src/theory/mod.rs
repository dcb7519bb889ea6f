//! Population-side quantities: estimands, bias, asymptotic variances and
//! their upper bounds.
//!
//! Everything here is a deterministic function of the inclusion profile and
//! the potential outcomes. These are the targets the replication harness and
//! the enumeration oracle are checked against.

mod did;
mod iv;

pub use did::{did_att, did_bias, did_theory, DidTheory};
pub use iv::{tsls_estimand, TslsEstimand};

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use crate::assignment::InclusionProfile;
use crate::error::{Error, Result};
use crate::moments::{cov1, weighted_mean, weighted_variance, weighted_variance_matrix};
use crate::population::FinitePopulation;

/// Residuals at or below this are treated as zero when classifying the
/// bound's equality conditions.
pub const EQUALITY_TOLERANCE: f64 = 1e-10;

pub(crate) fn check_size(profile: &InclusionProfile, n: usize) -> Result<()> {
    if profile.n() != n {
        return Err(Error::validation(format!(
            "inclusion profile covers {} units but the population has {n}",
            profile.n()
        )));
    }
    if profile.n1 == 0 || profile.n0 == 0 {
        return Err(Error::EmptyGroup {
            n1: profile.n1,
            n0: profile.n0,
        });
    }
    Ok(())
}

/// `(N/N0)(N/N1)`, the factor turning a covariance with `π` into a bias.
pub fn bias_scale(n: usize, n1: usize, n0: usize) -> f64 {
    let n = n as f64;
    (n / n0 as f64) * (n / n1 as f64)
}

fn one_minus(pi: &[f64]) -> Vec<f64> {
    pi.iter().map(|p| 1.0 - p).collect()
}

/// `(1/N1) Σ π_i τ_i`
pub fn att(profile: &InclusionProfile, pop: &FinitePopulation) -> Result<f64> {
    check_size(profile, pop.n())?;
    let s: f64 = profile.pi.iter().zip(pop.tau()).map(|(p, t)| p * t).sum();
    Ok(s / profile.n1 as f64)
}

/// `(N/N0)(N/N1) Cov_1(π, Y(0))`
pub fn sdim_bias(profile: &InclusionProfile, pop: &FinitePopulation) -> Result<f64> {
    check_size(profile, pop.n())?;
    Ok(bias_scale(pop.n(), profile.n1, profile.n0) * cov1(&profile.pi, pop.y0())?)
}

/// Ratio of `(1/N) Σ π̃` to `(N1/N)(N0/N)`; at most one, with equality for
/// uniform `π`.
pub fn leading_constant(profile: &InclusionProfile) -> Result<f64> {
    let n = profile.n() as f64;
    let total: f64 = profile.pi_tilde.iter().sum();
    if total <= 0.0 {
        return Err(Error::DegenerateDesign);
    }
    Ok((total / n) / ((profile.n1 as f64 / n) * (profile.n0 as f64 / n)))
}

/// Asymptotic variance of the difference in means,
/// `c · [Var_π̃(Y(1))/N1 + Var_π̃(Y(0))/N0 - Var_π̃(τ)/N]` with `c` the
/// [`leading_constant`].
pub fn hajek_variance(profile: &InclusionProfile, pop: &FinitePopulation) -> Result<f64> {
    check_size(profile, pop.n())?;
    let c = leading_constant(profile)?;
    let w = &profile.pi_tilde;
    let (n, n1, n0) = (pop.n() as f64, profile.n1 as f64, profile.n0 as f64);
    let v1 = weighted_variance(w, pop.y1())?;
    let v0 = weighted_variance(w, pop.y0())?;
    let vt = weighted_variance(w, &pop.tau())?;
    Ok(c * (v1 / n1 + v0 / n0 - vt / n))
}

/// Matrix version for vector outcomes; rows are units, columns outcomes.
pub fn hajek_variance_matrix(
    profile: &InclusionProfile,
    y0: &DMatrix<f64>,
    y1: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    check_size(profile, y0.nrows())?;
    if y0.shape() != y1.shape() {
        return Err(Error::validation(
            "potential outcome matrices differ in shape",
        ));
    }
    let c = leading_constant(profile)?;
    let w = &profile.pi_tilde;
    let (n, n1, n0) = (y0.nrows() as f64, profile.n1 as f64, profile.n0 as f64);
    let tau = y1 - y0;
    let v = weighted_variance_matrix(w, y1)? / n1 + weighted_variance_matrix(w, y0)? / n0
        - weighted_variance_matrix(w, &tau)? / n;
    Ok(v * c)
}

/// Upper bound on the asymptotic variance and the residuals of the two
/// conditions under which it is attained.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarianceBound {
    /// `Var_π(Y(1))/N1 + Var_{1-π}(Y(0))/N0`
    pub bound: f64,
    /// `[mean-matching residual, max_i |unit residual|]`.
    pub equality_gap: [f64; 2],
    pub equality_holds: bool,
}

pub fn variance_upper_bound(
    profile: &InclusionProfile,
    pop: &FinitePopulation,
) -> Result<VarianceBound> {
    check_size(profile, pop.n())?;
    let pi = &profile.pi;
    let q = one_minus(pi);
    let (n, n1, n0) = (pop.n() as f64, profile.n1 as f64, profile.n0 as f64);
    let (y0, y1) = (pop.y0(), pop.y1());
    let bound = weighted_variance(pi, y1)? / n1 + weighted_variance(&q, y0)? / n0;
    let m1 = weighted_mean(pi, y1)?;
    let m0 = weighted_mean(&q, y0)?;
    let combined: Vec<f64> = y1.iter().zip(y0).map(|(a, b)| a / n1 + b / n0).collect();
    let mean_gap = (weighted_mean(&profile.pi_tilde, &combined)? - (m1 / n1 + m0 / n0)).abs();
    let unit_gap = (0..pop.n())
        .map(|i| {
            let r = pi[i] / (n1 / n) * (y1[i] - m1) - (1.0 - pi[i]) / (n0 / n) * (y0[i] - m0);
            r.abs()
        })
        .fold(0.0, f64::max);
    Ok(VarianceBound {
        bound,
        equality_gap: [mean_gap, unit_gap],
        equality_holds: mean_gap <= EQUALITY_TOLERANCE && unit_gap <= EQUALITY_TOLERANCE,
    })
}

/// `Var_π(Y(1))/N1 + Var_{1-π}(Y(0))/N0` for vector outcomes.
pub fn variance_upper_bound_matrix(
    profile: &InclusionProfile,
    y0: &DMatrix<f64>,
    y1: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    check_size(profile, y0.nrows())?;
    let q = one_minus(&profile.pi);
    Ok(
        weighted_variance_matrix(&profile.pi, y1)? / profile.n1 as f64
            + weighted_variance_matrix(&q, y0)? / profile.n0 as f64,
    )
}

/// Smallest eigenvalue of a symmetric matrix; negative means not PSD.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    let sym = (m + m.transpose()) * 0.5;
    SymmetricEigen::new(sym)
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Finite-`N` readings of the regularity conditions behind the
/// variance-consistency and normal-approximation results. Each ratio should
/// be small for the asymptotics to be trusted. `None` when the relevant
/// variance is zero.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AsymptoticDiagnostics {
    pub pi_tilde_total: f64,
    pub leading_constant: f64,
    /// `max_i (Y_i(1) - E_π Y(1))² / (N1 Var_π Y(1))`
    pub treated_dominance: Option<f64>,
    /// `max_i (Y_i(0) - E_{1-π} Y(0))² / (N0 Var_{1-π} Y(0))`
    pub control_dominance: Option<f64>,
    /// `max_i (Ỹ_i - E_π̃ Ỹ)² / (Σπ̃ · Var_π̃ Ỹ)` with `Ỹ = Y(1)/N1 + Y(0)/N0`.
    pub lindeberg_ratio: Option<f64>,
}

fn dominance(w: &[f64], x: &[f64], count: f64) -> Result<Option<f64>> {
    let mean = weighted_mean(w, x)?;
    let var = weighted_variance(w, x)?;
    let max = x.iter().map(|v| (v - mean).powi(2)).fold(0.0, f64::max);
    Ok((var > 0.0).then(|| max / (count * var)))
}

pub fn asymptotic_diagnostics(
    profile: &InclusionProfile,
    pop: &FinitePopulation,
) -> Result<AsymptoticDiagnostics> {
    check_size(profile, pop.n())?;
    let (n1, n0) = (profile.n1 as f64, profile.n0 as f64);
    let total: f64 = profile.pi_tilde.iter().sum();
    let combined: Vec<f64> = pop
        .y1()
        .iter()
        .zip(pop.y0())
        .map(|(a, b)| a / n1 + b / n0)
        .collect();
    Ok(AsymptoticDiagnostics {
        pi_tilde_total: total,
        leading_constant: leading_constant(profile)?,
        treated_dominance: dominance(&profile.pi, pop.y1(), n1)?,
        control_dominance: dominance(&one_minus(&profile.pi), pop.y0(), n0)?,
        lindeberg_ratio: dominance(&profile.pi_tilde, &combined, total)?,
    })
}

/// Everything the theory layer says about the difference in means on one
/// population.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoryReport {
    pub att: f64,
    pub bias: f64,
    pub expected_sdim: f64,
    pub hajek_variance: f64,
    pub variance_bound: f64,
    pub equality_gap: [f64; 2],
    pub equality_holds: bool,
    pub diagnostics: AsymptoticDiagnostics,
}

pub fn theory_report(profile: &InclusionProfile, pop: &FinitePopulation) -> Result<TheoryReport> {
    let att = att(profile, pop)?;
    let bias = sdim_bias(profile, pop)?;
    let vb = variance_upper_bound(profile, pop)?;
    Ok(TheoryReport {
        att,
        bias,
        expected_sdim: att + bias,
        hajek_variance: hajek_variance(profile, pop)?,
        variance_bound: vb.bound,
        equality_gap: vb.equality_gap,
        equality_holds: vb.equality_holds,
        diagnostics: asymptotic_diagnostics(profile, pop)?,
    })
}
