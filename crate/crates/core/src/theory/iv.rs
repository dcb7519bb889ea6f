use nalgebra::DMatrix;
use serde::Serialize;

use super::{bias_scale, check_size, hajek_variance_matrix, EQUALITY_TOLERANCE};
use crate::assignment::InclusionProfile;
use crate::error::{Error, Result};
use crate::moments::cov1;
use crate::population::IVPopulation;

/// Below this the expected first stage is treated as zero.
const FIRST_STAGE_TOLERANCE: f64 = 1e-12;

/// Randomization means of the reduced form and first stage, their ratio, and
/// the weighted complier effect it reduces to when both covariances vanish.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TslsEstimand {
    pub beta_2sls: f64,
    pub rf_expectation: f64,
    pub fs_expectation: f64,
    /// `Σ_C π^Z_i τ_i / Σ_C π^Z_i`; `None` without compliers.
    pub weighted_late: Option<f64>,
    pub is_weighted_late_valid: bool,
    /// `Cov_1(π^Z, Y(D(0)))`
    pub outcome_covariance: f64,
    /// `Cov_1(π^Z, D(0))`
    pub treatment_covariance: f64,
    pub compliers: usize,
    /// Asymptotic variance of (reduced form, first stage), row-major.
    pub component_variance: [[f64; 2]; 2],
    /// `g' V g` with `g = (1/FS, -RF/FS²)` at the expectations.
    pub delta_method_variance: f64,
}

pub fn tsls_estimand(profile_z: &InclusionProfile, iv: &IVPopulation) -> Result<TslsEstimand> {
    check_size(profile_z, iv.n())?;
    iv.ensure_monotone()?;
    let n = iv.n();
    let pi = &profile_z.pi;
    let n1 = profile_z.n1 as f64;
    let scale = bias_scale(n, profile_z.n1, profile_z.n0);
    let y_d0 = iv.y_at_d0();
    let d0: Vec<f64> = iv.d0().iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    let cov_y = cov1(pi, &y_d0)?;
    let cov_d = cov1(pi, &d0)?;

    let compliers: Vec<usize> = (0..n).filter(|&i| iv.is_complier(i)).collect();
    let weight: f64 = compliers.iter().map(|&i| pi[i]).sum();
    let effect: f64 = compliers
        .iter()
        .map(|&i| pi[i] * (iv.y1()[i] - iv.y0()[i]))
        .sum();

    let rf = effect / n1 + scale * cov_y;
    let fs = weight / n1 + scale * cov_d;
    if fs.abs() < FIRST_STAGE_TOLERANCE {
        return Err(Error::FirstStageDegenerate);
    }

    // Potential (outcome, treatment) pairs under each instrument value.
    let (y1, d1): (Vec<f64>, Vec<f64>) = (0..n)
        .map(|i| {
            if iv.d1()[i] {
                (iv.y1()[i], 1.0)
            } else {
                (iv.y0()[i], 0.0)
            }
        })
        .unzip();
    let at_zero = DMatrix::from_fn(n, 2, |i, j| if j == 0 { y_d0[i] } else { d0[i] });
    let at_one = DMatrix::from_fn(n, 2, |i, j| if j == 0 { y1[i] } else { d1[i] });
    let v = hajek_variance_matrix(profile_z, &at_zero, &at_one)?;
    let g = [1.0 / fs, -rf / (fs * fs)];
    let mut dm = 0.0;
    for r in 0..2 {
        for c in 0..2 {
            dm += g[r] * v[(r, c)] * g[c];
        }
    }

    Ok(TslsEstimand {
        beta_2sls: rf / fs,
        rf_expectation: rf,
        fs_expectation: fs,
        weighted_late: (weight > 0.0).then(|| effect / weight),
        is_weighted_late_valid: cov_y.abs() < EQUALITY_TOLERANCE
            && cov_d.abs() < EQUALITY_TOLERANCE,
        outcome_covariance: cov_y,
        treatment_covariance: cov_d,
        compliers: compliers.len(),
        component_variance: [[v[(0, 0)], v[(0, 1)]], [v[(1, 0)], v[(1, 1)]]],
        delta_method_variance: dm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assignment::InclusionProfile;

    #[test]
    fn uniform_instrument_gives_complier_average() {
        let prof = InclusionProfile::from_pi(vec![0.5; 6], 3);
        let iv = IVPopulation::new(
            vec![0.5; 6],
            vec![false, false, false, true, false, false],
            vec![true, true, false, true, true, false],
            vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
            vec![3.0, 2.5, 9.0, 4.0, 8.0, 1.0],
        )
        .unwrap();
        let e = tsls_estimand(&prof, &iv).unwrap();
        // compliers 0, 1, 4 with effects 2, 0.5, 3
        assert!((e.beta_2sls - 5.5 / 3.0).abs() < 1e-12, "{}", e.beta_2sls);
    }

    #[test]
    fn no_compliers_is_degenerate() {
        let prof = InclusionProfile::from_pi(vec![0.5; 4], 2);
        let iv = IVPopulation::new(
            vec![0.5; 4],
            vec![false; 4],
            vec![false; 4],
            vec![1.0; 4],
            vec![2.0; 4],
        )
        .unwrap();
        assert!(matches!(
            tsls_estimand(&prof, &iv),
            Err(Error::FirstStageDegenerate)
        ));
    }

    #[test]
    fn defiers_rejected() {
        let prof = InclusionProfile::from_pi(vec![0.5; 4], 2);
        let iv = IVPopulation::new(
            vec![0.5; 4],
            vec![false, true, false, false],
            vec![true, false, true, false],
            vec![1.0; 4],
            vec![2.0; 4],
        )
        .unwrap();
        assert!(matches!(
            tsls_estimand(&prof, &iv),
            Err(Error::MonotonicityViolated(v)) if v == vec![1]
        ));
    }
}
