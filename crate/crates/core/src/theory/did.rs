use nalgebra::DMatrix;
use serde::Serialize;

use super::{
    bias_scale, check_size, hajek_variance_matrix, min_eigenvalue, variance_upper_bound_matrix,
};
use crate::assignment::InclusionProfile;
use crate::error::Result;
use crate::moments::cov1;
use crate::population::PanelPopulation;

/// Per-period ATT `(1/N1) Σ π_i (Y_it(1) - Y_it(0))`, one entry per column.
pub fn did_att(profile: &InclusionProfile, panel: &PanelPopulation) -> Result<Vec<f64>> {
    check_size(profile, panel.n())?;
    let n1 = profile.n1 as f64;
    Ok((0..panel.num_periods())
        .map(|c| {
            (0..panel.n())
                .map(|i| profile.pi[i] * (panel.y1()[(i, c)] - panel.y0()[(i, c)]))
                .sum::<f64>()
                / n1
        })
        .collect())
}

/// Bias `(N/N0)(N/N1) Cov_1(π, Y_t(0) - Y_0(0))` of each event-study
/// coefficient, one entry per column; zero at the base period.
pub fn did_bias(profile: &InclusionProfile, panel: &PanelPopulation) -> Result<Vec<f64>> {
    check_size(profile, panel.n())?;
    let scale = bias_scale(panel.n(), profile.n1, profile.n0);
    let base = panel.base_index();
    (0..panel.num_periods())
        .map(|c| {
            if c == base {
                return Ok(0.0);
            }
            let trend: Vec<f64> = (0..panel.n())
                .map(|i| panel.y0()[(i, c)] - panel.y0()[(i, base)])
                .collect();
            Ok(scale * cov1(&profile.pi, &trend)?)
        })
        .collect()
}

/// Theory for the event-study coefficients, non-base periods in column order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DidTheory {
    pub periods: Vec<i32>,
    pub tau: Vec<f64>,
    pub delta: Vec<f64>,
    /// `tau + delta`, the randomization mean of each coefficient.
    pub expected: Vec<f64>,
    pub hajek_variance: Vec<Vec<f64>>,
    pub variance_bound: Vec<Vec<f64>>,
    /// Smallest eigenvalue of bound minus Hájek variance; nonnegative up to rounding.
    pub bound_gap_min_eigenvalue: f64,
}

/// Potential outcomes differenced against the base period, for non-base
/// columns.
pub(crate) fn differenced(panel: &PanelPopulation) -> (DMatrix<f64>, DMatrix<f64>, Vec<usize>) {
    let base = panel.base_index();
    let cols: Vec<usize> = (0..panel.num_periods()).filter(|&c| c != base).collect();
    let n = panel.n();
    let diff =
        |m: &DMatrix<f64>| DMatrix::from_fn(n, cols.len(), |i, j| m[(i, cols[j])] - m[(i, base)]);
    (diff(panel.y0()), diff(panel.y1()), cols)
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|r| m.row(r).iter().copied().collect())
        .collect()
}

pub fn did_theory(profile: &InclusionProfile, panel: &PanelPopulation) -> Result<DidTheory> {
    let tau_all = did_att(profile, panel)?;
    let delta_all = did_bias(profile, panel)?;
    let (y0d, y1d, cols) = differenced(panel);
    let h = hajek_variance_matrix(profile, &y0d, &y1d)?;
    let b = variance_upper_bound_matrix(profile, &y0d, &y1d)?;
    let tau: Vec<f64> = cols.iter().map(|&c| tau_all[c]).collect();
    let delta: Vec<f64> = cols.iter().map(|&c| delta_all[c]).collect();
    Ok(DidTheory {
        periods: cols
            .iter()
            .map(|&c| c as i32 + panel.first_period())
            .collect(),
        expected: tau.iter().zip(&delta).map(|(a, b)| a + b).collect(),
        tau,
        delta,
        bound_gap_min_eigenvalue: min_eigenvalue(&(&b - &h)),
        hajek_variance: rows(&h),
        variance_bound: rows(&b),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assignment::inclusion_probabilities;
    use crate::moments::var1;

    fn panel(y0: DMatrix<f64>, y1: DMatrix<f64>) -> PanelPopulation {
        PanelPopulation::new(vec![0.8, 0.6, 0.4, 0.2], y0, y1, -1).unwrap()
    }

    #[test]
    fn time_constant_untreated_outcomes_have_no_bias() {
        let y0 = DMatrix::from_fn(4, 3, |i, _| i as f64);
        let p = panel(y0.clone(), y0);
        let prof = inclusion_probabilities(p.p(), 2).unwrap();
        assert!(did_bias(&prof, &p).unwrap().iter().all(|d| d.abs() < 1e-15));
    }

    #[test]
    fn plug_in_trend() {
        let prof = inclusion_probabilities(&[0.8, 0.6, 0.4, 0.2], 2).unwrap();
        let c = 3.0;
        let mean = 0.5;
        let y0 = DMatrix::from_fn(
            4,
            3,
            |i, t| if t == 2 { c * (prof.pi[i] - mean) } else { 0.0 },
        );
        let p = panel(y0.clone(), y0);
        let delta = did_bias(&prof, &p).unwrap();
        let expect = 4.0 * c * var1(&prof.pi).unwrap();
        assert!((delta[2] - expect).abs() < 1e-13);
        assert_eq!(delta[1], 0.0);
    }

    #[test]
    fn theory_skips_base_period() {
        let y0 = DMatrix::from_fn(4, 3, |i, t| (i * t) as f64);
        let mut y1 = y0.clone();
        for i in 0..4 {
            y1[(i, 2)] += 1.0 + i as f64;
        }
        let p = panel(y0, y1);
        let prof = inclusion_probabilities(p.p(), 2).unwrap();
        let th = did_theory(&prof, &p).unwrap();
        assert_eq!(th.periods, vec![-1, 1]);
        assert_eq!(th.tau[0], 0.0);
        assert!(th.bound_gap_min_eigenvalue > -1e-12);
    }
}
