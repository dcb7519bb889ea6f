use itertools::Itertools;
use nalgebra::{DMatrix, DVector};

use super::{AssignmentDraw, RejectiveDesign, UnitRole};
use crate::error::{Error, Result};

/// Largest support size that [`enumerate_assignments`] will walk.
pub const ENUMERATION_LIMIT: u128 = 1_000_000;

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// Every feasible assignment with its conditional probability.
///
/// Probabilities are proportional to `Π_{treated} w_i` over the free units and
/// are normalized to sum to one.
pub fn enumerate_assignments(p: &[f64], n1: usize) -> Result<Vec<(AssignmentDraw, f64)>> {
    let design = RejectiveDesign::new(p, n1)?;
    let free = design.free_units();
    let k = design.quota();
    let count = binomial(free.len(), k);
    if count > ENUMERATION_LIMIT {
        return Err(Error::EnumerationGuard {
            count,
            limit: ENUMERATION_LIMIT,
        });
    }
    let base: Vec<bool> = (0..design.n())
        .map(|i| design.role(i) == UnitRole::Forced)
        .collect();
    let log_w: Vec<f64> = design
        .tilted()
        .iter()
        .map(|q| q.ln() - (-q).ln_1p())
        .collect();

    let mut out = Vec::with_capacity(count as usize);
    let mut log_mass = Vec::with_capacity(count as usize);
    for combo in (0..free.len()).combinations(k) {
        let mut d = base.clone();
        let mut lm = 0.0;
        for &j in &combo {
            d[free[j]] = true;
            lm += log_w[j];
        }
        out.push(AssignmentDraw::new(d));
        log_mass.push(lm);
    }
    let peak = log_mass.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mass: Vec<f64> = log_mass.iter().map(|l| (l - peak).exp()).collect();
    let total: f64 = mass.iter().sum();
    Ok(out
        .into_iter()
        .zip(mass)
        .map(|(d, m)| (d, m / total))
        .collect())
}

/// Mean vector and covariance matrix of a vector statistic over the exact
/// randomization law.
#[derive(Debug, Clone)]
pub struct ExactMoments {
    pub mean: Vec<f64>,
    pub cov: DMatrix<f64>,
}

pub fn exact_randomization_moments<F>(p: &[f64], n1: usize, stat: F) -> Result<ExactMoments>
where
    F: Fn(&AssignmentDraw) -> Vec<f64>,
{
    let support = enumerate_assignments(p, n1)?;
    let values: Vec<(DVector<f64>, f64)> = support
        .iter()
        .map(|(d, w)| (DVector::from_vec(stat(d)), *w))
        .collect();
    let dim = values.first().map(|(v, _)| v.len()).unwrap_or(0);
    let mut mean = DVector::zeros(dim);
    for (v, w) in &values {
        mean.axpy(*w, v, 1.0);
    }
    let mut cov = DMatrix::zeros(dim, dim);
    for (v, w) in &values {
        let c = v - &mean;
        cov.ger(*w, &c, &c, 1.0);
    }
    Ok(ExactMoments {
        mean: mean.iter().copied().collect(),
        cov,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_support() {
        let support = enumerate_assignments(&[0.8, 0.6, 0.4, 0.2], 2).unwrap();
        assert_eq!(support.len(), 6);
        let total: f64 = support.iter().map(|(_, w)| w).sum();
        assert!((total - 1.0).abs() < 1e-14);
        // Odds 4, 1.5, 2/3, 1/4; e_2 = 11.208333...
        let both_first = support
            .iter()
            .find(|(d, _)| d.is_treated(0) && d.is_treated(1))
            .unwrap()
            .1;
        assert!((both_first - 6.0 / 11.208_333_333_333_334).abs() < 1e-14);
    }

    #[test]
    fn guard_trips() {
        let err = enumerate_assignments(&[0.5; 30], 15).unwrap_err();
        assert!(matches!(err, Error::EnumerationGuard { .. }));
    }

    #[test]
    fn moments_of_indicators_match_dp() {
        let p = [0.7, 0.2, 0.45, 0.9, 0.1, 0.33, 1.0];
        let m = exact_randomization_moments(&p, 3, |d| d.as_f64()).unwrap();
        let prof = super::super::inclusion_probabilities(&p, 3).unwrap();
        for (a, b) in m.mean.iter().zip(&prof.pi) {
            assert!((a - b).abs() < 1e-12);
        }
        for i in 0..p.len() {
            assert!((m.cov[(i, i)] - prof.pi_tilde[i]).abs() < 1e-12);
        }
    }
}
