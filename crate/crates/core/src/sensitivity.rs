//! Sensitivity of the difference in means to selection on untreated outcomes.
//!
//! The estimator's bias for the ATT is `(N/N1)(N/N0) Cov_1(π, Y(0))`. Given a
//! bound `M` on the magnitude of that covariance, the bias-corrected estimate
//! lies in `τ̂ - (N/N1)(N/N0) c` for some `c` in `[-M, M]`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::moments::var1;
use crate::theory::bias_scale;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensitivityBand {
    pub point: f64,
    pub cov_bound: f64,
    pub adjusted_lower: f64,
    pub adjusted_upper: f64,
    /// Smallest covariance bound whose band contains zero. Not a quantity
    /// with any standard definition; it is `|point| / ((N/N1)(N/N0))`.
    pub breakdown_cov: f64,
}

fn check(n: usize, n1: usize, n0: usize, cov_bound: f64) -> Result<()> {
    if n != n1 + n0 {
        return Err(Error::validation(format!(
            "n = {n} but n1 + n0 = {}",
            n1 + n0
        )));
    }
    if n1 == 0 || n0 == 0 {
        return Err(Error::EmptyGroup { n1, n0 });
    }
    if !(cov_bound >= 0.0 && cov_bound.is_finite()) {
        return Err(Error::validation(format!(
            "covariance bound must be finite and nonnegative, got {cov_bound}"
        )));
    }
    Ok(())
}

pub fn bias_adjusted_range(
    estimate: f64,
    n: usize,
    n1: usize,
    n0: usize,
    cov_bound: f64,
) -> Result<SensitivityBand> {
    check(n, n1, n0, cov_bound)?;
    let scale = bias_scale(n, n1, n0);
    Ok(SensitivityBand {
        point: estimate,
        cov_bound,
        adjusted_lower: estimate - scale * cov_bound,
        adjusted_upper: estimate + scale * cov_bound,
        breakdown_cov: estimate.abs() / scale,
    })
}

/// One band per coordinate, e.g. per event-study period.
pub fn bias_adjusted_ranges(
    estimates: &[f64],
    n: usize,
    n1: usize,
    n0: usize,
    cov_bound: f64,
) -> Result<Vec<SensitivityBand>> {
    estimates
        .iter()
        .map(|&e| bias_adjusted_range(e, n, n1, n0, cov_bound))
        .collect()
}

/// Bands for each bound in `grid`.
pub fn sensitivity_grid(
    estimate: f64,
    n: usize,
    n1: usize,
    n0: usize,
    grid: &[f64],
) -> Result<Vec<SensitivityBand>> {
    grid.iter()
        .map(|&m| bias_adjusted_range(estimate, n, n1, n0, m))
        .collect()
}

/// `M / (sd_1(π) · sd_1(y))`: the bound expressed as a correlation. `None`
/// when either standard deviation is zero.
pub fn standardized_bound(cov_bound: f64, pi: &[f64], y: &[f64]) -> Result<Option<f64>> {
    let s = (var1(pi)? * var1(y)?).sqrt();
    Ok((s > 0.0).then(|| cov_bound / s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_bound_is_a_point() {
        let b = bias_adjusted_range(1.7, 10, 4, 6, 0.0).unwrap();
        assert_eq!(b.adjusted_lower, 1.7);
        assert_eq!(b.adjusted_upper, 1.7);
    }

    #[test]
    fn closed_form_band() {
        let b = bias_adjusted_range(2.0, 100, 50, 50, 0.25).unwrap();
        assert_eq!((b.adjusted_lower, b.adjusted_upper), (1.0, 3.0));
        assert_eq!(b.breakdown_cov, 0.5);
    }

    #[test]
    fn invalid_inputs() {
        assert!(bias_adjusted_range(1.0, 10, 4, 5, 0.1).is_err());
        assert!(bias_adjusted_range(1.0, 10, 4, 6, -0.1).is_err());
        assert!(bias_adjusted_range(1.0, 10, 0, 10, 0.1).is_err());
    }

    #[test]
    fn standardized_scale() {
        let s = standardized_bound(0.5, &[0.0, 1.0], &[0.0, 2.0]).unwrap();
        assert_eq!(s, Some(1.0));
        assert_eq!(
            standardized_bound(0.5, &[0.3, 0.3], &[0.0, 2.0]).unwrap(),
            None
        );
    }

    proptest! {
        #[test]
        fn nested_in_bound(e in -10.0f64..10.0, n1 in 1usize..50, n0 in 1usize..50, a in 0.0f64..3.0, b in 0.0f64..3.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let small = bias_adjusted_range(e, n1 + n0, n1, n0, lo).unwrap();
            let big = bias_adjusted_range(e, n1 + n0, n1, n0, hi).unwrap();
            prop_assert!(big.adjusted_lower <= small.adjusted_lower);
            prop_assert!(small.adjusted_upper <= big.adjusted_upper);
            prop_assert!(small.adjusted_lower <= e && e <= small.adjusted_upper);
            let width = 2.0 * lo * bias_scale(n1 + n0, n1, n0);
            prop_assert!(((small.adjusted_upper - small.adjusted_lower) - width).abs() < 1e-9 * (1.0 + width));
        }

        #[test]
        fn shift_equivariant(e in -10.0f64..10.0, s in -5.0f64..5.0, m in 0.0f64..2.0) {
            let a = bias_adjusted_range(e, 20, 8, 12, m).unwrap();
            let b = bias_adjusted_range(e + s, 20, 8, 12, m).unwrap();
            prop_assert!((b.adjusted_lower - a.adjusted_lower - s).abs() < 1e-9);
            prop_assert!((b.adjusted_upper - a.adjusted_upper - s).abs() < 1e-9);
        }

        #[test]
        fn band_reaches_zero_at_breakdown(e in -10.0f64..10.0, n1 in 1usize..50, n0 in 1usize..50) {
            let b = bias_adjusted_range(e, n1 + n0, n1, n0, 0.0).unwrap();
            let at = bias_adjusted_range(e, n1 + n0, n1, n0, b.breakdown_cov).unwrap();
            let tol = 1e-9 * (1.0 + e.abs());
            prop_assert!(at.adjusted_lower <= tol && at.adjusted_upper >= -tol);
        }
    }
}
