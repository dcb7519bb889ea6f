//! Dynamic two-way fixed-effects regression, solved by least squares.
//!
//! Only used to cross-check the closed-form event-study estimator: with unit
//! and period dummies and one treatment-by-period interaction per non-base
//! period, the interaction coefficients equal `τ̂_t - τ̂_0`, and the
//! unit-clustered sandwich variance without small-sample scaling equals `ŝ`
//! of the differenced outcomes.

use nalgebra::{DMatrix, DVector};

use crate::assignment::AssignmentDraw;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct TwfeFit {
    /// Interaction coefficients, non-base periods in column order.
    pub coefficients: Vec<f64>,
    /// Unit-clustered sandwich variance of `coefficients` (no degrees-of-freedom scaling).
    pub cluster_variance: DMatrix<f64>,
}

pub fn twfe_cluster_robust(y: &DMatrix<f64>, base: usize, d: &AssignmentDraw) -> Result<TwfeFit> {
    let (n, t) = y.shape();
    if base >= t || d.len() != n {
        return Err(Error::validation(
            "panel shape does not match base period or assignment",
        ));
    }
    let others: Vec<usize> = (0..t).filter(|&c| c != base).collect();
    let k = n + 2 * others.len();
    let rows = n * t;
    let mut x = DMatrix::zeros(rows, k);
    let mut yy = DVector::zeros(rows);
    for i in 0..n {
        for c in 0..t {
            let r = i * t + c;
            yy[r] = y[(i, c)];
            x[(r, i)] = 1.0;
            if let Some(j) = others.iter().position(|&o| o == c) {
                x[(r, n + j)] = 1.0;
                if d.is_treated(i) {
                    x[(r, n + others.len() + j)] = 1.0;
                }
            }
        }
    }
    let xtx = x.transpose() * &x;
    let bread = xtx
        .try_inverse()
        .ok_or_else(|| Error::validation("design matrix is singular"))?;
    let beta = &bread * (x.transpose() * &yy);
    let resid = &yy - &x * &beta;
    let mut meat = DMatrix::zeros(k, k);
    for i in 0..n {
        let xi = x.rows(i * t, t);
        let ei = resid.rows(i * t, t);
        let score = xi.transpose() * ei;
        meat += &score * score.transpose();
    }
    let v = &bread * meat * &bread;
    let off = n + others.len();
    let m = others.len();
    Ok(TwfeFit {
        coefficients: beta.rows(off, m).iter().copied().collect(),
        cluster_variance: v.view((off, off), (m, m)).into_owned(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::did_event_study;

    #[test]
    fn regression_matches_closed_form() {
        let n = 9;
        let y = DMatrix::from_fn(n, 4, |i, c| {
            ((i * 7 + c * 3) % 5) as f64 + 0.3 * (i as f64) * (c as f64) - 0.1 * (c * c) as f64
        });
        let d = AssignmentDraw::from_treated(n, &[0, 3, 4, 8]);
        let fit = twfe_cluster_robust(&y, 1, &d).unwrap();
        let es = did_event_study(&y, -1, &d, 0.95).unwrap();
        for j in 0..3 {
            assert!((fit.coefficients[j] - es.estimate[j]).abs() < 1e-10);
            for l in 0..3 {
                let a = fit.cluster_variance[(j, l)];
                let b = es.variance_estimate[j][l];
                assert!((a - b).abs() < 1e-10, "({j},{l}) {a} vs {b}");
            }
        }
    }
}
