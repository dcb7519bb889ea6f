//! Estimators computed from one realized assignment.
//!
//! Group variances use divisors `N1` and `N0`, not `N1 - 1` and `N0 - 1`.
//! Most statistics libraries use the latter; results here will be slightly
//! smaller than theirs.

mod regression;

pub use regression::{twfe_cluster_robust, TwfeFit};

use nalgebra::DMatrix;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::assignment::AssignmentDraw;
use crate::error::{Error, Result};

pub const DEFAULT_LEVEL: f64 = 0.95;

/// Two-sided normal critical value `z_{1 - α/2}` for confidence `level`.
pub fn normal_critical_value(level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::validation(format!(
            "confidence level must lie in (0, 1), got {level}"
        )));
    }
    let std = Normal::new(0.0, 1.0).expect("standard normal");
    Ok(std.inverse_cdf(0.5 + level / 2.0))
}

/// Point estimate, variance estimate and normal confidence intervals, one
/// coordinate per outcome column.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateReport {
    pub labels: Vec<String>,
    pub estimate: Vec<f64>,
    /// Row-major `dim × dim`.
    pub variance_estimate: Vec<Vec<f64>>,
    pub ci_lower: Vec<f64>,
    pub ci_upper: Vec<f64>,
    pub n1: usize,
    pub n0: usize,
    pub level: f64,
}

impl EstimateReport {
    fn build(
        labels: Vec<String>,
        estimate: Vec<f64>,
        var: &DMatrix<f64>,
        n1: usize,
        n0: usize,
        level: f64,
    ) -> Result<Self> {
        let z = normal_critical_value(level)?;
        let half: Vec<f64> = (0..estimate.len())
            .map(|j| z * var[(j, j)].max(0.0).sqrt())
            .collect();
        Ok(Self {
            labels,
            ci_lower: estimate.iter().zip(&half).map(|(e, h)| e - h).collect(),
            ci_upper: estimate.iter().zip(&half).map(|(e, h)| e + h).collect(),
            variance_estimate: (0..var.nrows())
                .map(|r| var.row(r).iter().copied().collect())
                .collect(),
            estimate,
            n1,
            n0,
            level,
        })
    }

    pub fn dim(&self) -> usize {
        self.estimate.len()
    }

    pub fn variance_matrix(&self) -> DMatrix<f64> {
        let k = self.dim();
        DMatrix::from_fn(k, k, |r, c| self.variance_estimate[r][c])
    }

    /// Diagonal of the variance estimate.
    pub fn variances(&self) -> Vec<f64> {
        (0..self.dim())
            .map(|j| self.variance_estimate[j][j])
            .collect()
    }
}

fn group_sizes(d: &AssignmentDraw, n: usize) -> Result<(usize, usize)> {
    if d.len() != n {
        return Err(Error::validation(format!(
            "assignment has {} units but outcomes have {n}",
            d.len()
        )));
    }
    let n1 = d.n1();
    let n0 = n - n1;
    if n1 == 0 || n0 == 0 {
        return Err(Error::EmptyGroup { n1, n0 });
    }
    Ok((n1, n0))
}

/// Differences in group means and `ŝ = S_1/N1 + S_0/N0` for each column of
/// `y`, with `S_g` the within-group covariance matrix (divisor `N_g`).
pub(crate) fn sdim_moments(
    y: &DMatrix<f64>,
    d: &AssignmentDraw,
) -> Result<(Vec<f64>, DMatrix<f64>, usize, usize)> {
    let (n, k) = y.shape();
    let (n1, n0) = group_sizes(d, n)?;
    let mut m1 = vec![0.0; k];
    let mut m0 = vec![0.0; k];
    for i in 0..n {
        let m = if d.is_treated(i) { &mut m1 } else { &mut m0 };
        for j in 0..k {
            m[j] += y[(i, j)];
        }
    }
    m1.iter_mut().for_each(|v| *v /= n1 as f64);
    m0.iter_mut().for_each(|v| *v /= n0 as f64);
    let mut s1 = DMatrix::zeros(k, k);
    let mut s0 = DMatrix::zeros(k, k);
    let mut dev = vec![0.0; k];
    for i in 0..n {
        let (m, s) = if d.is_treated(i) {
            (&m1, &mut s1)
        } else {
            (&m0, &mut s0)
        };
        for j in 0..k {
            dev[j] = y[(i, j)] - m[j];
        }
        for r in 0..k {
            for c in 0..k {
                s[(r, c)] += dev[r] * dev[c];
            }
        }
    }
    let var = s1 / (n1 as f64 * n1 as f64) + s0 / (n0 as f64 * n0 as f64);
    let est = m1.iter().zip(&m0).map(|(a, b)| a - b).collect();
    Ok((est, var, n1, n0))
}

/// Simple difference in means of a scalar outcome.
pub fn sdim(y: &[f64], d: &AssignmentDraw, level: f64) -> Result<EstimateReport> {
    let m = DMatrix::from_column_slice(y.len(), 1, y);
    let (est, var, n1, n0) = sdim_moments(&m, d)?;
    EstimateReport::build(vec!["tau".into()], est, &var, n1, n0, level)
}

/// Difference in means for every column of `y`, with the joint variance
/// estimate.
pub fn sdim_vector(y: &DMatrix<f64>, d: &AssignmentDraw, level: f64) -> Result<EstimateReport> {
    let (est, var, n1, n0) = sdim_moments(y, d)?;
    let labels = (0..est.len()).map(|j| format!("y{j}")).collect();
    EstimateReport::build(labels, est, &var, n1, n0, level)
}

/// Event-study coefficients `β̂_t = τ̂_t - τ̂_0` for every period except the
/// base. The variance estimate is `ŝ` of the differenced outcomes `Y_it - Y_i0`. Coordinates are
/// in column order with the base column skipped; labels are `t=<period>`.
pub fn did_event_study(
    y: &DMatrix<f64>,
    first_period: i32,
    d: &AssignmentDraw,
    level: f64,
) -> Result<EstimateReport> {
    let (n, t) = y.shape();
    let base = usize::try_from(-first_period)
        .ok()
        .filter(|&b| b < t)
        .ok_or_else(|| Error::validation("panel does not contain period 0"))?;
    let cols: Vec<usize> = (0..t).filter(|&c| c != base).collect();
    let (levels, _, _, _) = sdim_moments(y, d)?;
    let est = cols.iter().map(|&c| levels[c] - levels[base]).collect();
    let diff = DMatrix::from_fn(n, cols.len(), |i, j| y[(i, cols[j])] - y[(i, base)]);
    let (_, var, n1, n0) = sdim_moments(&diff, d)?;
    let labels = cols
        .iter()
        .map(|&c| format!("t={}", c as i32 + first_period))
        .collect();
    EstimateReport::build(labels, est, &var, n1, n0, level)
}

/// Two-stage least squares with a binary instrument: the ratio of the
/// reduced form to the first stage, with a delta-method variance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TslsReport {
    pub estimate: f64,
    pub variance_estimate: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub reduced_form: f64,
    pub first_stage: f64,
    /// Joint variance estimate of (reduced form, first stage), row-major.
    pub component_variance: [[f64; 2]; 2],
    pub n1: usize,
    pub n0: usize,
    pub level: f64,
}

pub fn tsls(y: &[f64], d: &[f64], z: &AssignmentDraw, level: f64) -> Result<TslsReport> {
    if y.len() != d.len() {
        return Err(Error::validation("outcome and treatment lengths differ"));
    }
    let n = y.len();
    let m = DMatrix::from_fn(n, 2, |i, j| if j == 0 { y[i] } else { d[i] });
    let (est, var, n1, n0) = sdim_moments(&m, z)?;
    let (rf, fs) = (est[0], est[1]);
    if fs == 0.0 {
        return Err(Error::FirstStageDegenerate);
    }
    let beta = rf / fs;
    let g = [1.0 / fs, -rf / (fs * fs)];
    let mut v = 0.0;
    for r in 0..2 {
        for c in 0..2 {
            v += g[r] * var[(r, c)] * g[c];
        }
    }
    let h = normal_critical_value(level)? * v.max(0.0).sqrt();
    Ok(TslsReport {
        estimate: beta,
        variance_estimate: v,
        ci_lower: beta - h,
        ci_upper: beta + h,
        reduced_form: rf,
        first_stage: fs,
        component_variance: [[var[(0, 0)], var[(0, 1)]], [var[(1, 0)], var[(1, 1)]]],
        n1,
        n0,
        level,
    })
}
