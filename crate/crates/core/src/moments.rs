//! Weighted finite-population moments.
//!
//! Every operator here normalizes by the total weight `Σw` with no
//! degrees-of-freedom correction: with unit weights the variance of `(0, 2)`
//! is 1, not 2. Callers that want the usual `N - 1` divisor must rescale.
//!
//! All computations are two-pass (mean first, then centered sums).

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};

/// Neumaier-compensated sum; the error does not grow with the length.
pub fn compensated_sum(x: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut carry) = (0.0f64, 0.0f64);
    for v in x {
        let t = sum + v;
        carry += if sum.abs() >= v.abs() {
            (sum - t) + v
        } else {
            (v - t) + sum
        };
        sum = t;
    }
    sum + carry
}

fn check(w: &[f64], len: usize) -> Result<f64> {
    if w.len() != len {
        return Err(Error::validation(format!(
            "weight vector has length {} but data has length {}",
            w.len(),
            len
        )));
    }
    if let Some(i) = w.iter().position(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::validation(format!(
            "weight {i} is negative or not finite ({})",
            w[i]
        )));
    }
    let total: f64 = w.iter().sum();
    if total <= 0.0 {
        return Err(Error::ZeroWeight);
    }
    Ok(total)
}

/// `(1/Σw) Σ w_i x_i`
pub fn weighted_mean(w: &[f64], x: &[f64]) -> Result<f64> {
    let total = check(w, x.len())?;
    Ok(w.iter().zip(x).map(|(w, x)| w * x).sum::<f64>() / total)
}

pub fn weighted_variance(w: &[f64], x: &[f64]) -> Result<f64> {
    weighted_covariance(w, x, x)
}

/// `(1/Σw) Σ w_i (x_i - E_w x)(y_i - E_w y)`
pub fn weighted_covariance(w: &[f64], x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::validation("covariance arguments differ in length"));
    }
    let total = check(w, x.len())?;
    let mx = w.iter().zip(x).map(|(w, x)| w * x).sum::<f64>() / total;
    let my = w.iter().zip(y).map(|(w, y)| w * y).sum::<f64>() / total;
    let s: f64 = w
        .iter()
        .zip(x.iter().zip(y))
        .map(|(w, (x, y))| w * (x - mx) * (y - my))
        .sum();
    Ok(s / total)
}

/// Unit-weight covariance, `Cov_1`.
pub fn cov1(x: &[f64], y: &[f64]) -> Result<f64> {
    weighted_covariance(&vec![1.0; x.len()], x, y)
}

/// Unit-weight variance, `Var_1`.
pub fn var1(x: &[f64]) -> Result<f64> {
    cov1(x, x)
}

/// Weighted mean of the rows of `x` (units are rows).
pub fn weighted_mean_rows(w: &[f64], x: &DMatrix<f64>) -> Result<DVector<f64>> {
    let total = check(w, x.nrows())?;
    let mut mean = DVector::zeros(x.ncols());
    for (i, wi) in w.iter().enumerate() {
        if *wi != 0.0 {
            mean += x.row(i).transpose() * *wi;
        }
    }
    Ok(mean / total)
}

/// `(1/Σw) Σ w_i (x_i - E_w x)(y_i - E_w y)'` for row-vector observations.
pub fn weighted_covariance_matrix(
    w: &[f64],
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    if x.nrows() != y.nrows() {
        return Err(Error::validation(
            "covariance arguments differ in row count",
        ));
    }
    let total = check(w, x.nrows())?;
    let mx = weighted_mean_rows(w, x)?;
    let my = weighted_mean_rows(w, y)?;
    let mut acc = DMatrix::zeros(x.ncols(), y.ncols());
    for (i, wi) in w.iter().enumerate() {
        if *wi == 0.0 {
            continue;
        }
        let dx = x.row(i).transpose() - &mx;
        let dy = y.row(i).transpose() - &my;
        acc += (dx * dy.transpose()) * *wi;
    }
    Ok(acc / total)
}

pub fn weighted_variance_matrix(w: &[f64], x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let v = weighted_covariance_matrix(w, x, x)?;
    // Exact symmetry; accumulation order can leave the two triangles 1 ulp apart.
    Ok((&v + v.transpose()) * 0.5)
}

/// Mean, variance and total weight of one attribute under one weighting.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightedMoments {
    pub mean: f64,
    pub var: f64,
    pub weights_total: f64,
}

impl WeightedMoments {
    pub fn new(w: &[f64], x: &[f64]) -> Result<Self> {
        Ok(Self {
            mean: weighted_mean(w, x)?,
            var: weighted_variance(w, x)?,
            weights_total: w.iter().sum(),
        })
    }
}
