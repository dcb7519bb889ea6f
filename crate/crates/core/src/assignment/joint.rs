//! Exact second moments of linear statistics `Σ_i a_i D_i`.
//!
//! Joint inclusion probabilities of the rejective design have the closed form
//! `π_ij = (o_i π_j - o_j π_i) / (o_i - o_j)` for distinct odds. Within a group
//! of units sharing the same odds they are all equal, and the common value
//! follows from `Σ_{j≠i} π_ij = (k - 1) π_i`.

use nalgebra::DMatrix;

use super::RejectiveDesign;
use crate::error::{Error, Result};

/// Covariance matrix of `(Σ_i a_i^(1) D_i, ..., Σ_i a_i^(L) D_i)`.
pub fn exact_linear_covariance(p: &[f64], n1: usize, forms: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = p.len();
    if let Some(bad) = forms.iter().position(|a| a.len() != n) {
        return Err(Error::validation(format!(
            "linear form {bad} has length {}, expected {n}",
            forms[bad].len()
        )));
    }
    let design = RejectiveDesign::new(p, n1)?;
    let nf = forms.len();
    let mut cov = DMatrix::zeros(nf, nf);
    if design.is_degenerate() {
        return Ok(cov);
    }
    let profile = design.inclusion_probabilities();
    let free = design.free_units();
    let m = free.len();
    let k = design.quota() as f64;
    let odds = design.odds();
    let pi: Vec<f64> = free.iter().map(|&i| profile.pi[i]).collect();
    // a[j * nf + l]: coefficient of form l on free unit j.
    let a: Vec<f64> = (0..m)
        .flat_map(|j| forms.iter().map(move |f| f[free[j]]))
        .collect();

    // Tie groups by exact equality of the odds.
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&x, &y| odds[x].total_cmp(&odds[y]));
    let mut group = vec![0usize; m];
    let mut sizes: Vec<usize> = Vec::new();
    let mut rep: Vec<usize> = Vec::new();
    for (pos, &j) in order.iter().enumerate() {
        if pos == 0 || odds[j] != odds[order[pos - 1]] {
            sizes.push(0);
            rep.push(j);
        }
        let g = sizes.len() - 1;
        group[j] = g;
        sizes[g] += 1;
    }
    let joint = |i: usize, j: usize| (odds[i] * pi[j] - odds[j] * pi[i]) / (odds[i] - odds[j]);
    let within: Vec<f64> = (0..sizes.len())
        .map(|g| {
            if sizes[g] < 2 {
                return 0.0;
            }
            let r = rep[g];
            let outside: f64 = (0..m).filter(|&j| group[j] != g).map(|j| joint(r, j)).sum();
            ((k - 1.0) * pi[r] - outside) / (sizes[g] - 1) as f64
        })
        .collect();

    let mut acc = vec![0.0; nf * nf];
    for i in 0..m {
        let ai = &a[i * nf..(i + 1) * nf];
        let diag = pi[i] * (1.0 - pi[i]);
        for l in 0..nf {
            for r in 0..nf {
                acc[l * nf + r] += diag * ai[l] * ai[r];
            }
        }
        for j in i + 1..m {
            let pij = if group[i] == group[j] {
                within[group[i]]
            } else {
                joint(i, j)
            };
            let c = pij - pi[i] * pi[j];
            let aj = &a[j * nf..(j + 1) * nf];
            for l in 0..nf {
                for r in 0..nf {
                    acc[l * nf + r] += c * (ai[l] * aj[r] + aj[l] * ai[r]);
                }
            }
        }
    }
    for l in 0..nf {
        for r in 0..nf {
            cov[(l, r)] = acc[l * nf + r];
        }
    }
    Ok(cov)
}

/// Variance of `Σ_i a_i D_i`.
pub fn exact_linear_variance(p: &[f64], n1: usize, a: &[f64]) -> Result<f64> {
    Ok(exact_linear_covariance(p, n1, &[a.to_vec()])?[(0, 0)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assignment::exact_randomization_moments;

    fn check(p: &[f64], n1: usize, forms: Vec<Vec<f64>>) {
        let cov = exact_linear_covariance(p, n1, &forms).unwrap();
        let fs = forms.clone();
        let brute = exact_randomization_moments(p, n1, move |d| {
            fs.iter()
                .map(|a| {
                    a.iter()
                        .zip(d.as_slice())
                        .filter(|(_, t)| **t)
                        .map(|(v, _)| v)
                        .sum()
                })
                .collect()
        })
        .unwrap();
        for l in 0..forms.len() {
            for r in 0..forms.len() {
                let (x, y) = (cov[(l, r)], brute.cov[(l, r)]);
                assert!((x - y).abs() < 1e-11, "({l},{r}) {x} vs {y}");
            }
        }
    }

    #[test]
    fn distinct_odds() {
        let p = [0.8, 0.6, 0.4, 0.2, 0.55, 0.9, 0.15];
        check(
            &p,
            3,
            vec![
                vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0],
                vec![0.3, -1.0, 2.5, 0.0, 1.0, -2.0, 0.7],
            ],
        );
    }

    #[test]
    fn tied_odds_and_boundary_units() {
        let p = [0.8, 0.6, 0.8, 0.6, 0.8, 1.0, 0.0, 0.6, 0.3];
        check(
            &p,
            5,
            vec![vec![1.5, -0.5, 2.0, 0.1, 3.0, 9.0, -4.0, 0.4, 1.1]],
        );
    }

    #[test]
    fn uniform_matches_simple_random_sampling() {
        let n = 10;
        let a: Vec<f64> = (0..n).map(|i| (i * i) as f64).collect();
        let v = exact_linear_variance(&vec![0.3; n], 4, &a).unwrap();
        let mean = a.iter().sum::<f64>() / n as f64;
        let s2 = a.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        // Var of the sample total under SRS without replacement.
        let expect = 4.0 * 4.0 * (1.0 - 0.4) * s2 / 4.0;
        assert!((v - expect).abs() < 1e-9 * expect);
    }
}
