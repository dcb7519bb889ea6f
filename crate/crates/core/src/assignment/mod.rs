//! Poisson rejective assignment.
//!
//! Units are independently Bernoulli(`p_i`), conditioned on exactly `n1`
//! treated. This module computes the conditional inclusion probabilities,
//! samples from the conditional law exactly, and enumerates it for small
//! populations.
//!
//! Units with `p_i = 1` are always treated and units with `p_i = 0` never
//! are; they are peeled off before any dynamic programming, leaving a
//! reduced problem over the *free* units with quota `k = n1 - #forced`.
//!
//! Over the free units the design is invariant to rescaling the odds
//! `w_i = p_i / (1 - p_i)` by a common constant. [`RejectiveDesign`] picks the
//! constant that makes the tilted probabilities `q_i` sum to `k`; under `q` the
//! count of treated units is a Poisson-binomial variable centered on `k`, and
//! all conditional quantities are ratios of its (banded) point masses.

mod banded;
mod enumerate;
mod esp;
mod joint;
mod sampler;

pub use enumerate::{
    enumerate_assignments, exact_randomization_moments, ExactMoments, ENUMERATION_LIMIT,
};
pub use esp::{esp_suffix_table, EspTable};
pub use joint::{exact_linear_covariance, exact_linear_variance};
pub use sampler::{draw_assignment, draw_assignment_rejection, Sampler};

use serde::Serialize;

use crate::error::{Error, Result};

/// A realized assignment with exactly `n1` treated units.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AssignmentDraw {
    d: Vec<bool>,
}

impl AssignmentDraw {
    pub fn new(d: Vec<bool>) -> Self {
        Self { d }
    }

    pub fn from_treated(n: usize, treated: &[usize]) -> Self {
        let mut d = vec![false; n];
        for &i in treated {
            d[i] = true;
        }
        Self { d }
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.d
    }

    pub fn len(&self) -> usize {
        self.d.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d.is_empty()
    }

    pub fn n1(&self) -> usize {
        self.d.iter().filter(|x| **x).count()
    }

    pub fn is_treated(&self, i: usize) -> bool {
        self.d[i]
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.d.iter().map(|&x| if x { 1.0 } else { 0.0 }).collect()
    }
}

/// Conditional inclusion probabilities under the rejective law.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InclusionProfile {
    pub pi: Vec<f64>,
    /// `pi_i (1 - pi_i)`, the variance of each assignment indicator.
    pub pi_tilde: Vec<f64>,
    pub n1: usize,
    pub n0: usize,
    /// Relative disagreement between the two routes to the normalizing
    /// constant `P(S = k)`: the direct forward pass and `Σ_i u_i / k`.
    pub normalization_residual: f64,
}

impl InclusionProfile {
    /// Wraps an externally supplied probability vector.
    pub fn from_pi(pi: Vec<f64>, n1: usize) -> Self {
        let n0 = pi.len() - n1;
        let pi_tilde = pi.iter().map(|p| p * (1.0 - p)).collect();
        Self {
            pi,
            pi_tilde,
            n1,
            n0,
            normalization_residual: 0.0,
        }
    }

    pub fn n(&self) -> usize {
        self.pi.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum UnitRole {
    Forced,
    Excluded,
    Free,
}

/// The reduced problem after peeling off units with `p_i` in `{0, 1}`.
#[derive(Debug, Clone)]
pub struct RejectiveDesign {
    n: usize,
    n1: usize,
    roles: Vec<UnitRole>,
    /// Population indices of the free units, in order.
    free: Vec<usize>,
    /// Quota among free units.
    k: usize,
    /// Tilted probabilities of the free units; `Σ q = k`.
    q: Vec<f64>,
}

fn logit(p: f64) -> f64 {
    p.ln() - (-p).ln_1p()
}

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Solves `Σ logistic(l_j + θ) = k` for θ by safeguarded Newton.
fn solve_tilt(logits: &[f64], k: usize) -> f64 {
    let m = logits.len() as f64;
    let kf = k as f64;
    let target = logit(kf / m);
    let (lmin, lmax) = logits
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &l| {
            (a.min(l), b.max(l))
        });
    let mut lo = target - lmax;
    let mut hi = target - lmin;
    let mut theta = target - logits.iter().sum::<f64>() / m;
    for _ in 0..200 {
        let (f, df) = logits.iter().fold((-kf, 0.0), |(f, df), &l| {
            let q = logistic(l + theta);
            (f + q, df + q * (1.0 - q))
        });
        if f.abs() <= 1e-13 * kf.max(1.0) {
            break;
        }
        if f > 0.0 {
            hi = theta;
        } else {
            lo = theta;
        }
        let step = theta - f / df;
        theta = if df > 0.0 && step > lo && step < hi {
            step
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo < 1e-15 * (1.0 + theta.abs()) {
            break;
        }
    }
    theta
}

impl RejectiveDesign {
    pub fn new(p: &[f64], n1: usize) -> Result<Self> {
        let n = p.len();
        if let Some(unit) = p.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::ProbabilityOutOfRange {
                unit,
                value: p[unit],
            });
        }
        let roles: Vec<UnitRole> = p
            .iter()
            .map(|&v| {
                if v == 1.0 {
                    UnitRole::Forced
                } else if v == 0.0 {
                    UnitRole::Excluded
                } else {
                    UnitRole::Free
                }
            })
            .collect();
        let forced = roles.iter().filter(|r| **r == UnitRole::Forced).count();
        let positive = roles.iter().filter(|r| **r != UnitRole::Excluded).count();
        if n1 > n || forced > n1 || positive < n1 {
            return Err(Error::Infeasible {
                n1,
                forced,
                positive,
            });
        }
        let free: Vec<usize> = (0..n).filter(|&i| roles[i] == UnitRole::Free).collect();
        let k = n1 - forced;
        let q = if k == 0 || k == free.len() {
            vec![if k == 0 { 0.0 } else { 1.0 }; free.len()]
        } else {
            let logits: Vec<f64> = free.iter().map(|&i| logit(p[i])).collect();
            let theta = solve_tilt(&logits, k);
            logits.iter().map(|l| logistic(l + theta)).collect()
        };
        Ok(Self {
            n,
            n1,
            roles,
            free,
            k,
            q,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    pub fn free_units(&self) -> &[usize] {
        &self.free
    }

    pub fn quota(&self) -> usize {
        self.k
    }

    pub fn tilted(&self) -> &[f64] {
        &self.q
    }

    pub(crate) fn role(&self, i: usize) -> UnitRole {
        self.roles[i]
    }

    /// True when the free units are all in or all out, so nothing is random.
    pub fn is_degenerate(&self) -> bool {
        self.k == 0 || self.k == self.free.len()
    }

    /// Odds of the tilted probabilities; a common rescaling of `p/(1-p)`.
    pub(crate) fn odds(&self) -> Vec<f64> {
        self.q.iter().map(|q| q / (1.0 - q)).collect()
    }

    pub fn inclusion_probabilities(&self) -> InclusionProfile {
        let mut pi: Vec<f64> = self
            .roles
            .iter()
            .map(|r| if *r == UnitRole::Forced { 1.0 } else { 0.0 })
            .collect();
        let mut residual = 0.0;
        if self.is_degenerate() {
            let fill = if self.k == 0 { 0.0 } else { 1.0 };
            for &i in &self.free {
                pi[i] = fill;
            }
        } else {
            let out = banded::inclusion(&self.q, self.k);
            residual = out.normalization_residual;
            for (&i, v) in self.free.iter().zip(out.pi) {
                pi[i] = v;
            }
        }
        let mut profile = InclusionProfile::from_pi(pi, self.n1);
        profile.normalization_residual = residual;
        profile
    }
}

/// Conditional inclusion probabilities `P(D_i = 1 | Σ D = n1)`.
pub fn inclusion_probabilities(p: &[f64], n1: usize) -> Result<InclusionProfile> {
    Ok(RejectiveDesign::new(p, n1)?.inclusion_probabilities())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tilt_hits_quota() {
        let p = [0.8, 0.6, 0.4, 0.2, 0.05, 0.99];
        for k in 1..6 {
            let d = RejectiveDesign::new(&p, k).unwrap();
            let s: f64 = d.tilted().iter().sum();
            assert!((s - k as f64).abs() < 1e-11, "k={k} sum={s}");
        }
    }

    #[test]
    fn uniform_probabilities_are_exchangeable() {
        let prof = inclusion_probabilities(&[0.5; 4], 2).unwrap();
        for v in &prof.pi {
            assert!((v - 0.5).abs() < 1e-14);
        }
    }

    #[test]
    fn reference_inclusion_probabilities() {
        let prof = inclusion_probabilities(&[0.8, 0.6, 0.4, 0.2], 2).unwrap();
        let expect = [0.86245, 0.65799, 0.34201, 0.13755];
        for (a, b) in prof.pi.iter().zip(expect) {
            assert!((a - b).abs() < 5e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn forced_unit_exhausts_quota() {
        let prof = inclusion_probabilities(&[1.0, 0.3, 0.3], 1).unwrap();
        assert_eq!(prof.pi, vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn excluded_units_never_treated() {
        let prof = inclusion_probabilities(&[0.0, 0.3, 0.6, 0.9], 2).unwrap();
        assert_eq!(prof.pi[0], 0.0);
        assert!((prof.pi.iter().sum::<f64>() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn infeasible_designs_report_counts() {
        let err = inclusion_probabilities(&[1.0, 1.0, 0.5], 1).unwrap_err();
        assert!(matches!(
            err,
            Error::Infeasible {
                n1: 1,
                forced: 2,
                positive: 3
            }
        ));
        let err = inclusion_probabilities(&[0.0, 0.0, 0.5], 2).unwrap_err();
        assert!(matches!(err, Error::Infeasible { positive: 1, .. }));
    }
}
