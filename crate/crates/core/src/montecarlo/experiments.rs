use nalgebra::DMatrix;

use super::{Experiment, Replicate};
use crate::assignment::{
    exact_linear_covariance, inclusion_probabilities, AssignmentDraw, InclusionProfile,
};
use crate::error::Result;
use crate::estimators::{sdim_moments, tsls};
use crate::population::{FinitePopulation, IVPopulation, PanelPopulation};
use crate::theory::{
    did_theory, theory_report, tsls_estimand, DidTheory, TheoryReport, TslsEstimand,
};

fn replicate(est: Vec<f64>, var: &DMatrix<f64>, z: f64) -> Replicate {
    let v: Vec<f64> = (0..est.len()).map(|j| var[(j, j)]).collect();
    let half: Vec<f64> = v.iter().map(|x| z * x.max(0.0).sqrt()).collect();
    Replicate {
        ci_lower: est.iter().zip(&half).map(|(e, h)| e - h).collect(),
        ci_upper: est.iter().zip(&half).map(|(e, h)| e + h).collect(),
        estimate: est,
        variance_estimate: v,
    }
}

/// Coefficients `a_i = Y_i(1)/N1 + Y_i(0)/N0`: the difference in means is
/// `Σ_i a_i D_i` minus a constant.
fn linear_form(y0: &[f64], y1: &[f64], n1: usize, n0: usize) -> Vec<f64> {
    y1.iter()
        .zip(y0)
        .map(|(a, b)| a / n1 as f64 + b / n0 as f64)
        .collect()
}

/// Difference in means on a cross-sectional population, targeting its
/// randomization mean `att + bias`.
#[derive(Debug, Clone)]
pub struct SdimExperiment {
    pop: FinitePopulation,
    profile: InclusionProfile,
    theory: TheoryReport,
}

impl SdimExperiment {
    pub fn new(pop: FinitePopulation, n1: usize) -> Result<Self> {
        let profile = inclusion_probabilities(pop.p(), n1)?;
        let theory = theory_report(&profile, &pop)?;
        Ok(Self {
            pop,
            profile,
            theory,
        })
    }

    pub fn profile(&self) -> &InclusionProfile {
        &self.profile
    }

    pub fn theory(&self) -> &TheoryReport {
        &self.theory
    }

    /// Exact randomization variance of the estimator, from joint inclusion
    /// probabilities. Quadratic in the population size.
    pub fn exact_variance(&self) -> Result<f64> {
        let a = linear_form(
            self.pop.y0(),
            self.pop.y1(),
            self.profile.n1,
            self.profile.n0,
        );
        Ok(exact_linear_covariance(self.pop.p(), self.profile.n1, &[a])?[(0, 0)])
    }
}

impl Experiment for SdimExperiment {
    fn probabilities(&self) -> &[f64] {
        self.pop.p()
    }

    fn labels(&self) -> Vec<String> {
        vec!["tau".into()]
    }

    fn targets(&self) -> Vec<f64> {
        vec![self.theory.expected_sdim]
    }

    fn evaluate(&self, d: &AssignmentDraw, z: f64) -> Result<Replicate> {
        let y = self.pop.observed(d);
        let m = DMatrix::from_vec(y.len(), 1, y);
        let (est, var, _, _) = sdim_moments(&m, d)?;
        Ok(replicate(est, &var, z))
    }
}

/// Event-study coefficients on a panel, targeting `τ_t + δ_t`.
#[derive(Debug, Clone)]
pub struct DidExperiment {
    panel: PanelPopulation,
    profile: InclusionProfile,
    theory: DidTheory,
    cols: Vec<usize>,
}

impl DidExperiment {
    pub fn new(panel: PanelPopulation, n1: usize) -> Result<Self> {
        let profile = inclusion_probabilities(panel.p(), n1)?;
        let theory = did_theory(&profile, &panel)?;
        let base = panel.base_index();
        let cols = (0..panel.num_periods()).filter(|&c| c != base).collect();
        Ok(Self {
            panel,
            profile,
            theory,
            cols,
        })
    }

    pub fn profile(&self) -> &InclusionProfile {
        &self.profile
    }

    pub fn theory(&self) -> &DidTheory {
        &self.theory
    }

    /// Exact randomization covariance matrix of the coefficients.
    pub fn exact_covariance(&self) -> Result<DMatrix<f64>> {
        let base = self.panel.base_index();
        let (y0, y1) = (self.panel.y0(), self.panel.y1());
        let n = self.panel.n();
        let forms: Vec<Vec<f64>> = self
            .cols
            .iter()
            .map(|&c| {
                let d0: Vec<f64> = (0..n).map(|i| y0[(i, c)] - y0[(i, base)]).collect();
                let d1: Vec<f64> = (0..n).map(|i| y1[(i, c)] - y1[(i, base)]).collect();
                linear_form(&d0, &d1, self.profile.n1, self.profile.n0)
            })
            .collect();
        exact_linear_covariance(self.panel.p(), self.profile.n1, &forms)
    }
}

impl Experiment for DidExperiment {
    fn probabilities(&self) -> &[f64] {
        self.panel.p()
    }

    fn labels(&self) -> Vec<String> {
        self.theory
            .periods
            .iter()
            .map(|t| format!("t={t}"))
            .collect()
    }

    fn targets(&self) -> Vec<f64> {
        self.theory.expected.clone()
    }

    fn evaluate(&self, d: &AssignmentDraw, z: f64) -> Result<Replicate> {
        let y = self.panel.observed(d);
        let base = self.panel.base_index();
        let (levels, _, _, _) = sdim_moments(&y, d)?;
        let est = self
            .cols
            .iter()
            .map(|&c| levels[c] - levels[base])
            .collect();
        let diff = DMatrix::from_fn(y.nrows(), self.cols.len(), |i, j| {
            y[(i, self.cols[j])] - y[(i, base)]
        });
        let (_, var, _, _) = sdim_moments(&diff, d)?;
        Ok(replicate(est, &var, z))
    }
}

/// Two-stage least squares with a rejective instrument, targeting `β_2SLS`.
/// Draws with a zero first stage fail and are excluded.
#[derive(Debug, Clone)]
pub struct TslsExperiment {
    iv: IVPopulation,
    profile: InclusionProfile,
    estimand: TslsEstimand,
}

impl TslsExperiment {
    pub fn new(iv: IVPopulation, n1_z: usize) -> Result<Self> {
        let profile = inclusion_probabilities(iv.pz(), n1_z)?;
        let estimand = tsls_estimand(&profile, &iv)?;
        Ok(Self {
            iv,
            profile,
            estimand,
        })
    }

    pub fn profile(&self) -> &InclusionProfile {
        &self.profile
    }

    pub fn estimand(&self) -> &TslsEstimand {
        &self.estimand
    }
}

impl Experiment for TslsExperiment {
    fn probabilities(&self) -> &[f64] {
        self.iv.pz()
    }

    fn labels(&self) -> Vec<String> {
        vec!["beta_2sls".into()]
    }

    fn targets(&self) -> Vec<f64> {
        vec![self.estimand.beta_2sls]
    }

    fn evaluate(&self, z: &AssignmentDraw, crit: f64) -> Result<Replicate> {
        let (d, y) = self.iv.observed(z);
        // The level only feeds the interval, which is rebuilt from `crit`.
        let r = tsls(&y, &d, z, 0.95)?;
        let h = crit * r.variance_estimate.max(0.0).sqrt();
        Ok(Replicate {
            estimate: vec![r.estimate],
            variance_estimate: vec![r.variance_estimate],
            ci_lower: vec![r.estimate - h],
            ci_upper: vec![r.estimate + h],
        })
    }
}
