//! Finite populations with fixed potential outcomes.
//!
//! Nothing here is random once constructed: potential outcomes and
//! assignment probabilities are set at construction and only read afterwards.
//! Derived populations (orthogonalized or tilted copies) are new values.

mod generate;

pub use generate::{
    make_iv_population, make_panel_population, make_population, GeneratorSpec, IvGeneratorSpec,
    OutcomeLaw, PanelGeneratorSpec, ProbabilityLink,
};

use nalgebra::DMatrix;

use crate::assignment::AssignmentDraw;
use crate::error::{Error, Result};
use crate::moments::{cov1, var1};

fn check_probabilities(p: &[f64]) -> Result<()> {
    match p.iter().position(|v| !(0.0..=1.0).contains(v)) {
        Some(unit) => Err(Error::ProbabilityOutOfRange {
            unit,
            value: p[unit],
        }),
        None => Ok(()),
    }
}

fn check_finite(name: &str, x: &[f64]) -> Result<()> {
    match x.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::validation(format!("{name}[{i}] is not finite"))),
        None => Ok(()),
    }
}

/// Cross-sectional population: treatment probabilities and both potential
/// outcomes for every unit.
#[derive(Debug, Clone, PartialEq)]
pub struct FinitePopulation {
    p: Vec<f64>,
    y0: Vec<f64>,
    y1: Vec<f64>,
}

impl FinitePopulation {
    pub fn new(p: Vec<f64>, y0: Vec<f64>, y1: Vec<f64>) -> Result<Self> {
        let n = p.len();
        if y0.len() != n || y1.len() != n {
            return Err(Error::validation(format!(
                "length mismatch: p has {n}, y0 has {}, y1 has {}",
                y0.len(),
                y1.len()
            )));
        }
        if n < 2 {
            return Err(Error::validation("a population needs at least two units"));
        }
        check_probabilities(&p)?;
        check_finite("y0", &y0)?;
        check_finite("y1", &y1)?;
        Ok(Self { p, y0, y1 })
    }

    pub fn n(&self) -> usize {
        self.p.len()
    }

    pub fn p(&self) -> &[f64] {
        &self.p
    }

    pub fn y0(&self) -> &[f64] {
        &self.y0
    }

    pub fn y1(&self) -> &[f64] {
        &self.y1
    }

    /// Unit-level effects `Y_i(1) - Y_i(0)`.
    pub fn tau(&self) -> Vec<f64> {
        self.y1.iter().zip(&self.y0).map(|(a, b)| a - b).collect()
    }

    /// Observed outcome `D_i Y_i(1) + (1 - D_i) Y_i(0)` under an assignment.
    pub fn observed(&self, d: &AssignmentDraw) -> Vec<f64> {
        d.as_slice()
            .iter()
            .zip(self.y0.iter().zip(&self.y1))
            .map(|(&di, (&y0, &y1))| if di { y1 } else { y0 })
            .collect()
    }
}

/// Panel population over periods `first_period ..= first_period + T - 1`,
/// with treatment switching on at period 1. Outcome matrices are `n x T`.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelPopulation {
    p: Vec<f64>,
    y0: DMatrix<f64>,
    y1: DMatrix<f64>,
    first_period: i32,
}

impl PanelPopulation {
    pub fn new(p: Vec<f64>, y0: DMatrix<f64>, y1: DMatrix<f64>, first_period: i32) -> Result<Self> {
        let n = p.len();
        if y0.shape() != y1.shape() || y0.nrows() != n {
            return Err(Error::validation(format!(
                "panel shape mismatch: p has {n} units, y0 is {:?}, y1 is {:?}",
                y0.shape(),
                y1.shape()
            )));
        }
        if n < 2 {
            return Err(Error::validation("a population needs at least two units"));
        }
        let t = y0.ncols() as i32;
        if first_period > 0 || first_period + t - 1 < 0 {
            return Err(Error::validation("panel must contain base period t = 0"));
        }
        if t < 2 {
            return Err(Error::validation("panel needs at least two periods"));
        }
        check_probabilities(&p)?;
        check_finite("y0", y0.as_slice())?;
        check_finite("y1", y1.as_slice())?;
        for (col, period) in (first_period..first_period + t).enumerate() {
            if period >= 1 {
                break;
            }
            for i in 0..n {
                if y1[(i, col)] != y0[(i, col)] {
                    return Err(Error::Row {
                        row: i + 1,
                        message: format!(
                            "no-anticipation violated at period {period}: y1 = {} differs from y0 = {}",
                            y1[(i, col)],
                            y0[(i, col)]
                        ),
                    });
                }
            }
        }
        Ok(Self {
            p,
            y0,
            y1,
            first_period,
        })
    }

    pub fn n(&self) -> usize {
        self.p.len()
    }

    pub fn p(&self) -> &[f64] {
        &self.p
    }

    pub fn y0(&self) -> &DMatrix<f64> {
        &self.y0
    }

    pub fn y1(&self) -> &DMatrix<f64> {
        &self.y1
    }

    pub fn periods(&self) -> impl Iterator<Item = i32> + '_ {
        self.first_period..self.first_period + self.y0.ncols() as i32
    }

    pub fn first_period(&self) -> i32 {
        self.first_period
    }

    pub fn num_periods(&self) -> usize {
        self.y0.ncols()
    }

    /// Column index of period 0.
    pub fn base_index(&self) -> usize {
        (-self.first_period) as usize
    }

    pub fn observed(&self, d: &AssignmentDraw) -> DMatrix<f64> {
        let mut out = self.y0.clone();
        for (i, &di) in d.as_slice().iter().enumerate() {
            if di {
                out.set_row(i, &self.y1.row(i));
            }
        }
        out
    }
}

/// Instrumental-variables population: instrument probabilities, potential
/// treatments `D_i(z)` and potential outcomes `Y_i(d)`. The outcome depends
/// on the instrument only through treatment.
#[derive(Debug, Clone, PartialEq)]
pub struct IVPopulation {
    pz: Vec<f64>,
    d0: Vec<bool>,
    d1: Vec<bool>,
    y0: Vec<f64>,
    y1: Vec<f64>,
}

impl IVPopulation {
    pub fn new(
        pz: Vec<f64>,
        d0: Vec<bool>,
        d1: Vec<bool>,
        y0: Vec<f64>,
        y1: Vec<f64>,
    ) -> Result<Self> {
        let n = pz.len();
        if [d0.len(), d1.len(), y0.len(), y1.len()]
            .iter()
            .any(|&l| l != n)
        {
            return Err(Error::validation("IV population columns differ in length"));
        }
        if n < 2 {
            return Err(Error::validation("a population needs at least two units"));
        }
        check_probabilities(&pz)?;
        check_finite("y0", &y0)?;
        check_finite("y1", &y1)?;
        Ok(Self { pz, d0, d1, y0, y1 })
    }

    pub fn n(&self) -> usize {
        self.pz.len()
    }

    pub fn pz(&self) -> &[f64] {
        &self.pz
    }

    pub fn d0(&self) -> &[bool] {
        &self.d0
    }

    pub fn d1(&self) -> &[bool] {
        &self.d1
    }

    pub fn y0(&self) -> &[f64] {
        &self.y0
    }

    pub fn y1(&self) -> &[f64] {
        &self.y1
    }

    pub fn defiers(&self) -> Vec<usize> {
        (0..self.n())
            .filter(|&i| self.d0[i] && !self.d1[i])
            .collect()
    }

    pub fn ensure_monotone(&self) -> Result<()> {
        let defiers = self.defiers();
        if defiers.is_empty() {
            Ok(())
        } else {
            Err(Error::MonotonicityViolated(defiers))
        }
    }

    pub fn is_complier(&self, i: usize) -> bool {
        self.d1[i] && !self.d0[i]
    }

    /// `Y_i(D_i(0))`
    pub fn y_at_d0(&self) -> Vec<f64> {
        (0..self.n())
            .map(|i| if self.d0[i] { self.y1[i] } else { self.y0[i] })
            .collect()
    }

    /// Observed `(D_i, Y_i)` given an instrument draw.
    pub fn observed(&self, z: &AssignmentDraw) -> (Vec<f64>, Vec<f64>) {
        let mut d = Vec::with_capacity(self.n());
        let mut y = Vec::with_capacity(self.n());
        for (i, &zi) in z.as_slice().iter().enumerate() {
            let di = if zi { self.d1[i] } else { self.d0[i] };
            d.push(if di { 1.0 } else { 0.0 });
            y.push(if di { self.y1[i] } else { self.y0[i] });
        }
        (d, y)
    }
}

/// Shift that moves `Cov_1(pi, x)` to `target`: `((target - cov)/var) (pi - mean pi)`.
fn covariance_shift(pi: &[f64], x: &[f64], target: f64) -> Result<Vec<f64>> {
    if pi.len() != x.len() {
        return Err(Error::validation(
            "inclusion profile does not match population size",
        ));
    }
    let var = var1(pi)?;
    let mean = pi.iter().sum::<f64>() / pi.len() as f64;
    let scale = mean.abs().max(1.0);
    if var <= (1e-14 * scale).powi(2) {
        return Err(Error::AlreadyUniform);
    }
    let slope = (target - cov1(pi, x)?) / var;
    Ok(pi.iter().map(|p| slope * (p - mean)).collect())
}

/// Returns a copy whose untreated outcomes have zero unit-weight covariance
/// with `pi`. Both potential outcomes move by the same shift, so unit
/// effects are unchanged.
pub fn orthogonalize_outcomes(pop: &FinitePopulation, pi: &[f64]) -> Result<FinitePopulation> {
    tilt_outcomes(pop, pi, 0.0)
}

/// Like [`orthogonalize_outcomes`] but lands `Cov_1(pi, Y(0))` on `target`.
pub fn tilt_outcomes(pop: &FinitePopulation, pi: &[f64], target: f64) -> Result<FinitePopulation> {
    let mut y0 = pop.y0.clone();
    let mut y1 = pop.y1.clone();
    // A second pass removes the rounding residue of the first.
    for _ in 0..2 {
        let h = covariance_shift(pi, &y0, target)?;
        for i in 0..y0.len() {
            y0[i] += h[i];
            y1[i] += h[i];
        }
    }
    FinitePopulation::new(pop.p.clone(), y0, y1)
}

/// Sets `Cov_1(pi, Y_t(0) - Y_0(0))` to `targets[t]` for each period,
/// shifting both potential outcomes of that period. `targets` is indexed by
/// column; the base-period entry is ignored.
pub fn tilt_trends(
    panel: &PanelPopulation,
    pi: &[f64],
    targets: &[f64],
) -> Result<PanelPopulation> {
    if targets.len() != panel.num_periods() {
        return Err(Error::validation(
            "one covariance target per period required",
        ));
    }
    let base = panel.base_index();
    let mut y0 = panel.y0.clone();
    let mut y1 = panel.y1.clone();
    let base_col: Vec<f64> = y0.column(base).iter().copied().collect();
    for col in (0..panel.num_periods()).filter(|&c| c != base) {
        for _ in 0..2 {
            let trend: Vec<f64> = (0..panel.n()).map(|i| y0[(i, col)] - base_col[i]).collect();
            let h = covariance_shift(pi, &trend, targets[col])?;
            for i in 0..panel.n() {
                y0[(i, col)] += h[i];
                y1[(i, col)] += h[i];
            }
        }
    }
    PanelPopulation::new(panel.p.clone(), y0, y1, panel.first_period)
}

/// Parallel trends by construction: zero covariance between `pi` and every
/// untreated trend.
pub fn orthogonalize_trends(panel: &PanelPopulation, pi: &[f64]) -> Result<PanelPopulation> {
    tilt_trends(panel, pi, &vec![0.0; panel.num_periods()])
}

/// Zeroes `Cov_1(pi_z, Y(D(0)))` by shifting both potential outcomes.
/// `Cov_1(pi_z, D(0))` is untouched; binary treatments cannot be shifted.
pub fn orthogonalize_iv_outcomes(iv: &IVPopulation, pi_z: &[f64]) -> Result<IVPopulation> {
    let mut y0 = iv.y0.clone();
    let mut y1 = iv.y1.clone();
    for _ in 0..2 {
        let cur = IVPopulation {
            y0: y0.clone(),
            y1: y1.clone(),
            ..iv.clone()
        };
        let h = covariance_shift(pi_z, &cur.y_at_d0(), 0.0)?;
        for i in 0..y0.len() {
            y0[i] += h[i];
            y1[i] += h[i];
        }
    }
    IVPopulation::new(iv.pz.clone(), iv.d0.clone(), iv.d1.clone(), y0, y1)
}
