//! Replication over the randomization distribution.
//!
//! Replication `r` draws its assignment from a ChaCha8 stream seeded with the
//! master seed and positioned at stream `r`, so every replication's draw is a
//! function of `(master_seed, r)` alone. Replications run on the current
//! rayon pool and are aggregated in index order, so results do not depend on
//! the thread count.

mod experiments;

pub use experiments::{DidExperiment, SdimExperiment, TslsExperiment};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::assignment::{AssignmentDraw, Sampler};
use crate::error::{Error, Result};

/// One replication's output for every coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct Replicate {
    pub estimate: Vec<f64>,
    pub variance_estimate: Vec<f64>,
    pub ci_lower: Vec<f64>,
    pub ci_upper: Vec<f64>,
}

/// An estimator paired with the population it is applied to.
pub trait Experiment: Sync {
    /// Probabilities driving the assignment (or instrument) draws.
    fn probabilities(&self) -> &[f64];
    fn labels(&self) -> Vec<String>;
    /// Analytic randomization mean of each coordinate.
    fn targets(&self) -> Vec<f64>;
    /// Runs the estimator on one draw. Errors exclude the replication.
    fn evaluate(&self, d: &AssignmentDraw, critical_value: f64) -> Result<Replicate>;
}

/// The assignment stream for replication `rep`.
pub fn replication_rng(master_seed: u64, rep: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(rep);
    rng
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub replications: usize,
    pub master_seed: u64,
    pub level: f64,
    /// Variances used to standardize estimates for the normality check,
    /// one per coordinate. Defaults to the empirical variance.
    pub reference_variance: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoordinateSummary {
    pub label: String,
    pub target: f64,
    pub empirical_mean: f64,
    pub empirical_variance: f64,
    /// `sqrt(empirical_variance / R)`
    pub mc_standard_error: f64,
    pub coverage: f64,
    pub mean_variance_estimate: f64,
    /// `mean_variance_estimate / empirical_variance`; `None` when the
    /// estimator did not vary.
    pub conservativeness_ratio: Option<f64>,
    /// Kolmogorov-Smirnov distance of the standardized estimates from N(0, 1);
    /// `None` below 100 replications or with zero variance.
    pub normality_stat: Option<f64>,
    pub standardized_by: &'static str,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationSummary {
    pub replications: usize,
    /// Replications where the estimator failed and which are left out of
    /// every statistic.
    pub excluded: usize,
    pub seed: u64,
    pub n1: usize,
    pub level: f64,
    pub coordinates: Vec<CoordinateSummary>,
}

impl SimulationSummary {
    pub fn coordinate(&self, label: &str) -> Option<&CoordinateSummary> {
        self.coordinates.iter().find(|c| c.label == label)
    }
}

/// Sup-distance between the empirical CDF of `standardized` and the
/// standard normal CDF.
pub fn normality_diagnostic(standardized: &[f64]) -> Result<f64> {
    if standardized.len() < 100 {
        return Err(Error::validation(format!(
            "normality diagnostic needs at least 100 values, got {}",
            standardized.len()
        )));
    }
    if standardized.iter().any(|v| v.is_nan()) {
        return Err(Error::validation("standardized values contain NaN"));
    }
    let mut x = standardized.to_vec();
    x.sort_by(f64::total_cmp);
    let std = Normal::new(0.0, 1.0).expect("standard normal");
    let n = x.len() as f64;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < x.len() {
        // Ties move the empirical CDF in one jump.
        let mut j = i;
        while j + 1 < x.len() && x[j + 1] == x[i] {
            j += 1;
        }
        let f = std.cdf(x[i]);
        d = d.max(f - i as f64 / n).max((j + 1) as f64 / n - f);
        i = j + 1;
    }
    Ok(d)
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = if x.len() > 1 {
        x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (m, v)
}

/// Runs `R` replications of `experiment` with `n1` treated units per draw.
pub fn run_replications<E: Experiment + ?Sized>(
    experiment: &E,
    n1: usize,
    options: &RunOptions,
) -> Result<SimulationSummary> {
    let r = options.replications;
    if r < 2 {
        return Err(Error::validation(format!(
            "at least 2 replications are required, got {r}"
        )));
    }
    let z = crate::estimators::normal_critical_value(options.level)?;
    let labels = experiment.labels();
    let targets = experiment.targets();
    let dim = labels.len();
    if let Some(rv) = &options.reference_variance {
        if rv.len() != dim {
            return Err(Error::validation(
                "one reference variance per coordinate required",
            ));
        }
    }
    let sampler = Sampler::new(experiment.probabilities(), n1)?;

    let results: Vec<Option<Replicate>> = (0..r as u64)
        .into_par_iter()
        .map(|rep| {
            let mut rng = replication_rng(options.master_seed, rep);
            let d = sampler.draw(&mut rng);
            experiment.evaluate(&d, z).ok()
        })
        .collect();
    let kept: Vec<&Replicate> = results.iter().flatten().collect();
    let excluded = r - kept.len();
    if kept.len() < 2 {
        return Err(Error::validation(format!(
            "only {} of {r} replications produced an estimate",
            kept.len()
        )));
    }

    let mut coordinates = Vec::with_capacity(dim);
    for j in 0..dim {
        let est: Vec<f64> = kept.iter().map(|k| k.estimate[j]).collect();
        let (mean, var) = mean_var(&est);
        let mean_v = kept.iter().map(|k| k.variance_estimate[j]).sum::<f64>() / kept.len() as f64;
        let covered = kept
            .iter()
            .filter(|k| k.ci_lower[j] <= targets[j] && targets[j] <= k.ci_upper[j])
            .count();
        let (scale, by) = match &options.reference_variance {
            Some(rv) => (rv[j], "reference"),
            None => (var, "empirical"),
        };
        let normality_stat = if scale > 0.0 && est.len() >= 100 {
            let sd = scale.sqrt();
            let standardized: Vec<f64> = est.iter().map(|e| (e - targets[j]) / sd).collect();
            Some(normality_diagnostic(&standardized)?)
        } else {
            None
        };
        coordinates.push(CoordinateSummary {
            label: labels[j].clone(),
            target: targets[j],
            empirical_mean: mean,
            empirical_variance: var,
            mc_standard_error: (var / kept.len() as f64).sqrt(),
            coverage: covered as f64 / kept.len() as f64,
            mean_variance_estimate: mean_v,
            conservativeness_ratio: (var > 0.0).then(|| mean_v / var),
            normality_stat,
            standardized_by: by,
        });
    }
    Ok(SimulationSummary {
        replications: r,
        excluded,
        seed: options.master_seed,
        n1,
        level: options.level,
        coordinates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assignment::inclusion_probabilities;
    use crate::population::{orthogonalize_outcomes, FinitePopulation};
    use crate::theory::{att, sdim_bias};

    #[test]
    fn quantile_grid_is_close_to_normal() {
        let std = Normal::new(0.0, 1.0).unwrap();
        let n = 1000;
        let grid: Vec<f64> = (0..n)
            .map(|i| std.inverse_cdf((i as f64 + 0.5) / n as f64))
            .collect();
        assert!(normality_diagnostic(&grid).unwrap() < 0.01);
    }

    #[test]
    fn point_mass_at_zero() {
        let d = normality_diagnostic(&[0.0; 200]).unwrap();
        assert!((d - 0.5).abs() < 1e-15);
    }

    #[test]
    fn short_input_rejected() {
        assert!(normality_diagnostic(&[0.0; 99]).is_err());
    }

    fn population(n: usize) -> FinitePopulation {
        let p: Vec<f64> = (0..n).map(|i| [0.8, 0.6, 0.4, 0.2][i % 4]).collect();
        let y0: Vec<f64> = (0..n)
            .map(|i| (i % 7) as f64 + 0.5 * (i % 3) as f64)
            .collect();
        let y1: Vec<f64> = y0
            .iter()
            .enumerate()
            .map(|(i, v)| v + 1.0 + (i % 5) as f64 * 0.2)
            .collect();
        FinitePopulation::new(p, y0, y1).unwrap()
    }

    #[test]
    fn deterministic_and_thread_independent() {
        let pop = population(40);
        let exp = SdimExperiment::new(pop, 20).unwrap();
        let opts = RunOptions {
            replications: 500,
            master_seed: 11,
            level: 0.95,
            reference_variance: None,
        };
        let a = run_replications(&exp, 20, &opts).unwrap();
        let b = rayon::ThreadPoolBuilder::new()
            .num_threads(3)
            .build()
            .unwrap()
            .install(|| run_replications(&exp, 20, &opts).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn constant_outcomes() {
        let pop = FinitePopulation::new(vec![0.3; 10], vec![2.0; 10], vec![2.0; 10]).unwrap();
        let exp = SdimExperiment::new(pop, 4).unwrap();
        let opts = RunOptions {
            replications: 200,
            master_seed: 1,
            level: 0.95,
            reference_variance: None,
        };
        let s = run_replications(&exp, 4, &opts).unwrap();
        let c = &s.coordinates[0];
        assert_eq!(c.empirical_variance, 0.0);
        assert_eq!(c.coverage, 1.0);
        assert_eq!(c.conservativeness_ratio, None);
    }

    #[test]
    fn too_few_replications() {
        let exp = SdimExperiment::new(population(8), 4).unwrap();
        let opts = RunOptions {
            replications: 0,
            master_seed: 1,
            level: 0.95,
            reference_variance: None,
        };
        assert!(matches!(
            run_replications(&exp, 4, &opts),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn orthogonalized_mean_within_four_standard_errors() {
        let pop = population(200);
        let prof = inclusion_probabilities(pop.p(), 100).unwrap();
        let pop = orthogonalize_outcomes(&pop, &prof.pi).unwrap();
        assert!(sdim_bias(&prof, &pop).unwrap().abs() < 1e-12);
        let target = att(&prof, &pop).unwrap();
        let exp = SdimExperiment::new(pop, 100).unwrap();
        let opts = RunOptions {
            replications: 20_000,
            master_seed: 5,
            level: 0.95,
            reference_variance: None,
        };
        let s = run_replications(&exp, 100, &opts).unwrap();
        let c = &s.coordinates[0];
        assert!((c.target - target).abs() < 1e-12);
        assert!((c.empirical_mean - target).abs() < 4.0 * c.mc_standard_error);
    }
}
