//! Synthetic populations.
//!
//! Every generator is a pure function of its spec: the spec carries the seed
//! and a fresh ChaCha stream is built from it on each call.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use serde::{Deserialize, Serialize};

use super::{FinitePopulation, IVPopulation, PanelPopulation};
use crate::error::{Error, Result};

/// Distribution of a unit-level attribute (untreated outcome or effect).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum OutcomeLaw {
    Normal { mean: f64, sd: f64 },
    Lognormal { mu: f64, sigma: f64 },
    TwoPoint { low: f64, high: f64, prob_high: f64 },
}

impl OutcomeLaw {
    fn draw_n(&self, n: usize, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        match *self {
            OutcomeLaw::Normal { mean, sd } => {
                let d = Normal::new(mean, sd)
                    .map_err(|e| Error::validation(format!("normal law: {e}")))?;
                Ok((0..n).map(|_| d.sample(rng)).collect())
            }
            OutcomeLaw::Lognormal { mu, sigma } => {
                let d = LogNormal::new(mu, sigma)
                    .map_err(|e| Error::validation(format!("lognormal law: {e}")))?;
                Ok((0..n).map(|_| d.sample(rng)).collect())
            }
            OutcomeLaw::TwoPoint {
                low,
                high,
                prob_high,
            } => {
                if !(0.0..=1.0).contains(&prob_high) {
                    return Err(Error::validation("two_point prob_high must lie in [0, 1]"));
                }
                Ok((0..n)
                    .map(|_| {
                        if rng.random::<f64>() < prob_high {
                            high
                        } else {
                            low
                        }
                    })
                    .collect())
            }
        }
    }
}

/// How treatment probabilities are tied to potential outcomes.
///
/// The logistic links map into `range` (default `[0, 1]`) as
/// `lo + (hi - lo) * logistic(intercept + slope * x)`, which is how overlap
/// bounds such as `[0.1, 0.9]` are imposed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "link", rename_all = "snake_case")]
pub enum ProbabilityLink {
    /// Selection on gains: `x = Y(1) - Y(0)`.
    LogisticGain {
        intercept: f64,
        slope: f64,
        #[serde(default)]
        range: Option<[f64; 2]>,
    },
    /// Selection on levels: `x = Y(0)` (the base-period level for panels).
    LogisticLevel {
        intercept: f64,
        slope: f64,
        #[serde(default)]
        range: Option<[f64; 2]>,
    },
    /// A fixed pattern of probabilities repeated (and truncated) to length n.
    Tiled { pattern: Vec<f64> },
}

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl ProbabilityLink {
    fn apply(&self, level: &[f64], gain: &[f64]) -> Result<Vec<f64>> {
        let n = level.len();
        let bounded = |intercept: f64, slope: f64, range: Option<[f64; 2]>, x: &[f64]| {
            let [lo, hi] = range.unwrap_or([0.0, 1.0]);
            x.iter()
                .map(|v| lo + (hi - lo) * logistic(intercept + slope * v))
                .collect::<Vec<_>>()
        };
        let p = match self {
            ProbabilityLink::LogisticGain {
                intercept,
                slope,
                range,
            } => bounded(*intercept, *slope, *range, gain),
            ProbabilityLink::LogisticLevel {
                intercept,
                slope,
                range,
            } => bounded(*intercept, *slope, *range, level),
            ProbabilityLink::Tiled { pattern } => {
                if pattern.is_empty() {
                    return Err(Error::validation("tiled pattern is empty"));
                }
                pattern.iter().copied().cycle().take(n).collect()
            }
        };
        if let Some(unit) = p.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::ProbabilityOutOfRange {
                unit,
                value: p[unit],
            });
        }
        Ok(p)
    }
}

/// Cross-sectional generator: `Y(0) ~ y0`, `Y(1) = Y(0) + tau` with
/// `tau ~ effect`, probabilities from `probability`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub n: usize,
    pub seed: u64,
    pub y0: OutcomeLaw,
    pub effect: OutcomeLaw,
    pub probability: ProbabilityLink,
}

pub fn make_population(spec: &GeneratorSpec) -> Result<FinitePopulation> {
    if spec.n < 2 {
        return Err(Error::validation("generator size must be at least 2"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let y0 = spec.y0.draw_n(spec.n, &mut rng)?;
    let tau = spec.effect.draw_n(spec.n, &mut rng)?;
    let y1: Vec<f64> = y0.iter().zip(&tau).map(|(a, t)| a + t).collect();
    let p = spec.probability.apply(&y0, &tau)?;
    FinitePopulation::new(p, y0, y1)
}

/// Panel generator: `Y_it(0) = level_i + trend_i * t + noise_it`, and
/// `Y_it(1) = Y_it(0) + effect_i + effect_growth * (t - 1)` for `t >= 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelGeneratorSpec {
    pub n: usize,
    pub seed: u64,
    pub pre_periods: usize,
    pub post_periods: usize,
    pub level: OutcomeLaw,
    pub trend: OutcomeLaw,
    #[serde(default)]
    pub noise_sd: f64,
    pub effect: OutcomeLaw,
    #[serde(default)]
    pub effect_growth: f64,
    pub probability: ProbabilityLink,
}

pub fn make_panel_population(spec: &PanelGeneratorSpec) -> Result<PanelPopulation> {
    if spec.n < 2 {
        return Err(Error::validation("generator size must be at least 2"));
    }
    if spec.pre_periods + spec.post_periods == 0 {
        return Err(Error::validation(
            "panel needs at least one non-base period",
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let level = spec.level.draw_n(spec.n, &mut rng)?;
    let trend = spec.trend.draw_n(spec.n, &mut rng)?;
    let tau = spec.effect.draw_n(spec.n, &mut rng)?;
    let noise =
        Normal::new(0.0, spec.noise_sd).map_err(|e| Error::validation(format!("noise_sd: {e}")))?;
    let first = -(spec.pre_periods as i32);
    let t_count = spec.pre_periods + spec.post_periods + 1;
    let mut y0 = DMatrix::zeros(spec.n, t_count);
    let mut y1 = DMatrix::zeros(spec.n, t_count);
    for i in 0..spec.n {
        for col in 0..t_count {
            let t = first + col as i32;
            let v = level[i] + trend[i] * t as f64 + noise.sample(&mut rng);
            y0[(i, col)] = v;
            y1[(i, col)] = if t >= 1 {
                v + tau[i] + spec.effect_growth * (t - 1) as f64
            } else {
                v
            };
        }
    }
    let base = spec.pre_periods;
    let base_level: Vec<f64> = y0.column(base).iter().copied().collect();
    let p = spec.probability.apply(&base_level, &tau)?;
    PanelPopulation::new(p, y0, y1, first)
}

/// IV generator. Units are always-takers, never-takers or compliers with the
/// given shares; there are no defiers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IvGeneratorSpec {
    pub n: usize,
    pub seed: u64,
    pub always_taker_share: f64,
    pub never_taker_share: f64,
    pub y0: OutcomeLaw,
    pub effect: OutcomeLaw,
    pub probability: ProbabilityLink,
}

pub fn make_iv_population(spec: &IvGeneratorSpec) -> Result<IVPopulation> {
    let (a, nv) = (spec.always_taker_share, spec.never_taker_share);
    if spec.n < 2 || a < 0.0 || nv < 0.0 || a + nv > 1.0 {
        return Err(Error::validation(
            "IV generator needs n >= 2 and nonnegative type shares summing to at most 1",
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let y0 = spec.y0.draw_n(spec.n, &mut rng)?;
    let tau = spec.effect.draw_n(spec.n, &mut rng)?;
    let mut d0 = Vec::with_capacity(spec.n);
    let mut d1 = Vec::with_capacity(spec.n);
    for _ in 0..spec.n {
        let u: f64 = rng.random();
        let (x0, x1) = if u < a {
            (true, true)
        } else if u < a + nv {
            (false, false)
        } else {
            (false, true)
        };
        d0.push(x0);
        d1.push(x1);
    }
    let y1: Vec<f64> = y0.iter().zip(&tau).map(|(a, t)| a + t).collect();
    let pz = spec.probability.apply(&y0, &tau)?;
    IVPopulation::new(pz, d0, d1, y0, y1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gain_spec(seed: u64) -> GeneratorSpec {
        GeneratorSpec {
            n: 100,
            seed,
            y0: OutcomeLaw::Normal { mean: 0.0, sd: 1.0 },
            effect: OutcomeLaw::Normal { mean: 1.0, sd: 0.5 },
            probability: ProbabilityLink::LogisticGain {
                intercept: 0.0,
                slope: 1.0,
                range: None,
            },
        }
    }

    #[test]
    fn generator_is_deterministic() {
        let a = make_population(&gain_spec(7)).unwrap();
        let b = make_population(&gain_spec(7)).unwrap();
        assert_eq!(a, b);
        let c = make_population(&gain_spec(8)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn logistic_gain_link() {
        let pop = make_population(&gain_spec(7)).unwrap();
        for (p, t) in pop.p().iter().zip(pop.tau()) {
            assert!((p - logistic(t)).abs() < 1e-15);
        }
    }

    #[test]
    fn tiled_pattern_truncates() {
        let spec = GeneratorSpec {
            n: 6,
            seed: 1,
            y0: OutcomeLaw::TwoPoint {
                low: 0.0,
                high: 1.0,
                prob_high: 0.5,
            },
            effect: OutcomeLaw::Lognormal {
                mu: 0.0,
                sigma: 0.1,
            },
            probability: ProbabilityLink::Tiled {
                pattern: vec![0.8, 0.6, 0.4, 0.2],
            },
        };
        let pop = make_population(&spec).unwrap();
        assert_eq!(pop.p(), &[0.8, 0.6, 0.4, 0.2, 0.8, 0.6]);
        assert!(pop.y0().iter().all(|v| *v == 0.0 || *v == 1.0));
    }

    #[test]
    fn bad_pattern_names_unit() {
        let spec = GeneratorSpec {
            probability: ProbabilityLink::Tiled {
                pattern: vec![0.5, 1.5],
            },
            ..gain_spec(1)
        };
        assert!(matches!(
            make_population(&spec),
            Err(Error::ProbabilityOutOfRange { unit: 1, .. })
        ));
    }

    #[test]
    fn range_bounds_probabilities() {
        let spec = GeneratorSpec {
            probability: ProbabilityLink::LogisticLevel {
                intercept: 0.0,
                slope: 5.0,
                range: Some([0.1, 0.9]),
            },
            ..gain_spec(3)
        };
        let pop = make_population(&spec).unwrap();
        assert!(pop.p().iter().all(|p| (0.1..=0.9).contains(p)));
    }

    #[test]
    fn panel_generator_respects_no_anticipation() {
        let spec = PanelGeneratorSpec {
            n: 20,
            seed: 4,
            pre_periods: 2,
            post_periods: 3,
            level: OutcomeLaw::Normal { mean: 0.0, sd: 1.0 },
            trend: OutcomeLaw::Normal { mean: 0.1, sd: 0.2 },
            noise_sd: 0.3,
            effect: OutcomeLaw::Normal { mean: 1.0, sd: 0.2 },
            effect_growth: 0.5,
            probability: ProbabilityLink::LogisticLevel {
                intercept: 0.0,
                slope: 1.0,
                range: None,
            },
        };
        let panel = make_panel_population(&spec).unwrap();
        assert_eq!(panel.num_periods(), 6);
        assert_eq!(panel.base_index(), 2);
        assert_eq!(
            panel.periods().collect::<Vec<_>>(),
            vec![-2, -1, 0, 1, 2, 3]
        );
    }

    #[test]
    fn iv_generator_is_monotone() {
        let spec = IvGeneratorSpec {
            n: 200,
            seed: 9,
            always_taker_share: 0.2,
            never_taker_share: 0.3,
            y0: OutcomeLaw::Normal { mean: 0.0, sd: 1.0 },
            effect: OutcomeLaw::Normal { mean: 2.0, sd: 1.0 },
            probability: ProbabilityLink::Tiled {
                pattern: vec![0.3, 0.7],
            },
        };
        let iv = make_iv_population(&spec).unwrap();
        assert!(iv.defiers().is_empty());
        assert!((0..iv.n()).any(|i| iv.is_complier(i)));
    }
}
