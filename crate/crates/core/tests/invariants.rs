//! Cross-module properties checked against full enumeration.

use designinf_core::assignment::{
    enumerate_assignments, exact_randomization_moments, inclusion_probabilities, AssignmentDraw,
};
use designinf_core::estimators::sdim;
use designinf_core::io::{load_population_csv, write_population_csv, Mode, PopulationData};
use designinf_core::montecarlo::SdimExperiment;
use designinf_core::population::{
    make_iv_population, make_panel_population, make_population, orthogonalize_outcomes,
    GeneratorSpec, IvGeneratorSpec, OutcomeLaw, PanelGeneratorSpec, ProbabilityLink,
};
use designinf_core::theory::{att, sdim_bias};
use designinf_core::FinitePopulation;
use proptest::prelude::*;

fn population(max_n: usize) -> impl Strategy<Value = (FinitePopulation, usize)> {
    (2..=max_n)
        .prop_flat_map(|n| {
            (
                prop::collection::vec(0.02f64..0.98, n),
                prop::collection::vec(-5.0f64..5.0, n),
                prop::collection::vec(-3.0f64..3.0, n),
                1..n,
            )
        })
        .prop_map(|(p, y0, tau, n1)| {
            let y1 = y0.iter().zip(&tau).map(|(a, t)| a + t).collect();
            (FinitePopulation::new(p, y0, y1).unwrap(), n1)
        })
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn cov(x: &[f64], y: &[f64]) -> f64 {
    let (mx, my) = (mean(x), mean(y));
    x.iter()
        .zip(y)
        .map(|(a, b)| (a - mx) * (b - my))
        .sum::<f64>()
        / x.len() as f64
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn marginals_match_enumeration((pop, n1) in population(12)) {
        let pi = inclusion_probabilities(pop.p(), n1).unwrap().pi;
        let mut en = vec![0.0; pop.n()];
        for (d, w) in enumerate_assignments(pop.p(), n1).unwrap() {
            for (i, v) in en.iter_mut().enumerate() {
                if d.is_treated(i) {
                    *v += w;
                }
            }
        }
        for (a, b) in pi.iter().zip(&en) {
            prop_assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn permuting_units_permutes_pi((pop, n1) in population(40), seed in any::<u64>()) {
        let n = pop.n();
        let mut order: Vec<usize> = (0..n).collect();
        // Deterministic shuffle from the seed.
        let mut s = seed | 1;
        for i in (1..n).rev() {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            order.swap(i, (s % (i as u64 + 1)) as usize);
        }
        let permuted: Vec<f64> = order.iter().map(|&i| pop.p()[i]).collect();
        let pi = inclusion_probabilities(pop.p(), n1).unwrap().pi;
        let pj = inclusion_probabilities(&permuted, n1).unwrap().pi;
        for (j, &i) in order.iter().enumerate() {
            prop_assert!((pj[j] - pi[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn exact_mean_is_att_plus_bias((pop, n1) in population(12)) {
        let profile = inclusion_probabilities(pop.p(), n1).unwrap();
        let m = exact_randomization_moments(pop.p(), n1, |d| {
            sdim(&pop.observed(d), d, 0.95).unwrap().estimate
        })
        .unwrap();
        let target = att(&profile, &pop).unwrap() + sdim_bias(&profile, &pop).unwrap();
        prop_assert!((m.mean[0] - target).abs() < 1e-10);
    }

    /// The bias equals the randomization mean of the regression formula
    /// `Cov_1(D, u) / Var_1(D)` with `u_i = (Y_i(0) - E_{1-π} Y(0)) + D_i (τ_i - τ_att)`.
    #[test]
    fn omitted_variable_form((pop, n1) in population(10)) {
        let profile = inclusion_probabilities(pop.p(), n1).unwrap();
        let pi = &profile.pi;
        let tau_att = att(&profile, &pop).unwrap();
        let q: Vec<f64> = pi.iter().map(|v| 1.0 - v).collect();
        let base = q.iter().zip(pop.y0()).map(|(a, b)| a * b).sum::<f64>() / q.iter().sum::<f64>();
        let tau = pop.tau();
        let m = exact_randomization_moments(pop.p(), n1, |d: &AssignmentDraw| {
            let dd = d.as_f64();
            let u: Vec<f64> = (0..pop.n())
                .map(|i| pop.y0()[i] - base + dd[i] * (tau[i] - tau_att))
                .collect();
            vec![cov(&dd, &u) / cov(&dd, &dd)]
        })
        .unwrap();
        prop_assert!((m.mean[0] - sdim_bias(&profile, &pop).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn orthogonalizing_keeps_effects((pop, n1) in population(60)) {
        let pi = inclusion_probabilities(pop.p(), n1).unwrap().pi;
        let orth = orthogonalize_outcomes(&pop, &pi).unwrap();
        for (a, b) in orth.tau().iter().zip(pop.tau()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        prop_assert!(cov(&pi, orth.y0()).abs() < 1e-12);
    }
}

#[test]
fn hajek_variance_approaches_exact_variance() {
    let mut dev = Vec::new();
    for n in [50usize, 200, 1000, 5000] {
        let pop = make_population(&GeneratorSpec {
            n,
            seed: 17,
            y0: OutcomeLaw::Normal { mean: 0.0, sd: 1.0 },
            effect: OutcomeLaw::Normal { mean: 1.0, sd: 1.0 },
            probability: ProbabilityLink::Tiled {
                pattern: vec![0.1, 0.3, 0.5, 0.7, 0.9],
            },
        })
        .unwrap();
        let exp = SdimExperiment::new(pop, n / 2).unwrap();
        let exact = exp.exact_variance().unwrap();
        dev.push((exp.theory().hajek_variance / exact - 1.0).abs());
    }
    assert!(dev.windows(2).all(|w| w[1] < w[0]), "{dev:?}");
    assert!(dev[3] < 0.02, "{dev:?}");
}

#[test]
fn generated_populations_round_trip_through_csv() {
    let dir = tempfile::tempdir().unwrap();
    let normal = OutcomeLaw::Normal { mean: 0.3, sd: 1.7 };
    let link = ProbabilityLink::LogisticLevel {
        intercept: 0.1,
        slope: 0.9,
        range: Some([0.05, 0.95]),
    };
    let pops = [
        PopulationData::Cross(
            make_population(&GeneratorSpec {
                n: 50,
                seed: 1,
                y0: normal.clone(),
                effect: OutcomeLaw::Lognormal {
                    mu: 0.0,
                    sigma: 0.5,
                },
                probability: link.clone(),
            })
            .unwrap(),
        ),
        PopulationData::Panel(
            make_panel_population(&PanelGeneratorSpec {
                n: 30,
                seed: 2,
                pre_periods: 3,
                post_periods: 2,
                level: normal.clone(),
                trend: normal.clone(),
                noise_sd: 0.4,
                effect: normal.clone(),
                effect_growth: 0.2,
                probability: link,
            })
            .unwrap(),
        ),
        PopulationData::Iv(
            make_iv_population(&IvGeneratorSpec {
                n: 40,
                seed: 3,
                always_taker_share: 0.2,
                never_taker_share: 0.3,
                y0: normal.clone(),
                effect: normal,
                probability: ProbabilityLink::Tiled {
                    pattern: vec![0.25, 0.5, 0.75],
                },
            })
            .unwrap(),
        ),
    ];
    for (k, pop) in pops.iter().enumerate() {
        let path = dir.path().join(format!("pop{k}.csv"));
        write_population_csv(&path, pop).unwrap();
        let mode = match pop {
            PopulationData::Cross(_) => Mode::Sdim,
            PopulationData::Panel(_) => Mode::Did,
            PopulationData::Iv(_) => Mode::Tsls,
        };
        assert_eq!(&load_population_csv(&path, mode).unwrap(), pop);
    }
}
