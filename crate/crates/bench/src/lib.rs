//! Shared fixtures for the benchmarks.

use designinf_core::FinitePopulation;

pub const OVERLAP: [f64; 5] = [0.1, 0.3, 0.5, 0.7, 0.9];

/// Treatment probabilities cycling through `pattern`, `n` units long.
pub fn tiled(pattern: &[f64], n: usize) -> Vec<f64> {
    pattern.iter().copied().cycle().take(n).collect()
}

/// Deterministic population with heterogeneous effects and tiled overlap.
pub fn population(n: usize) -> FinitePopulation {
    let y0: Vec<f64> = (0..n).map(|i| ((i * 7919) % 101) as f64 / 10.0).collect();
    let y1 = y0
        .iter()
        .enumerate()
        .map(|(i, v)| v + 1.0 + (i % 13) as f64 / 6.0)
        .collect();
    FinitePopulation::new(tiled(&OVERLAP, n), y0, y1).unwrap()
}
