//! Banded Poisson-binomial point masses.
//!
//! With tilted probabilities `q` (so `Σq = k`), `e_m(w_A) ∝ P_q(S_A = m)` for
//! any subset `A` of free units, and every conditional quantity is a ratio of
//! such masses. Masses are probabilities, so nothing overflows; entries more
//! than `BAND_SDS` standard deviations (plus `BAND_PAD`) from a partial sum's
//! mean are below 1e-20 of the peak and are dropped.
//!
//! Inclusion probabilities use the forward/backward split
//! `π_i ∝ q_i Σ_a F_i(a) G_{i+1}(k-1-a)`, where `F_i` is the law of the
//! first `i` indicators and `G_{i+1}` of those after `i`. Suffix bands are
//! kept only at `√m` checkpoints and recomputed block by block, so memory is
//! `O(√m · band)` and time `O(m · band)`.

pub(crate) const BAND_SDS: f64 = 10.0;
pub(crate) const BAND_PAD: f64 = 40.0;

/// Point masses `P(S = m)` for `m` in `lo .. lo + vals.len()`.
#[derive(Debug, Clone)]
pub(crate) struct Band {
    pub lo: usize,
    pub vals: Vec<f64>,
}

impl Band {
    pub fn point() -> Self {
        Band {
            lo: 0,
            vals: vec![1.0],
        }
    }

    #[inline]
    pub fn get(&self, m: usize) -> f64 {
        if m < self.lo {
            return 0.0;
        }
        self.vals.get(m - self.lo).copied().unwrap_or(0.0)
    }

    pub fn hi(&self) -> usize {
        self.lo + self.vals.len()
    }

    /// Convolves with one Bernoulli(q) and keeps `[keep_lo, keep_hi)`.
    pub fn add_unit(&self, q: f64, keep_lo: usize, keep_hi: usize) -> Band {
        let lo = self.lo.max(keep_lo);
        let hi = (self.hi() + 1).min(keep_hi).max(lo);
        let mut vals = Vec::with_capacity(hi - lo);
        let r = 1.0 - q;
        for m in lo..hi {
            let stay = self.get(m);
            let step = if m > 0 { self.get(m - 1) } else { 0.0 };
            vals.push(r * stay + q * step);
        }
        Band { lo, vals }
    }
}

/// `[lo, hi)` of counts worth keeping for a partial sum with the given
/// mean, variance and unit count.
#[inline]
pub(crate) fn window(mean: f64, var: f64, units: usize) -> (usize, usize) {
    let h = BAND_SDS * var.sqrt() + BAND_PAD;
    let lo = (mean - h).floor().max(0.0) as usize;
    let hi = ((mean + h).ceil() as usize + 1).min(units + 1);
    (lo, hi)
}

/// Prefix sums of `q` and `q(1-q)`; index `i` covers units `0..i`.
pub(crate) struct Cumulants {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl Cumulants {
    pub fn new(q: &[f64]) -> Self {
        let mut mean = Vec::with_capacity(q.len() + 1);
        let mut var = Vec::with_capacity(q.len() + 1);
        let (mut a, mut b) = (0.0, 0.0);
        mean.push(0.0);
        var.push(0.0);
        for &x in q {
            a += x;
            b += x * (1.0 - x);
            mean.push(a);
            var.push(b);
        }
        Self { mean, var }
    }

    /// Window for units `0..i`.
    pub fn prefix_window(&self, i: usize) -> (usize, usize) {
        window(self.mean[i], self.var[i], i)
    }

    /// Window for units `i..m`.
    pub fn suffix_window(&self, i: usize) -> (usize, usize) {
        let m = self.mean.len() - 1;
        window(
            self.mean[m] - self.mean[i],
            (self.var[m] - self.var[i]).max(0.0),
            m - i,
        )
    }
}

/// Backward step: the law of units `i..m` from the law of `i+1..m`.
pub(crate) fn suffix_step(next: &Band, q: &[f64], cum: &Cumulants, i: usize) -> Band {
    let (lo, hi) = cum.suffix_window(i);
    next.add_unit(q[i], lo, hi)
}

pub(crate) struct InclusionOutput {
    pub pi: Vec<f64>,
    pub normalization_residual: f64,
}

/// Inclusion probabilities of the free units, `0 < k < q.len()`.
pub(crate) fn inclusion(q: &[f64], k: usize) -> InclusionOutput {
    let m = q.len();
    let cum = Cumulants::new(q);
    let block = ((m as f64).sqrt().ceil() as usize).max(1);

    // Suffix checkpoints at multiples of `block`, plus the empty suffix.
    let mut checkpoints: Vec<Option<Band>> = vec![None; m / block + 2];
    let mut g = Band::point();
    checkpoints[m / block + 1] = Some(g.clone());
    for i in (0..m).rev() {
        g = suffix_step(&g, q, &cum, i);
        if i % block == 0 {
            checkpoints[i / block] = Some(g.clone());
        }
    }

    let mut u = vec![0.0; m];
    let mut f = Band::point();
    let mut start = 0;
    while start < m {
        let end = (start + block).min(m);
        // G_{end}: a checkpoint, or the empty suffix when end == m.
        let mut cur = if end == m {
            Band::point()
        } else {
            checkpoints[end / block].clone().expect("checkpoint")
        };
        // suffix[j] holds G_{start + 1 + j} for j in 0..(end - start).
        let mut suffix: Vec<Band> = Vec::with_capacity(end - start);
        suffix.push(cur.clone());
        for i in (start + 1..end).rev() {
            cur = suffix_step(&cur, q, &cum, i);
            suffix.push(cur.clone());
        }
        suffix.reverse();

        for i in start..end {
            let g_next = &suffix[i - start];
            // Σ_a F_i(a) G_{i+1}(k - 1 - a)
            let mut acc = 0.0;
            let a_hi = f.hi().min(k);
            for a in f.lo..a_hi {
                let b = k - 1 - a;
                acc += f.vals[a - f.lo] * g_next.get(b);
            }
            u[i] = q[i] * acc;
            let (lo, hi) = cum.prefix_window(i + 1);
            f = f.add_unit(q[i], lo, hi);
        }
        start = end;
    }

    let z_direct = f.get(k);
    let total = crate::moments::compensated_sum(u.iter().copied());
    let z_from_u = total / k as f64;
    let pi = u.iter().map(|v| v / z_from_u).collect();
    InclusionOutput {
        pi,
        normalization_residual: ((z_from_u - z_direct) / z_direct).abs(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn band_matches_binomial() {
        let mut b = Band::point();
        for _ in 0..10 {
            b = b.add_unit(0.3, 0, usize::MAX);
        }
        // P(S = 3) for Binomial(10, 0.3)
        let expect = 120.0 * 0.3f64.powi(3) * 0.7f64.powi(7);
        assert!((b.get(3) - expect).abs() < 1e-15);
        assert!((b.vals.iter().sum::<f64>() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn window_never_exceeds_unit_count() {
        assert_eq!(window(1.0, 0.5, 3), (0, 4));
        let (lo, hi) = window(5000.0, 2500.0, 10000);
        assert!(lo > 4000 && hi < 6000);
    }
}
