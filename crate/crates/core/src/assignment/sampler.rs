//! Exact sequential sampling from the rejective law.
//!
//! Free units are visited in order. With `r` slots left at unit `i`, the unit
//! is treated with probability
//! `w_i e_{r-1}(w_{i+1..}) / e_r(w_{i..}) = q_i G_{i+1}(r-1) / G_i(r)`,
//! which makes the joint law of the draw exactly the conditional one.
//!
//! Acceptance probabilities are precomputed for every reachable `(i, r)`
//! within the band around the expected number of remaining slots. The
//! table is stored by offset from that expectation, so a draw walks along
//! rows almost sequentially. States outside the band (probability below
//! 1e-18 per draw) are answered from a lazily built log-space suffix table.

use std::sync::OnceLock;

use rand::Rng;

use super::banded::{suffix_step, Band, Cumulants};
use super::esp::{esp_suffix_table, EspTable};
use super::{AssignmentDraw, RejectiveDesign, UnitRole};
use crate::error::Result;

#[derive(Debug)]
pub struct Sampler {
    design: RejectiveDesign,
    /// Expected remaining slots at each free unit, rounded.
    center: Vec<isize>,
    half: usize,
    /// `accept[(offset + half) * m + i]`; NaN marks a state outside the band.
    accept: Vec<f64>,
    exact: OnceLock<EspTable>,
}

impl Sampler {
    pub fn new(p: &[f64], n1: usize) -> Result<Self> {
        let design = RejectiveDesign::new(p, n1)?;
        Ok(Self::from_design(design))
    }

    pub fn from_design(design: RejectiveDesign) -> Self {
        let q = design.tilted();
        let m = q.len();
        let cum = Cumulants::new(q);
        let total_mean = cum.mean[m];
        let center: Vec<isize> = (0..m)
            .map(|i| (total_mean - cum.mean[i]).round() as isize)
            .collect();
        let half = if design.is_degenerate() {
            0
        } else {
            let (lo, hi) = super::banded::window(0.0, cum.var[m], m);
            hi.max(lo) + 1
        };
        let rows = 2 * half + 1;
        let mut accept = vec![f64::NAN; if design.is_degenerate() { 0 } else { rows * m }];

        if !design.is_degenerate() {
            let mut next = Band::point();
            for i in (0..m).rev() {
                let cur = suffix_step(&next, q, &cum, i);
                for r in cur.lo.max(1)..cur.hi() {
                    let off = r as isize - center[i];
                    if off.unsigned_abs() > half {
                        continue;
                    }
                    let denom = cur.get(r);
                    if denom > 0.0 {
                        let a = q[i] * next.get(r - 1) / denom;
                        accept[(off + half as isize) as usize * m + i] = a.min(1.0);
                    }
                }
                next = cur;
            }
        }

        Self {
            design,
            center,
            half,
            accept,
            exact: OnceLock::new(),
        }
    }

    pub fn design(&self) -> &RejectiveDesign {
        &self.design
    }

    fn exact_accept(&self, i: usize, r: usize) -> f64 {
        let table = self.exact.get_or_init(|| {
            let odds = self.design.odds();
            esp_suffix_table(&odds, self.design.quota())
        });
        let lw = self.design.odds()[i].ln();
        (lw + table.log_e(i + 1, r - 1) - table.log_e(i, r)).exp()
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> AssignmentDraw {
        let d = &self.design;
        let mut out: Vec<bool> = (0..d.n()).map(|i| d.role(i) == UnitRole::Forced).collect();
        let free = d.free_units();
        let m = free.len();
        let mut left = d.quota();
        for i in 0..m {
            if left == 0 {
                break;
            }
            if left == m - i {
                for &u in &free[i..] {
                    out[u] = true;
                }
                break;
            }
            let off = left as isize - self.center[i];
            let mut a = f64::NAN;
            if off.unsigned_abs() <= self.half {
                a = self.accept[(off + self.half as isize) as usize * m + i];
            }
            if a.is_nan() {
                a = self.exact_accept(i, left);
            }
            if rng.random::<f64>() < a {
                out[free[i]] = true;
                left -= 1;
            }
        }
        AssignmentDraw::new(out)
    }
}

/// One exact draw. Builds a [`Sampler`] per call; keep a sampler around
/// when drawing repeatedly.
pub fn draw_assignment<R: Rng + ?Sized>(
    p: &[f64],
    n1: usize,
    rng: &mut R,
) -> Result<AssignmentDraw> {
    Ok(Sampler::new(p, n1)?.draw(rng))
}

/// Independent Bernoulli draws, retried until exactly `n1` are treated.
/// Exact but slow when `Σp` is far from `n1`; used to cross-check [`Sampler`].
pub fn draw_assignment_rejection<R: Rng + ?Sized>(
    p: &[f64],
    n1: usize,
    rng: &mut R,
    max_tries: usize,
) -> Result<Option<AssignmentDraw>> {
    RejectiveDesign::new(p, n1)?;
    for _ in 0..max_tries {
        let d: Vec<bool> = p.iter().map(|&pi| rng.random::<f64>() < pi).collect();
        if d.iter().filter(|x| **x).count() == n1 {
            return Ok(Some(AssignmentDraw::new(d)));
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn full_assignment() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = draw_assignment(&[0.5; 5], 5, &mut rng).unwrap();
        assert!(d.as_slice().iter().all(|x| *x));
    }

    #[test]
    fn draws_hit_quota() {
        let p = [0.9, 0.1, 0.5, 0.3, 1.0, 0.0, 0.7, 0.2];
        let s = Sampler::new(&p, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..2000 {
            let d = s.draw(&mut rng);
            assert_eq!(d.n1(), 4);
            assert!(d.is_treated(4));
            assert!(!d.is_treated(5));
        }
    }

    #[test]
    fn fallback_agrees_with_table() {
        let p = [0.8, 0.6, 0.4, 0.2, 0.55, 0.35];
        let s = Sampler::new(&p, 3).unwrap();
        let m = s.design.free_units().len();
        for i in 0..m {
            for r in 1..=3usize {
                if r > m - i {
                    continue;
                }
                let off = r as isize - s.center[i];
                if off.unsigned_abs() > s.half {
                    continue;
                }
                let a = s.accept[(off + s.half as isize) as usize * m + i];
                if a.is_nan() || r == m - i {
                    continue;
                }
                let b = s.exact_accept(i, r);
                assert!((a - b).abs() < 1e-12, "i={i} r={r}: {a} vs {b}");
            }
        }
    }
}
