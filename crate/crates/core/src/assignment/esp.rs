/// Log-space table of suffix elementary symmetric polynomials:
/// `log_e(j, k) = ln e_k(w_j, ..., w_{n-1})`, for `j` in `0..=n` and
/// `k` in `0..=k_max`. Row `n` is the empty suffix.
#[derive(Debug, Clone)]
pub struct EspTable {
    n: usize,
    k_max: usize,
    log_e: Vec<f64>,
}

impl EspTable {
    #[inline]
    pub fn log_e(&self, j: usize, k: usize) -> f64 {
        self.log_e[j * (self.k_max + 1) + k]
    }

    pub fn e(&self, j: usize, k: usize) -> f64 {
        self.log_e(j, k).exp()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }
}

#[inline]
fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        hi
    } else {
        hi + (lo - hi).exp().ln_1p()
    }
}

/// Builds the table by the recurrence
/// `e_k(w_j..) = e_k(w_{j+1}..) + w_j e_{k-1}(w_{j+1}..)`, in log space.
/// Every term is nonnegative, so no sign tracking is needed.
///
/// Panics if a weight is negative or not finite.
pub fn esp_suffix_table(w: &[f64], k_max: usize) -> EspTable {
    assert!(
        w.iter().all(|v| *v >= 0.0 && v.is_finite()),
        "odds must be finite and nonnegative"
    );
    let n = w.len();
    let width = k_max + 1;
    let mut log_e = vec![f64::NEG_INFINITY; (n + 1) * width];
    log_e[n * width] = 0.0;
    for j in (0..n).rev() {
        let lw = w[j].ln();
        let (head, tail) = log_e.split_at_mut((j + 1) * width);
        let row = &mut head[j * width..];
        let next = &tail[..width];
        row[0] = 0.0;
        for k in 1..width {
            row[k] = log_add_exp(next[k], lw + next[k - 1]);
        }
    }
    EspTable { n, k_max, log_e }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn second_symmetric_polynomial() {
        let t = esp_suffix_table(&[4.0, 1.5, 2.0 / 3.0, 0.25], 2);
        // 4*1.5 + 4*(2/3) + 4*0.25 + 1.5*(2/3) + 1.5*0.25 + (2/3)*0.25
        let direct = 6.0 + 8.0 / 3.0 + 1.0 + 1.0 + 0.375 + 1.0 / 6.0;
        assert!((t.e(0, 2) - direct).abs() < 1e-12);
        assert!((t.e(0, 2) - 11.208_333_333_333_334).abs() < 1e-12);
    }

    #[test]
    fn zero_weights() {
        let t = esp_suffix_table(&[0.0; 5], 3);
        assert_eq!(t.e(0, 0), 1.0);
        for k in 1..=3 {
            assert_eq!(t.e(0, k), 0.0);
        }
    }

    #[test]
    fn single_weight() {
        let t = esp_suffix_table(&[2.5], 1);
        assert!((t.e(0, 1) - 2.5).abs() < 1e-15);
        assert_eq!(t.e(1, 0), 1.0);
        assert_eq!(t.e(1, 1), 0.0);
    }

    #[test]
    fn large_n_stays_finite() {
        // e_k near n = 2000 with odds 9 overflows f64 in linear space.
        let w = vec![9.0; 2000];
        let t = esp_suffix_table(&w, 1000);
        let v = t.log_e(0, 1000);
        assert!(v.is_finite());
        // ln C(2000, 1000) + 1000 ln 9
        let ln_binom: f64 = (1..=1000)
            .map(|i| ((1000 + i) as f64).ln() - (i as f64).ln())
            .sum();
        let expect = ln_binom + 1000.0 * 9f64.ln();
        assert!((v - expect).abs() / expect < 1e-12);
    }
}
