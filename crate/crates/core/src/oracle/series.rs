//! Partial sums with arithmetic-mean tail acceleration.

use num_complex::Complex64;

/// Plain and accelerated values of a truncated series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesValue {
    /// The partial sum of all `n_terms` terms.
    pub plain: Complex64,
    /// The mean of the last `window` partial sums.
    pub accelerated: Complex64,
}

/// Sums `term(k)` for `k in 0..n_terms` and averages the last `window` partial sums.
pub fn cesaro_tail(n_terms: usize, window: usize, term: impl Fn(usize) -> Complex64) -> SeriesValue {
    let window = window.clamp(1, n_terms.max(1));
    let start = n_terms.saturating_sub(window);
    let mut partial = Complex64::ZERO;
    let mut tail = Complex64::ZERO;
    for k in 0..n_terms {
        partial += term(k);
        if k >= start {
            tail += partial;
        }
    }
    SeriesValue { plain: partial, accelerated: tail / window as f64 }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::LN_2;

    #[test]
    fn alternating_harmonic_series() {
        let term = |k: usize| Complex64::new(if k.is_multiple_of(2) { 1.0 } else { -1.0 } / (k + 1) as f64, 0.0);
        let v = cesaro_tail(10_000, 1_000, term);
        assert!((v.plain.re - LN_2).abs() > 1e-5);
        assert!((v.accelerated.re - LN_2).abs() < 1e-7);
    }

    #[test]
    fn finite_sums_are_exact() {
        let v = cesaro_tail(5, 1, |k| Complex64::new(k as f64, 1.0));
        assert_eq!(v.plain, Complex64::new(10.0, 5.0));
        assert_eq!(v.accelerated, v.plain);
        let empty = cesaro_tail(0, 10, |_| Complex64::ONE);
        assert_eq!(empty.plain, Complex64::ZERO);
    }
}
