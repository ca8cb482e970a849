//! Thin wrappers around `rustfft` with a per-thread planner cache.

use std::cell::RefCell;

use num_complex::Complex64;
use rustfft::FftPlanner;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// In-place forward DFT, `X[m] = sum_n x[n] exp(-j 2 pi m n / N)`.
pub fn forward(buf: &mut [Complex64]) {
    if buf.is_empty() {
        return;
    }
    let fft = PLANNER.with(|p| p.borrow_mut().plan_fft_forward(buf.len()));
    fft.process(buf);
}

/// In-place unnormalised inverse DFT, `x[n] = sum_m X[m] exp(+j 2 pi m n / N)`.
pub fn inverse(buf: &mut [Complex64]) {
    if buf.is_empty() {
        return;
    }
    let fft = PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(buf.len()));
    fft.process(buf);
}

/// Maps a signed bin index onto `0..n`.
#[inline]
pub fn wrap_bin(m: i64, n: usize) -> usize {
    m.rem_euclid(n as i64) as usize
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn forward_matches_direct_sum() {
        let x: Vec<Complex64> = (0..12).map(|n| Complex64::new((n as f64).sin(), (0.3 * n as f64).cos())).collect();
        let mut fast = x.clone();
        forward(&mut fast);
        for (m, got) in fast.iter().enumerate() {
            let want: Complex64 = x
                .iter()
                .enumerate()
                .map(|(n, v)| v * Complex64::from_polar(1.0, -2.0 * PI * (m * n) as f64 / 12.0))
                .sum();
            assert!((got - want).norm() < 1e-12);
        }
    }

    #[test]
    fn wrap_negative_bins() {
        assert_eq!(wrap_bin(-1, 8), 7);
        assert_eq!(wrap_bin(9, 8), 1);
        assert_eq!(wrap_bin(0, 8), 0);
    }
}
