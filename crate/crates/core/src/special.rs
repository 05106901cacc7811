//! Scalar special functions: the Gaussian tail and binomial majority sums.

use std::f64::consts::SQRT_2;

/// Standard normal CDF, `Φ(x) = erfc(−x/√2)/2`.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

/// `ln C(n, k)`.
pub fn ln_choose(n: u64, k: u64) -> f64 {
    debug_assert!(k <= n);
    let (n, k) = (n as f64, k as f64);
    libm::lgamma(n + 1.0) - libm::lgamma(k + 1.0) - libm::lgamma(n - k + 1.0)
}

/// `P[Bin(n, p) = k]`.
pub fn binomial_pmf(n: u64, k: u64, p: f64) -> f64 {
    if k > n {
        return 0.0;
    }
    if p <= 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    if p >= 1.0 {
        return if k == n { 1.0 } else { 0.0 };
    }
    let ln = ln_choose(n, k) + k as f64 * p.ln() + (n - k) as f64 * (-p).ln_1p();
    ln.exp()
}

/// Failure probability of an error-free majority vote among `n` i.i.d. voters
/// that are each correct with probability `p`.
///
/// A tied vote is decided by a fair coin and counts as half a failure. With no
/// voters the decision is a pure coin flip.
pub fn majority_failure(n: u64, p: f64) -> f64 {
    if n == 0 {
        return 0.5;
    }
    let mut q = 0.0;
    // correct votes k with 2k < n fail outright; 2k == n is a tie
    for k in 0..=n / 2 {
        let mass = binomial_pmf(n, k, p);
        if 2 * k < n {
            q += mass;
        } else {
            q += 0.5 * mass;
        }
    }
    q.clamp(0.0, 1.0)
}
