//! Closed-form analytics for the over-the-air vote `y = Σ ρ_k·s_k + v`.
//!
//! With `P[s_k = +1] = p_k` and `v ~ N(0, σ²)`:
//!
//! * `E[y] = Σ ρ_k (2p_k − 1)`
//! * `τ² = Σ ρ_k² + σ²` is a sub-Gaussian variance proxy for `y − E[y]`,
//!   which gives the failure bound `P[y < 0] ≤ exp(−E[y]² / (2τ²))`
//! * the detection SNR is `E[y]²/τ²`, and dividing out its value on an ideal
//!   channel, `(2p − 1)²·K`, leaves the normalized detection SNR
//!   `(1/K)·(Σρ)² / (Σρ² + σ²)`, which depends on the channels alone and
//!   reads as the fraction of users that effectively take part in the vote.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::channel::CellConfig;
use crate::error::{domain, Error, Result};
use crate::special::normal_cdf;

/// Largest population [`exact_failure_probability`] will enumerate.
pub const EXACT_MAX_USERS: usize = 24;

/// Moments and SNR figures of the received statistic for one gain vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionStats {
    pub mean_y: f64,
    pub tau_sq: f64,
    pub var_y: f64,
    pub snr_d: f64,
    pub nsnr: f64,
    pub chernoff_bound: f64,
}

fn check_gains(gains: &[f64]) -> Result<()> {
    if gains.is_empty() {
        return Err(domain("gain vector is empty"));
    }
    if let Some(g) = gains.iter().find(|g| !(g.is_finite() && **g >= 0.0)) {
        return Err(domain(format!("channel gains must be finite and nonnegative, got {g}")));
    }
    Ok(())
}

fn check_probs(p: &[f64], len: usize) -> Result<()> {
    if p.len() != len {
        return Err(domain(format!("{len} gains but {} success probabilities", p.len())));
    }
    if let Some(q) = p.iter().find(|q| !(0.0..=1.0).contains(*q)) {
        return Err(domain(format!("success probability must lie in [0, 1], got {q}")));
    }
    Ok(())
}

fn check_noise(noise_var: f64) -> Result<()> {
    if !(noise_var.is_finite() && noise_var >= 0.0) {
        return Err(domain(format!("noise variance must be finite and nonnegative, got {noise_var}")));
    }
    Ok(())
}

/// Normalized detection SNR `(1/K)·(Σρ)² / (Σρ² + σ²)`; zero when both the
/// gains and the noise vanish.
///
/// The value lies in `[0, 1]` and is exactly 1 for equal nonzero gains
/// without noise.
pub fn normalized_snr(gains: &[f64], noise_var: f64) -> f64 {
    if noise_var == 0.0 && gains.first().is_some_and(|&g| g > 0.0 && gains.iter().all(|&x| x == g)) {
        return 1.0;
    }
    let (l1, l2sq) = gains
        .iter()
        .fold((0.0, 0.0), |(a, b), &g| (a + g, b + g * g));
    let denom = l2sq + noise_var;
    if denom > 0.0 {
        (l1 * l1 / (gains.len() as f64 * denom)).min(1.0)
    } else {
        0.0
    }
}

impl DetectionStats {
    /// Evaluates the statistics of `y` for given gains, per-user success
    /// probabilities and noise variance.
    pub fn compute(gains: &[f64], p: &[f64], noise_var: f64) -> Result<Self> {
        check_gains(gains)?;
        check_probs(p, gains.len())?;
        check_noise(noise_var)?;
        let mut mean_y = 0.0;
        let mut l2sq = 0.0;
        let mut spread = 0.0;
        for (&g, &pk) in gains.iter().zip(p) {
            mean_y += g * (2.0 * pk - 1.0);
            l2sq += g * g;
            spread += 4.0 * g * g * pk * (1.0 - pk);
        }
        let tau_sq = l2sq + noise_var;
        let var_y = spread + noise_var;
        let snr_d = if tau_sq > 0.0 { mean_y * mean_y / tau_sq } else { 0.0 };
        let mut stats = DetectionStats {
            mean_y,
            tau_sq,
            var_y,
            snr_d,
            nsnr: normalized_snr(gains, noise_var),
            chernoff_bound: 1.0,
        };
        stats.chernoff_bound = chernoff_failure_bound(&stats);
        Ok(stats)
    }

    /// Same as [`DetectionStats::compute`] with every user sharing `p_loc`.
    pub fn with_common_p(gains: &[f64], p_loc: f64, noise_var: f64) -> Result<Self> {
        DetectionStats::compute(gains, &vec![p_loc; gains.len()], noise_var)
    }
}

/// Sub-Gaussian upper bound `exp(−E[y]² / (2τ²))` on `P[y < 0]`.
///
/// The bound only holds for `E[y] > 0`; for `E[y] ≤ 0` this returns the
/// vacuous value 1.
pub fn chernoff_failure_bound(stats: &DetectionStats) -> f64 {
    if stats.mean_y <= 0.0 || stats.tau_sq <= 0.0 {
        return 1.0;
    }
    (-stats.mean_y * stats.mean_y / (2.0 * stats.tau_sq)).exp()
}

/// Exact `P[y < 0]` by enumerating all `2^K` vote patterns.
///
/// With noise each pattern contributes `P(pattern)·Φ(−Σρs/σ)`. Without noise
/// the Gaussian term becomes an indicator, and an exactly balanced sum
/// (within `1e−12` of the gain scale) counts as half a failure, matching the
/// fair-coin tie rule of the decoder.
pub fn exact_failure_probability(gains: &[f64], p: &[f64], noise_var: f64) -> Result<f64> {
    check_gains(gains)?;
    check_probs(p, gains.len())?;
    check_noise(noise_var)?;
    if gains.len() > EXACT_MAX_USERS {
        return Err(Error::Capacity {
            what: "exact failure enumeration (users)",
            requested: gains.len() as u128,
            limit: EXACT_MAX_USERS as u128,
        });
    }
    let q = if noise_var > 0.0 {
        let sigma = noise_var.sqrt();
        enumerate(gains, p, &mut |sum| normal_cdf(-sum / sigma))
    } else if gains.len() > 12 {
        noiseless_meet_in_middle(gains, p)
    } else {
        let tol = tie_tolerance(gains);
        enumerate(gains, p, &mut |sum| noiseless_loss(sum, tol))
    };
    Ok(q.clamp(0.0, 1.0))
}

fn tie_tolerance(gains: &[f64]) -> f64 {
    1e-12 * gains.iter().sum::<f64>().max(f64::MIN_POSITIVE)
}

#[inline]
fn noiseless_loss(sum: f64, tol: f64) -> f64 {
    if sum < -tol {
        1.0
    } else if sum <= tol {
        0.5
    } else {
        0.0
    }
}

/// Depth-first sum over vote patterns, skipping zero-probability branches.
fn enumerate(gains: &[f64], p: &[f64], loss: &mut dyn FnMut(f64) -> f64) -> f64 {
    fn walk(
        gains: &[f64],
        p: &[f64],
        sum: f64,
        mass: f64,
        loss: &mut dyn FnMut(f64) -> f64,
    ) -> f64 {
        match gains.split_first() {
            None => mass * loss(sum),
            Some((&g, rest)) => {
                let pk = p[0];
                let mut acc = 0.0;
                if pk > 0.0 {
                    acc += walk(rest, &p[1..], sum + g, mass * pk, loss);
                }
                if pk < 1.0 {
                    acc += walk(rest, &p[1..], sum - g, mass * (1.0 - pk), loss);
                }
                acc
            }
        }
    }
    walk(gains, p, 0.0, 1.0, loss)
}

/// All partial sums of a half population with their probabilities.
fn half_sums(gains: &[f64], p: &[f64]) -> Vec<(f64, f64)> {
    let mut out = vec![(0.0, 1.0)];
    for (&g, &pk) in gains.iter().zip(p) {
        let mut next = Vec::with_capacity(out.len() * 2);
        for &(s, m) in &out {
            if pk > 0.0 {
                next.push((s + g, m * pk));
            }
            if pk < 1.0 {
                next.push((s - g, m * (1.0 - pk)));
            }
        }
        out = next;
    }
    out
}

/// Noise-free enumeration in `O(2^(K/2)·K)`: split the users in two halves,
/// sort one half's sums and look up, for each sum of the other half, the
/// probability mass that makes the total negative or tied.
fn noiseless_meet_in_middle(gains: &[f64], p: &[f64]) -> f64 {
    let tol = tie_tolerance(gains);
    let mid = gains.len() / 2;
    let left = half_sums(&gains[..mid], &p[..mid]);
    let mut right = half_sums(&gains[mid..], &p[mid..]);
    right.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut cumulative = Vec::with_capacity(right.len() + 1);
    cumulative.push(0.0);
    let mut run = 0.0;
    for &(_, m) in &right {
        run += m;
        cumulative.push(run);
    }
    let mut q = 0.0;
    for &(a, ma) in &left {
        // right sums below −a − tol lose outright; within ±tol of −a tie
        let lo = right.partition_point(|&(b, _)| b < -a - tol);
        let hi = right.partition_point(|&(b, _)| b <= -a + tol);
        q += ma * (cumulative[lo] + 0.5 * (cumulative[hi] - cumulative[lo]));
    }
    q
}

/// `E[√P_L(r)]` and `E[P_L(r)]` for a user placed uniformly in the cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathLossMoments {
    pub sqrt_mean: f64,
    pub mean: f64,
}

impl PathLossMoments {
    /// Closed-form moments for path-loss exponent `alpha` and `ratio = R/r0`.
    ///
    /// `E[P_L^γ] = x² + 2(x^e − x²)/(2 − e)` with `x = r0/R` and `e = αγ`.
    /// At `e = 2` the second term has a removable singularity whose limit is
    /// `−2x² ln x`; it is evaluated through `expm1` so values of α near 2 and
    /// near 4 stay accurate.
    pub fn new(alpha: f64, ratio: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(domain(format!("path-loss exponent must be positive, got {alpha}")));
        }
        if !(ratio.is_finite() && ratio >= 1.0) {
            return Err(domain(format!("R/r0 must be at least 1, got {ratio}")));
        }
        Ok(PathLossMoments {
            sqrt_mean: power_moment(alpha / 2.0, ratio),
            mean: power_moment(alpha, ratio),
        })
    }

    pub fn of_cell(cfg: &CellConfig) -> Self {
        PathLossMoments::new(cfg.alpha(), cfg.ratio()).expect("a valid cell has valid moments")
    }

    /// Normalized SNR in the many-user limit, with the noise term scaled
    /// down by the user count: `(π/4)·E[√P_L]² / (E[P_L] + σ²/K)`.
    pub fn nsnr(&self, noise_var: f64, users: usize) -> f64 {
        let noise = if users == 0 { f64::INFINITY } else { noise_var / users as f64 };
        PI / 4.0 * self.sqrt_mean * self.sqrt_mean / (self.mean + noise)
    }
}

fn power_moment(exponent: f64, ratio: f64) -> f64 {
    if ratio <= 1.0 {
        return 1.0;
    }
    let x = ratio.recip();
    let ln_x = x.ln();
    let t = (exponent - 2.0) * ln_x;
    let expm1_over_t = if t.abs() < 1e-8 { 1.0 + 0.5 * t } else { t.exp_m1() / t };
    x * x - 2.0 * x * x * ln_x * expm1_over_t
}

/// Large-`K` normalized SNR of a cell with `users` users.
pub fn nsnr_large_k(cfg: &CellConfig, users: usize) -> f64 {
    PathLossMoments::of_cell(cfg).nsnr(cfg.noise_var(), users)
}

/// Large-`K` normalized SNR with the noise term dropped.
pub fn nsnr_large_k_noise_free(alpha: f64, ratio: f64) -> Result<f64> {
    Ok(PathLossMoments::new(alpha, ratio)?.nsnr(0.0, usize::MAX))
}

/// Normalized SNR of the two-hop cluster scheme for the selected relay
/// gains (one per cluster, zero for a silent cluster):
/// `(1/C)·(Σρ_c)² / (Σρ_c² + K_C·(2p − 1)²·σ²)`.
///
/// Defined as 0 when every selected gain is zero.
pub fn cluster_nsnr(relay_gains: &[f64], cluster_size: usize, p_loc: f64, noise_var: f64) -> f64 {
    let (l1, l2sq) = relay_gains
        .iter()
        .fold((0.0, 0.0), |(a, b), &g| (a + g, b + g * g));
    if l1 <= 0.0 {
        return 0.0;
    }
    let bias = 2.0 * p_loc - 1.0;
    let denom = l2sq + cluster_size as f64 * bias * bias * noise_var;
    l1 * l1 / (relay_gains.len() as f64 * denom)
}

/// [`cluster_nsnr`] with the noise term dropped; this is the relay
/// selection objective.
pub fn cluster_nsnr_noise_free(relay_gains: &[f64]) -> f64 {
    cluster_nsnr(relay_gains, 0, 0.5, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn detection_stats_worked_example() {
        let s = DetectionStats::compute(&[1.0, 1.0], &[0.75, 0.75], 0.5).unwrap();
        assert!(close(s.mean_y, 1.0, 1e-15));
        assert!(close(s.tau_sq, 2.5, 1e-15));
        assert!(close(s.snr_d, 0.4, 1e-15));
        assert!(close(s.chernoff_bound, (-0.2f64).exp(), 1e-15));
        assert!(close(s.nsnr, 0.8, 1e-15));
        assert!(close(s.var_y, 4.0 * 2.0 * 0.75 * 0.25 + 0.5, 1e-15));
    }

    #[test]
    fn nsnr_equality_and_silent_user() {
        let s = DetectionStats::with_common_p(&[1.0, 1.0, 1.0], 0.6, 0.0).unwrap();
        assert_eq!(s.nsnr, 1.0);
        let s = DetectionStats::with_common_p(&[1.0, 0.0], 0.6, 0.0).unwrap();
        assert_eq!(s.nsnr, 0.5);
        let s = DetectionStats::with_common_p(&[0.0, 0.0], 0.6, 0.0).unwrap();
        assert_eq!(s.nsnr, 0.0);
        assert_eq!(s.chernoff_bound, 1.0);
    }

    #[test]
    fn detection_stats_errors() {
        assert!(DetectionStats::compute(&[], &[], 0.0).is_err());
        assert!(DetectionStats::compute(&[1.0], &[0.5, 0.5], 0.0).is_err());
        assert!(DetectionStats::compute(&[1.0], &[1.5], 0.0).is_err());
        assert!(DetectionStats::compute(&[-1.0], &[0.5], 0.0).is_err());
        assert!(DetectionStats::compute(&[1.0], &[0.5], -0.1).is_err());
    }

    #[test]
    fn vacuous_bound() {
        let s = DetectionStats::compute(&[1.0, 1.0], &[0.5, 0.5], 1.0).unwrap();
        assert_eq!(s.mean_y, 0.0);
        assert_eq!(chernoff_failure_bound(&s), 1.0);
        let s = DetectionStats::compute(&[1.0], &[0.2], 1.0).unwrap();
        assert_eq!(chernoff_failure_bound(&s), 1.0);
    }

    #[test]
    fn exact_single_user_is_gaussian_tail() {
        let q = exact_failure_probability(&[1.0], &[1.0], 1.0).unwrap();
        assert!(close(q, 0.158_655_253_931_457, 1e-12));
    }

    #[test]
    fn exact_noiseless_ties_count_half() {
        let q = exact_failure_probability(&[1.0, 1.0], &[0.5, 0.5], 0.0).unwrap();
        assert!(close(q, 0.5, 1e-15));
        let q = exact_failure_probability(&[2.0, 1.0, 1.0], &[1.0, 0.0, 0.0], 0.0).unwrap();
        assert!(close(q, 0.5, 1e-15));
    }

    #[test]
    fn exact_capacity_guard() {
        let g = vec![1.0; EXACT_MAX_USERS + 1];
        let p = vec![0.6; EXACT_MAX_USERS + 1];
        assert!(matches!(
            exact_failure_probability(&g, &p, 0.0),
            Err(Error::Capacity { .. })
        ));
    }

    #[test]
    fn meet_in_middle_agrees_with_direct_enumeration() {
        let gains: Vec<f64> = (0..16).map(|i| 0.1 + ((i * 7919) % 13) as f64 * 0.37).collect();
        let p: Vec<f64> = (0..16).map(|i| 0.5 + (i % 5) as f64 * 0.1).collect();
        let tol = tie_tolerance(&gains);
        let direct = enumerate(&gains, &p, &mut |s| noiseless_loss(s, tol));
        let mitm = noiseless_meet_in_middle(&gains, &p);
        assert!(close(direct, mitm, 1e-13), "{direct} vs {mitm}");
        // integer gains produce many exact ties
        let ints = vec![1.0; 14];
        let p = vec![0.55; 14];
        let direct = enumerate(&ints, &p, &mut |s| noiseless_loss(s, 1e-9));
        let mitm = noiseless_meet_in_middle(&ints, &p);
        assert!(close(direct, mitm, 1e-13));
        assert!(close(direct, crate::special::majority_failure(14, 0.55), 1e-13));
    }

    #[test]
    fn large_k_reference_cell() {
        let v = nsnr_large_k_noise_free(3.0, 30.0).unwrap();
        assert!(close(v, 0.106, 0.001), "{v}");
        let m = PathLossMoments::new(3.0, 1.0).unwrap();
        assert_eq!((m.sqrt_mean, m.mean), (1.0, 1.0));
        assert!(close(nsnr_large_k_noise_free(3.0, 1.0).unwrap(), PI / 4.0, 1e-15));
    }

    #[test]
    fn moments_match_generic_formula_away_from_singularities() {
        let (alpha, ratio) = (3.0f64, 30.0f64);
        let x = ratio.recip();
        let sqrt_mean = -alpha / (4.0 - alpha) * x * x + 4.0 / (4.0 - alpha) * x.powf(alpha / 2.0);
        let mean = -alpha / (2.0 - alpha) * x * x + 2.0 / (2.0 - alpha) * x.powf(alpha);
        let m = PathLossMoments::new(alpha, ratio).unwrap();
        assert!(close(m.sqrt_mean, sqrt_mean, 1e-15));
        assert!(close(m.mean, mean, 1e-15));
    }

    #[test]
    fn moments_are_continuous_through_removable_singularities() {
        for alpha in [2.0, 4.0] {
            let at = PathLossMoments::new(alpha, 30.0).unwrap();
            let below = PathLossMoments::new(alpha - 1e-6, 30.0).unwrap();
            let above = PathLossMoments::new(alpha + 1e-6, 30.0).unwrap();
            for (a, b, c) in [
                (at.mean, below.mean, above.mean),
                (at.sqrt_mean, below.sqrt_mean, above.sqrt_mean),
            ] {
                assert!(a.is_finite());
                assert!(close(a, b, 1e-5 * a) && close(a, c, 1e-5 * a));
            }
        }
        // the logarithmic limit itself
        let x: f64 = 1.0 / 30.0;
        let at4 = PathLossMoments::new(4.0, 30.0).unwrap();
        assert!(close(at4.sqrt_mean, x * x - 2.0 * x * x * x.ln(), 1e-15));
    }

    #[test]
    fn cluster_nsnr_examples() {
        assert_eq!(cluster_nsnr(&[1.0; 5], 9, 0.55, 0.0), 1.0);
        assert!(close(cluster_nsnr_noise_free(&[10.0, 1.0, 1.0]), 144.0 / 306.0, 1e-15));
        assert!(close(cluster_nsnr_noise_free(&[0.0, 1.0, 1.0]), 4.0 / 6.0, 1e-15));
        assert_eq!(cluster_nsnr_noise_free(&[0.0, 0.0]), 0.0);
        let noisy = cluster_nsnr(&[1.0, 1.0], 9, 0.55, 2.0);
        assert!(close(noisy, 0.5 * 4.0 / (2.0 + 9.0 * 0.01 * 2.0), 1e-15));
    }
}
