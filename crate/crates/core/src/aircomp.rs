//! One over-the-air aggregation of a vote vector.
//!
//! After phase correction each user's signal arrives with the nonnegative real
//! amplitude `ρ_k`, so the fusion center observes `y = Σ ρ_k·s_k + v` with
//! `v ~ N(0, σ²)` and decodes `sign(y)`. The imaginary dimension carries only
//! noise and is not simulated.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{domain, Result};
use crate::rng::MasterSeed;
use crate::voting::{majority_vote, sign, Sign, VoteVector};

/// Superposition `Σ ρ_k·s_k` plus one Gaussian noise sample.
///
/// Noise is drawn only when `noise_var > 0`.
#[inline]
pub(crate) fn received<R: Rng + ?Sized>(
    votes: &[Sign],
    gains: &[f64],
    noise_var: f64,
    rng: &mut R,
) -> f64 {
    let signal: f64 = votes
        .iter()
        .zip(gains)
        .map(|(s, g)| s.as_f64() * g)
        .sum();
    if noise_var > 0.0 {
        let v: f64 = rng.sample(StandardNormal);
        signal + noise_var.sqrt() * v
    } else {
        signal
    }
}

fn check_noise(noise_var: f64) -> Result<()> {
    if noise_var.is_nan() || noise_var < 0.0 {
        return Err(domain(format!("noise variance must be nonnegative, got {noise_var}")));
    }
    Ok(())
}

/// Phase-corrected, full-power over-the-air vote: `sign(Σ ρ_k·s_k + v)`.
pub fn aggregate_aircomp_pc<R: Rng + ?Sized>(
    votes: &VoteVector,
    gains: &[f64],
    noise_var: f64,
    rng: &mut R,
) -> Result<Sign> {
    if votes.len() != gains.len() {
        return Err(domain(format!(
            "{} votes but {} channel gains",
            votes.len(),
            gains.len()
        )));
    }
    check_noise(noise_var)?;
    let y = received(votes.as_slice(), gains, noise_var, rng);
    sign(y, rng)
}

/// Error-free majority vote, the baseline every wireless scheme is compared to.
pub fn aggregate_ideal<R: Rng + ?Sized>(votes: &VoteVector, rng: &mut R) -> Sign {
    majority_vote(votes, rng)
}

/// Aggregates `d` components at once. Component `i` uses the stream
/// `seed.stream(&[i])`, so the result equals `d` scalar calls with those
/// streams regardless of how the work is scheduled.
pub fn aggregate_aircomp_pc_batch(
    votes: &[VoteVector],
    gains: &[Vec<f64>],
    noise_var: f64,
    seed: MasterSeed,
) -> Result<Vec<Sign>> {
    if votes.len() != gains.len() {
        return Err(domain(format!(
            "{} vote vectors but {} gain vectors",
            votes.len(),
            gains.len()
        )));
    }
    votes
        .par_iter()
        .zip(gains.par_iter())
        .enumerate()
        .map(|(i, (v, g))| aggregate_aircomp_pc(v, g, noise_var, &mut seed.stream(&[i as u64])))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::voting::{draw_votes, LocalSuccessModel};

    fn votes(v: &[i32]) -> VoteVector {
        VoteVector::from_values(v).unwrap()
    }

    #[test]
    fn examples() {
        let mut rng = MasterSeed(0).stream(&[]);
        let d = aggregate_aircomp_pc(&votes(&[1, 1, 1]), &[0.1, 0.0, 2.0], 0.0, &mut rng).unwrap();
        assert_eq!(d, Sign::Pos);
        let d = aggregate_aircomp_pc(&votes(&[1, -1, -1]), &[10.0, 1.0, 1.0], 0.0, &mut rng).unwrap();
        assert_eq!(d, Sign::Pos);
        assert_eq!(aggregate_ideal(&votes(&[1, 1, -1]), &mut rng), Sign::Pos);
        assert_eq!(aggregate_ideal(&votes(&[-1, -1, -1, -1]), &mut rng), Sign::Neg);
    }

    #[test]
    fn errors() {
        let mut rng = MasterSeed(0).stream(&[]);
        assert!(aggregate_aircomp_pc(&votes(&[1, 1]), &[1.0], 0.0, &mut rng).is_err());
        assert!(aggregate_aircomp_pc(&votes(&[1]), &[1.0], -1.0, &mut rng).is_err());
    }

    #[test]
    fn unit_gains_noiseless_equals_majority() {
        let model = LocalSuccessModel::new(0.5).unwrap();
        for t in 0..10_000u64 {
            let k = 1 + (t % 12) as usize;
            let v = draw_votes(&mut MasterSeed(11).stream(&[t]), k, model);
            let ones = vec![1.0; k];
            let air = aggregate_aircomp_pc(&v, &ones, 0.0, &mut MasterSeed(12).stream(&[t])).unwrap();
            let ideal = aggregate_ideal(&v, &mut MasterSeed(12).stream(&[t]));
            assert_eq!(air, ideal, "trial {t}");
        }
    }

    #[test]
    fn batch_matches_scalar_calls() {
        let model = LocalSuccessModel::new(0.6).unwrap();
        let seed = MasterSeed(99);
        let d = 257;
        let vs: Vec<_> = (0..d)
            .map(|i| draw_votes(&mut MasterSeed(1).stream(&[i]), 9, model))
            .collect();
        let gs: Vec<Vec<f64>> = (0..d)
            .map(|i| (0..9).map(|k| ((i * 9 + k) % 7) as f64 * 0.3).collect())
            .collect();
        let batch = aggregate_aircomp_pc_batch(&vs, &gs, 0.4, seed).unwrap();
        for i in 0..d as usize {
            let scalar =
                aggregate_aircomp_pc(&vs[i], &gs[i], 0.4, &mut seed.stream(&[i as u64])).unwrap();
            assert_eq!(batch[i], scalar);
        }
    }
}
