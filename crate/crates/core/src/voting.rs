//! Gradient-sign votes and the error-free majority vote.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// A binary vote.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(i8)]
pub enum Sign {
    Neg = -1,
    Pos = 1,
}

impl Sign {
    #[inline]
    pub fn value(self) -> i32 {
        self as i8 as i32
    }

    #[inline]
    pub fn as_f64(self) -> f64 {
        f64::from(self as i8)
    }

    /// A fair coin.
    #[inline]
    pub fn coin<R: Rng + ?Sized>(rng: &mut R) -> Sign {
        if rng.random::<bool>() {
            Sign::Pos
        } else {
            Sign::Neg
        }
    }

    /// Sign of an integer vote tally; zero is a fair coin.
    #[inline]
    pub fn of_tally<R: Rng + ?Sized>(tally: i64, rng: &mut R) -> Sign {
        match tally.cmp(&0) {
            std::cmp::Ordering::Greater => Sign::Pos,
            std::cmp::Ordering::Less => Sign::Neg,
            std::cmp::Ordering::Equal => Sign::coin(rng),
        }
    }
}

impl std::ops::Neg for Sign {
    type Output = Sign;

    fn neg(self) -> Sign {
        match self {
            Sign::Pos => Sign::Neg,
            Sign::Neg => Sign::Pos,
        }
    }
}

/// `sign(x)` with a fair-coin tie rule at zero. The rng is consulted only
/// when `x == 0`.
pub fn sign<R: Rng + ?Sized>(x: f64, rng: &mut R) -> Result<Sign> {
    if x > 0.0 {
        Ok(Sign::Pos)
    } else if x < 0.0 {
        Ok(Sign::Neg)
    } else if x == 0.0 {
        Ok(Sign::coin(rng))
    } else {
        Err(domain("sign of NaN"))
    }
}

/// The ±1 votes of a population of voters for one gradient component.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct VoteVector(Vec<Sign>);

impl VoteVector {
    pub fn new(votes: Vec<Sign>) -> Self {
        VoteVector(votes)
    }

    /// Builds votes from ±1 integers.
    pub fn from_values(values: &[i32]) -> Result<Self> {
        values
            .iter()
            .map(|&v| match v {
                1 => Ok(Sign::Pos),
                -1 => Ok(Sign::Neg),
                other => Err(domain(format!("vote must be ±1, got {other}"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(VoteVector)
    }

    pub fn as_slice(&self) -> &[Sign] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Number of `+1` votes minus number of `−1` votes.
    pub fn tally(&self) -> i64 {
        self.0.iter().map(|s| i64::from(s.value())).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = Sign> + '_ {
        self.0.iter().copied()
    }

    pub fn negated(&self) -> VoteVector {
        VoteVector(self.0.iter().map(|&s| -s).collect())
    }

    pub(crate) fn clear(&mut self) {
        self.0.clear();
    }

    pub(crate) fn push(&mut self, s: Sign) {
        self.0.push(s);
    }
}

impl FromIterator<Sign> for VoteVector {
    fn from_iter<I: IntoIterator<Item = Sign>>(iter: I) -> Self {
        VoteVector(iter.into_iter().collect())
    }
}

/// Probability that one user's local gradient sign is correct.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalSuccessModel {
    p_loc: f64,
}

impl LocalSuccessModel {
    pub fn new(p_loc: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p_loc) {
            return Err(domain(format!("p_loc must lie in [0, 1], got {p_loc}")));
        }
        Ok(LocalSuccessModel { p_loc })
    }

    pub fn p_loc(&self) -> f64 {
        self.p_loc
    }

    #[inline]
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Sign {
        // the true sign is taken to be +1
        if rng.random::<f64>() < self.p_loc {
            Sign::Pos
        } else {
            Sign::Neg
        }
    }
}

/// Draws `users` i.i.d. votes, each `+1` with probability `p_loc`.
pub fn draw_votes<R: Rng + ?Sized>(
    rng: &mut R,
    users: usize,
    model: LocalSuccessModel,
) -> VoteVector {
    (0..users).map(|_| model.draw(rng)).collect()
}

pub(crate) fn draw_votes_into<R: Rng + ?Sized>(
    rng: &mut R,
    users: usize,
    model: LocalSuccessModel,
    out: &mut VoteVector,
) {
    out.clear();
    for _ in 0..users {
        out.push(model.draw(rng));
    }
}

/// `sign(Σ votes)`; a tie (including an empty vote) is a fair coin.
pub fn majority_vote<R: Rng + ?Sized>(votes: &VoteVector, rng: &mut R) -> Sign {
    Sign::of_tally(votes.tally(), rng)
}
