//! Cluster-based cooperation and relay selection.
//!
//! Users are grouped into `C` clusters of `K_C` users. Inside a cluster the
//! votes are fused perfectly by majority, and one of the cluster's `L`
//! relays (or none) forwards the fused vote to the fusion center over the
//! phase-corrected over-the-air channel. Picking one gain per cluster from
//! `H_c ∪ {0}` to maximize the noise-free normalized SNR
//!
//! ```text
//! (1/C) · (Σ ρ_c)² / Σ ρ_c²
//! ```
//!
//! is a discrete problem with `(L+1)^C` candidates. Four solvers are
//! provided: the strongest relay per cluster, coordinate ascent with either
//! the closed-form surrogate step or an exact step, and brute force.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::cluster_nsnr_noise_free;
use crate::channel::{sample_distance, sample_rayleigh_amplitude, CellConfig};
use crate::error::{domain, Error, Result};
use crate::voting::{majority_vote, Sign, VoteVector};

/// Largest candidate count [`select_exhaustive`] will enumerate.
pub const EXHAUSTIVE_MAX_CANDIDATES: u128 = 10_000_000;

/// Relative tolerance under which two objective values are considered equal.
const OBJECTIVE_EPS: f64 = 1e-12;

/// Partition of `K = C·K_C` users into equal clusters with `L` relays each.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterLayout {
    clusters: usize,
    cluster_size: usize,
    relays: usize,
}

impl ClusterLayout {
    pub fn new(clusters: usize, cluster_size: usize, relays: usize) -> Result<Self> {
        if clusters == 0 || cluster_size == 0 {
            return Err(domain("cluster count and cluster size must be positive"));
        }
        if relays == 0 || relays > cluster_size {
            return Err(domain(format!(
                "relays per cluster must lie in 1..={cluster_size}, got {relays}"
            )));
        }
        Ok(ClusterLayout {
            clusters,
            cluster_size,
            relays,
        })
    }

    /// Layout for `users` users split into clusters of `cluster_size`.
    pub fn from_users(users: usize, cluster_size: usize, relays: usize) -> Result<Self> {
        if cluster_size == 0 || users % cluster_size != 0 {
            return Err(domain(format!(
                "{users} users cannot be split into clusters of {cluster_size}"
            )));
        }
        ClusterLayout::new(users / cluster_size, cluster_size, relays)
    }

    pub fn clusters(&self) -> usize {
        self.clusters
    }

    pub fn cluster_size(&self) -> usize {
        self.cluster_size
    }

    pub fn relays(&self) -> usize {
        self.relays
    }

    pub fn users(&self) -> usize {
        self.clusters * self.cluster_size
    }
}

/// Relay-to-fusion-center gains `H_c`, `L` per cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct RelayGains {
    sets: Vec<Vec<f64>>,
    relays: usize,
}

impl RelayGains {
    pub fn new(sets: Vec<Vec<f64>>) -> Result<Self> {
        let relays = sets.first().map_or(0, Vec::len);
        if relays == 0 {
            return Err(domain("need at least one cluster with at least one relay"));
        }
        if sets.iter().any(|s| s.len() != relays) {
            return Err(domain("every cluster must have the same number of relays"));
        }
        if let Some(g) = sets.iter().flatten().find(|g| !(g.is_finite() && **g >= 0.0)) {
            return Err(domain(format!("relay gains must be finite and nonnegative, got {g}")));
        }
        Ok(RelayGains { sets, relays })
    }

    pub fn clusters(&self) -> usize {
        self.sets.len()
    }

    pub fn relays(&self) -> usize {
        self.relays
    }

    pub fn set(&self, cluster: usize) -> &[f64] {
        &self.sets[cluster]
    }

    pub fn sets(&self) -> &[Vec<f64>] {
        &self.sets
    }

    /// Every gain multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        RelayGains::new(
            self.sets
                .iter()
                .map(|s| s.iter().map(|g| g * factor).collect())
                .collect(),
        )
    }

    fn value(&self, cluster: usize, pick: Option<usize>) -> f64 {
        pick.map_or(0.0, |l| self.sets[cluster][l])
    }
}

/// One gain per cluster, or silence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelaySelection {
    /// Index of the transmitting relay in each cluster, `None` if silent.
    pub picks: Vec<Option<usize>>,
    /// The selected gains (0 for silent clusters).
    pub chosen: Vec<f64>,
    /// Noise-free normalized SNR of the selection.
    pub objective: f64,
}

impl RelaySelection {
    fn from_picks(gains: &RelayGains, picks: Vec<Option<usize>>) -> Self {
        let chosen: Vec<f64> = picks
            .iter()
            .enumerate()
            .map(|(c, &p)| gains.value(c, p))
            .collect();
        let objective = cluster_nsnr_noise_free(&chosen);
        RelaySelection {
            picks,
            chosen,
            objective,
        }
    }

    pub fn active(&self) -> usize {
        self.picks.iter().filter(|p| p.is_some()).count()
    }
}

/// Draws one distance per cluster, shared by its relays, and an independent
/// Rayleigh fade per relay.
pub fn draw_relay_gains<R: Rng + ?Sized>(
    rng: &mut R,
    layout: &ClusterLayout,
    cfg: &CellConfig,
) -> RelayGains {
    let mut sets = Vec::with_capacity(layout.clusters());
    for _ in 0..layout.clusters() {
        let scale = cfg.path_loss_at(sample_distance(rng, cfg)).sqrt();
        sets.push(
            (0..layout.relays())
                .map(|_| scale * sample_rayleigh_amplitude(rng))
                .collect(),
        );
    }
    RelayGains {
        sets,
        relays: layout.relays(),
    }
}

/// In-cluster fusion: an exact majority vote with the fair-coin tie rule.
pub fn fuse_cluster<R: Rng + ?Sized>(votes: &VoteVector, rng: &mut R) -> Sign {
    majority_vote(votes, rng)
}

fn argmax_first(set: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (l, &g) in set.iter().enumerate() {
        if best.is_none_or(|b| g > set[b]) {
            best = Some(l);
        }
    }
    best
}

/// Strongest relay in every cluster.
pub fn select_strongest(gains: &RelayGains) -> RelaySelection {
    let picks = gains.sets.iter().map(|s| argmax_first(s)).collect();
    RelaySelection::from_picks(gains, picks)
}

/// How the coordinate-ascent solver updates one cluster.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GreedyStep {
    /// Pick the candidate whose `1/(ρ + a)` is closest to `a/(a² + b)`,
    /// where `a` and `b` are the sum and the sum of squares of the other
    /// clusters' gains. `a/(a² + b)` is `1/(ρ* + a)` for the unconstrained
    /// maximizer `ρ* = b/a`.
    ///
    /// With `t = 1/(ρ + a)` the objective is `1/((1 − a·t)² + b·t²)`, a
    /// function of `|t − a/(a² + b)|` alone, so apart from tie handling this
    /// ranks candidates exactly like [`GreedyStep::Exact`].
    Surrogate,
    /// Evaluate the objective at every candidate and keep the best. Never
    /// lowers the objective.
    Exact,
}

/// Outcome of a coordinate-ascent run.
#[derive(Debug, Clone, PartialEq)]
pub struct GreedyRun {
    pub selection: RelaySelection,
    /// Full sweeps over the clusters, including the final one that changed
    /// nothing.
    pub sweeps: usize,
    /// Objective after each single-cluster update, in order.
    pub trace: Vec<f64>,
}

/// Default sweep cap for [`select_greedy`].
pub fn default_sweep_cap(gains: &RelayGains) -> usize {
    64 * gains.clusters() * (gains.relays() + 1) + 64
}

/// Coordinate ascent started from the strongest-relay selection, sweeping
/// clusters in order until a sweep changes nothing.
pub fn select_greedy(gains: &RelayGains, step: GreedyStep) -> Result<RelaySelection> {
    select_greedy_traced(gains, step, default_sweep_cap(gains)).map(|run| run.selection)
}

/// [`select_greedy`] with an explicit sweep cap, returning the sweep count
/// and the per-update objective trace. Exceeding the cap is an error.
pub fn select_greedy_traced(
    gains: &RelayGains,
    step: GreedyStep,
    max_sweeps: usize,
) -> Result<GreedyRun> {
    let clusters = gains.clusters();
    let mut picks: Vec<Option<usize>> = gains.sets.iter().map(|s| argmax_first(s)).collect();
    let mut values: Vec<f64> = picks
        .iter()
        .enumerate()
        .map(|(c, &p)| gains.value(c, p))
        .collect();
    let mut trace = Vec::new();
    let mut sweeps = 0;
    loop {
        if sweeps == max_sweeps {
            return Err(Error::Capacity {
                what: "greedy relay selection sweeps",
                requested: max_sweeps as u128 + 1,
                limit: max_sweeps as u128,
            });
        }
        sweeps += 1;
        let mut changed = false;
        for c in 0..clusters {
            // recompute the leave-one-out sums from scratch to avoid drift
            let a: f64 = values
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != c)
                .map(|(_, v)| v)
                .sum();
            let b: f64 = values
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != c)
                .map(|(_, v)| v * v)
                .sum();
            let next = match step {
                GreedyStep::Exact => exact_step(gains.set(c), picks[c], a, b),
                GreedyStep::Surrogate => surrogate_step(gains.set(c), picks[c], a, b),
            };
            if next != picks[c] {
                changed = true;
                picks[c] = next;
                values[c] = gains.value(c, next);
            }
            trace.push(objective_from_sums(a + values[c], b + values[c] * values[c], clusters));
        }
        if !changed {
            break;
        }
    }
    Ok(GreedyRun {
        selection: RelaySelection::from_picks(gains, picks),
        sweeps,
        trace,
    })
}

fn objective_from_sums(sum: f64, sum_sq: f64, clusters: usize) -> f64 {
    if sum <= 0.0 {
        0.0
    } else {
        sum * sum / (clusters as f64 * sum_sq)
    }
}

/// Candidates of one cluster in a fixed order: every relay, then silence.
fn candidates(set: &[f64]) -> impl Iterator<Item = (Option<usize>, f64)> + '_ {
    set.iter()
        .enumerate()
        .map(|(l, &g)| (Some(l), g))
        .chain(std::iter::once((None, 0.0)))
}

fn exact_step(set: &[f64], current: Option<usize>, a: f64, b: f64) -> Option<usize> {
    // (ρ + a)² / (ρ² + b), the objective up to the constant 1/C
    let score = |rho: f64| {
        let s = rho + a;
        if s <= 0.0 {
            0.0
        } else {
            s * s / (rho * rho + b)
        }
    };
    let current_score = score(current.map_or(0.0, |l| set[l]));
    let mut best = (current, current_score);
    for (pick, rho) in candidates(set) {
        let s = score(rho);
        if s > best.1 * (1.0 + OBJECTIVE_EPS) {
            best = (pick, s);
        }
    }
    best.0
}

fn surrogate_step(set: &[f64], current: Option<usize>, a: f64, b: f64) -> Option<usize> {
    let target = if a > 0.0 { a / (a * a + b) } else { 0.0 };
    let distance = |rho: f64| {
        let s = rho + a;
        if s > 0.0 {
            (1.0 / s - target).abs()
        } else {
            f64::INFINITY
        }
    };
    let mut best: Option<(Option<usize>, f64)> = None;
    for (pick, rho) in candidates(set) {
        let d = distance(rho);
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((pick, d));
        }
    }
    let (pick, d) = best.expect("candidate list is never empty");
    // keep the current choice when it is among the minimizers
    let current_d = distance(current.map_or(0.0, |l| set[l]));
    if current_d <= d {
        current
    } else {
        pick
    }
}

/// Globally optimal selection by enumerating all `(L+1)^C` candidates.
///
/// Among selections whose objectives agree to within a relative `1e−12`,
/// the one with more transmitting relays wins, then the lexicographically
/// first in the order (relay 0, …, relay L−1, silent) per cluster.
pub fn select_exhaustive(gains: &RelayGains) -> Result<RelaySelection> {
    let clusters = gains.clusters();
    let options = gains.relays() + 1;
    let total = (options as u128)
        .checked_pow(clusters as u32)
        .filter(|&n| n <= EXHAUSTIVE_MAX_CANDIDATES)
        .ok_or(Error::Capacity {
            what: "exhaustive relay selection candidates",
            requested: (options as f64).powi(clusters as i32) as u128,
            limit: EXHAUSTIVE_MAX_CANDIDATES,
        })?;
    let silent = gains.relays();
    let mut digits = vec![0usize; clusters];
    let mut best_digits = digits.clone();
    let mut best = (f64::NEG_INFINITY, 0usize);
    for _ in 0..total {
        let (mut sum, mut sum_sq, mut active) = (0.0, 0.0, 0);
        for (c, &d) in digits.iter().enumerate() {
            if d != silent {
                let g = gains.sets[c][d];
                sum += g;
                sum_sq += g * g;
                active += 1;
            }
        }
        let obj = objective_from_sums(sum, sum_sq, clusters);
        let better = if obj > best.0 * (1.0 + OBJECTIVE_EPS) + f64::MIN_POSITIVE {
            true
        } else {
            obj >= best.0 * (1.0 - OBJECTIVE_EPS) && active > best.1
        };
        if better {
            best = (obj, active);
            best_digits.copy_from_slice(&digits);
        }
        // odometer, last cluster fastest
        for d in digits.iter_mut().rev() {
            *d += 1;
            if *d < options {
                break;
            }
            *d = 0;
        }
    }
    let picks = best_digits
        .into_iter()
        .map(|d| (d != silent).then_some(d))
        .collect();
    Ok(RelaySelection::from_picks(gains, picks))
}

/// Relay selection backend.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RelaySolver {
    Strongest,
    GreedySurrogate,
    GreedyExact,
    Exhaustive,
}

impl RelaySolver {
    pub const ALL: [RelaySolver; 4] = [
        RelaySolver::Strongest,
        RelaySolver::GreedySurrogate,
        RelaySolver::GreedyExact,
        RelaySolver::Exhaustive,
    ];

    pub fn solve(self, gains: &RelayGains) -> Result<RelaySelection> {
        match self {
            RelaySolver::Strongest => Ok(select_strongest(gains)),
            RelaySolver::GreedySurrogate => select_greedy(gains, GreedyStep::Surrogate),
            RelaySolver::GreedyExact => select_greedy(gains, GreedyStep::Exact),
            RelaySolver::Exhaustive => select_exhaustive(gains),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            RelaySolver::Strongest => "strongest",
            RelaySolver::GreedySurrogate => "greedy-surrogate",
            RelaySolver::GreedyExact => "greedy-exact",
            RelaySolver::Exhaustive => "exhaustive",
        }
    }
}

impl fmt::Display for RelaySolver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RelaySolver {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RelaySolver::ALL
            .into_iter()
            .find(|solver| solver.name() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown relay solver `{s}` (expected strongest, greedy-surrogate, greedy-exact or exhaustive)"
                ))
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gains(sets: &[&[f64]]) -> RelayGains {
        RelayGains::new(sets.iter().map(|s| s.to_vec()).collect()).unwrap()
    }

    #[test]
    fn layout_validation() {
        assert!(ClusterLayout::new(6, 9, 5).is_ok());
        assert!(ClusterLayout::new(6, 9, 10).is_err());
        assert!(ClusterLayout::new(6, 9, 0).is_err());
        assert!(ClusterLayout::from_users(54, 9, 1).unwrap().clusters() == 6);
        assert!(ClusterLayout::from_users(55, 9, 1).is_err());
    }

    #[test]
    fn relay_gains_validation() {
        assert!(RelayGains::new(vec![]).is_err());
        assert!(RelayGains::new(vec![vec![1.0], vec![1.0, 2.0]]).is_err());
        assert!(RelayGains::new(vec![vec![-1.0]]).is_err());
    }

    #[test]
    fn strongest_examples() {
        let s = select_strongest(&gains(&[&[10.0], &[1.0], &[1.0]]));
        assert_eq!(s.chosen, vec![10.0, 1.0, 1.0]);
        assert!((s.objective - 144.0 / 306.0).abs() < 1e-15);
        let s = select_strongest(&gains(&[&[1.0, 0.5], &[0.2, 1.0]]));
        assert_eq!(s.objective, 1.0);
        let s = select_strongest(&gains(&[&[3.0, 5.0]]));
        assert_eq!(s.chosen, vec![5.0]);
        assert_eq!(s.objective, 1.0);
    }

    #[test]
    fn greedy_examples() {
        for step in [GreedyStep::Exact, GreedyStep::Surrogate] {
            let s = select_greedy(&gains(&[&[10.0], &[1.0], &[1.0]]), step).unwrap();
            assert_eq!(s.chosen, vec![0.0, 1.0, 1.0], "{step:?}");
            assert!((s.objective - 2.0 / 3.0).abs() < 1e-15);
            let s = select_greedy(&gains(&[&[10.0], &[1.0]]), step).unwrap();
            assert_eq!(s.chosen, vec![10.0, 1.0]);
            assert!((s.objective - 121.0 / 202.0).abs() < 1e-15);
            let s = select_greedy(&gains(&[&[2.0, 2.0], &[2.0, 2.0], &[2.0, 2.0]]), step).unwrap();
            assert_eq!(s.active(), 3);
            assert_eq!(s.objective, 1.0);
        }
    }

    #[test]
    fn exhaustive_examples() {
        let s = select_exhaustive(&gains(&[&[10.0], &[1.0], &[1.0]])).unwrap();
        assert!((s.objective - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(s.picks, vec![None, Some(0), Some(0)]);
        let s = select_exhaustive(&gains(&[&[0.3, 7.0]])).unwrap();
        assert_eq!(s.objective, 1.0);
        // both relays give objective 1; the first one wins
        assert_eq!(s.picks, vec![Some(0)]);
    }

    #[test]
    fn exhaustive_capacity_guard() {
        let big = RelayGains::new(vec![vec![1.0; 9]; 8]).unwrap();
        assert!(matches!(select_exhaustive(&big), Err(Error::Capacity { .. })));
    }

    #[test]
    fn all_zero_selection_is_worst() {
        let g = gains(&[&[0.0], &[0.0]]);
        assert_eq!(select_strongest(&g).objective, 0.0);
        assert_eq!(select_exhaustive(&g).unwrap().objective, 0.0);
        let g = gains(&[&[0.0], &[4.0]]);
        let s = select_exhaustive(&g).unwrap();
        assert_eq!(s.objective, 0.5);
        assert_eq!(s.picks[1], Some(0));
    }

    #[test]
    fn surrogate_with_silent_rest_picks_largest() {
        // the other cluster has nothing to send: a = b = 0
        let next = surrogate_step(&[0.5, 3.0, 1.0], None, 0.0, 0.0);
        assert_eq!(next, Some(1));
        let next = surrogate_step(&[0.0, 0.0], Some(0), 0.0, 0.0);
        assert_eq!(next, Some(0));
    }

    #[test]
    fn solver_names_round_trip() {
        for s in RelaySolver::ALL {
            assert_eq!(s.name().parse::<RelaySolver>().unwrap(), s);
        }
        assert!("best".parse::<RelaySolver>().is_err());
    }

    #[test]
    fn sweep_cap_is_enforced() {
        let g = gains(&[&[10.0], &[1.0], &[1.0]]);
        assert!(select_greedy_traced(&g, GreedyStep::Exact, 1).is_err());
        let run = select_greedy_traced(&g, GreedyStep::Exact, 10).unwrap();
        assert_eq!(run.sweeps, 2);
        assert_eq!(run.trace.len(), 6);
    }
}
