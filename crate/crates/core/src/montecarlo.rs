//! Failure-probability estimation and parameter sweeps.
//!
//! Every trial opens its own stream `seed.stream(&[TRIAL, t])`, draws the
//! channels it needs, draws votes with the true sign fixed to `+1`, runs the
//! scheme's aggregation for a single gradient component and reports whether
//! the decode came out `−1`. Failure counts are summed as integers, so an
//! estimate depends only on the seed and the trial count, never on the
//! number of worker threads or the order trials run in.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aircomp::received;
use crate::analysis::{cluster_nsnr, exact_failure_probability, normalized_snr, DetectionStats};
use crate::channel::{draw_fading_at, draw_user_channels, sample_distance, sample_rayleigh_amplitude, CellConfig};
use crate::error::{domain, Error, Result};
use crate::relay::{draw_relay_gains, ClusterLayout, RelayGains, RelaySolver};
use crate::rng::{tag, MasterSeed, StreamRng};
use crate::special::majority_failure;
use crate::voting::{draw_votes_into, majority_vote, LocalSuccessModel, Sign, VoteVector};

/// Two-sided 95% standard normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Channel realizations used for the analytic overlays of a sweep point.
pub const OVERLAY_DRAWS: u64 = 20_000;

/// Aggregation scheme under test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    /// Error-free majority vote over all users.
    Ideal,
    /// Every user transmits over the air, no cooperation.
    AirCompPc,
    /// In-cluster fusion, then relayed over the air with relay selection.
    Cluster(RelaySolver),
}

impl Scheme {
    pub fn id(self) -> String {
        match self {
            Scheme::Ideal => "ideal".into(),
            Scheme::AirCompPc => "aircomp_pc".into(),
            Scheme::Cluster(solver) => format!("cluster-{solver}"),
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ideal" => Ok(Scheme::Ideal),
            "aircomp_pc" | "aircomp-pc" | "no-coop" => Ok(Scheme::AirCompPc),
            other => match other.strip_prefix("cluster-") {
                Some(solver) => Ok(Scheme::Cluster(solver.parse()?)),
                None => Err(Error::Config(format!(
                    "unknown scheme `{other}` (expected ideal, aircomp_pc or cluster-<solver>)"
                ))),
            },
        }
    }
}

impl Serialize for Scheme {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.id())
    }
}

impl<'de> Deserialize<'de> for Scheme {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// How channels are averaged over trials.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChannelMode {
    /// Distances and fading are redrawn every trial.
    #[default]
    FullRedraw,
    /// Distances are drawn once per estimate; only fading is redrawn.
    FrozenGeometry,
}

/// Everything besides the scheme that defines one estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub cell: CellConfig,
    /// Total users `K`.
    pub users: usize,
    /// Users per cluster `K_C` (cluster schemes only).
    pub cluster_size: usize,
    /// Relays per cluster `L` (cluster schemes only).
    pub relays: usize,
    pub p_loc: f64,
    pub channel_mode: ChannelMode,
}

impl Scenario {
    /// A flat (non-clustered) scenario.
    pub fn flat(cell: CellConfig, users: usize, p_loc: f64) -> Self {
        Scenario {
            cell,
            users,
            cluster_size: 1,
            relays: 1,
            p_loc,
            channel_mode: ChannelMode::FullRedraw,
        }
    }

    pub fn clustered(cell: CellConfig, users: usize, cluster_size: usize, relays: usize, p_loc: f64) -> Self {
        Scenario {
            cell,
            users,
            cluster_size,
            relays,
            p_loc,
            channel_mode: ChannelMode::FullRedraw,
        }
    }

    fn success_model(&self) -> Result<LocalSuccessModel> {
        LocalSuccessModel::new(self.p_loc).map_err(|e| Error::Config(e.to_string()))
    }

    /// Cluster layout for cluster schemes; `None` for flat schemes.
    pub fn layout(&self, scheme: Scheme) -> Result<Option<ClusterLayout>> {
        if self.users == 0 {
            return Err(Error::Config("at least one user is required".into()));
        }
        match scheme {
            Scheme::Cluster(_) => ClusterLayout::from_users(self.users, self.cluster_size, self.relays)
                .map(Some)
                .map_err(|e| Error::Config(e.to_string())),
            _ => Ok(None),
        }
    }
}

/// A failure-rate estimate with its Wilson 95% interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub q_hat: f64,
    pub trials: u64,
    pub failures: u64,
    pub ci95_lo: f64,
    pub ci95_hi: f64,
}

impl McEstimate {
    pub fn from_counts(failures: u64, trials: u64) -> Self {
        assert!(trials > 0 && failures <= trials);
        let (ci95_lo, ci95_hi) = wilson_interval(failures, trials, Z95);
        McEstimate {
            q_hat: failures as f64 / trials as f64,
            trials,
            failures,
            ci95_lo,
            ci95_hi,
        }
    }

    /// Binomial standard error at the estimate.
    pub fn std_err(&self) -> f64 {
        (self.q_hat * (1.0 - self.q_hat) / self.trials as f64).sqrt()
    }

    pub fn contains(&self, q: f64) -> bool {
        self.ci95_lo <= q && q <= self.ci95_hi
    }
}

/// Wilson score interval for `failures` out of `trials` at quantile `z`.
pub fn wilson_interval(failures: u64, trials: u64, z: f64) -> (f64, f64) {
    let n = trials as f64;
    let p = failures as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let lo = if failures == 0 { 0.0 } else { (center - half).clamp(0.0, p) };
    let hi = if failures == trials { 1.0 } else { (center + half).clamp(p, 1.0) };
    (lo, hi)
}

#[derive(Default)]
struct Scratch {
    votes: VoteVector,
    gains: Vec<f64>,
    fused: Vec<Sign>,
}

/// Trials per work item. Each trial still owns its stream, so the batch size
/// only affects scheduling.
const TRIAL_BATCH: u64 = 1024;

fn count_failures<F>(trials: u64, seed: MasterSeed, trial: F) -> Result<u64>
where
    F: Fn(&mut Scratch, &mut StreamRng) -> Result<bool> + Sync,
{
    let batches = trials.div_ceil(TRIAL_BATCH) as usize;
    (0..batches)
        .into_par_iter()
        .map(|b| {
            let mut scratch = Scratch::default();
            let start = b as u64 * TRIAL_BATCH;
            let mut failures = 0;
            for t in start..(start + TRIAL_BATCH).min(trials) {
                let mut rng = seed.stream(&[tag::TRIAL, t]);
                failures += u64::from(trial(&mut scratch, &mut rng)?);
            }
            Ok(failures)
        })
        .try_reduce(|| 0, |a, b| Ok(a + b))
}

fn decode_is_failure<R: Rng + ?Sized>(y: f64, rng: &mut R) -> bool {
    if y < 0.0 {
        true
    } else if y > 0.0 {
        false
    } else {
        Sign::coin(rng) == Sign::Neg
    }
}

/// Distances drawn once for frozen-geometry runs.
fn frozen_distances(scenario: &Scenario, count: usize, seed: MasterSeed) -> Option<Vec<f64>> {
    (scenario.channel_mode == ChannelMode::FrozenGeometry).then(|| {
        let mut rng = seed.stream(&[tag::GEOMETRY]);
        (0..count).map(|_| sample_distance(&mut rng, &scenario.cell)).collect()
    })
}

fn fill_user_gains<R: Rng + ?Sized>(
    rng: &mut R,
    cell: &CellConfig,
    users: usize,
    frozen: Option<&[f64]>,
    out: &mut Vec<f64>,
) {
    out.clear();
    for k in 0..users {
        let r = match frozen {
            Some(d) => d[k],
            None => sample_distance(rng, cell),
        };
        out.push(cell.path_loss_at(r).sqrt() * sample_rayleigh_amplitude(rng));
    }
}

fn relay_gains_for<R: Rng + ?Sized>(
    rng: &mut R,
    layout: &ClusterLayout,
    cell: &CellConfig,
    frozen: Option<&[f64]>,
) -> RelayGains {
    match frozen {
        None => draw_relay_gains(rng, layout, cell),
        Some(d) => {
            let sets = d
                .iter()
                .map(|&r| {
                    let scale = cell.path_loss_at(r).sqrt();
                    (0..layout.relays())
                        .map(|_| scale * sample_rayleigh_amplitude(rng))
                        .collect()
                })
                .collect();
            RelayGains::new(sets).expect("drawn gains are valid")
        }
    }
}

/// Fuses `clusters` independent clusters of `cluster_size` Bernoulli voters.
fn fuse_clusters<R: Rng + ?Sized>(
    rng: &mut R,
    layout: &ClusterLayout,
    model: LocalSuccessModel,
    scratch_votes: &mut VoteVector,
    out: &mut Vec<Sign>,
) {
    out.clear();
    for _ in 0..layout.clusters() {
        draw_votes_into(rng, layout.cluster_size(), model, scratch_votes);
        out.push(majority_vote(scratch_votes, rng));
    }
}

/// Monte Carlo estimate of the failure probability of `scheme`.
pub fn estimate_failure(
    scheme: Scheme,
    scenario: &Scenario,
    trials: u64,
    seed: MasterSeed,
) -> Result<McEstimate> {
    if trials == 0 {
        return Err(Error::Config("at least one trial is required".into()));
    }
    let model = scenario.success_model()?;
    let layout = scenario.layout(scheme)?;
    let cell = &scenario.cell;
    let noise_var = cell.noise_var();
    let users = scenario.users;
    let failures = match (scheme, layout) {
        (Scheme::Ideal, _) => count_failures(trials, seed, |s, rng| {
            draw_votes_into(rng, users, model, &mut s.votes);
            Ok(majority_vote(&s.votes, rng) == Sign::Neg)
        }),
        (Scheme::AirCompPc, _) => {
            let frozen = frozen_distances(scenario, users, seed);
            count_failures(trials, seed, |s, rng| {
                fill_user_gains(rng, cell, users, frozen.as_deref(), &mut s.gains);
                draw_votes_into(rng, users, model, &mut s.votes);
                let y = received(s.votes.as_slice(), &s.gains, noise_var, rng);
                Ok(decode_is_failure(y, rng))
            })
        }
        (Scheme::Cluster(solver), Some(layout)) => {
            let frozen = frozen_distances(scenario, layout.clusters(), seed);
            // surface capacity problems before spawning trials
            let probe = relay_gains_for(&mut seed.stream(&[tag::OVERLAY]), &layout, cell, frozen.as_deref());
            solver.solve(&probe)?;
            count_failures(trials, seed, |s, rng| {
                let relays = relay_gains_for(rng, &layout, cell, frozen.as_deref());
                let Scratch { votes, fused, .. } = s;
                fuse_clusters(rng, &layout, model, votes, fused);
                let selection = solver.solve(&relays)?;
                let y = received(fused, &selection.chosen, noise_var, rng);
                Ok(decode_is_failure(y, rng))
            })
        }
        (Scheme::Cluster(_), None) => unreachable!("cluster schemes always have a layout"),
    }?;
    Ok(McEstimate::from_counts(failures, trials))
}

/// Monte Carlo estimate for fixed gains and per-user success probabilities.
pub fn estimate_failure_fixed(
    gains: &[f64],
    p: &[f64],
    noise_var: f64,
    trials: u64,
    seed: MasterSeed,
) -> Result<McEstimate> {
    // validates the inputs
    DetectionStats::compute(gains, p, noise_var)?;
    if trials == 0 {
        return Err(Error::Config("at least one trial is required".into()));
    }
    let failures = count_failures(trials, seed, |s, rng| {
        s.votes.clear();
        for &pk in p {
            s.votes.push(if rng.random::<f64>() < pk { Sign::Pos } else { Sign::Neg });
        }
        let y = received(s.votes.as_slice(), gains, noise_var, rng);
        Ok(decode_is_failure(y, rng))
    })?;
    Ok(McEstimate::from_counts(failures, trials))
}

/// Analytic curves attached to a sweep point, averaged over channel draws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Overlays {
    /// Mean over channel draws of the per-draw sub-Gaussian bound. Since the
    /// bound holds for every draw it also bounds the averaged failure rate.
    pub chernoff: f64,
    /// Mean normalized SNR: `(1/K)(Σρ)²/(Σρ² + σ²)` for flat over-the-air
    /// voting, the cluster form for cluster schemes, 1 for the ideal vote.
    pub nsnr: f64,
    /// `round(K · nsnr)`.
    pub k_eff: u64,
    /// Ideal majority-vote failure probability with `k_eff` voters.
    pub ideal_at_k_eff: f64,
}

/// Computes [`Overlays`] from `draws` independent channel realizations.
pub fn overlays(scheme: Scheme, scenario: &Scenario, draws: u64, seed: MasterSeed) -> Result<Overlays> {
    if draws == 0 {
        return Err(Error::Config("at least one overlay draw is required".into()));
    }
    scenario.success_model()?;
    let layout = scenario.layout(scheme)?;
    let cell = &scenario.cell;
    let noise_var = cell.noise_var();
    let p = scenario.p_loc;
    let users = scenario.users;
    let (chernoff, nsnr) = match (scheme, layout) {
        (Scheme::Ideal, _) => {
            let ones = vec![1.0; users];
            let stats = DetectionStats::with_common_p(&ones, p, 0.0)?;
            (stats.chernoff_bound, 1.0)
        }
        (Scheme::AirCompPc, _) => {
            let frozen = frozen_distances(scenario, users, seed);
            mean_pair(draws, seed, |rng| {
                let gains = match &frozen {
                    Some(d) => draw_fading_at(rng, d, cell)?,
                    None => draw_user_channels(rng, users, cell)?,
                };
                let stats = DetectionStats::with_common_p(gains.gains(), p, noise_var)?;
                Ok((stats.chernoff_bound, normalized_snr(gains.gains(), noise_var)))
            })?
        }
        (Scheme::Cluster(solver), Some(layout)) => {
            let frozen = frozen_distances(scenario, layout.clusters(), seed);
            let fused_p = 1.0 - majority_failure(layout.cluster_size() as u64, p);
            mean_pair(draws, seed, |rng| {
                let relays = relay_gains_for(rng, &layout, cell, frozen.as_deref());
                let selection = solver.solve(&relays)?;
                let stats = DetectionStats::with_common_p(&selection.chosen, fused_p, noise_var)?;
                let nsnr = cluster_nsnr(&selection.chosen, layout.cluster_size(), p, noise_var);
                Ok((stats.chernoff_bound, nsnr))
            })?
        }
        (Scheme::Cluster(_), None) => unreachable!("cluster schemes always have a layout"),
    };
    let k_eff = (users as f64 * nsnr).round() as u64;
    Ok(Overlays {
        chernoff,
        nsnr,
        k_eff,
        ideal_at_k_eff: majority_failure(k_eff, p),
    })
}

fn mean_pair<F>(draws: u64, seed: MasterSeed, f: F) -> Result<(f64, f64)>
where
    F: Fn(&mut StreamRng) -> Result<(f64, f64)> + Sync,
{
    let values: Vec<(f64, f64)> = (0..draws)
        .into_par_iter()
        .map(|i| f(&mut seed.stream(&[tag::OVERLAY, i])))
        .collect::<Result<_>>()?;
    // summed in index order so the result is schedule-independent
    let (a, b) = values
        .iter()
        .fold((0.0, 0.0), |(sa, sb), (x, y)| (sa + x, sb + y));
    Ok((a / draws as f64, b / draws as f64))
}

/// Sample mean and its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub samples: u64,
}

fn mean_estimate<F>(samples: u64, seed: MasterSeed, f: F) -> Result<MeanEstimate>
where
    F: Fn(&mut StreamRng) -> Result<f64> + Sync,
{
    if samples < 2 {
        return Err(domain("need at least two samples"));
    }
    let values: Vec<f64> = (0..samples)
        .into_par_iter()
        .map(|i| f(&mut seed.stream(&[tag::OVERLAY, i])))
        .collect::<Result<_>>()?;
    let n = samples as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    Ok(MeanEstimate {
        mean,
        std_err: (var / n).sqrt(),
        samples,
    })
}

/// Monte Carlo mean of the per-draw normalized SNR for `users` users.
pub fn estimate_nsnr(cell: &CellConfig, users: usize, draws: u64, seed: MasterSeed) -> Result<MeanEstimate> {
    mean_estimate(draws, seed, |rng| {
        let draw = draw_user_channels(rng, users, cell)?;
        Ok(normalized_snr(draw.gains(), cell.noise_var()))
    })
}

/// Failure probability of flat over-the-air voting with the noise removed,
/// computed exactly for each channel draw and averaged over draws.
pub fn expected_noiseless_failure(
    cell: &CellConfig,
    users: usize,
    p_loc: f64,
    draws: u64,
    seed: MasterSeed,
) -> Result<MeanEstimate> {
    let p = vec![p_loc; users];
    mean_estimate(draws, seed, |rng| {
        let draw = draw_user_channels(rng, users, cell)?;
        exact_failure_probability(draw.gains(), &p, 0.0)
    })
}

/// One grid point of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub scheme: Scheme,
    pub scenario: Scenario,
}

/// One row of sweep output; self-describing enough to re-run the point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct ExperimentRecord {
    pub scheme: Scheme,
    pub K: usize,
    pub C: usize,
    pub K_C: usize,
    pub L: usize,
    pub P_s_dBW: f64,
    pub N0_dBm: f64,
    pub alpha: f64,
    pub R_over_r0: f64,
    pub p_loc: f64,
    pub channel_mode: ChannelMode,
    pub seed: u64,
    pub estimate: McEstimate,
    pub overlays: Overlays,
}

impl ExperimentRecord {
    /// Rebuilds the grid point this record was produced from.
    pub fn point(&self) -> Result<SweepPoint> {
        let cell = CellConfig::new(crate::channel::CellParams {
            R_m: self.R_over_r0,
            r0_m: 1.0,
            alpha: self.alpha,
            P_dBW: self.P_s_dBW,
            M: 1,
            N0_dBm: self.N0_dBm,
        })?;
        Ok(SweepPoint {
            scheme: self.scheme,
            scenario: Scenario {
                cell,
                users: self.K,
                cluster_size: self.K_C,
                relays: self.L,
                p_loc: self.p_loc,
                channel_mode: self.channel_mode,
            },
        })
    }
}

/// Runs one point with an explicit seed and attaches its overlays.
pub fn run_point(point: &SweepPoint, trials: u64, seed: MasterSeed) -> Result<ExperimentRecord> {
    let SweepPoint { scheme, scenario } = point;
    let estimate = estimate_failure(*scheme, scenario, trials, seed)?;
    let overlays = overlays(*scheme, scenario, OVERLAY_DRAWS.min(trials.max(2)), seed)?;
    let (clusters, cluster_size, relays) = match scenario.layout(*scheme)? {
        Some(l) => (l.clusters(), l.cluster_size(), l.relays()),
        None => (scenario.users, 1, 1),
    };
    Ok(ExperimentRecord {
        scheme: *scheme,
        K: scenario.users,
        C: clusters,
        K_C: cluster_size,
        L: relays,
        P_s_dBW: scenario.cell.symbol_power_dbw(),
        N0_dBm: scenario.cell.noise_dbm(),
        alpha: scenario.cell.alpha(),
        R_over_r0: scenario.cell.ratio(),
        p_loc: scenario.p_loc,
        channel_mode: scenario.channel_mode,
        seed: seed.0,
        estimate,
        overlays,
    })
}

/// Runs every grid point; point `i` gets the derived seed
/// `master.derive(&[POINT, i])`, which is recorded in its row.
pub fn sweep(points: &[SweepPoint], trials: u64, master: MasterSeed) -> Result<Vec<ExperimentRecord>> {
    if points.is_empty() {
        return Err(Error::Config("sweep grid is empty".into()));
    }
    points
        .iter()
        .enumerate()
        .map(|(i, point)| run_point(point, trials, master.child(&[tag::POINT, i as u64])))
        .collect()
}
