use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::data::FederatedTask;
use crate::channel::{sample_distance, sample_rayleigh_amplitude, CellConfig};
use crate::error::{domain, Error, Result};
use crate::relay::{ClusterLayout, RelayGains, RelaySolver};
use crate::rng::{tag, MasterSeed, StreamRng};
use crate::voting::{sign, Sign};

/// Where flat over-the-air channels come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChannelSource {
    /// Users dropped in the cell; distances redrawn every round, fading
    /// redrawn every round and component.
    Cell(CellConfig),
    /// Every gain equal to 1, with the given noise variance.
    Unit { noise_var: f64 },
}

/// How the users' gradient signs are combined into one sign per component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Aggregator {
    Ideal,
    AirCompPc(ChannelSource),
    Cluster {
        cell: CellConfig,
        cluster_size: usize,
        relays: usize,
        solver: RelaySolver,
    },
}

impl Aggregator {
    pub fn name(&self) -> String {
        match self {
            Aggregator::Ideal => "ideal".into(),
            Aggregator::AirCompPc(_) => "aircomp_pc".into(),
            Aggregator::Cluster { solver, .. } => format!("cluster-{solver}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub rounds: usize,
    pub eta: f64,
    pub batch: usize,
    pub seed: MasterSeed,
}

/// Model parameters shared by every user.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub w: Vec<f64>,
    /// Rounds completed so far.
    pub round: usize,
    pub eta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundMetrics {
    /// 1-based round index.
    pub round: usize,
    /// Training loss after this round's update.
    pub train_loss: f64,
    pub test_acc: Option<f64>,
    /// Share of (user, component) signs that match the full-batch gradient.
    pub mean_p_loc: f64,
    /// Share of components whose aggregated sign disagrees with the
    /// full-batch gradient.
    pub failure_fraction: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub state: TrainState,
    pub metrics: Vec<RoundMetrics>,
}

/// Randomness used by user `user` in round `round` (minibatch selection,
/// then tie coins for zero gradient components).
pub fn user_stream(seed: MasterSeed, round: usize, user: usize) -> StreamRng {
    seed.stream(&[tag::USER, round as u64, user as u64])
}

/// Signs of `grad`, with zero components decided by coins from `rng`.
fn signs_of(grad: &[f64], rng: &mut StreamRng) -> Result<Vec<Sign>> {
    grad.iter().map(|&g| sign(g, rng)).collect()
}

/// Per-round large-scale geometry.
enum RoundChannels<'a> {
    Ideal,
    Flat { cell: &'a CellConfig, scales: Vec<f64> },
    Unit { noise_var: f64 },
    Cluster {
        cell: &'a CellConfig,
        layout: ClusterLayout,
        scales: Vec<f64>,
        solver: RelaySolver,
    },
}

impl<'a> RoundChannels<'a> {
    fn new(agg: &'a Aggregator, users: usize, seed: MasterSeed, round: usize) -> Result<Self> {
        let mut rng = seed.stream(&[tag::GEOMETRY, round as u64]);
        let mut scales = |n: usize, cell: &CellConfig| -> Vec<f64> {
            (0..n)
                .map(|_| cell.path_loss_at(sample_distance(&mut rng, cell)).sqrt())
                .collect()
        };
        Ok(match agg {
            Aggregator::Ideal => RoundChannels::Ideal,
            Aggregator::AirCompPc(ChannelSource::Cell(cell)) => RoundChannels::Flat {
                cell,
                scales: scales(users, cell),
            },
            Aggregator::AirCompPc(ChannelSource::Unit { noise_var }) => {
                if !(noise_var.is_finite() && *noise_var >= 0.0) {
                    return Err(domain(format!("noise variance must be nonnegative, got {noise_var}")));
                }
                RoundChannels::Unit { noise_var: *noise_var }
            }
            Aggregator::Cluster {
                cell,
                cluster_size,
                relays,
                solver,
            } => {
                let layout = ClusterLayout::from_users(users, *cluster_size, *relays)?;
                RoundChannels::Cluster {
                    cell,
                    layout,
                    scales: scales(layout.clusters(), cell),
                    solver: *solver,
                }
            }
        })
    }

    /// Aggregated sign of component `i` given every user's sign vector.
    fn aggregate(&self, signs: &[Vec<Sign>], i: usize, rng: &mut StreamRng) -> Result<Sign> {
        let noisy_sign = |y: f64, noise_var: f64, rng: &mut StreamRng| {
            let v = if noise_var > 0.0 {
                noise_var.sqrt() * rng.sample::<f64, _>(StandardNormal)
            } else {
                0.0
            };
            sign(y + v, rng)
        };
        match self {
            RoundChannels::Ideal => {
                let tally: i64 = signs.iter().map(|s| i64::from(s[i].value())).sum();
                Ok(Sign::of_tally(tally, rng))
            }
            RoundChannels::Unit { noise_var } => {
                let y: f64 = signs.iter().map(|s| s[i].as_f64()).sum();
                noisy_sign(y, *noise_var, rng)
            }
            RoundChannels::Flat { cell, scales } => {
                let y: f64 = signs
                    .iter()
                    .zip(scales)
                    .map(|(s, scale)| scale * sample_rayleigh_amplitude(rng) * s[i].as_f64())
                    .sum();
                noisy_sign(y, cell.noise_var(), rng)
            }
            RoundChannels::Cluster {
                cell,
                layout,
                scales,
                solver,
            } => {
                let size = layout.cluster_size();
                let fused: Vec<Sign> = (0..layout.clusters())
                    .map(|c| {
                        let tally: i64 = signs[c * size..(c + 1) * size]
                            .iter()
                            .map(|s| i64::from(s[i].value()))
                            .sum();
                        Sign::of_tally(tally, rng)
                    })
                    .collect();
                let sets = scales
                    .iter()
                    .map(|scale| {
                        (0..layout.relays())
                            .map(|_| scale * sample_rayleigh_amplitude(rng))
                            .collect()
                    })
                    .collect();
                let selection = solver.solve(&RelayGains::new(sets)?)?;
                let y: f64 = fused
                    .iter()
                    .zip(&selection.chosen)
                    .map(|(s, g)| s.as_f64() * g)
                    .sum();
                noisy_sign(y, cell.noise_var(), rng)
            }
        }
    }
}

/// Runs signSGD with majority vote for `cfg.rounds` rounds.
///
/// Every round: the full-batch gradient fixes the reference signs; each user
/// sends the sign of a fresh minibatch gradient; the aggregator returns one
/// sign per component (component `i` uses the stream
/// `[AGGREGATE, round, i]`); all users apply `w ← w − η·g̃`.
pub fn train(task: &FederatedTask, aggregator: &Aggregator, cfg: &TrainConfig) -> Result<TrainOutcome> {
    if cfg.rounds == 0 {
        return Err(Error::Config("at least one round is required".into()));
    }
    if !(cfg.eta.is_finite() && cfg.eta >= 0.0) {
        return Err(Error::Config(format!("learning rate must be finite and nonnegative, got {}", cfg.eta)));
    }
    let smallest = (0..task.users()).map(|k| task.user_data(k).len()).min().unwrap_or(0);
    if cfg.batch == 0 || cfg.batch > smallest {
        return Err(Error::Config(format!("batch size must lie in 1..={smallest}, got {}", cfg.batch)));
    }
    let seed = cfg.seed;
    let users = task.users();
    let mut state = TrainState {
        w: task.init_params(seed),
        round: 0,
        eta: cfg.eta,
    };
    let d = state.w.len();
    let mut metrics = Vec::with_capacity(cfg.rounds);
    for n in 0..cfg.rounds {
        let w = &state.w;
        let truth = {
            let mut rng = seed.stream(&[tag::TRUTH, n as u64]);
            signs_of(&task.full_gradient(w), &mut rng)?
        };
        let signs: Vec<Vec<Sign>> = (0..users)
            .into_par_iter()
            .map(|k| {
                let mut rng = user_stream(seed, n, k);
                let g = task.local_stochastic_gradient(k, w, cfg.batch, &mut rng)?;
                signs_of(&g, &mut rng)
            })
            .collect::<Result<_>>()?;
        let matches: usize = signs
            .iter()
            .map(|s| s.iter().zip(&truth).filter(|(a, b)| a == b).count())
            .sum();
        let channels = RoundChannels::new(aggregator, users, seed, n)?;
        let aggregated: Vec<Sign> = (0..d)
            .into_par_iter()
            .map(|i| {
                let mut rng = seed.stream(&[tag::AGGREGATE, n as u64, i as u64]);
                channels.aggregate(&signs, i, &mut rng)
            })
            .collect::<Result<_>>()?;
        let failures = aggregated.iter().zip(&truth).filter(|(a, b)| a != b).count();
        for (wi, s) in state.w.iter_mut().zip(&aggregated) {
            *wi -= cfg.eta * s.as_f64();
        }
        state.round += 1;
        let train_loss = task.train_loss(&state.w);
        if !train_loss.is_finite() {
            return Err(Error::Divergence {
                round: state.round,
                loss: train_loss,
            });
        }
        metrics.push(RoundMetrics {
            round: state.round,
            train_loss,
            test_acc: task.test_accuracy(&state.w),
            mean_p_loc: matches as f64 / (users * d) as f64,
            failure_fraction: failures as f64 / d as f64,
        });
    }
    Ok(TrainOutcome { state, metrics })
}
