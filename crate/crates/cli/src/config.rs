//! Experiment configuration: strict TOML files and built-in presets.

use std::collections::BTreeMap;
use std::path::Path;

use aircomp::channel::{CellConfig, CellParams};
use aircomp::learning::{FederatedTask, ModelKind, TwoBlobSpec};
use aircomp::montecarlo::{ChannelMode, Scenario, Scheme};
use aircomp::relay::RelaySolver;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Seed used when neither the command line, the config nor
/// [`SEED_ENV`] provides one.
pub const DEFAULT_SEED: u64 = 20_240_521;

/// Environment variable that replaces [`DEFAULT_SEED`].
pub const SEED_ENV: &str = "AIRCOMP_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub seed: Option<u64>,
    /// Monte Carlo trials per estimate.
    pub trials: u64,
    pub cell: CellSection,
    pub system: SystemSection,
    pub sweep: SweepSection,
    pub train: TrainSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
#[allow(non_snake_case)]
pub struct CellSection {
    pub R_m: f64,
    pub r0_m: f64,
    pub alpha: f64,
    /// Power budget of one OFDM symbol, shared by `M` subchannels.
    pub P_dBW: f64,
    pub M: u32,
    pub N0_dBm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
#[allow(non_snake_case)]
pub struct SystemSection {
    pub K: usize,
    /// Optional; when given it must equal `K / K_C`.
    pub C: Option<usize>,
    pub K_C: usize,
    pub L: usize,
    pub p_loc: f64,
    pub channel_mode: ChannelMode,
}

/// Grid axes. An empty axis uses the single value from `[system]` or
/// `[cell]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
#[allow(non_snake_case)]
pub struct SweepSection {
    pub schemes: Vec<Scheme>,
    pub P_s_dBW: Vec<f64>,
    pub K: Vec<usize>,
    pub L: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelChoice {
    Logistic,
    Mlp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub rounds: usize,
    pub eta: f64,
    pub batch: usize,
    pub model: ModelChoice,
    pub hidden: usize,
    pub dim: usize,
    pub samples_per_user: usize,
    pub test_samples: usize,
    pub separation: f64,
    /// Standard deviation of the initial weights; 0 starts from zero.
    pub init_scale: f64,
    pub data_seed: u64,
    pub schemes: Vec<Scheme>,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            seed: None,
            trials: 200_000,
            cell: CellSection::default(),
            system: SystemSection::default(),
            sweep: SweepSection::default(),
            train: TrainSection::default(),
        }
    }
}

impl Default for CellSection {
    fn default() -> Self {
        let p = CellParams::default();
        CellSection {
            R_m: p.R_m,
            r0_m: p.r0_m,
            alpha: p.alpha,
            P_dBW: p.P_dBW,
            M: p.M,
            N0_dBm: p.N0_dBm,
        }
    }
}

impl Default for SystemSection {
    fn default() -> Self {
        SystemSection {
            K: 54,
            C: None,
            K_C: 9,
            L: 3,
            p_loc: 0.55,
            channel_mode: ChannelMode::FullRedraw,
        }
    }
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            schemes: vec![Scheme::AirCompPc],
            P_s_dBW: Vec::new(),
            K: Vec::new(),
            L: Vec::new(),
        }
    }
}

impl Default for TrainSection {
    fn default() -> Self {
        let blob = TwoBlobSpec::default();
        TrainSection {
            rounds: 300,
            eta: 1.0 / 1024.0,
            batch: blob.batch,
            model: ModelChoice::Logistic,
            hidden: 64,
            dim: blob.dim,
            samples_per_user: blob.samples_per_user,
            test_samples: blob.test_samples,
            separation: blob.separation,
            init_scale: 0.3,
            data_seed: blob.seed,
            schemes: vec![
                Scheme::Ideal,
                Scheme::Cluster(RelaySolver::GreedyExact),
                Scheme::AirCompPc,
            ],
        }
    }
}

/// Valid keys of every table, used to suggest corrections.
const SCHEMA: &[(&str, &[&str])] = &[
    ("", &["seed", "trials", "cell", "system", "sweep", "train"]),
    ("cell", &["R_m", "r0_m", "alpha", "P_dBW", "M", "N0_dBm"]),
    ("system", &["K", "C", "K_C", "L", "p_loc", "channel_mode"]),
    ("sweep", &["schemes", "P_s_dBW", "K", "L"]),
    (
        "train",
        &[
            "rounds",
            "eta",
            "batch",
            "model",
            "hidden",
            "dim",
            "samples_per_user",
            "test_samples",
            "separation",
            "init_scale",
            "data_seed",
            "schemes",
        ],
    ),
];

fn key_distance(a: &str, b: &str) -> usize {
    strsim::damerau_levenshtein(&a.to_lowercase(), &b.to_lowercase())
}

/// Closest valid key to `key`, searching the table it appeared in first and
/// then every other table.
pub fn nearest_key(table: &str, key: &str) -> String {
    let mut best: Option<(usize, bool, String)> = None;
    for (name, keys) in SCHEMA {
        let here = *name == table;
        for k in keys.iter() {
            let d = key_distance(key, k);
            let label = if here || name.is_empty() { k.to_string() } else { format!("{name}.{k}") };
            let better = match &best {
                None => true,
                Some((bd, bhere, _)) => d < *bd || (d == *bd && here && !bhere),
            };
            if better {
                best = Some((d, here, label));
            }
        }
    }
    best.map(|b| b.2).unwrap_or_default()
}

fn check_keys(value: &toml::Value) -> Result<(), String> {
    let toml::Value::Table(top) = value else {
        return Err("config must be a table".into());
    };
    for (key, v) in top {
        let Some((_, keys)) = SCHEMA.iter().find(|(n, _)| n.is_empty()) else { unreachable!() };
        if !keys.contains(&key.as_str()) {
            return Err(format!("unknown key `{key}`; did you mean `{}`?", nearest_key("", key)));
        }
        if let (toml::Value::Table(inner), Some((_, allowed))) = (v, SCHEMA.iter().find(|(n, _)| n == key)) {
            for k in inner.keys() {
                if !allowed.contains(&k.as_str()) {
                    return Err(format!(
                        "unknown key `{k}` in [{key}]; did you mean `{}`?",
                        nearest_key(key, k)
                    ));
                }
            }
        }
    }
    Ok(())
}

impl Config {
    /// Parses and validates a config from TOML text.
    pub fn from_toml(text: &str) -> Result<Self, String> {
        let value: toml::Value = text.parse().map_err(|e: toml::de::Error| e.message().to_string())?;
        check_keys(&value)?;
        let cfg: Config = value.try_into().map_err(|e: toml::de::Error| e.message().to_string())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Config::from_toml(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), String> {
        self.cell_config()?;
        let s = &self.system;
        if s.K == 0 || s.K_C == 0 || s.L == 0 {
            return Err("K, K_C and L must be positive".into());
        }
        if let Some(c) = s.C {
            if c * s.K_C != s.K {
                return Err(format!("C·K_C = {}·{} does not equal K = {}", c, s.K_C, s.K));
            }
        }
        if !(0.0..=1.0).contains(&s.p_loc) {
            return Err(format!("p_loc must lie in [0, 1], got {}", s.p_loc));
        }
        if self.trials == 0 {
            return Err("trials must be positive".into());
        }
        if self.sweep.schemes.is_empty() {
            return Err("sweep.schemes must not be empty".into());
        }
        let t = &self.train;
        if t.rounds == 0 || t.batch == 0 || t.dim == 0 || t.samples_per_user == 0 || t.test_samples == 0 {
            return Err("train.rounds, batch, dim, samples_per_user and test_samples must be positive".into());
        }
        if t.batch > t.samples_per_user {
            return Err(format!("train.batch {} exceeds samples_per_user {}", t.batch, t.samples_per_user));
        }
        if !(t.eta.is_finite() && t.eta > 0.0) {
            return Err(format!("train.eta must be positive, got {}", t.eta));
        }
        if t.schemes.is_empty() {
            return Err("train.schemes must not be empty".into());
        }
        Ok(())
    }

    pub fn cell_config(&self) -> Result<CellConfig, String> {
        let c = self.cell;
        CellConfig::new(CellParams {
            R_m: c.R_m,
            r0_m: c.r0_m,
            alpha: c.alpha,
            P_dBW: c.P_dBW,
            M: c.M,
            N0_dBm: c.N0_dBm,
        })
        .map_err(|e| e.to_string())
    }

    /// The single-point scenario described by `[cell]` and `[system]`.
    pub fn scenario(&self) -> Result<Scenario, String> {
        let s = &self.system;
        let mut scenario = Scenario::clustered(self.cell_config()?, s.K, s.K_C, s.L, s.p_loc);
        scenario.channel_mode = s.channel_mode;
        Ok(scenario)
    }

    pub fn task(&self) -> Result<FederatedTask, String> {
        let t = &self.train;
        let spec = TwoBlobSpec {
            users: self.system.K,
            samples_per_user: t.samples_per_user,
            test_samples: t.test_samples,
            dim: t.dim,
            separation: t.separation,
            batch: t.batch,
            seed: t.data_seed,
        };
        let model = match t.model {
            ModelChoice::Logistic => ModelKind::Logistic,
            ModelChoice::Mlp => ModelKind::Mlp { hidden: t.hidden },
        };
        let task = FederatedTask::two_blob(&spec, model).map_err(|e| e.to_string())?;
        if t.init_scale > 0.0 {
            task.with_init_scale(t.init_scale).map_err(|e| e.to_string())
        } else {
            Ok(task)
        }
    }
}

/// Where a preset value comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Source {
    PaperStated,
    Chosen,
}

/// A built-in configuration and the source of each of its values.
#[derive(Debug, Clone)]
pub struct Preset {
    pub name: &'static str,
    pub config: Config,
    pub provenance: BTreeMap<&'static str, Source>,
}

pub const PRESET_NAMES: [&str; 4] = ["fig2-left", "fig2-right", "fig3", "fig4"];

fn flags(stated: &[&'static str], chosen: &[&'static str]) -> BTreeMap<&'static str, Source> {
    stated
        .iter()
        .map(|k| (*k, Source::PaperStated))
        .chain(chosen.iter().map(|k| (*k, Source::Chosen)))
        .collect()
}

/// A cell with `R/r0 = 30`, `r0 = 10 m`.
fn ratio_30_cell() -> CellSection {
    CellSection {
        R_m: 300.0,
        ..CellSection::default()
    }
}

pub fn preset(name: &str) -> Result<Preset, CliError> {
    let base = Config::default();
    let p = match name {
        "fig2-left" => Preset {
            name: "fig2-left",
            config: Config {
                cell: ratio_30_cell(),
                system: SystemSection {
                    K: 21,
                    ..SystemSection::default()
                },
                sweep: SweepSection {
                    schemes: vec![Scheme::AirCompPc, Scheme::Ideal],
                    P_s_dBW: (0..=18).map(|i| -120.0 + 5.0 * f64::from(i)).collect(),
                    ..SweepSection::default()
                },
                ..base
            },
            provenance: flags(
                &["system.K", "system.p_loc", "cell.alpha", "cell.R_m/r0_m"],
                &["cell.N0_dBm", "cell.M", "sweep.P_s_dBW", "sweep.schemes", "trials", "system.channel_mode"],
            ),
        },
        "fig2-right" => Preset {
            name: "fig2-right",
            config: Config {
                cell: ratio_30_cell(),
                system: SystemSection {
                    K: 21,
                    ..SystemSection::default()
                },
                sweep: SweepSection {
                    schemes: vec![Scheme::AirCompPc, Scheme::Ideal],
                    K: (1..=8).map(|i| 7 * i).collect(),
                    ..SweepSection::default()
                },
                ..base
            },
            provenance: flags(
                &["cell.P_dBW/M (P_s = -50 dBW)", "system.p_loc", "cell.alpha", "cell.R_m/r0_m"],
                &["cell.N0_dBm", "sweep.K", "sweep.schemes", "trials", "system.channel_mode"],
            ),
        },
        "fig3" => Preset {
            name: "fig3",
            config: Config {
                cell: ratio_30_cell(),
                system: SystemSection {
                    K: 54,
                    K_C: 9,
                    L: 3,
                    ..SystemSection::default()
                },
                sweep: SweepSection {
                    schemes: vec![
                        Scheme::AirCompPc,
                        Scheme::Cluster(RelaySolver::Strongest),
                        Scheme::Cluster(RelaySolver::GreedyExact),
                        Scheme::Ideal,
                    ],
                    K: vec![18, 36, 54],
                    L: (1..=5).collect(),
                    ..SweepSection::default()
                },
                ..base
            },
            provenance: flags(
                &["system.K_C", "system.p_loc", "cell.alpha", "cell.R_m/r0_m", "cell.P_dBW/M (P_s = -50 dBW)", "sweep.L"],
                &["cell.N0_dBm", "sweep.K", "sweep.schemes", "trials", "system.channel_mode"],
            ),
        },
        "fig4" => Preset {
            name: "fig4",
            config: Config {
                trials: 20_000,
                ..base
            },
            provenance: flags(
                &[
                    "system.K",
                    "system.C",
                    "system.K_C",
                    "cell.R_m",
                    "cell.r0_m",
                    "cell.alpha",
                    "cell.M",
                    "cell.P_dBW/M (P_s = -50 dBW)",
                ],
                &[
                    "cell.N0_dBm",
                    "system.L",
                    "system.p_loc",
                    "train.model",
                    "train.eta",
                    "train.batch",
                    "train.rounds",
                    "train.dim",
                    "train.samples_per_user",
                    "train.test_samples",
                    "train.separation",
                    "train.init_scale",
                    "train.data_seed",
                    "trials",
                ],
            ),
        },
        other => {
            let nearest = PRESET_NAMES
                .iter()
                .min_by_key(|p| key_distance(other, p))
                .expect("presets exist");
            return Err(CliError::Config(format!("unknown preset `{other}`; did you mean `{nearest}`?")));
        }
    };
    p.config.validate().map_err(CliError::Config)?;
    Ok(p)
}
