//! Subcommand implementations.

use std::io::Write;

use aircomp::analysis::{nsnr_large_k, PathLossMoments};
use aircomp::channel::CellConfig;
use aircomp::learning::{train, Aggregator, ChannelSource, TrainConfig};
use aircomp::montecarlo::{estimate_nsnr, run_point, sweep, ExperimentRecord, Scenario, Scheme, SweepPoint};
use aircomp::relay::{draw_relay_gains, ClusterLayout, RelaySolver, EXHAUSTIVE_MAX_CANDIDATES};
use aircomp::rng::tag;
use aircomp::MasterSeed;

use crate::config::{preset, Config, Preset, DEFAULT_SEED, SEED_ENV};
use crate::manifest::{config_hash, manifest_path, RunManifest};
use crate::{CliError, Command, Common, Overrides};

pub const SWEEP_COLUMNS: [&str; 19] = [
    "scheme",
    "K",
    "C",
    "K_C",
    "L",
    "P_s_dBW",
    "N0_dBm",
    "alpha",
    "R_over_r0",
    "p_loc",
    "trials",
    "failures",
    "q_hat",
    "ci95_lo",
    "ci95_hi",
    "chernoff",
    "nsnr",
    "K_eff",
    "seed",
];

pub const TRAIN_COLUMNS: [&str; 6] = ["round", "scheme", "train_loss", "test_acc", "mean_p_loc", "failure_fraction"];

const RELAY_COLUMNS: [&str; 8] = [
    "solver",
    "C",
    "L",
    "instances",
    "mean_objective",
    "optimum_rate",
    "worst_ratio_to_best",
    "below_strongest",
];

/// A config with its origin and the seed it runs under.
struct Resolved {
    config: Config,
    preset: Option<Preset>,
    seed: u64,
    seed_source: &'static str,
}

fn resolve_seed(flag: Option<u64>, config: Option<u64>) -> Result<(u64, &'static str), CliError> {
    if let Some(s) = flag {
        return Ok((s, "command-line"));
    }
    if let Some(s) = config {
        return Ok((s, "config"));
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(|s| (s, "environment"))
            .map_err(|_| CliError::Config(format!("{SEED_ENV}={v} is not an unsigned integer"))),
        Err(_) => Ok((DEFAULT_SEED, "default")),
    }
}

fn apply(cfg: &mut Config, o: &Overrides) {
    if let Some(a) = o.alpha {
        cfg.cell.alpha = a;
    }
    if let Some(r) = o.ratio {
        cfg.cell.R_m = r * cfg.cell.r0_m;
    }
    if let Some(k) = o.K {
        cfg.system.K = k;
        cfg.system.C = None;
        cfg.sweep.K.clear();
    }
    if let Some(kc) = o.K_C {
        cfg.system.K_C = kc;
        cfg.system.C = None;
    }
    if let Some(l) = o.L {
        cfg.system.L = l;
        cfg.sweep.L.clear();
    }
    if let Some(p) = o.p_loc {
        cfg.system.p_loc = p;
    }
    if let Some(ps) = o.P_s_dBW {
        cfg.cell.P_dBW = ps + 10.0 * f64::from(cfg.cell.M).log10();
        cfg.sweep.P_s_dBW.clear();
    }
    if let Some(n0) = o.N0_dBm {
        cfg.cell.N0_dBm = n0;
    }
    if let Some(t) = o.trials {
        cfg.trials = t;
    }
}

fn resolve(common: &Common, overrides: &Overrides) -> Result<Resolved, CliError> {
    let (mut config, preset) = match (&common.config, &common.preset) {
        (Some(path), _) => (Config::load(path)?, None),
        (None, Some(name)) => {
            let p = preset(name)?;
            (p.config.clone(), Some(p))
        }
        (None, None) => (Config::default(), None),
    };
    apply(&mut config, overrides);
    config.validate().map_err(CliError::Config)?;
    let (seed, seed_source) = resolve_seed(common.seed, config.seed)?;
    config.seed = Some(seed);
    Ok(Resolved {
        config,
        preset,
        seed,
        seed_source,
    })
}

fn cell(cfg: &Config) -> Result<CellConfig, CliError> {
    cfg.cell_config().map_err(CliError::Config)
}

/// Writes a manifest line and CSV rows to `--out` (plus its JSON manifest)
/// or to `out`.
fn emit(
    command: &str,
    common: &Common,
    resolved: &Resolved,
    columns: &[&str],
    rows: &[Vec<String>],
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let manifest = RunManifest {
        tool: aircomp::VERSION,
        command,
        config_sha256: config_hash(&resolved.config),
        seed: resolved.seed,
        seed_source: resolved.seed_source,
        preset: resolved.preset.as_ref().map(|p| p.name),
        provenance: resolved.preset.as_ref().map(|p| p.provenance.clone()).unwrap_or_default(),
        config: &resolved.config,
        columns,
        rows: rows.len(),
    };
    let mut body = Vec::new();
    writeln!(body, "{}", manifest.line())?;
    {
        let mut w = csv::Writer::from_writer(&mut body);
        w.write_record(columns).map_err(|e| CliError::Runtime(e.to_string()))?;
        for row in rows {
            w.write_record(row).map_err(|e| CliError::Runtime(e.to_string()))?;
        }
        w.flush()?;
    }
    match &common.out {
        Some(path) => {
            std::fs::write(path, &body)
                .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
            let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
            let mpath = manifest_path(path);
            std::fs::write(&mpath, json + "\n")
                .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", mpath.display())))?;
        }
        None => out.write_all(&body)?,
    }
    Ok(())
}

pub fn record_row(r: &ExperimentRecord) -> Vec<String> {
    vec![
        r.scheme.id(),
        r.K.to_string(),
        r.C.to_string(),
        r.K_C.to_string(),
        r.L.to_string(),
        r.P_s_dBW.to_string(),
        r.N0_dBm.to_string(),
        r.alpha.to_string(),
        r.R_over_r0.to_string(),
        r.p_loc.to_string(),
        r.estimate.trials.to_string(),
        r.estimate.failures.to_string(),
        r.estimate.q_hat.to_string(),
        r.estimate.ci95_lo.to_string(),
        r.estimate.ci95_hi.to_string(),
        r.overlays.chernoff.to_string(),
        r.overlays.nsnr.to_string(),
        r.overlays.k_eff.to_string(),
        r.seed.to_string(),
    ]
}

fn parse_scheme(s: &str) -> Result<Scheme, CliError> {
    s.parse::<Scheme>().map_err(|e| CliError::Config(e.to_string()))
}

/// Every grid point of `[sweep]`: schemes × K × L × P_s, with the L axis
/// collapsed for schemes that have no relays.
pub fn grid(cfg: &Config) -> Result<Vec<SweepPoint>, CliError> {
    let base = cell(cfg)?;
    let s = &cfg.sweep;
    let ks = if s.K.is_empty() { vec![cfg.system.K] } else { s.K.clone() };
    let ls = if s.L.is_empty() { vec![cfg.system.L] } else { s.L.clone() };
    let ps = if s.P_s_dBW.is_empty() { vec![base.symbol_power_dbw()] } else { s.P_s_dBW.clone() };
    let mut points = Vec::new();
    for &scheme in &s.schemes {
        let relays: &[usize] = match scheme {
            Scheme::Cluster(_) => &ls,
            _ => &ls[..1],
        };
        for &k in &ks {
            for &l in relays {
                for &p in &ps {
                    let cell = base.with_symbol_power_dbw(p)?;
                    let mut scenario = Scenario::clustered(cell, k, cfg.system.K_C, l, cfg.system.p_loc);
                    scenario.channel_mode = cfg.system.channel_mode;
                    scenario.layout(scheme)?;
                    points.push(SweepPoint { scheme, scenario });
                }
            }
        }
    }
    Ok(points)
}

pub fn dispatch(command: Command, out: &mut dyn Write) -> Result<i32, CliError> {
    match command {
        Command::Snr {
            common,
            overrides,
            mc_draws,
        } => snr(&common, &overrides, mc_draws, out),
        Command::Failprob {
            common,
            overrides,
            scheme,
        } => {
            let r = resolve(&common, &overrides)?;
            let scheme = parse_scheme(&scheme)?;
            let mut scenario = r.config.scenario().map_err(CliError::Config)?;
            scenario.channel_mode = r.config.system.channel_mode;
            let record = run_point(&SweepPoint { scheme, scenario }, r.config.trials, MasterSeed(r.seed))?;
            emit("failprob", &common, &r, &SWEEP_COLUMNS, &[record_row(&record)], out)?;
            Ok(0)
        }
        Command::Sweep { common, overrides } => {
            if common.config.is_none() && common.preset.is_none() {
                return Err(CliError::Usage("sweep needs --config or --preset".into()));
            }
            let r = resolve(&common, &overrides)?;
            let points = grid(&r.config)?;
            let records = sweep(&points, r.config.trials, MasterSeed(r.seed))?;
            let rows: Vec<Vec<String>> = records.iter().map(record_row).collect();
            emit("sweep", &common, &r, &SWEEP_COLUMNS, &rows, out)?;
            Ok(0)
        }
        Command::RelayBench {
            common,
            clusters,
            relays,
            instances,
            alpha,
            ratio,
        } => relay_bench(&common, clusters, relays, instances, alpha, ratio, out),
        Command::Train {
            common,
            overrides,
            rounds,
            eta,
            scheme,
        } => {
            let mut r = resolve(&common, &overrides)?;
            if let Some(n) = rounds {
                r.config.train.rounds = n;
            }
            if let Some(e) = eta {
                r.config.train.eta = e;
            }
            if !scheme.is_empty() {
                r.config.train.schemes = scheme.iter().map(|s| parse_scheme(s)).collect::<Result<_, _>>()?;
            }
            r.config.validate().map_err(CliError::Config)?;
            let rows = train_rows(&r.config, r.seed)?;
            emit("train", &common, &r, &TRAIN_COLUMNS, &rows, out)?;
            Ok(0)
        }
        Command::Validate { seed } => {
            let (seed, _) = resolve_seed(seed, None)?;
            let checks = crate::validate::run_all(MasterSeed(seed));
            let mut failed = 0;
            for c in &checks {
                writeln!(out, "{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail)?;
                failed += usize::from(!c.passed);
            }
            writeln!(out, "{} of {} checks passed", checks.len() - failed, checks.len())?;
            Ok(if failed == 0 { 0 } else { 2 })
        }
    }
}

/// The aggregator that trains with `scheme` in the configured cell.
pub fn aggregator(cfg: &Config, scheme: Scheme) -> Result<Aggregator, CliError> {
    let cell = cell(cfg)?;
    Ok(match scheme {
        Scheme::Ideal => Aggregator::Ideal,
        Scheme::AirCompPc => Aggregator::AirCompPc(ChannelSource::Cell(cell)),
        Scheme::Cluster(solver) => Aggregator::Cluster {
            cell,
            cluster_size: cfg.system.K_C,
            relays: cfg.system.L,
            solver,
        },
    })
}

pub fn train_rows(cfg: &Config, seed: u64) -> Result<Vec<Vec<String>>, CliError> {
    let task = cfg.task().map_err(CliError::Config)?;
    let t = &cfg.train;
    let mut rows = Vec::new();
    for &scheme in &t.schemes {
        let agg = aggregator(cfg, scheme)?;
        let outcome = train(
            &task,
            &agg,
            &TrainConfig {
                rounds: t.rounds,
                eta: t.eta,
                batch: t.batch,
                seed: MasterSeed(seed),
            },
        )?;
        for m in &outcome.metrics {
            rows.push(vec![
                m.round.to_string(),
                scheme.id(),
                m.train_loss.to_string(),
                m.test_acc.map(|a| a.to_string()).unwrap_or_default(),
                m.mean_p_loc.to_string(),
                m.failure_fraction.to_string(),
            ]);
        }
    }
    Ok(rows)
}

fn snr(common: &Common, overrides: &Overrides, mc_draws: u64, out: &mut dyn Write) -> Result<i32, CliError> {
    let r = resolve(common, overrides)?;
    let cell = cell(&r.config)?;
    let users = r.config.system.K;
    let moments = PathLossMoments::of_cell(&cell);
    let noise_free = moments.nsnr(0.0, usize::MAX);
    let with_noise = nsnr_large_k(&cell, users);
    let mut fields: Vec<(&str, String)> = vec![
        ("alpha", cell.alpha().to_string()),
        ("R_over_r0", cell.ratio().to_string()),
        ("K", users.to_string()),
        ("P_s_dBW", cell.symbol_power_dbw().to_string()),
        ("N0_dBm", cell.noise_dbm().to_string()),
        ("noise_var", cell.noise_var().to_string()),
        ("mean_sqrt_path_loss", moments.sqrt_mean.to_string()),
        ("mean_path_loss", moments.mean.to_string()),
        ("nsnr", format!("{noise_free:.6}")),
        ("nsnr_large_k", with_noise.to_string()),
        ("K_eff", ((users as f64 * with_noise).round() as u64).to_string()),
    ];
    if cell.alpha_flagged() {
        fields.push(("alpha_note", "outside (2, 4)".into()));
    }
    if mc_draws > 0 {
        let mc = estimate_nsnr(&cell, users, mc_draws, MasterSeed(r.seed))?;
        fields.push(("nsnr_mc", mc.mean.to_string()));
        fields.push(("nsnr_mc_std_err", mc.std_err.to_string()));
        fields.push(("mc_draws", mc_draws.to_string()));
    }
    let columns: Vec<&str> = fields.iter().map(|f| f.0).collect();
    let row: Vec<String> = fields.iter().map(|f| f.1.clone()).collect();
    emit("snr", common, &r, &columns, &[row], out)?;
    Ok(0)
}

#[allow(clippy::too_many_arguments)]
fn relay_bench(
    common: &Common,
    clusters: usize,
    relays: usize,
    instances: u64,
    alpha: Option<f64>,
    ratio: Option<f64>,
    out: &mut dyn Write,
) -> Result<i32, CliError> {
    if instances == 0 {
        return Err(CliError::Config("--instances must be positive".into()));
    }
    let overrides = Overrides {
        alpha,
        ratio,
        ..Overrides::default()
    };
    let r = resolve(common, &overrides)?;
    let cell = cell(&r.config)?;
    let layout = ClusterLayout::new(clusters, r.config.system.K_C, relays)?;
    let exhaustive = ((relays + 1) as u128)
        .checked_pow(clusters as u32)
        .is_some_and(|n| n <= EXHAUSTIVE_MAX_CANDIDATES);
    let solvers: Vec<RelaySolver> = RelaySolver::ALL
        .into_iter()
        .filter(|s| exhaustive || *s != RelaySolver::Exhaustive)
        .collect();
    let seed = MasterSeed(r.seed);
    let mut sums = vec![0.0; solvers.len()];
    let mut hits = vec![0u64; solvers.len()];
    let mut worst = vec![f64::INFINITY; solvers.len()];
    let mut below = vec![0u64; solvers.len()];
    for i in 0..instances {
        let gains = draw_relay_gains(&mut seed.stream(&[tag::PROBE, i]), &layout, &cell);
        let objs = solvers
            .iter()
            .map(|s| s.solve(&gains).map(|sel| sel.objective))
            .collect::<Result<Vec<f64>, _>>()?;
        let best = objs.iter().cloned().fold(0.0, f64::max);
        let strongest = objs[0];
        for (j, &o) in objs.iter().enumerate() {
            sums[j] += o;
            if o >= best * (1.0 - 1e-12) {
                hits[j] += 1;
            }
            if best > 0.0 {
                worst[j] = worst[j].min(o / best);
            }
            if o < strongest * (1.0 - 1e-12) {
                below[j] += 1;
            }
        }
    }
    let rows: Vec<Vec<String>> = solvers
        .iter()
        .enumerate()
        .map(|(j, s)| {
            vec![
                s.name().to_string(),
                clusters.to_string(),
                relays.to_string(),
                instances.to_string(),
                (sums[j] / instances as f64).to_string(),
                (hits[j] as f64 / instances as f64).to_string(),
                worst[j].to_string(),
                below[j].to_string(),
            ]
        })
        .collect();
    emit("relay-bench", common, &r, &RELAY_COLUMNS, &rows, out)?;
    Ok(0)
}
