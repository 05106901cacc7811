//! End-to-end acceptance checks. Each test writes one `PASS`/`FAIL` line to
//! standard error, visible without `--nocapture`.
//!
//! `cargo test -p aircomp-cli --test acceptance -- --include-ignored` also
//! runs the checks that cannot pass as stated; see the README.

use std::io::Write;

use aircomp::analysis::{chernoff_failure_bound, exact_failure_probability, normalized_snr, nsnr_large_k, DetectionStats};
use aircomp::channel::{draw_user_channels, CellConfig};
use aircomp::learning::{train, user_stream, Aggregator, FederatedTask, ModelKind, TrainConfig, TwoBlobSpec};
use aircomp::montecarlo::{
    estimate_failure_fixed, estimate_nsnr, expected_noiseless_failure, sweep, ExperimentRecord, Scheme,
};
use aircomp::relay::{draw_relay_gains, ClusterLayout, RelaySolver};
use aircomp::rng::tag;
use aircomp::voting::sign;
use aircomp::MasterSeed;
use aircomp_cli::commands::{grid, train_rows};
use aircomp_cli::config::preset;
use rand::Rng;

fn report(criterion: &str, passed: bool, detail: impl std::fmt::Display) {
    let verdict = if passed { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "{verdict} criterion {criterion}: {detail}");
}

/// Majority-vote failure of `n` ideal voters, summed term by term.
fn binomial_failure(n: u64, p: f64) -> f64 {
    let mut fail = 0.0;
    for k in 0..=n {
        let mut ln = 0.0;
        for i in 0..k {
            ln += ((n - i) as f64 / (k - i) as f64).ln();
        }
        let pmf = (ln + k as f64 * p.ln() + (n - k) as f64 * (1.0 - p).ln()).exp();
        if 2 * k < n {
            fail += pmf;
        } else if 2 * k == n {
            fail += 0.5 * pmf;
        }
    }
    fail
}

fn find<'a>(records: &'a [ExperimentRecord], scheme: &str, k: usize, l: Option<usize>) -> &'a ExperimentRecord {
    records
        .iter()
        .find(|r| r.scheme.id() == scheme && r.K == k && l.is_none_or(|l| r.L == l))
        .unwrap_or_else(|| panic!("no record for {scheme} K={k} L={l:?}"))
}

fn separated_below(a: &ExperimentRecord, b: &ExperimentRecord) -> bool {
    a.estimate.ci95_hi < b.estimate.ci95_lo
}

#[test]
fn c01_effective_participation_constant() {
    let mut out = Vec::new();
    let code = aircomp_cli::run(["aircomp", "snr", "--alpha", "3", "--ratio", "30"], &mut out, &mut Vec::new());
    let text = String::from_utf8(out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    let header: Vec<&str> = lines[1].split(',').collect();
    let row: Vec<&str> = lines[2].split(',').collect();
    let nsnr: f64 = row[header.iter().position(|h| *h == "nsnr").unwrap()].parse().unwrap();
    let passed = code == 0 && (nsnr - 0.106).abs() <= 0.001;
    report("1", passed, format!("nSNR at alpha = 3, R/r0 = 30 is {nsnr:.5} (target 0.106 ± 0.001)"));
    assert!(passed);
}

#[test]
fn c02_normalized_snr_range() {
    let mut rng = MasterSeed(2).stream(&[0]);
    let mut outside = 0;
    for _ in 0..100_000 {
        let k = rng.random_range(1..=64);
        let gains: Vec<f64> = (0..k)
            .map(|_| if rng.random_bool(0.1) { 0.0 } else { 10f64.powf(rng.random_range(-6.0..2.0)) })
            .collect();
        let noise = if rng.random_bool(0.2) { 0.0 } else { 10f64.powf(rng.random_range(-12.0..4.0)) };
        let v = normalized_snr(&gains, noise);
        if !(0.0..=1.0).contains(&v) {
            outside += 1;
        }
    }
    let equal = normalized_snr(&[0.37; 11], 0.0);
    let passed = outside == 0 && equal == 1.0;
    report("2", passed, format!("{outside} of 100000 configs outside [0, 1]; equal gains give {equal}"));
    assert!(passed);
}

#[test]
fn c03_chernoff_dominates_exact() {
    let mut rng = MasterSeed(3).stream(&[0]);
    let mut violations = 0;
    let mut tightest = f64::INFINITY;
    for _ in 0..1000 {
        let k = rng.random_range(1..=16);
        let gains: Vec<f64> = (0..k).map(|_| rng.random_range(0.01..2.0)).collect();
        let p: Vec<f64> = (0..k).map(|_| rng.random_range(0.5..=1.0)).collect();
        let noise = if rng.random_bool(0.1) { 0.0 } else { 10f64.powf(rng.random_range(-3.0..1.5)) };
        let exact = exact_failure_probability(&gains, &p, noise).unwrap();
        let bound = chernoff_failure_bound(&DetectionStats::compute(&gains, &p, noise).unwrap());
        if exact > bound + 1e-12 {
            violations += 1;
        }
        tightest = tightest.min(bound - exact);
    }
    let passed = violations == 0;
    report("3", passed, format!("{violations} of 1000 configs violate the bound; smallest margin {tightest:.3e}"));
    assert!(passed);
}

fn random_fixed_config(rng: &mut impl Rng) -> (Vec<f64>, Vec<f64>, f64) {
    let k = rng.random_range(2..=16);
    let cell = CellConfig::from_ratio(rng.random_range(5.0..100.0), rng.random_range(2.5..3.5)).unwrap();
    let gains = draw_user_channels(rng, k, &cell).unwrap().into_gains();
    let p: Vec<f64> = (0..k).map(|_| rng.random_range(0.5..0.8)).collect();
    let energy: f64 = gains.iter().map(|g| g * g).sum();
    let noise = energy * 10f64.powf(rng.random_range(-2.0..1.0));
    (gains, p, noise)
}

/// With 95% intervals, a correct estimator leaves two or more of 20 exact
/// values outside about 26% of the time; this seed is one of those.
#[test]
#[ignore = "19 of 20 fails by chance for about one seed in four"]
fn c04_monte_carlo_matches_exact_oracle() {
    let seed = MasterSeed(4);
    let mut rng = seed.stream(&[0]);
    let mut inside = 0;
    for i in 0..20 {
        let (gains, p, noise) = random_fixed_config(&mut rng);
        let exact = exact_failure_probability(&gains, &p, noise).unwrap();
        let est = estimate_failure_fixed(&gains, &p, noise, 1_000_000, seed.child(&[1, i])).unwrap();
        if est.contains(exact) {
            inside += 1;
        }
    }
    let passed = inside >= 19;
    report("4", passed, format!("{inside} of 20 exact values inside the Wilson 95% interval (need 19)"));
    assert!(passed);
}

#[test]
fn c04_interval_coverage_over_many_configs() {
    let seed = MasterSeed(400);
    let mut rng = seed.stream(&[0]);
    let n = 400;
    let mut inside = 0;
    let mut z = Vec::with_capacity(n);
    for i in 0..n as u64 {
        let (gains, p, noise) = random_fixed_config(&mut rng);
        let exact = exact_failure_probability(&gains, &p, noise).unwrap();
        let est = estimate_failure_fixed(&gains, &p, noise, 200_000, seed.child(&[1, i])).unwrap();
        inside += usize::from(est.contains(exact));
        z.push((est.q_hat - exact) / est.std_err());
    }
    let mean = z.iter().sum::<f64>() / n as f64;
    let var = z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    // 3-sigma acceptance region around 95% coverage
    let slack = 3.0 * (n as f64 * 0.05 * 0.95).sqrt();
    let coverage_ok = (inside as f64 - 0.95 * n as f64).abs() <= slack;
    let passed = coverage_ok && mean.abs() <= 3.0 / (n as f64).sqrt() && (0.8..=1.2).contains(&var);
    report(
        "4 (coverage over 400 configs)",
        passed,
        format!("{inside} of {n} inside; z-scores have mean {mean:.3} and variance {var:.3}"),
    );
    assert!(passed);
}

#[test]
fn c05_power_sweep_reaches_the_error_floor() {
    let p = preset("fig2-left").unwrap();
    let mut cfg = p.config;
    cfg.sweep.schemes = vec![Scheme::AirCompPc];
    let records = sweep(&grid(&cfg).unwrap(), 200_000, MasterSeed(5)).unwrap();
    let mut rising = Vec::new();
    for w in records.windows(2) {
        let (a, b) = (&w[0].estimate, &w[1].estimate);
        let slack = 3.0 * (a.std_err().powi(2) + b.std_err().powi(2)).sqrt();
        if b.q_hat > a.q_hat + slack {
            rising.push(w[1].P_s_dBW);
        }
    }
    let last = records.last().unwrap();
    let cell = cfg.cell_config().unwrap().with_symbol_power_dbw(last.P_s_dBW).unwrap();
    let floor = expected_noiseless_failure(&cell, 21, 0.55, 20_000, MasterSeed(50)).unwrap().mean;
    let rel = (last.estimate.q_hat - floor).abs() / floor;
    let passed = rising.is_empty() && (last.P_s_dBW + 30.0).abs() < 1e-9 && rel <= 0.10;
    report(
        "5",
        passed,
        format!(
            "q falls from {:.4} to {:.4}; increases beyond 3 sigma at {rising:?}; floor {floor:.4}, off by {:.1}%",
            records[0].estimate.q_hat,
            last.estimate.q_hat,
            100.0 * rel
        ),
    );
    assert!(passed);
}

#[test]
fn c06_gap_and_effective_users() {
    let mut cfg = preset("fig2-right").unwrap().config;
    cfg.sweep.K = vec![7, 14, 21, 28];
    let records = sweep(&grid(&cfg).unwrap(), 500_000, MasterSeed(6)).unwrap();
    let mut gaps = Vec::new();
    let mut detail = Vec::new();
    let mut ok = true;
    for k in [7, 14, 21, 28] {
        let air = find(&records, "aircomp_pc", k, None);
        let ideal = find(&records, "ideal", k, None);
        ok &= separated_below(ideal, air);
        gaps.push(air.estimate.q_hat - ideal.estimate.q_hat);
        let k_eff = ((0.106 * k as f64).round() as u64).max(1);
        let reference = binomial_failure(k_eff, 0.55);
        let ratio = air.estimate.q_hat / reference;
        ok &= (0.5..=2.0).contains(&ratio);
        detail.push(format!("K={k}: gap {:.4}, q/q_ideal(K_eff={k_eff}) {ratio:.3}", gaps.last().unwrap()));
    }
    ok &= gaps.windows(2).all(|w| w[1] > w[0]);
    report("6", ok, detail.join("; "));
    assert!(ok);
}

#[test]
fn c07_relay_solver_chain() {
    let cell = CellConfig::from_ratio(30.0, 3.0).unwrap();
    let layout = ClusterLayout::new(4, 9, 3).unwrap();
    let seed = MasterSeed(7);
    let (mut chain, mut optimal) = (0, 0);
    let n = 500;
    for i in 0..n {
        let g = draw_relay_gains(&mut seed.stream(&[tag::PROBE, i]), &layout, &cell);
        let obj = |s: RelaySolver| s.solve(&g).unwrap().objective;
        let (ex, gr, st) = (
            obj(RelaySolver::Exhaustive),
            obj(RelaySolver::GreedyExact),
            obj(RelaySolver::Strongest),
        );
        let tol = 1e-12 * ex;
        if ex + tol >= gr && gr + tol >= st {
            chain += 1;
        }
        if gr + tol >= ex {
            optimal += 1;
        }
    }
    // measured 391/500 with this seed; pinned just below
    let rate = optimal as f64 / n as f64;
    let passed = chain == n && rate >= 0.75;
    report(
        "7",
        passed,
        format!("chain holds on {chain}/{n}; greedy-exact optimal on {:.1}% (pinned at 75%)", 100.0 * rate),
    );
    assert!(passed);
}

fn cooperation_records() -> Vec<ExperimentRecord> {
    let mut cfg = preset("fig3").unwrap().config;
    cfg.sweep.L = vec![3, 5];
    sweep(&grid(&cfg).unwrap(), 400_000, MasterSeed(8)).unwrap()
}

fn cooperation_check(records: &[ExperimentRecord], ks: &[usize]) -> (bool, String) {
    let mut ok = true;
    let mut detail = Vec::new();
    for &k in ks {
        let none = find(records, "aircomp_pc", k, None);
        let strongest = find(records, "cluster-strongest", k, Some(3));
        let greedy = find(records, "cluster-greedy-exact", k, Some(3));
        let greedy5 = find(records, "cluster-greedy-exact", k, Some(5));
        let ideal = find(records, "ideal", k, None);
        let ordered = separated_below(greedy, strongest) && separated_below(strongest, none);
        let close = greedy5.estimate.q_hat <= 2.0 * ideal.estimate.q_hat;
        ok &= ordered && close;
        detail.push(format!(
            "K={k}: greedy {:.4} strongest {:.4} no-coop {:.4} | L=5 {:.4} ideal {:.4}",
            greedy.estimate.q_hat,
            strongest.estimate.q_hat,
            none.estimate.q_hat,
            greedy5.estimate.q_hat,
            ideal.estimate.q_hat
        ));
    }
    (ok, detail.join("; "))
}

/// At K = 18 there are two clusters, and with two fused votes any relay
/// choice fails with probability exactly `1 − p_c`, so greedy and strongest
/// cannot be separated there.
#[test]
#[ignore = "greedy and strongest coincide with two clusters"]
fn c08_cooperation_gain() {
    let (ok, detail) = cooperation_check(&cooperation_records(), &[18, 36, 54]);
    report("8", ok, detail);
    assert!(ok);
}

#[test]
fn c08_cooperation_gain_beyond_two_clusters() {
    let records = cooperation_records();
    let (ok, detail) = cooperation_check(&records, &[36, 54]);
    let close18 = find(&records, "cluster-greedy-exact", 18, Some(5)).estimate.q_hat
        <= 2.0 * find(&records, "ideal", 18, None).estimate.q_hat;
    report("8 (K = 36, 54; L = 5 check at all K)", ok && close18, detail);
    assert!(ok && close18);
}

#[test]
fn c09_training_ordering() {
    let mut ordered = 0;
    let mut closer = 0;
    let mut detail = Vec::new();
    for s in 0..5u64 {
        let mut cfg = preset("fig4").unwrap().config;
        cfg.train.data_seed = 100 + s;
        let rows = train_rows(&cfg, s).unwrap();
        let last = cfg.train.rounds.to_string();
        let acc = |scheme: &str| -> f64 {
            let row = rows.iter().find(|r| r[0] == last && r[1] == scheme).unwrap();
            row[3].parse().unwrap()
        };
        let (ideal, greedy, none) = (acc("ideal"), acc("cluster-greedy-exact"), acc("aircomp_pc"));
        ordered += usize::from(ideal >= greedy && greedy >= none);
        closer += usize::from(ideal - greedy < ideal - none);
        detail.push(format!("{ideal:.3}/{greedy:.3}/{none:.3}"));
    }
    let passed = ordered == 5 && closer >= 4;
    report(
        "9",
        passed,
        format!(
            "ideal/greedy/no-coop accuracy {}; ordered in {ordered}/5, greedy closer to ideal in {closer}/5",
            detail.join(", ")
        ),
    );
    assert!(passed);
}

#[test]
fn c10_algorithm_conformance() {
    let eta = 1.0 / 1024.0;
    let spec = TwoBlobSpec {
        users: 1,
        samples_per_user: 32,
        test_samples: 200,
        dim: 16,
        ..TwoBlobSpec::default()
    };
    let single = FederatedTask::two_blob(&spec, ModelKind::Logistic).unwrap();
    let cfg = TrainConfig {
        rounds: 80,
        eta,
        batch: 4,
        seed: MasterSeed(10),
    };
    let out = train(&single, &Aggregator::Ideal, &cfg).unwrap();
    let mut w = single.init_params(cfg.seed);
    for n in 0..cfg.rounds {
        let mut rng = user_stream(cfg.seed, n, 0);
        let g = single.local_stochastic_gradient(0, &w, cfg.batch, &mut rng).unwrap();
        for (wi, gi) in w.iter_mut().zip(g) {
            *wi -= eta * sign(gi, &mut rng).unwrap().as_f64();
        }
    }
    let bitwise = out.state.w == w;

    let fig4 = preset("fig4").unwrap().config;
    let mut cfg4 = fig4.clone();
    cfg4.train.init_scale = 0.0;
    let task = cfg4.task().unwrap();
    let mut exact_steps = true;
    for scheme in [Scheme::Ideal, Scheme::AirCompPc, Scheme::Cluster(RelaySolver::GreedyExact)] {
        let agg = aircomp_cli::commands::aggregator(&cfg4, scheme).unwrap();
        let mut prev = task.init_params(MasterSeed(10));
        for rounds in 1..=10 {
            let c = TrainConfig {
                rounds,
                eta,
                batch: 4,
                seed: MasterSeed(10),
            };
            let w = train(&task, &agg, &c).unwrap().state.w;
            exact_steps &= w.iter().zip(&prev).all(|(a, b)| a - b == eta || a - b == -eta);
            prev = w;
        }
    }
    let passed = bitwise && exact_steps;
    report(
        "10",
        passed,
        format!("K = 1 matches plain signSGD bit for bit: {bitwise}; every step is ±eta: {exact_steps}"),
    );
    assert!(passed);
}

#[test]
fn c11_normalized_snr_report() {
    let cell = preset("fig4").unwrap().config.cell_config().unwrap();
    let mc = estimate_nsnr(&cell, 54, 20_000, MasterSeed(11)).unwrap();
    let closed = nsnr_large_k(&cell, 54);
    report(
        "11",
        mc.mean.is_finite() && closed.is_finite(),
        format!(
            "K = 54, R = 1000 m: simulated nSNR {:.4} ± {:.4}, closed form {closed:.4}; published value about 0.32 (not gated)",
            mc.mean, mc.std_err
        ),
    );
    assert!(mc.mean.is_finite() && closed.is_finite());
}
