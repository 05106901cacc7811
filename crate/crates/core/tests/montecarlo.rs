use aircomp::channel::CellConfig;
use aircomp::montecarlo::{
    estimate_failure, run_point, sweep, ChannelMode, Scenario, Scheme, SweepPoint,
};
use aircomp::relay::RelaySolver;
use aircomp::MasterSeed;

fn pool(threads: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap()
}

fn grid() -> Vec<SweepPoint> {
    let cell = CellConfig::from_ratio(30.0, 3.0).unwrap();
    let mut points = Vec::new();
    for ps in [-70.0, -50.0] {
        let cell = cell.with_symbol_power_dbw(ps).unwrap();
        points.push(SweepPoint {
            scheme: Scheme::AirCompPc,
            scenario: Scenario::flat(cell.clone(), 21, 0.55),
        });
        points.push(SweepPoint {
            scheme: Scheme::Cluster(RelaySolver::GreedyExact),
            scenario: Scenario::clustered(cell.clone(), 27, 9, 2, 0.55),
        });
    }
    points.push(SweepPoint {
        scheme: Scheme::Ideal,
        scenario: Scenario::flat(cell, 20, 0.6),
    });
    points
}

#[test]
fn sweeps_do_not_depend_on_worker_count() {
    let points = grid();
    let one = pool(1).install(|| sweep(&points, 5000, MasterSeed(41)).unwrap());
    let four = pool(4).install(|| sweep(&points, 5000, MasterSeed(41)).unwrap());
    let seven = pool(7).install(|| sweep(&points, 5000, MasterSeed(41)).unwrap());
    assert_eq!(one, four);
    assert_eq!(one, seven);
    let other = sweep(&points, 5000, MasterSeed(42)).unwrap();
    assert_ne!(one, other);
}

#[test]
fn each_point_gets_its_own_seed() {
    let records = sweep(&grid(), 100, MasterSeed(43)).unwrap();
    let mut seeds: Vec<u64> = records.iter().map(|r| r.seed).collect();
    seeds.sort();
    seeds.dedup();
    assert_eq!(seeds.len(), records.len());
}

#[test]
fn records_rerun_from_their_own_fields() {
    for record in sweep(&grid(), 3000, MasterSeed(44)).unwrap() {
        let again = run_point(&record.point().unwrap(), record.estimate.trials, MasterSeed(record.seed)).unwrap();
        assert_eq!(again.estimate, record.estimate);
        assert_eq!(again.scheme, record.scheme);
    }
}

#[test]
fn estimates_stay_below_the_bound() {
    let cell = CellConfig::from_ratio(30.0, 3.0).unwrap();
    let cases = [
        (Scheme::AirCompPc, Scenario::flat(cell.clone(), 21, 0.55)),
        (Scheme::AirCompPc, Scenario::flat(cell.with_symbol_power_dbw(-80.0).unwrap(), 21, 0.7)),
        (Scheme::Ideal, Scenario::flat(cell.clone(), 15, 0.6)),
        (Scheme::Cluster(RelaySolver::Strongest), Scenario::clustered(cell.clone(), 36, 9, 3, 0.55)),
        (Scheme::Cluster(RelaySolver::GreedyExact), Scenario::clustered(cell, 54, 9, 3, 0.6)),
    ];
    for (i, (scheme, scenario)) in cases.iter().enumerate() {
        let r = run_point(&SweepPoint { scheme: *scheme, scenario: scenario.clone() }, 50_000, MasterSeed(45 + i as u64)).unwrap();
        assert!(
            r.estimate.q_hat <= r.overlays.chernoff + 3.0 * r.estimate.std_err(),
            "{scheme}: {} above bound {}",
            r.estimate.q_hat,
            r.overlays.chernoff
        );
    }
}

#[test]
fn frozen_geometry_only_redraws_fading() {
    let cell = CellConfig::from_ratio(30.0, 3.0).unwrap();
    let mut s = Scenario::flat(cell, 12, 0.6);
    s.channel_mode = ChannelMode::FrozenGeometry;
    let a = estimate_failure(Scheme::AirCompPc, &s, 20_000, MasterSeed(46)).unwrap();
    let b = estimate_failure(Scheme::AirCompPc, &s, 20_000, MasterSeed(46)).unwrap();
    assert_eq!(a, b);
    // different geometries under different seeds spread the estimates well
    // beyond their binomial noise
    let spread: Vec<f64> = (0..8)
        .map(|i| estimate_failure(Scheme::AirCompPc, &s, 20_000, MasterSeed(100 + i)).unwrap().q_hat)
        .collect();
    let lo = spread.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = spread.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    assert!(hi - lo > 6.0 * a.std_err(), "{spread:?}");
}

#[test]
fn trivial_cases() {
    let cell = CellConfig::from_ratio(30.0, 3.0).unwrap().without_noise();
    let e = estimate_failure(Scheme::AirCompPc, &Scenario::flat(cell.clone(), 21, 1.0), 10_000, MasterSeed(47)).unwrap();
    assert_eq!(e.failures, 0);
    let e = estimate_failure(Scheme::AirCompPc, &Scenario::flat(cell, 21, 0.0), 10_000, MasterSeed(47)).unwrap();
    assert_eq!(e.failures, e.trials);
}
