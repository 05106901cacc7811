//! Quick cross-checks of the simulator against independent computations.

use aircomp::analysis::{chernoff_failure_bound, exact_failure_probability, nsnr_large_k, DetectionStats};
use aircomp::channel::CellConfig;
use aircomp::montecarlo::{estimate_failure, estimate_failure_fixed, estimate_nsnr, Scenario, Scheme};
use aircomp::relay::{draw_relay_gains, ClusterLayout, RelaySolver};
use aircomp::rng::tag;
use aircomp::special::normal_cdf;
use aircomp::MasterSeed;

pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> Check {
    Check { name, passed, detail }
}

/// Majority failure by summing binomial terms in plain floating point.
fn binomial_tail(n: u64, p: f64) -> f64 {
    let mut pmf = (1.0 - p).powi(n as i32);
    let mut fail = 0.0;
    for k in 0..=n {
        let weight = match (2 * k).cmp(&n) {
            std::cmp::Ordering::Less => 1.0,
            std::cmp::Ordering::Equal => 0.5,
            std::cmp::Ordering::Greater => 0.0,
        };
        fail += weight * pmf;
        pmf *= (n - k) as f64 / (k + 1) as f64 * p / (1.0 - p);
    }
    fail
}

/// Failure probability by walking all `2^K` vote patterns.
fn enumerate_failure(gains: &[f64], p: f64, noise_var: f64) -> f64 {
    let k = gains.len();
    (0u32..1 << k)
        .map(|mask| {
            let mut prob = 1.0;
            let mut sum = 0.0;
            for (i, g) in gains.iter().enumerate() {
                if mask >> i & 1 == 1 {
                    prob *= p;
                    sum += g;
                } else {
                    prob *= 1.0 - p;
                    sum -= g;
                }
            }
            prob * normal_cdf(-sum / noise_var.sqrt())
        })
        .sum()
}

pub fn run_all(seed: MasterSeed) -> Vec<Check> {
    let mut out = Vec::new();

    let gains = [0.9, 0.2, 0.55, 1.3, 0.05, 0.7, 0.4];
    let exact = exact_failure_probability(&gains, &[0.6; 7], 0.3).unwrap_or(f64::NAN);
    let brute = enumerate_failure(&gains, 0.6, 0.3);
    out.push(check(
        "exact failure probability matches enumeration",
        (exact - brute).abs() < 1e-12,
        format!("{exact:.12} vs {brute:.12}"),
    ));

    let stats = DetectionStats::with_common_p(&gains, 0.6, 0.3);
    let bound = stats.map(|s| chernoff_failure_bound(&s)).unwrap_or(f64::NAN);
    out.push(check("Chernoff bound dominates", exact <= bound, format!("{exact:.6} <= {bound:.6}")));

    let mc = estimate_failure_fixed(&gains, &[0.6; 7], 0.3, 200_000, seed.child(&[1]));
    out.push(match mc {
        Ok(e) => check(
            "Monte Carlo covers the exact value",
            (e.q_hat - exact).abs() <= 4.0 * e.std_err(),
            format!("{:.5} ± {:.5} vs {exact:.5}", e.q_hat, e.std_err()),
        ),
        Err(e) => check("Monte Carlo covers the exact value", false, e.to_string()),
    });

    let cell = CellConfig::from_ratio(10.0, 3.0).expect("valid cell");
    let ideal = estimate_failure(Scheme::Ideal, &Scenario::flat(cell.clone(), 21, 0.55), 200_000, seed.child(&[2]));
    let tail = binomial_tail(21, 0.55);
    out.push(match ideal {
        Ok(e) => check(
            "ideal majority vote matches the binomial tail",
            (e.q_hat - tail).abs() <= 4.0 * e.std_err(),
            format!("{:.5} ± {:.5} vs {tail:.5}", e.q_hat, e.std_err()),
        ),
        Err(e) => check("ideal majority vote matches the binomial tail", false, e.to_string()),
    });

    let closed = nsnr_large_k(&cell.without_noise(), 10_000);
    let est = estimate_nsnr(&cell.without_noise(), 10_000, 200, seed.child(&[3]));
    out.push(match est {
        Ok(e) => check(
            "large-K normalized SNR matches simulation",
            (e.mean - closed).abs() <= 0.03 * closed,
            format!("{:.5} vs {closed:.5}", e.mean),
        ),
        Err(e) => check("large-K normalized SNR matches simulation", false, e.to_string()),
    });

    let layout = ClusterLayout::new(4, 9, 3).expect("valid layout");
    let mut ordered = 0;
    let instances = 200;
    for i in 0..instances {
        let g = draw_relay_gains(&mut seed.stream(&[tag::PROBE, i]), &layout, &cell);
        let obj = |s: RelaySolver| s.solve(&g).map(|x| x.objective).unwrap_or(f64::NAN);
        let (s, gr, ex) = (
            obj(RelaySolver::Strongest),
            obj(RelaySolver::GreedyExact),
            obj(RelaySolver::Exhaustive),
        );
        if ex >= gr * (1.0 - 1e-12) && gr >= s * (1.0 - 1e-12) {
            ordered += 1;
        }
    }
    out.push(check(
        "exhaustive ≥ greedy ≥ strongest",
        ordered == instances,
        format!("{ordered}/{instances} instances"),
    ));

    out
}
