//! Acceptance suite: one line per criterion, non-zero exit on any failure
//! not listed in `KNOWN_RED`.

use std::process::ExitCode;
use std::time::Instant;

use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stream_sla::accounting::{BatchStats, RevenueLedger};
use stream_sla::engine::{
    run, Allocation, ClassDemand, ClusterState, DemandEstimate, IncomingStream, ServiceClass,
    SimConfig, StreamRecord,
};
use stream_sla::policies::{
    compute_threshold, erlang_loss_pmf, improve_allocation, offered_loads_allocation,
    offered_loads_target, revenue_delta_accept, revenue_delta_realloc, threshold_revenue_rate,
    ImproveMode, PolicyBundle, Threshold, ThresholdSearch, WeightRule,
};
use stream_sla::queue_math::{erlang_c, mmn_wait, penalty_probability, QueueParams};
use stream_sla::scenario::{load_config, preset, run_scenario, write_csv, ScenarioResults};
use stream_sla::stochastic::Distribution;

/// Criteria expected to fail; see the decisions notes for the analysis.
const KNOWN_RED: &[u32] = &[4];

type Check<'a> = Box<dyn FnOnce() -> Outcome + 'a>;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

fn ci(s: &BatchStats) -> String {
    format!("{:.3}±{:.3}", s.mean, s.half_width)
}

fn revenue<'a>(results: &'a ScenarioResults, variant: Option<&str>, policy: &str) -> Vec<&'a BatchStats> {
    results
        .series(variant, policy)
        .into_iter()
        .map(|r| &r.report.revenue)
        .collect()
}

fn points(results: &ScenarioResults) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    for r in &results.runs {
        let p = r.point.expect("swept preset");
        if !out.contains(&p) {
            out.push(p);
        }
    }
    out
}

fn run_preset(name: &str) -> ScenarioResults {
    let scenario = load_config(preset(name).expect("bundled preset"))
        .expect("preset validates")
        .scenario;
    run_scenario(&scenario).expect("preset runs")
}

/// Mean number waiting in M/M/n from the stationary distribution of the
/// birth-death chain, divided by the arrival rate.
fn birth_death_wait(n: usize, lambda: f64, mu: f64) -> f64 {
    let rho = lambda / mu;
    let limit = n + 20_000;
    let mut p = 1.0;
    let mut total = 1.0;
    let mut queued = 0.0;
    for j in 1..=limit {
        p *= rho / j.min(n) as f64;
        total += p;
        if j > n {
            queued += (j - n) as f64 * p;
        }
    }
    queued / total / lambda
}

/// Stationary P(J >= n) of the M/M/n chain truncated at n + 2000.
fn birth_death_delay(n: usize, rho: f64) -> f64 {
    let mut p = 1.0;
    let mut total = 1.0;
    let mut tail = 0.0;
    for j in 1..=n + 2000 {
        p *= rho / j.min(n) as f64;
        total += p;
        if j >= n {
            tail += p;
        }
    }
    tail / total
}

fn mmn_validation() -> Outcome {
    let started = Instant::now();
    let (n, lambda) = (5, 4.0);
    let class = ServiceClass::new("q", lambda, 1, Distribution::Exponential { rate: 1.0 }, 0.0, 0.0, 1.0, 0.0);
    let mut cfg = SimConfig::new(n, vec![class]);
    cfg.horizon = 600_000.0;
    cfg.batches = 20;
    cfg.seed = 11;
    cfg.preloaded = vec![IncomingStream { class: 0, jobs: u32::MAX, gamma: lambda }];
    let report = run(&cfg, &PolicyBundle::named("admit_all").unwrap()).unwrap();
    let elapsed = started.elapsed().as_secs_f64();
    let tally = report.class_waits(0);
    let sim = tally.mean_wait();
    let oracle = birth_death_wait(n, lambda, 1.0);
    let library = mmn_wait(n, lambda, 1.0).unwrap();
    let rel = (sim - oracle).abs() / oracle;
    Outcome::new(
        tally.served >= 1_000_000 && rel <= 0.02 && elapsed < 60.0 && (library - oracle).abs() < 1e-9,
        format!(
            "served {}, wait {sim:.4} vs oracle {oracle:.4} (rel {:.2}%), library {library:.6}, {elapsed:.1}s",
            tally.served,
            100.0 * rel
        ),
    )
}

fn erlang_c_oracle() -> Outcome {
    let mut worst: f64 = 0.0;
    for n in 1..=20 {
        for util in [0.1, 0.5, 0.9, 0.99] {
            let rho = util * n as f64;
            let oracle = birth_death_delay(n, rho);
            let rel = (erlang_c(n, rho).unwrap() - oracle).abs() / oracle;
            worst = worst.max(rel);
        }
    }
    Outcome::new(worst <= 1e-8, format!("80 grid points, worst relative error {worst:.2e}"))
}

fn fig2(results: &ScenarioResults) -> Outcome {
    let aa = revenue(results, None, "admit_all");
    let cs = revenue(results, None, "current_state");
    let peak = aa.iter().map(|s| s.mean).fold(f64::NEG_INFINITY, f64::max);
    let last = aa.len() - 1;
    let collapse = aa[last].mean < 0.25 * peak;
    let rises = cs[last].mean > cs[0].mean;
    let monotone = cs
        .windows(2)
        .all(|w| w[1].mean >= w[0].mean - (w[0].half_width + w[1].half_width));
    let fmt = |v: &[&BatchStats]| v.iter().map(|s| ci(s)).collect::<Vec<_>>().join(" ");
    Outcome::new(
        collapse && rises && monotone,
        format!(
            "admit_all last {:.3} vs peak {peak:.3}; current_state {} -> {} monotone={monotone}\n      admit_all     {}\n      current_state {}",
            aa[last].mean,
            ci(cs[0]),
            ci(cs[last]),
            fmt(&aa),
            fmt(&cs)
        ),
    )
}

fn fig3(results: &ScenarioResults) -> Outcome {
    let cs = revenue(results, None, "current_state");
    let th = revenue(results, None, "threshold");
    let mut misses = Vec::new();
    for ((p, c), t) in points(results).iter().zip(&cs).zip(&th) {
        let close = (t.mean - c.mean).abs() <= 0.1 * c.mean.abs();
        if !(close || t.overlaps(c)) {
            misses.push(format!("{p}: {} vs {}", ci(t), ci(c)));
        }
    }
    let detail = if misses.is_empty() {
        "threshold within 10% or overlapping at every point".to_string()
    } else {
        format!("{} of {} points miss: {}", misses.len(), cs.len(), misses.join("; "))
    };
    Outcome::new(misses.is_empty(), detail)
}

fn fig4(results: &ScenarioResults) -> Outcome {
    let exp = revenue(results, Some("exponential"), "current_state");
    let det = revenue(results, Some("deterministic"), "current_state");
    let hyp = revenue(results, Some("hyperexponential"), "current_state");
    let overlap = det.iter().zip(&exp).filter(|(d, e)| d.overlaps(e)).count();
    let top = exp.len() - 3..exp.len();
    let lower = top.clone().all(|i| hyp[i].mean < exp[i].mean);
    let tops = top
        .map(|i| format!("{:.3}<{:.3}", hyp[i].mean, exp[i].mean))
        .collect::<Vec<_>>()
        .join(" ");
    Outcome::new(
        overlap == exp.len() && lower,
        format!("deterministic overlaps {overlap}/{}; hyperexponential at top loads {tops}", exp.len()),
    )
}

fn fig5(results: &ScenarioResults) -> Outcome {
    let cs = revenue(results, None, "current_state");
    let opt = revenue(results, None, "current_state_optimized");
    let th = revenue(results, None, "threshold");
    let aa = revenue(results, None, "admit_all");
    let held = opt.iter().zip(&cs).filter(|(o, c)| o.mean >= c.mean - c.half_width).count();
    let last = cs.len() - 1;
    let best = cs[last].mean.max(opt[last].mean).max(th[last].mean);
    let collapse = aa[last].mean < 0.25 * best;
    Outcome::new(
        held == cs.len() && collapse,
        format!(
            "optimized holds at {held}/{} points; at the last point admit_all {:.3} vs best {best:.3}",
            cs.len(),
            aa[last].mean
        ),
    )
}

fn fig2_classes() -> Vec<ServiceClass> {
    vec![
        ServiceClass::new("type1", 0.2, 50, Distribution::Exponential { rate: 0.1 }, 0.02, 100.0, 10.0, 100.0),
        ServiceClass::new("type2", 0.4, 50, Distribution::Exponential { rate: 0.2 }, 0.02, 200.0, 5.0, 200.0),
    ]
}

fn random_streams(rng: &mut ChaCha8Rng, classes: &[ServiceClass]) -> Vec<Vec<StreamRecord>> {
    let mut id = 0;
    classes
        .iter()
        .enumerate()
        .map(|(c, spec)| {
            let count = rng.random_range(0..6);
            (0..count)
                .map(|_| {
                    let mut s = StreamRecord::new(id, c, spec.jobs, spec.gamma, 0.0);
                    id += 1;
                    let done = rng.random_range(0..spec.jobs);
                    let scale = rng.random_range(0.0..2.5) * spec.obligation;
                    for _ in 0..done {
                        s.record_completion(rng.random_range(0.0..scale.max(1e-9)));
                    }
                    s
                })
                .collect()
        })
        .collect()
}

/// Largest value over allocations reached from `start` by chains of
/// strictly improving single-server moves.
fn reachable_best(
    delta: &dyn Fn(&Allocation) -> f64,
    start: &Allocation,
    floor: &[bool],
) -> f64 {
    let mut best = delta(start);
    let mut stack = vec![(start.clone(), best)];
    let mut seen = vec![start.clone()];
    while let Some((a, v)) = stack.pop() {
        for (from, to) in [(0, 1), (1, 0)] {
            let Some(b) = a.moved(from, to) else { continue };
            if floor[from] && b.get(from) == 0 || seen.contains(&b) {
                continue;
            }
            let w = delta(&b);
            if w > v {
                best = best.max(w);
                seen.push(b.clone());
                stack.push((b, w));
            }
        }
    }
    best
}

fn hill_climb_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut mismatches = Vec::new();
    let mut global_gaps = 0;
    for trial in 0..100 {
        let mut classes = fig2_classes();
        for c in &mut classes {
            c.delta = rng.random_range(0.005..0.05);
        }
        let streams = random_streams(&mut rng, &classes);
        let demand = DemandEstimate::oracle(&classes, &streams);
        let n1 = rng.random_range(0..=20);
        let current = Allocation::new(vec![n1, 20 - n1]);
        let state = ClusterState {
            classes: &classes,
            demand: &demand,
            streams: &streams,
            allocation: &current,
        };
        let class = rng.random_range(0..2);
        let arrival = trial % 2 == 0;
        let incoming = IncomingStream { class, jobs: 50, gamma: classes[class].gamma };
        let (mode, inc) = if arrival {
            (ImproveMode::Arrival(incoming), Some(&incoming))
        } else {
            (ImproveMode::Completion, None)
        };
        let start = offered_loads_target(&state, inc, WeightRule::RatioROverC);
        let (_, found) = improve_allocation(&state, &start, class, mode);
        let delta = |a: &Allocation| match inc {
            Some(i) => revenue_delta_accept(&state, i, a, &current),
            None => revenue_delta_realloc(&state, a, &current),
        };
        let floor: Vec<bool> = (0..2)
            .map(|j| !streams[j].is_empty() || inc.is_some_and(|i| i.class == j))
            .collect();
        let reachable = reachable_best(&delta, &start, &floor);
        if (found - reachable).abs() > 1e-9 {
            mismatches.push(format!("#{trial}: {found:.6} vs {reachable:.6}"));
        }
        let global = (0..=20)
            .map(|k| Allocation::new(vec![k, 20 - k]))
            .filter(|a| (0..2).all(|j| !floor[j] || a.get(j) > 0))
            .map(|a| delta(&a))
            .fold(f64::NEG_INFINITY, f64::max);
        if global - found > 1e-9 {
            global_gaps += 1;
        }
    }
    Outcome::new(
        mismatches.is_empty(),
        format!(
            "100 snapshots, {} mismatches against the improving-move enumeration{}; {global_gaps} below the unrestricted maximum",
            mismatches.len(),
            if mismatches.is_empty() { String::new() } else { format!(" ({})", mismatches.join(", ")) }
        ),
    )
}

fn threshold_oracle() -> Outcome {
    let search = ThresholdSearch::default();
    let mut failures = Vec::new();
    let mut finite = 0;
    for servers in [2usize, 4, 6, 8, 10] {
        for delta in [0.004, 0.01, 0.02, 0.04] {
            let class = ServiceClass::new("s", 0.2, 50, Distribution::Exponential { rate: 0.1 }, delta, 100.0, 10.0, 100.0);
            let demand = ClassDemand { lambda: 0.0, ca2: 1.0, b: 10.0, cb2: 1.0, delta };
            let cap = search.cap_for(&class, &demand);
            let curve: Vec<f64> = (1..=cap)
                .map(|m| threshold_revenue_rate(&class, &demand, servers, m, search.form))
                .collect();
            let max = curve.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let argmax = curve.iter().position(|v| *v == max).unwrap() as u32 + 1;
            let eps = search.epsilon_for(&class, &demand);
            let ok = match compute_threshold(&class, &demand, servers, &search) {
                Threshold::Finite(m) => {
                    finite += 1;
                    m == argmax
                }
                Threshold::Unbounded => curve[cap as usize - 1] >= max - eps,
            };
            let tol = 1e-12 * max.abs().max(1e-300);
            let peak = curve.windows(2).position(|w| w[1] < w[0] - tol);
            let unimodal = peak.is_none_or(|p| curve[p..].windows(2).all(|w| w[1] <= w[0] + tol));
            if !ok || !unimodal {
                failures.push(format!("n={servers} delta={delta}: argmax {argmax}, unimodal={unimodal}"));
            }
        }
    }
    Outcome::new(
        failures.is_empty(),
        format!("20 scenarios ({finite} finite thresholds), failures: {}", if failures.is_empty() { "none".to_string() } else { failures.join("; ") }),
    )
}

fn determinism(first: &[(&str, String)]) -> Outcome {
    let differing: Vec<&str> = first
        .iter()
        .filter(|(name, csv)| write_csv(&run_preset(name)) != *csv)
        .map(|(name, _)| *name)
        .collect();
    Outcome::new(
        differing.is_empty(),
        format!("{} presets rerun, differing: {differing:?}", first.len()),
    )
}

fn property_suites() -> Outcome {
    let mut runner = TestRunner::new(Config { cases: 512, failure_persistence: None, ..Config::default() });
    let mut failed = Vec::new();

    let queue = (1usize..40, 0.0f64..1.0, 0.1f64..20.0, 0.0f64..4.0, 0.0f64..8.0)
        .prop_map(|(n, u, b, ca2, cb2)| QueueParams::new(n, u * n as f64 / b, b, ca2, cb2));
    let penalty = runner.run(&(0.0f64..50.0, 0.0f64..10.0, queue, 1.0f64..200.0), |(x, dx, p, k)| {
        let g = penalty_probability(x, &p, k);
        prop_assert!((0.0..=1.0).contains(&g));
        prop_assert!(penalty_probability(x + dx, &p, k) <= g + 1e-12);
        prop_assert!(penalty_probability(x, &p.with_servers(p.n + 1), k) <= g + 1e-12);
        Ok(())
    });
    if let Err(e) = penalty {
        failed.push(format!("penalty monotonicity: {e}"));
    }

    let alloc = runner.run(
        &(prop::collection::vec((0.0f64..50.0, 0.1f64..5.0, any::<bool>()), 1..8), 0usize..64),
        |(classes, total)| {
            let rho: Vec<f64> = classes.iter().map(|c| c.0).collect();
            let alpha: Vec<f64> = classes.iter().map(|c| c.1).collect();
            let floor: Vec<bool> = classes.iter().map(|c| c.2).collect();
            let a = offered_loads_allocation(&rho, &alpha, total, &floor);
            prop_assert_eq!(a.total(), total);
            if floor.iter().filter(|f| **f).count() <= total {
                prop_assert!(floor.iter().enumerate().all(|(i, f)| !f || a.get(i) >= 1));
            }
            Ok(())
        },
    );
    if let Err(e) = alloc {
        failed.push(format!("allocation sum/floor: {e}"));
    }

    let ledger = runner.run(
        &prop::collection::vec((0usize..3, 0.0f64..1000.0, 0.0f64..20.0), 0..60),
        |mut outcomes| {
            outcomes.sort_by(|a, b| a.1.total_cmp(&b.1));
            let classes: Vec<ServiceClass> = (1..=3)
                .map(|i| {
                    let c = 10.0 * i as f64;
                    ServiceClass::new("x", 1.0, 1, Distribution::Exponential { rate: 1.0 }, 0.1, c, 5.0, 2.0 * c)
                })
                .collect();
            let mut ledger = RevenueLedger::new(3, 1000.0, 10, 0.0);
            for (id, (class, time, wait)) in outcomes.iter().enumerate() {
                let mut s = StreamRecord::new(id as u64, *class, 1, 1.0, 0.0);
                s.record_completion(*wait);
                ledger.record_admission(*time, *class, true);
                ledger.record_completion(*time, &s, &classes[*class]);
            }
            let from_classes: f64 = ledger.classes.iter().map(|t| t.net).sum();
            let from_batches: f64 = ledger.batch_rates().iter().sum::<f64>() * ledger.batch_length();
            prop_assert!((ledger.total_net() - from_classes).abs() < 1e-9);
            prop_assert!((ledger.total_net() - from_batches).abs() < 1e-6);
            Ok(())
        },
    );
    if let Err(e) = ledger {
        failed.push(format!("ledger conservation: {e}"));
    }

    let pmf = runner.run(&(0.0f64..500.0, 0u32..600), |(sigma, max)| {
        let p = erlang_loss_pmf(sigma, max);
        prop_assert!(p.iter().all(|v| *v >= 0.0));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12 * (1.0 + max as f64));
        Ok(())
    });
    if let Err(e) = pmf {
        failed.push(format!("pmf normalisation: {e}"));
    }

    Outcome::new(
        failed.is_empty(),
        if failed.is_empty() {
            "penalty monotonicity, allocation sum/floor, ledger conservation, pmf normalisation: 512 cases each".to_string()
        } else {
            failed.join("; ")
        },
    )
}

fn main() -> ExitCode {
    let started = Instant::now();
    let names = ["fig2", "fig3", "fig4", "fig5"];
    let results: Vec<ScenarioResults> = names.iter().map(|n| run_preset(n)).collect();
    let csvs: Vec<(&str, String)> = names.iter().copied().zip(results.iter().map(write_csv)).collect();

    let criteria: Vec<(u32, &str, Check<'_>)> = vec![
        (1, "M/M/n validation", Box::new(mmn_validation)),
        (2, "Erlang C oracle", Box::new(erlang_c_oracle)),
        (3, "fig2 admit_all collapse, current_state rise", Box::new(|| fig2(&results[0]))),
        (4, "fig3 threshold close to current_state", Box::new(|| fig3(&results[1]))),
        (5, "fig4 service law variants", Box::new(|| fig4(&results[2]))),
        (6, "fig5 optimized and admit_all", Box::new(|| fig5(&results[3]))),
        (7, "hill climbing oracle", Box::new(hill_climb_oracle)),
        (8, "threshold search oracle", Box::new(threshold_oracle)),
        (9, "determinism", Box::new(|| determinism(&csvs))),
        (10, "property suites", Box::new(property_suites)),
    ];

    let mut unexpected = 0;
    let mut red = 0;
    for (id, name, check) in criteria {
        let outcome = check();
        let status = match (outcome.pass, KNOWN_RED.contains(&id)) {
            (true, _) => "PASS",
            (false, true) => {
                red += 1;
                "FAIL (known)"
            }
            (false, false) => {
                unexpected += 1;
                "FAIL"
            }
        };
        println!("{status} {id:>2} {name}: {}", outcome.detail);
    }
    println!(
        "acceptance: {} passed, {red} known red, {unexpected} unexpected failures ({:.0}s)",
        10 - red - unexpected,
        started.elapsed().as_secs_f64()
    );
    if unexpected == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
