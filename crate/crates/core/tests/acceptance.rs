//! Acceptance criteria, one PASS/FAIL line each.
//!
//! Exits nonzero if a criterion fails that is not in [`KNOWN_FAILURES`], or
//! if a known failure starts passing. With `ACCEPTANCE_STRICT=1` any failure
//! is fatal.

use std::process::ExitCode;
use std::time::Instant;

use loyal_match::experiments::emit::csv_string;
use loyal_match::experiments::{sweep, ExperimentSpec, KAggregate, LoyaltyExpr, Market, SweepResult};
use loyal_match::oracle::{
    absent_minded_sim, coupon_collector_sim, enumerate_stable, min_element_sim, rural_hospital_check, Universe,
};
use loyal_match::prefs::stream_rng;
use loyal_match::{
    harmonic, run, verify_stable, AcceptPolicy, Instance, MarketShape, NextPolicy, PreferenceOracle, RunOptions,
};
use rand::Rng;
use rayon::prelude::*;

const BASE_SEED: u64 = 0;

/// Criteria measured below their stated threshold; see the README.
/// 6: mean rank at k = 782 is about 2.6x the balanced baseline, not 10x.
const KNOWN_FAILURES: [u32; 1] = [6];

struct Outcome {
    id: u32,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn report(results: &mut Vec<Outcome>, id: u32, name: &'static str, pass: bool, detail: String, started: Instant) {
    let line = format!(
        "{} {id:>2} {name}: {detail} [{:.1}s]",
        if pass { "PASS" } else { "FAIL" },
        started.elapsed().as_secs_f64()
    );
    println!("{line}");
    results.push(Outcome { id, name, pass, detail });
}

fn within(x: f64, target: f64, rel: f64) -> bool {
    (x - target).abs() <= rel * target
}

fn nh(n: u32) -> f64 {
    n as f64 * harmonic(n as u64)
}

fn aggregate(res: &SweepResult, k: u32) -> &KAggregate {
    res.aggregates.iter().find(|a| a.k == k).expect("k in grid")
}

fn grid(ks: &[u32]) -> Vec<LoyaltyExpr> {
    ks.iter().map(|&k| LoyaltyExpr::Absolute(k)).collect()
}

fn spec(market: Market, ks: &[u32], seeds: u32, policy: NextPolicy) -> ExperimentSpec {
    let mut s = ExperimentSpec::new(market, grid(ks), seeds);
    s.base_seed = BASE_SEED;
    s.next_policy = policy;
    s
}

fn stability_matrix() -> (bool, String) {
    let n = 200;
    let mut cases = Vec::new();
    for shape in [MarketShape::balanced(n).unwrap(), MarketShape::unbalanced(n).unwrap()] {
        for policy in NextPolicy::ALL {
            for k in [0, 1, n / 2, n - 1] {
                for seed in 0..50 {
                    cases.push((shape, policy, k, BASE_SEED + seed));
                }
            }
        }
    }
    let unstable: Vec<_> = cases
        .par_iter()
        .filter_map(|&(shape, policy, k, seed)| {
            let mut oracle = PreferenceOracle::lazy(shape, seed);
            let accept = AcceptPolicy::Loyalty(k);
            let out = run(&mut oracle, policy, accept, RunOptions::default());
            let r = verify_stable(&out.matching, &mut oracle, &accept);
            (!r.is_stable).then_some((shape.num_doctors, policy, k, seed, r.pairs.len()))
        })
        .collect();
    (
        unstable.is_empty(),
        format!(
            "{} runs, {} with blocking pairs{}",
            cases.len(),
            unstable.len(),
            unstable.first().map_or(String::new(), |c| format!(", first {c:?}"))
        ),
    )
}

fn containment() -> (bool, String) {
    let failures: Vec<String> = (0..1000u64)
        .into_par_iter()
        .filter_map(|i| {
            let mut rng = stream_rng(BASE_SEED + 1, i);
            let n = rng.random_range(2..=6);
            let shape = if i % 2 == 0 {
                MarketShape::balanced(n).unwrap()
            } else {
                MarketShape::unbalanced(n).unwrap()
            };
            let inst = Instance::random(shape, &mut rng);
            let policy = NextPolicy::ALL[i as usize % 3];
            let k = rng.random_range(0..shape.num_doctors);
            for k in [k, 0] {
                let accept = AcceptPolicy::Loyalty(k);
                let set = enumerate_stable(&inst, &accept, Universe::Saturating).ok()?;
                let out = run(&mut inst.oracle(i), policy, accept, RunOptions::default());
                if !set.contains(&out.matching) {
                    return Some(format!("instance {i} k={k}: output not stable\n{}", inst.to_text()));
                }
                if k == 0 && set.doctor_optimal.as_ref() != Some(&out.matching) {
                    return Some(format!("instance {i}: not doctor-optimal\n{}", inst.to_text()));
                }
            }
            None
        })
        .collect();
    (
        failures.is_empty(),
        format!(
            "1000 instances (random k and k=0), {} failures{}",
            failures.len(),
            failures.first().map_or(String::new(), |f| format!(", first {f:?}"))
        ),
    )
}

fn rural_hospital() -> (bool, String) {
    let failures = (0..1000u64)
        .into_par_iter()
        .filter(|&i| {
            let mut rng = stream_rng(BASE_SEED + 2, i);
            let inst = Instance::random(MarketShape::new(5, 4).unwrap(), &mut rng);
            !rural_hospital_check(&inst, &AcceptPolicy::Classic).expect("5x4 is within the enumeration limit")
        })
        .count();
    (failures == 0, format!("1000 5x4 instances at k=0, {failures} with differing unmatched doctor"))
}

fn main() -> ExitCode {
    let mut results = Vec::new();
    let n = 1000;

    let t = Instant::now();
    let (pass, detail) = stability_matrix();
    report(&mut results, 1, "stability", pass, detail, t);

    let t = Instant::now();
    let (pass, detail) = containment();
    report(&mut results, 2, "oracle containment", pass, detail, t);

    let t = Instant::now();
    let (pass, detail) = rural_hospital();
    report(&mut results, 3, "rural hospital", pass, detail, t);

    // 4: balanced market rank and proposals
    let t = Instant::now();
    let balanced_ks = [0, 100, 500, 999];
    let mut baseline = f64::NAN;
    let mut pass = true;
    let mut detail = Vec::new();
    for policy in NextPolicy::ALL {
        let res = sweep(&spec(Market::Balanced(n), &balanced_ks, 100, policy)).unwrap();
        for a in &res.aggregates {
            let rank = a.avg_doctor_rank.mean;
            let ratio = a.total_proposals.mean / nh(n);
            pass &= (4.0..=11.0).contains(&rank) && (0.5..=2.0).contains(&ratio);
            detail.push(format!("{policy} k={} rank={rank:.2} P/nH={ratio:.3}", a.k));
        }
        if policy == NextPolicy::Fifo {
            baseline = aggregate(&res, 0).avg_doctor_rank.mean;
        }
    }
    report(&mut results, 4, "balanced rank", pass, detail.join("; "), t);

    // 5, 6, 7, 12 and 13 share one unbalanced sweep
    let t = Instant::now();
    let unbalanced_ks = [0, 200, 400, 600, 782, 900, 968, 1000];
    let unbalanced_spec = spec(Market::Unbalanced(n), &unbalanced_ks, 100, NextPolicy::Fifo);
    let pool = |threads| rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
    let unbalanced = pool(4).install(|| sweep(&unbalanced_spec)).unwrap();
    let sweep_secs = t.elapsed().as_secs_f64();

    let k0 = aggregate(&unbalanced, 0);
    let rank0 = k0.avg_doctor_rank.mean;
    report(
        &mut results,
        5,
        "unbalanced k=0",
        rank0 >= 10.0 * baseline,
        format!("rank {rank0:.2} vs balanced {baseline:.2} (x{:.1})", rank0 / baseline),
        t,
    );

    let t = Instant::now();
    let r968 = aggregate(&unbalanced, 968).avg_doctor_rank.mean;
    let r782 = aggregate(&unbalanced, 782).avg_doctor_rank.mean;
    let mut monotone = true;
    let mut steps = Vec::new();
    for w in unbalanced.aggregates.windows(2) {
        let se = |a: &KAggregate| a.avg_doctor_rank.sd / (a.runs as f64).sqrt();
        let noise = (se(&w[0]).powi(2) + se(&w[1]).powi(2)).sqrt();
        let rise = w[1].avg_doctor_rank.mean - w[0].avg_doctor_rank.mean;
        monotone &= rise <= 1.5 * noise;
        steps.push(format!("{}:{:.2}", w[0].k, w[0].avg_doctor_rank.mean));
    }
    let last = unbalanced.aggregates.last().unwrap();
    steps.push(format!("{}:{:.2}", last.k, last.avg_doctor_rank.mean));
    report(
        &mut results,
        6,
        "phase transition",
        r968 <= 3.0 * baseline && r782 >= 10.0 * baseline && monotone,
        format!(
            "k=968 x{:.2} (<=3), k=782 x{:.1} (>=10), non-increasing={monotone}; ranks {}",
            r968 / baseline,
            r782 / baseline,
            steps.join(" ")
        ),
        t,
    );

    let t = Instant::now();
    let balanced_ok = unbalanced.aggregates.iter().all(|a| {
        let r = a.proposals_balanced.mean / nh(n);
        (0.5..=2.0).contains(&r)
    });
    let split = k0.proposals_unbalanced.mean / k0.proposals_balanced.mean;
    let ratios: Vec<String> = unbalanced
        .aggregates
        .iter()
        .map(|a| format!("{}:{:.2}", a.k, a.proposals_balanced.mean / nh(n)))
        .collect();
    report(
        &mut results,
        7,
        "phase split",
        balanced_ok && split >= 5.0,
        format!("balanced/nH per k {}; k=0 unbalanced/balanced x{split:.1}", ratios.join(" ")),
        t,
    );

    // 8: amnesiac doctors
    let t = Instant::now();
    let mut amnesiac = spec(Market::Balanced(n), &[0], 2000, NextPolicy::Fifo);
    amnesiac.amnesiac = true;
    let res = sweep(&amnesiac).unwrap();
    let mean = res.aggregates[0].total_proposals.mean;
    report(
        &mut results,
        8,
        "amnesiac bound",
        within(mean, nh(n), 0.03),
        format!("mean {mean:.1} vs nH_n {:.1} ({:+.2}%)", nh(n), 100.0 * (mean / nh(n) - 1.0)),
        t,
    );

    // 9: coupon collector
    let t = Instant::now();
    let mean_run = coupon_collector_sim(n, 2000, BASE_SEED).unwrap();
    let tail_run = coupon_collector_sim(n, 10_000, BASE_SEED + 1).unwrap();
    report(
        &mut results,
        9,
        "coupon collector",
        within(mean_run.mean_attempts, nh(n), 0.02) && tail_run.tail_probability <= 0.01,
        format!(
            "mean {:.1} vs {:.1}, tail above {:.0} = {:.4}",
            mean_run.mean_attempts,
            nh(n),
            tail_run.tail_threshold,
            tail_run.tail_probability
        ),
        t,
    );

    // 10: absent-minded collector
    let t = Instant::now();
    let mut pass = true;
    let mut detail = Vec::new();
    for q in [0.1, 0.5, 1.0] {
        let s = absent_minded_sim(100, q, 5000, BASE_SEED).unwrap();
        pass &= s.mean_attempts <= s.expected_attempts;
        detail.push(format!("q={q} mean {:.1} <= {:.1}", s.mean_attempts, s.expected_attempts));
    }
    let q1 = absent_minded_sim(100, 1.0, 5000, BASE_SEED).unwrap();
    let plain = coupon_collector_sim(100, 5000, BASE_SEED + 1).unwrap();
    pass &= within(q1.mean_attempts, plain.mean_attempts, 0.03);
    detail.push(format!("q=1 vs independent plain collector {:.1}", plain.mean_attempts));
    report(&mut results, 10, "absent-minded collector", pass, detail.join("; "), t);

    // 11: minimum of a random subset
    let t = Instant::now();
    let mut pass = true;
    let mut detail = Vec::new();
    for (nn, k) in [(99, 9), (999, 99)] {
        let s = min_element_sim(nn, k, 100_000, BASE_SEED).unwrap();
        pass &= within(s.mean_min, s.expected, 0.015);
        detail.push(format!("({nn},{k}) mean {:.4} vs {:.4}", s.mean_min, s.expected));
    }
    report(&mut results, 11, "minimum of subset", pass, detail.join("; "), t);

    // 12: few proposers at high loyalty
    let t = Instant::now();
    let high = aggregate(&unbalanced, 968);
    report(
        &mut results,
        12,
        "high-loyalty snapshot",
        high.unbalanced_proposers.mean <= 60.0 && high.s_a_rematched_fraction <= 0.2,
        format!(
            "mean unbalanced-phase proposers {:.2} (<=60), S_A re-matched {:.3} (<=0.2), mean |S_A| {:.1}",
            high.unbalanced_proposers.mean, high.s_a_rematched_fraction, high.s_a_size.mean
        ),
        t,
    );

    // 13: parallelism does not change output
    let t = Instant::now();
    let single = pool(1).install(|| sweep(&unbalanced_spec)).unwrap();
    let a = csv_string(&unbalanced.rows).unwrap();
    let b = csv_string(&single.rows).unwrap();
    report(
        &mut results,
        13,
        "determinism",
        a == b,
        format!(
            "{} rows, {} bytes, 4 threads vs 1 thread identical={} (sweep {sweep_secs:.1}s)",
            single.rows.len(),
            a.len(),
            a == b
        ),
        t,
    );

    let failed: Vec<_> = results.iter().filter(|r| !r.pass).collect();
    println!("{} of {} criteria passed", results.len() - failed.len(), results.len());
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let mut fatal = false;
    for f in &failed {
        let known = KNOWN_FAILURES.contains(&f.id);
        fatal |= strict || !known;
        eprintln!(
            "failed {} {}{}: {}",
            f.id,
            f.name,
            if known { " (known)" } else { "" },
            f.detail
        );
    }
    for r in results.iter().filter(|r| r.pass && KNOWN_FAILURES.contains(&r.id)) {
        eprintln!("criterion {} {} is listed as a known failure but passed", r.id, r.name);
        fatal = true;
    }
    if fatal {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
