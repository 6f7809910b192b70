use loyal_match::prefs::stream_rng;
use loyal_match::{
    run, verify_stable, AcceptPolicy, Engine, HistoryEvent, Instance, MarketShape, MatchingState, NextPolicy,
    Observer, Phase, PreferenceOracle, RunOptions, TerminationCause,
};
use proptest::prelude::*;
use std::collections::HashSet;

#[derive(Debug, Clone)]
struct Case {
    shape: MarketShape,
    k: u32,
    policy: NextPolicy,
    seed: u64,
}

fn case() -> impl Strategy<Value = Case> {
    (1u32..=9, 1u32..=9, 0.0f64..1.0, 0usize..3, any::<u64>()).prop_map(|(d, h, kf, p, seed)| Case {
        shape: MarketShape::new(d, h).unwrap(),
        k: (kf * d as f64) as u32,
        policy: NextPolicy::ALL[p],
        seed,
    })
}

fn instance(c: &Case) -> Instance {
    Instance::random(c.shape, &mut stream_rng(c.seed, 7))
}

fn with_history() -> RunOptions {
    RunOptions {
        record_history: true,
        ..RunOptions::default()
    }
}

struct UnmatchedWatch {
    excess: u32,
    violations: u32,
}

impl Observer for UnmatchedWatch {
    fn on_event(&mut self, state: &MatchingState, _: &HistoryEvent) {
        if state.phase() == Phase::Unbalanced && state.termination().is_none() && state.unmatched_doctors() != self.excess {
            self.violations += 1;
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn output_is_stable(c in case()) {
        let inst = instance(&c);
        let accept = AcceptPolicy::Loyalty(c.k);
        let out = run(&mut inst.oracle(c.seed), c.policy, accept, RunOptions::default());
        let report = verify_stable(&out.matching, &mut inst.oracle(0), &accept);
        prop_assert!(report.is_stable, "{:?}\n{}", report.pairs, inst.to_text());

        let mut lazy = PreferenceOracle::lazy(c.shape, c.seed);
        let out = run(&mut lazy, c.policy, accept, RunOptions::default());
        prop_assert!(verify_stable(&out.matching, &mut lazy, &accept).is_stable);
    }

    #[test]
    fn doctors_propose_down_their_lists(c in case()) {
        let inst = instance(&c);
        let table = inst.doctor_rank_table();
        let out = run(&mut inst.oracle(c.seed), c.policy, AcceptPolicy::Loyalty(c.k), with_history());
        let mut last = vec![0; c.shape.num_doctors as usize];
        for e in out.history.unwrap() {
            let r = table[e.doctor.index()][e.hospital.index()];
            prop_assert_eq!(r, last[e.doctor.index()] + 1);
            last[e.doctor.index()] = r;
        }
    }

    #[test]
    fn hospitals_switch_only_for_more_than_k(c in case()) {
        let inst = instance(&c);
        let ranks = inst.rank_table();
        let out = run(&mut inst.oracle(c.seed), c.policy, AcceptPolicy::Loyalty(c.k), with_history());
        for e in out.history.unwrap() {
            let h = e.hospital.index();
            prop_assert_eq!(e.rank, Some(ranks[h][e.doctor.index()]));
            if let Some(inc) = e.incumbent {
                let improves = e.rank.unwrap() + c.k < ranks[h][inc.index()];
                prop_assert_eq!(e.accepted, improves);
            } else {
                prop_assert!(e.accepted);
            }
        }
    }

    #[test]
    fn termination_and_size(c in case()) {
        let (d, h) = (c.shape.num_doctors, c.shape.num_hospitals);
        let out = run(&mut PreferenceOracle::lazy(c.shape, c.seed), c.policy, AcceptPolicy::Loyalty(c.k), RunOptions::default());
        prop_assert!(out.total_proposals <= d as u64 * h as u64);
        prop_assert_eq!(out.total_proposals, out.proposals_balanced + out.proposals_unbalanced);
        if d <= h {
            prop_assert_eq!(out.termination_cause, TerminationCause::AllDoctorsMatched);
            prop_assert_eq!(out.matching.len(), d as usize);
        } else {
            let TerminationCause::DoctorExhausted(x) = out.termination_cause else {
                return Err(TestCaseError::fail("more doctors than hospitals must end with an exhausted doctor"));
            };
            prop_assert_eq!(out.doctor_proposals[x.index()], h);
            prop_assert_eq!(out.matching.len(), h as usize);
        }
    }

    #[test]
    fn unbalanced_phase_has_fixed_excess(c in case()) {
        let (d, h) = (c.shape.num_doctors, c.shape.num_hospitals);
        let mut oracle = PreferenceOracle::lazy(c.shape, c.seed);
        let mut watch = UnmatchedWatch { excess: d.saturating_sub(h), violations: 0 };
        Engine::new(&mut oracle, c.policy, AcceptPolicy::Loyalty(c.k), RunOptions::default()).run_observed(&mut watch);
        prop_assert_eq!(watch.violations, 0);
    }

    #[test]
    fn lazy_draws_are_permutations(c in case()) {
        let mut oracle = PreferenceOracle::lazy(c.shape, c.seed);
        run(&mut oracle, c.policy, AcceptPolicy::Loyalty(c.k), RunOptions::default());
        for d in c.shape.doctors() {
            let seq: Vec<_> = oracle.drawn_sequence(d).collect();
            let distinct: HashSet<_> = seq.iter().collect();
            prop_assert_eq!(distinct.len(), seq.len());
            prop_assert!(seq.iter().all(|h| h.0 < c.shape.num_hospitals));
        }
        for h in c.shape.hospitals() {
            let ranks: Vec<_> = c.shape.doctors().filter_map(|d| oracle.peek_rank(h, d)).collect();
            let distinct: HashSet<_> = ranks.iter().collect();
            prop_assert_eq!(distinct.len(), ranks.len());
            prop_assert_eq!(ranks.len() as u32, oracle.ranks_assigned(h));
            prop_assert!(ranks.iter().all(|&r| r >= 1 && r <= c.shape.num_doctors));
        }
    }

    #[test]
    fn runs_are_deterministic(c in case(), amnesiac in any::<bool>()) {
        let go = || {
            let opts = RunOptions { amnesiac, record_history: true, ..RunOptions::default() };
            run(&mut PreferenceOracle::lazy(c.shape, c.seed), c.policy, AcceptPolicy::Loyalty(c.k), opts)
        };
        prop_assert_eq!(go(), go());
    }

    #[test]
    fn amnesiac_runs_stay_stable(c in case()) {
        let accept = AcceptPolicy::Loyalty(c.k);
        let mut oracle = PreferenceOracle::lazy(c.shape, c.seed);
        let opts = RunOptions { amnesiac: true, record_history: true, ..RunOptions::default() };
        let out = run(&mut oracle, c.policy, accept, opts);
        prop_assert!(verify_stable(&out.matching, &mut oracle, &accept).is_stable);
        let mut seen = HashSet::new();
        for e in out.history.unwrap() {
            // a non-redundant proposal is always to a hospital not yet tried
            prop_assert_eq!(e.redundant, !seen.insert((e.doctor, e.hospital)));
        }
    }
}
