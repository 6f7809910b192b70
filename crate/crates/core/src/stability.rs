//! Blocking-pair verification and accept-rule consistency checks.
//!
//! A pair `(d, h)` blocks `μ` when `d` prefers `h` to `μ(d)` (every hospital
//! beats being unmatched) and `h`'s accept rule would take `d` over `μ(h)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::engine::{AcceptRule, Matching};
use crate::prefs::{stream_rng, PreferenceOracle};
use crate::{Doctor, Hospital, Rank};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockingReport {
    pub is_stable: bool,
    pub pairs: Vec<(Doctor, Hospital)>,
    /// Doctors whose pairs were inspected.
    pub doctors_checked: u32,
}

impl BlockingReport {
    fn from_pairs(pairs: Vec<(Doctor, Hospital)>, doctors_checked: u32) -> Self {
        BlockingReport {
            is_stable: pairs.is_empty(),
            pairs,
            doctors_checked,
        }
    }
}

fn blocking_pairs_of<A: AcceptRule + ?Sized>(
    doctor: Doctor,
    matching: &Matching,
    oracle: &mut PreferenceOracle,
    accept: &A,
    out: &mut Vec<(Doctor, Hospital)>,
) {
    let candidates: Vec<Hospital> = match matching.partner_of_doctor(doctor) {
        Some(current) => oracle.preferred_over(doctor, current),
        None => oracle.shape().hospitals().collect(),
    };
    for h in candidates {
        let incumbent: Option<Rank> = matching
            .partner_of_hospital(h)
            .map(|d| oracle.rank_of(h, d));
        let rank = oracle.rank_of(h, doctor);
        if accept.accepts(rank, incumbent) {
            out.push((doctor, h));
        }
    }
}

/// All blocking pairs of `matching`. In lazy mode this forces the draws
/// for every inspected pair.
pub fn verify_stable<A: AcceptRule + ?Sized>(
    matching: &Matching,
    oracle: &mut PreferenceOracle,
    accept: &A,
) -> BlockingReport {
    let mut pairs = Vec::new();
    let shape = matching.shape();
    for d in shape.doctors() {
        blocking_pairs_of(d, matching, oracle, accept, &mut pairs);
    }
    BlockingReport::from_pairs(pairs, shape.num_doctors)
}

/// Spot check: inspects each doctor independently with probability `fraction`.
pub fn verify_sampled<A: AcceptRule + ?Sized>(
    matching: &Matching,
    oracle: &mut PreferenceOracle,
    accept: &A,
    fraction: f64,
    seed: u64,
) -> BlockingReport {
    if fraction >= 1.0 {
        return verify_stable(matching, oracle, accept);
    }
    let mut rng = stream_rng(seed, u64::MAX);
    let mut pairs = Vec::new();
    let mut checked = 0;
    for d in matching.shape().doctors() {
        if rng.random_bool(fraction.max(0.0)) {
            checked += 1;
            blocking_pairs_of(d, matching, oracle, accept, &mut pairs);
        }
    }
    BlockingReport::from_pairs(pairs, checked)
}

/// A concrete breach of one of the three consistency axioms, on ranks.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "axiom", rename_all = "snake_case")]
pub enum ConsistencyViolation {
    /// `accept(worse, better)` returned true.
    AcceptsWorse { candidate: Rank, incumbent: Rank },
    /// `accept(better, incumbent)` was false but `accept(worse, incumbent)` true.
    NotMonotone {
        better: Rank,
        worse: Rank,
        incumbent: Rank,
    },
    /// An unmatched hospital refused a proposal.
    RefusesWhenUnmatched { candidate: Rank },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub consistent: bool,
    pub trials: u32,
    pub witness: Option<ConsistencyViolation>,
}

/// Property-tests the consistency axioms of `rule` over ranks in
/// `1..=num_doctors`: for each trial a random triple of distinct ranks and
/// the unmatched case.
pub fn check_consistency<A: AcceptRule + ?Sized>(
    rule: &A,
    num_doctors: u32,
    trials: u32,
    seed: u64,
) -> ConsistencyReport {
    let mut rng = stream_rng(seed, 0);
    let witness = (0..trials.max(1)).find_map(|_| {
        let draw = |rng: &mut rand_chacha::ChaCha8Rng| rng.random_range(1..=num_doctors.max(1));
        let a = draw(&mut rng);
        if !rule.accepts(a, None) {
            return Some(ConsistencyViolation::RefusesWhenUnmatched { candidate: a });
        }
        if num_doctors < 2 {
            return None;
        }
        let mut b = draw(&mut rng);
        while b == a {
            b = draw(&mut rng);
        }
        let (better, worse) = (a.min(b), a.max(b));
        if rule.accepts(worse, Some(better)) {
            return Some(ConsistencyViolation::AcceptsWorse {
                candidate: worse,
                incumbent: better,
            });
        }
        if num_doctors < 3 {
            return None;
        }
        let mut c = draw(&mut rng);
        while c == a || c == b {
            c = draw(&mut rng);
        }
        if !rule.accepts(better, Some(c)) && rule.accepts(worse, Some(c)) {
            return Some(ConsistencyViolation::NotMonotone {
                better,
                worse,
                incumbent: c,
            });
        }
        None
    });
    ConsistencyReport {
        consistent: witness.is_none(),
        trials: trials.max(1),
        witness,
    }
}
