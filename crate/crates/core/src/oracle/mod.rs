//! Ground truth for small markets and standalone stochastic processes.
//!
//! [`enumerate_stable`] lists every stable matching of an explicit instance
//! by brute force; it backs the containment and doctor-optimality checks of
//! the engine. The collector simulators in [`collector`] reproduce the
//! auxiliary processes used to bound proposal counts.

use serde::{Deserialize, Serialize};

use crate::engine::{AcceptRule, Matching};
use crate::prefs::MarketShape;
use crate::{Doctor, Error, Hospital, Instance, Rank, Result};

pub mod collector;

pub use collector::{
    absent_minded_sim, coupon_collector_sim, min_element_sim, CollectorStats,
};

/// Largest side length accepted by the brute-force enumerators.
pub const ENUMERATION_LIMIT: u32 = 8;

/// Which matchings are candidates for stability.
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Universe {
    /// Matchings that saturate the shorter side. Under any consistent rule an
    /// unsaturated matching has a blocking pair, so nothing stable is lost.
    #[default]
    Saturating,
    /// Every one-to-one partial matching.
    All,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StableSet {
    pub matchings: Vec<Matching>,
    /// The matching giving every doctor their best stable partner, when that
    /// pointwise choice is itself stable (always so for classic rules).
    pub doctor_optimal: Option<Matching>,
    pub unmatched_doctor_per_matching: Vec<Vec<Doctor>>,
    /// Candidates examined.
    pub universe_size: u64,
}

impl StableSet {
    pub fn contains(&self, m: &Matching) -> bool {
        self.matchings.contains(m)
    }
}

fn check_size(shape: MarketShape) -> Result<()> {
    if shape.num_doctors > ENUMERATION_LIMIT || shape.num_hospitals > ENUMERATION_LIMIT {
        return Err(Error::SizeLimit {
            num_doctors: shape.num_doctors,
            num_hospitals: shape.num_hospitals,
            limit: ENUMERATION_LIMIT,
        });
    }
    Ok(())
}

/// Rank tables for fast stability checks on explicit instances.
struct Tables {
    /// `[d][h]`
    doctor: Vec<Vec<Rank>>,
    /// `[h][d]`
    hospital: Vec<Vec<Rank>>,
}

impl Tables {
    fn new(inst: &Instance) -> Self {
        Tables {
            doctor: inst.doctor_rank_table(),
            hospital: inst.rank_table(),
        }
    }

    fn is_stable<A: AcceptRule + ?Sized>(&self, partner_of_hospital: &[Option<u32>], accept: &A) -> bool {
        let nd = self.doctor.len();
        let mut partner_of_doctor = vec![None; nd];
        for (h, d) in partner_of_hospital.iter().enumerate() {
            if let Some(d) = d {
                partner_of_doctor[*d as usize] = Some(h);
            }
        }
        for (d, ranks) in self.doctor.iter().enumerate() {
            let current = partner_of_doctor[d].map_or(Rank::MAX, |h| ranks[h]);
            for (h, &r) in ranks.iter().enumerate() {
                if r >= current {
                    continue;
                }
                let incumbent = partner_of_hospital[h].map(|x| self.hospital[h][x as usize]);
                if accept.accepts(self.hospital[h][d], incumbent) {
                    return false;
                }
            }
        }
        true
    }
}

/// Calls `visit` with every hospital-indexed assignment in the universe.
fn for_each_candidate(shape: MarketShape, universe: Universe, visit: &mut dyn FnMut(&[Option<u32>])) {
    let nd = shape.num_doctors as usize;
    let nh = shape.num_hospitals as usize;
    let mut assign = vec![None; nh];
    let mut used = vec![false; nd];

    fn rec(
        h: usize,
        assign: &mut Vec<Option<u32>>,
        used: &mut Vec<bool>,
        slack: usize,
        universe: Universe,
        visit: &mut dyn FnMut(&[Option<u32>]),
    ) {
        if h == assign.len() {
            visit(assign);
            return;
        }
        for d in 0..used.len() {
            if !used[d] {
                used[d] = true;
                assign[h] = Some(d as u32);
                rec(h + 1, assign, used, slack, universe, visit);
                used[d] = false;
            }
        }
        // leave h empty: free under All, otherwise only while hospitals
        // outnumber doctors
        if universe == Universe::All || slack > 0 {
            assign[h] = None;
            let slack = if universe == Universe::All { slack } else { slack - 1 };
            rec(h + 1, assign, used, slack, universe, visit);
        }
    }

    let slack = nh.saturating_sub(nd);
    rec(0, &mut assign, &mut used, slack, universe, visit);
}

/// Every stable matching of `instance` under `accept`.
pub fn enumerate_stable<A: AcceptRule + ?Sized>(
    instance: &Instance,
    accept: &A,
    universe: Universe,
) -> Result<StableSet> {
    let shape = instance.shape();
    check_size(shape)?;
    let tables = Tables::new(instance);
    let mut matchings = Vec::new();
    let mut universe_size = 0u64;
    for_each_candidate(shape, universe, &mut |assign| {
        // under Saturating, a matching leaving a hospital empty while a
        // doctor is free is skipped by construction
        universe_size += 1;
        if tables.is_stable(assign, accept) {
            let partners: Vec<Option<Doctor>> = assign.iter().map(|d| d.map(Doctor)).collect();
            matchings.push(
                Matching::from_hospital_partners(shape.num_doctors, &partners)
                    .expect("enumeration yields one-to-one matchings"),
            );
        }
    });

    let unmatched_doctor_per_matching = matchings.iter().map(Matching::unmatched_doctors).collect();
    let doctor_optimal = doctor_optimal(&tables, shape, &matchings);
    Ok(StableSet {
        matchings,
        doctor_optimal,
        unmatched_doctor_per_matching,
        universe_size,
    })
}

fn doctor_optimal(tables: &Tables, shape: MarketShape, stable: &[Matching]) -> Option<Matching> {
    if stable.is_empty() {
        return None;
    }
    let best: Vec<Option<Hospital>> = shape
        .doctors()
        .map(|d| {
            stable
                .iter()
                .filter_map(|m| m.partner_of_doctor(d))
                .min_by_key(|h| tables.doctor[d.index()][h.index()])
        })
        .collect();
    let candidate = Matching::from_pairs(
        shape,
        best.iter()
            .enumerate()
            .filter_map(|(d, h)| h.map(|h| (Doctor(d as u32), h))),
    )
    .ok()?;
    stable.contains(&candidate).then_some(candidate)
}

/// Whether the same doctor is left unmatched in every stable matching of an
/// instance with one more doctor than hospitals.
pub fn rural_hospital_check<A: AcceptRule + ?Sized>(instance: &Instance, accept: &A) -> Result<bool> {
    let shape = instance.shape();
    if shape.num_doctors != shape.num_hospitals + 1 {
        return Err(Error::InvalidShape {
            num_doctors: shape.num_doctors,
            num_hospitals: shape.num_hospitals,
            reason: "expected exactly one more doctor than hospitals".into(),
        });
    }
    let set = enumerate_stable(instance, accept, Universe::Saturating)?;
    let mut unmatched = set.unmatched_doctor_per_matching.iter();
    Ok(match unmatched.next() {
        Some(first) => unmatched.all(|u| u == first),
        None => true,
    })
}

fn permutations(n: u32) -> Vec<Vec<u32>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for i in 0..=p.len() {
            let mut q = p.clone();
            q.insert(i, n - 1);
            out.push(q);
        }
    }
    out
}

/// Upper bound on preference profiles visited by [`find_unmatched_divergence`].
pub const PROFILE_SEARCH_LIMIT: u64 = 2_000_000;

/// Exhaustively searches all preference profiles with `num_hospitals + 1`
/// doctors for one whose stable matchings disagree on the unmatched doctor.
pub fn find_unmatched_divergence<A: AcceptRule + ?Sized>(
    num_hospitals: u32,
    accept: &A,
) -> Result<Option<Instance>> {
    let shape = MarketShape::unbalanced(num_hospitals)?;
    let doctor_perms = permutations(shape.num_hospitals);
    let hospital_perms = permutations(shape.num_doctors);
    let radices: Vec<u64> = std::iter::repeat_n(doctor_perms.len() as u64, shape.num_doctors as usize)
        .chain(std::iter::repeat_n(hospital_perms.len() as u64, shape.num_hospitals as usize))
        .collect();
    let total = radices.iter().try_fold(1u64, |acc, &r| acc.checked_mul(r));
    if total.is_none_or(|t| t > PROFILE_SEARCH_LIMIT) {
        return Err(Error::SizeLimit {
            num_doctors: shape.num_doctors,
            num_hospitals: shape.num_hospitals,
            limit: ENUMERATION_LIMIT,
        });
    }
    let mut digits = vec![0usize; radices.len()];
    loop {
        let nd = shape.num_doctors as usize;
        let instance = Instance::new(
            digits[..nd]
                .iter()
                .map(|&i| doctor_perms[i].iter().map(|&h| Hospital(h)).collect())
                .collect(),
            digits[nd..]
                .iter()
                .map(|&i| hospital_perms[i].iter().map(|&d| Doctor(d)).collect())
                .collect(),
        )?;
        if !rural_hospital_check(&instance, accept)? {
            return Ok(Some(instance));
        }
        // odometer increment
        let mut i = 0;
        loop {
            if i == digits.len() {
                return Ok(None);
            }
            digits[i] += 1;
            if digits[i] as u64 == radices[i] {
                digits[i] = 0;
                i += 1;
            } else {
                break;
            }
        }
    }
}
