//! Uniform random preferences for both sides of the market.
//!
//! A [`PreferenceOracle`] answers two kinds of queries: which hospital a
//! doctor proposes to next, and what rank a hospital assigns to a doctor.
//! In lazy mode nothing is drawn before it is asked for; every answer is
//! fixed once drawn, so the joint law of all answers is that of uniform
//! permutations fixed upfront.
//!
//! Each agent owns an independent ChaCha stream derived from the oracle
//! seed, so the order in which unrelated agents are queried never changes
//! what any one of them draws.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::{Doctor, Error, Hospital, Rank, Result};

mod instance;
mod shuffle;

pub use instance::Instance;
use shuffle::LazyShuffle;

const HOSPITAL_STREAM_BASE: u64 = 1 << 32;
/// Stream used by the engine to pick among unmatched doctors.
pub const SCHEDULER_STREAM: u64 = 2 << 32;
/// Stream used to shuffle the initial proposal queue.
pub const QUEUE_ORDER_STREAM: u64 = (2 << 32) + 1;

/// ChaCha8 generator for one logical stream of a seed.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MarketShape {
    pub num_doctors: u32,
    pub num_hospitals: u32,
}

impl MarketShape {
    pub fn new(num_doctors: u32, num_hospitals: u32) -> Result<Self> {
        if num_doctors == 0 || num_hospitals == 0 {
            return Err(Error::InvalidShape {
                num_doctors,
                num_hospitals,
                reason: "both sides must be non-empty".into(),
            });
        }
        Ok(MarketShape {
            num_doctors,
            num_hospitals,
        })
    }

    /// `n` doctors and `n` hospitals.
    pub fn balanced(n: u32) -> Result<Self> {
        Self::new(n, n)
    }

    /// `n + 1` doctors and `n` hospitals.
    pub fn unbalanced(n: u32) -> Result<Self> {
        Self::new(n + 1, n)
    }

    pub fn doctors(&self) -> impl Iterator<Item = Doctor> + Clone {
        (0..self.num_doctors).map(Doctor)
    }

    pub fn hospitals(&self) -> impl Iterator<Item = Hospital> + Clone {
        (0..self.num_hospitals).map(Hospital)
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Lazy,
    Explicit,
}

#[derive(Clone, Debug)]
struct HospitalRanks {
    unassigned: LazyShuffle,
    assigned: FxHashMap<u32, Rank>,
}

#[derive(Clone, Debug)]
enum Source {
    Lazy {
        doctors: Vec<LazyShuffle>,
        hospitals: Vec<HospitalRanks>,
    },
    Explicit {
        instance: Instance,
        /// `rank_table[h][d]`
        rank_table: Vec<Vec<Rank>>,
        drawn: Vec<u32>,
    },
}

#[derive(Clone, Debug)]
pub struct PreferenceOracle {
    shape: MarketShape,
    seed: u64,
    doctor_rngs: Vec<Option<ChaCha8Rng>>,
    hospital_rngs: Vec<Option<ChaCha8Rng>>,
    source: Source,
}

fn lazy_rng(slot: &mut Option<ChaCha8Rng>, seed: u64, stream: u64) -> &mut ChaCha8Rng {
    slot.get_or_insert_with(|| stream_rng(seed, stream))
}

impl PreferenceOracle {
    /// Lazily sampled uniform preferences.
    pub fn lazy(shape: MarketShape, seed: u64) -> Self {
        let doctors = (0..shape.num_doctors)
            .map(|_| LazyShuffle::new(shape.num_hospitals))
            .collect();
        let hospitals = (0..shape.num_hospitals)
            .map(|_| HospitalRanks {
                unassigned: LazyShuffle::new(shape.num_doctors),
                assigned: FxHashMap::default(),
            })
            .collect();
        Self::with_source(shape, seed, Source::Lazy { doctors, hospitals })
    }

    /// Oracle replaying explicit preference lists (0-based ids). Each doctor
    /// list must be a permutation of the hospitals and vice versa.
    pub fn from_explicit(
        doctor_lists: Vec<Vec<Hospital>>,
        hospital_lists: Vec<Vec<Doctor>>,
    ) -> Result<Self> {
        Ok(Instance::new(doctor_lists, hospital_lists)?.oracle(0))
    }

    pub(crate) fn explicit(instance: Instance, seed: u64) -> Self {
        let shape = instance.shape();
        let rank_table = instance.rank_table();
        let drawn = vec![0; shape.num_doctors as usize];
        Self::with_source(
            shape,
            seed,
            Source::Explicit {
                instance,
                rank_table,
                drawn,
            },
        )
    }

    fn with_source(shape: MarketShape, seed: u64, source: Source) -> Self {
        PreferenceOracle {
            shape,
            seed,
            doctor_rngs: vec![None; shape.num_doctors as usize],
            hospital_rngs: vec![None; shape.num_hospitals as usize],
            source,
        }
    }

    pub fn shape(&self) -> MarketShape {
        self.shape
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn mode(&self) -> Mode {
        match self.source {
            Source::Lazy { .. } => Mode::Lazy,
            Source::Explicit { .. } => Mode::Explicit,
        }
    }

    /// Number of distinct hospitals drawn so far as proposal targets of `doctor`.
    pub fn proposed_count(&self, doctor: Doctor) -> u32 {
        match &self.source {
            Source::Lazy { doctors, .. } => doctors[doctor.index()].drawn(),
            Source::Explicit { drawn, .. } => drawn[doctor.index()],
        }
    }

    /// The `position`-th (0-based) distinct hospital drawn for `doctor`.
    pub fn choice_at(&self, doctor: Doctor, position: u32) -> Hospital {
        debug_assert!(position < self.proposed_count(doctor));
        match &self.source {
            Source::Lazy { doctors, .. } => Hospital(doctors[doctor.index()].slot(position)),
            Source::Explicit { instance, .. } => {
                instance.doctor_list(doctor)[position as usize]
            }
        }
    }

    /// Hospitals drawn for `doctor`, most preferred first.
    pub fn drawn_sequence(&self, doctor: Doctor) -> impl Iterator<Item = Hospital> + '_ {
        (0..self.proposed_count(doctor)).map(move |i| self.choice_at(doctor, i))
    }

    /// Next hospital in `doctor`'s preference order, uniform over the
    /// hospitals not yet drawn for this doctor.
    pub fn next_choice(&mut self, doctor: Doctor) -> Result<Hospital> {
        let d = doctor.index();
        match &mut self.source {
            Source::Lazy { doctors, .. } => {
                let rng = lazy_rng(&mut self.doctor_rngs[d], self.seed, d as u64);
                doctors[d]
                    .draw(rng)
                    .map(Hospital)
                    .ok_or(Error::ExhaustedDoctor(doctor))
            }
            Source::Explicit {
                instance, drawn, ..
            } => {
                let list = instance.doctor_list(doctor);
                let h = *list
                    .get(drawn[d] as usize)
                    .ok_or(Error::ExhaustedDoctor(doctor))?;
                drawn[d] += 1;
                Ok(h)
            }
        }
    }

    /// Hospital drawn uniformly from all hospitals; flagged redundant when
    /// this doctor already proposed to it. A non-redundant draw extends the
    /// doctor's preference order exactly as [`next_choice`](Self::next_choice) would.
    pub fn amnesiac_choice(&mut self, doctor: Doctor) -> (Hospital, bool) {
        let d = doctor.index();
        let rng = lazy_rng(&mut self.doctor_rngs[d], self.seed, d as u64);
        let x = rng.random_range(0..self.shape.num_hospitals);
        match &mut self.source {
            Source::Lazy { doctors, .. } => {
                let perm = &mut doctors[d];
                if x < perm.drawn() {
                    (Hospital(perm.slot(x)), true)
                } else {
                    (Hospital(perm.take_at(x)), false)
                }
            }
            Source::Explicit {
                instance, drawn, ..
            } => {
                let list = instance.doctor_list(doctor);
                if x < drawn[d] {
                    (list[x as usize], true)
                } else {
                    let h = list[drawn[d] as usize];
                    drawn[d] += 1;
                    (h, false)
                }
            }
        }
    }

    /// `rank_h(d)`: drawn uniformly from the ranks `hospital` has not yet
    /// handed out on first query, replayed afterwards.
    pub fn rank_of(&mut self, hospital: Hospital, doctor: Doctor) -> Rank {
        let h = hospital.index();
        match &mut self.source {
            Source::Lazy { hospitals, .. } => {
                let entry = &mut hospitals[h];
                if let Some(&r) = entry.assigned.get(&doctor.0) {
                    return r;
                }
                let rng = lazy_rng(
                    &mut self.hospital_rngs[h],
                    self.seed,
                    HOSPITAL_STREAM_BASE + h as u64,
                );
                // at most num_doctors distinct doctors ever ask, so ranks never run out
                let r = entry
                    .unassigned
                    .draw(rng)
                    .expect("more rank queries than doctors")
                    + 1;
                entry.assigned.insert(doctor.0, r);
                r
            }
            Source::Explicit { rank_table, .. } => rank_table[h][doctor.index()],
        }
    }

    /// `rank_h(d)` if it has been drawn already (always in explicit mode).
    pub fn peek_rank(&self, hospital: Hospital, doctor: Doctor) -> Option<Rank> {
        match &self.source {
            Source::Lazy { hospitals, .. } => {
                hospitals[hospital.index()].assigned.get(&doctor.0).copied()
            }
            Source::Explicit { rank_table, .. } => {
                Some(rank_table[hospital.index()][doctor.index()])
            }
        }
    }

    /// Number of ranks `hospital` has assigned so far.
    pub fn ranks_assigned(&self, hospital: Hospital) -> u32 {
        match &self.source {
            Source::Lazy { hospitals, .. } => hospitals[hospital.index()].unassigned.drawn(),
            Source::Explicit { .. } => self.shape.num_doctors,
        }
    }

    /// `rank_d(h)`, drawing further hospitals for `doctor` until `hospital`
    /// appears if needed.
    pub fn doctor_rank(&mut self, doctor: Doctor, hospital: Hospital) -> Rank {
        if let Some(pos) = self.drawn_sequence(doctor).position(|h| h == hospital) {
            return pos as Rank + 1;
        }
        loop {
            let h = self
                .next_choice(doctor)
                .expect("every hospital appears in a full preference order");
            if h == hospital {
                return self.proposed_count(doctor);
            }
        }
    }

    /// Hospitals `doctor` strictly prefers to `hospital`, most preferred first.
    pub fn preferred_over(&mut self, doctor: Doctor, hospital: Hospital) -> Vec<Hospital> {
        let r = self.doctor_rank(doctor, hospital);
        (0..r - 1).map(|i| self.choice_at(doctor, i)).collect()
    }

    /// Explicit instance behind this oracle, if any.
    pub fn instance(&self) -> Option<&Instance> {
        match &self.source {
            Source::Explicit { instance, .. } => Some(instance),
            Source::Lazy { .. } => None,
        }
    }

    /// Fresh oracle with the same preferences and no draws replayed yet.
    pub fn reset(&self) -> Self {
        match &self.source {
            Source::Lazy { .. } => Self::lazy(self.shape, self.seed),
            Source::Explicit { instance, .. } => Self::explicit(instance.clone(), self.seed),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn d(i: u32) -> Doctor {
        Doctor(i)
    }
    fn h(i: u32) -> Hospital {
        Hospital(i)
    }

    #[test]
    fn single_hospital_first_choice() {
        let mut o = PreferenceOracle::lazy(MarketShape::new(3, 1).unwrap(), 5);
        assert_eq!(o.next_choice(d(2)).unwrap(), h(0));
        assert!(matches!(o.next_choice(d(2)), Err(Error::ExhaustedDoctor(_))));
    }

    #[test]
    fn explicit_replay() {
        let mut o = PreferenceOracle::from_explicit(
            vec![vec![h(1), h(0), h(2)]; 3],
            vec![vec![d(2), d(0), d(1)]; 3],
        )
        .unwrap();
        let got: Vec<_> = (0..3).map(|_| o.next_choice(d(0)).unwrap()).collect();
        assert_eq!(got, vec![h(1), h(0), h(2)]);
        assert!(o.next_choice(d(0)).is_err());
        assert_eq!(o.rank_of(h(0), d(0)), 2);
        assert_eq!(o.rank_of(h(0), d(2)), 1);
    }

    #[test]
    fn single_doctor_rank_is_one() {
        let mut o = PreferenceOracle::lazy(MarketShape::new(1, 4).unwrap(), 11);
        for hh in 0..4 {
            assert_eq!(o.rank_of(h(hh), d(0)), 1);
        }
    }

    #[test]
    fn amnesiac_trivial_cases() {
        let mut o = PreferenceOracle::lazy(MarketShape::new(2, 1).unwrap(), 1);
        assert_eq!(o.amnesiac_choice(d(0)), (h(0), false));
        assert_eq!(o.amnesiac_choice(d(0)), (h(0), true));
        for seed in 0..50 {
            let mut o = PreferenceOracle::lazy(MarketShape::new(5, 7).unwrap(), seed);
            assert!(!o.amnesiac_choice(d(3)).1);
        }
    }

    #[test]
    fn lazy_first_draw_is_uniform() {
        let seeds = 30_000;
        let mut counts = [0u32; 3];
        for seed in 0..seeds {
            let mut o = PreferenceOracle::lazy(MarketShape::new(3, 3).unwrap(), seed);
            counts[o.next_choice(d(0)).unwrap().index()] += 1;
        }
        for c in counts {
            let freq = c as f64 / seeds as f64;
            assert!((freq - 1.0 / 3.0).abs() <= 0.01, "{counts:?}");
        }
    }

    #[test]
    fn amnesiac_redundancy_rate() {
        let seeds = 40_000;
        let mut redundant = 0;
        for seed in 0..seeds {
            let mut o = PreferenceOracle::lazy(MarketShape::new(1, 4).unwrap(), seed);
            o.next_choice(d(0)).unwrap();
            o.next_choice(d(0)).unwrap();
            redundant += o.amnesiac_choice(d(0)).1 as u32;
        }
        let p = redundant as f64 / seeds as f64;
        assert!((p - 0.5).abs() <= 0.01, "{p}");
    }

    #[test]
    fn rank_pair_matches_permutation_prefix() {
        // first two entries of a uniform permutation of {1,2,3}: six ordered
        // pairs of distinct values, each with probability 1/6
        let seeds = 60_000u64;
        let mut counts: HashMap<(Rank, Rank), u32> = HashMap::new();
        for seed in 0..seeds {
            let mut o = PreferenceOracle::lazy(MarketShape::new(3, 1).unwrap(), seed);
            let a = o.rank_of(h(0), d(2));
            let b = o.rank_of(h(0), d(0));
            *counts.entry((a, b)).or_default() += 1;
        }
        let mut tv = 0.0;
        for a in 1..=3 {
            for b in 1..=3 {
                let expected = if a == b { 0.0 } else { 1.0 / 6.0 };
                let got = counts.get(&(a, b)).copied().unwrap_or(0) as f64 / seeds as f64;
                tv += (expected - got).abs();
            }
        }
        tv /= 2.0;
        assert!(tv <= 0.02, "tv = {tv}");
    }

    #[test]
    fn ranks_replay_and_stay_distinct() {
        let mut o = PreferenceOracle::lazy(MarketShape::new(40, 3).unwrap(), 77);
        let first: Vec<_> = (0..40).map(|i| o.rank_of(h(1), d(i))).collect();
        let again: Vec<_> = (0..40).rev().map(|i| o.rank_of(h(1), d(i))).collect();
        let mut rev = again.clone();
        rev.reverse();
        assert_eq!(first, rev);
        let mut sorted = first.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (1..=40).collect::<Vec<_>>());
    }

    #[test]
    fn streams_are_independent_of_query_order() {
        let shape = MarketShape::new(6, 6).unwrap();
        let mut a = PreferenceOracle::lazy(shape, 1234);
        let mut b = PreferenceOracle::lazy(shape, 1234);
        let a0: Vec<_> = (0..6).map(|_| a.next_choice(d(0)).unwrap()).collect();
        for _ in 0..6 {
            b.next_choice(d(4)).unwrap();
            b.rank_of(h(2), d(3));
        }
        let b0: Vec<_> = (0..6).map(|_| b.next_choice(d(0)).unwrap()).collect();
        assert_eq!(a0, b0);
    }

    #[test]
    fn doctor_rank_forces_draws() {
        let mut o = PreferenceOracle::lazy(MarketShape::new(2, 10).unwrap(), 3);
        let r = o.doctor_rank(d(1), h(7));
        assert_eq!(o.proposed_count(d(1)), r);
        assert_eq!(o.choice_at(d(1), r - 1), h(7));
        assert_eq!(o.preferred_over(d(1), h(7)).len() as u32, r - 1);
    }
}
