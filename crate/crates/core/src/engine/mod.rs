//! The doctor-proposing deferred acceptance meta-algorithm.
//!
//! While some doctor is unmatched and no doctor has been rejected by every
//! hospital, the [`NextPolicy`] picks an unmatched doctor, who proposes to
//! their most preferred hospital not yet proposed to. The hospital's
//! [`AcceptRule`] decides; an accepted proposal displaces the incumbent back
//! into the unmatched set. Hospitals never become unmatched.
//!
//! Besides the matching itself the engine records everything the analysis of
//! loyal markets refers to: per-agent proposal counts, the rank of each
//! hospital's first match, the split of proposals before and after every
//! hospital is matched, and the hospitals that were still open to a better
//! doctor at that moment.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::prefs::{stream_rng, MarketShape, PreferenceOracle, SCHEDULER_STREAM};
use crate::{Doctor, Error, Hospital, Rank, Result};

mod matching;
mod policy;

pub use matching::Matching;
pub(crate) use policy::Pending;
pub use policy::{accept_loyal, AcceptPolicy, AcceptRule, NextPolicy};

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    /// Some hospital has never been matched.
    Balanced,
    /// Every hospital has been matched at least once.
    Unbalanced,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationCause {
    AllDoctorsMatched,
    /// Some doctor was rejected by every hospital; holds the last one to be.
    DoctorExhausted(Doctor),
}

impl TerminationCause {
    pub fn label(&self) -> &'static str {
        match self {
            TerminationCause::AllDoctorsMatched => "all_doctors_matched",
            TerminationCause::DoctorExhausted(_) => "doctor_exhausted",
        }
    }
}

/// One proposal, `⟨d, h, μ(h), accepted⟩` with `μ(h)` taken before the proposal.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryEvent {
    pub ordinal: u64,
    pub doctor: Doctor,
    pub hospital: Hospital,
    pub incumbent: Option<Doctor>,
    pub accepted: bool,
    /// `rank_h(d)`; absent for redundant proposals, which never reach the hospital.
    pub rank: Option<Rank>,
    /// Amnesiac repeat of an earlier proposal, rejected without consulting `h`.
    pub redundant: bool,
    pub phase: Phase,
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Doctors draw from all hospitals each time; repeats are auto-rejected.
    pub amnesiac: bool,
    pub record_history: bool,
    /// Initial order of `U`: `order[0]` proposes first under FIFO and LIFO.
    /// Defaults to doctor index order.
    pub initial_order: Option<Vec<Doctor>>,
}

/// Observes every processed proposal.
pub trait Observer {
    fn on_event(&mut self, state: &MatchingState, event: &HistoryEvent);
}

impl Observer for () {
    fn on_event(&mut self, _: &MatchingState, _: &HistoryEvent) {}
}

/// Tentative matching plus the counters tracked during a run.
#[derive(Clone, Debug)]
pub struct MatchingState {
    shape: MarketShape,
    doctor_partner: Vec<Option<Hospital>>,
    hospital_partner: Vec<Option<Doctor>>,
    /// `rank_d(μ(d))`, 0 when unmatched
    doctor_partner_rank: Vec<Rank>,
    /// `rank_h(μ(h))`, 0 when unmatched
    hospital_partner_rank: Vec<Rank>,
    doctor_proposals: Vec<u32>,
    hospital_offers: Vec<u32>,
    hospital_accepts: Vec<u32>,
    first_match_rank: Vec<Rank>,
    matched_hospitals: u32,
    unmatched_doctors: u32,
    phase: Phase,
    proposals_balanced: u64,
    proposals_unbalanced: u64,
    redundant_proposals: u64,
    balanced_end_ranks: Option<Vec<Rank>>,
    available_at_switch: Vec<Hospital>,
    rematched_unbalanced: Vec<bool>,
    proposed_unbalanced: Vec<bool>,
    unbalanced_proposers: u32,
    exhausted_doctors: u32,
    last_exhausted: Option<Doctor>,
    history: Vec<HistoryEvent>,
    termination: Option<TerminationCause>,
}

fn rank_opt(r: Rank) -> Option<Rank> {
    (r != 0).then_some(r)
}

impl MatchingState {
    fn new(shape: MarketShape) -> Self {
        let nd = shape.num_doctors as usize;
        let nh = shape.num_hospitals as usize;
        MatchingState {
            shape,
            doctor_partner: vec![None; nd],
            hospital_partner: vec![None; nh],
            doctor_partner_rank: vec![0; nd],
            hospital_partner_rank: vec![0; nh],
            doctor_proposals: vec![0; nd],
            hospital_offers: vec![0; nh],
            hospital_accepts: vec![0; nh],
            first_match_rank: vec![0; nh],
            matched_hospitals: 0,
            unmatched_doctors: shape.num_doctors,
            phase: Phase::Balanced,
            proposals_balanced: 0,
            proposals_unbalanced: 0,
            redundant_proposals: 0,
            balanced_end_ranks: None,
            available_at_switch: Vec::new(),
            rematched_unbalanced: vec![false; nh],
            proposed_unbalanced: vec![false; nd],
            unbalanced_proposers: 0,
            exhausted_doctors: 0,
            last_exhausted: None,
            history: Vec::new(),
            termination: None,
        }
    }

    pub fn shape(&self) -> MarketShape {
        self.shape
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn partner_of_doctor(&self, d: Doctor) -> Option<Hospital> {
        self.doctor_partner[d.index()]
    }

    pub fn partner_of_hospital(&self, h: Hospital) -> Option<Doctor> {
        self.hospital_partner[h.index()]
    }

    /// `rank_h(μ(h))`.
    pub fn hospital_rank(&self, h: Hospital) -> Option<Rank> {
        rank_opt(self.hospital_partner_rank[h.index()])
    }

    pub fn hospital_ranks(&self) -> Vec<Option<Rank>> {
        self.hospital_partner_rank.iter().map(|&r| rank_opt(r)).collect()
    }

    /// `m_d`: distinct hospitals `d` has proposed to.
    pub fn doctor_proposals(&self, d: Doctor) -> u32 {
        self.doctor_proposals[d.index()]
    }

    /// `m_h`: offers received by `h` (redundant proposals excluded).
    pub fn hospital_offers(&self, h: Hospital) -> u32 {
        self.hospital_offers[h.index()]
    }

    /// `f_h`: rank of the first doctor `h` accepted.
    pub fn first_match_rank(&self, h: Hospital) -> Option<Rank> {
        rank_opt(self.first_match_rank[h.index()])
    }

    pub fn matched_hospitals(&self) -> u32 {
        self.matched_hospitals
    }

    pub fn unmatched_doctors(&self) -> u32 {
        self.unmatched_doctors
    }

    pub fn total_proposals(&self) -> u64 {
        self.proposals_balanced + self.proposals_unbalanced
    }

    pub fn termination(&self) -> Option<TerminationCause> {
        self.termination
    }

    pub fn history(&self) -> &[HistoryEvent] {
        &self.history
    }

    pub fn matching(&self) -> Matching {
        Matching::from_hospital_partners(self.shape.num_doctors, &self.hospital_partner)
            .expect("engine keeps the matching one-to-one")
    }
}

/// Step-wise runner over a borrowed preference oracle.
pub struct Engine<'o, A: AcceptRule> {
    oracle: &'o mut PreferenceOracle,
    accept: A,
    pending: Pending,
    rng: ChaCha8Rng,
    state: MatchingState,
    amnesiac: bool,
    record_history: bool,
}

impl<'o, A: AcceptRule> Engine<'o, A> {
    pub fn new(
        oracle: &'o mut PreferenceOracle,
        next: NextPolicy,
        accept: A,
        options: RunOptions,
    ) -> Self {
        let shape = oracle.shape();
        let order = options
            .initial_order
            .unwrap_or_else(|| shape.doctors().collect());
        debug_assert_eq!(order.len(), shape.num_doctors as usize);
        Engine {
            rng: stream_rng(oracle.seed(), SCHEDULER_STREAM),
            oracle,
            accept,
            pending: Pending::new(next, order),
            state: MatchingState::new(shape),
            amnesiac: options.amnesiac,
            record_history: options.record_history,
        }
    }

    pub fn state(&self) -> &MatchingState {
        &self.state
    }

    pub fn is_terminated(&self) -> bool {
        self.state.termination.is_some()
    }

    /// Processes exactly one proposal.
    pub fn step(&mut self) -> Result<HistoryEvent> {
        if self.is_terminated() {
            return Err(Error::Terminated);
        }
        let st = &mut self.state;
        let doctor = self
            .pending
            .choose(&mut self.rng)
            .expect("a live run has an unmatched doctor");
        let (hospital, redundant) = if self.amnesiac {
            self.oracle.amnesiac_choice(doctor)
        } else {
            (self.oracle.next_choice(doctor)?, false)
        };

        let phase = st.phase;
        match phase {
            Phase::Balanced => st.proposals_balanced += 1,
            Phase::Unbalanced => {
                st.proposals_unbalanced += 1;
                if !std::mem::replace(&mut st.proposed_unbalanced[doctor.index()], true) {
                    st.unbalanced_proposers += 1;
                }
            }
        }
        let ordinal = st.total_proposals();
        let (d, h) = (doctor.index(), hospital.index());
        let incumbent = st.hospital_partner[h];

        let mut event = HistoryEvent {
            ordinal,
            doctor,
            hospital,
            incumbent,
            accepted: false,
            rank: None,
            redundant,
            phase,
        };

        if redundant {
            st.redundant_proposals += 1;
        } else {
            st.doctor_proposals[d] += 1;
            st.hospital_offers[h] += 1;
            let rank = self.oracle.rank_of(hospital, doctor);
            event.rank = Some(rank);
            let incumbent_rank = rank_opt(st.hospital_partner_rank[h]);
            if self.accept.accepts(rank, incumbent_rank) {
                event.accepted = true;
                match incumbent {
                    Some(old) => {
                        st.doctor_partner[old.index()] = None;
                        st.doctor_partner_rank[old.index()] = 0;
                        if phase == Phase::Unbalanced {
                            st.rematched_unbalanced[h] = true;
                        }
                    }
                    None => {
                        st.matched_hospitals += 1;
                        st.first_match_rank[h] = rank;
                        st.unmatched_doctors -= 1;
                    }
                }
                st.hospital_partner[h] = Some(doctor);
                st.hospital_partner_rank[h] = rank;
                st.doctor_partner[d] = Some(hospital);
                st.doctor_partner_rank[d] = st.doctor_proposals[d];
                st.hospital_accepts[h] += 1;
                let displaced = incumbent.filter(|old| {
                    let gone = st.doctor_proposals[old.index()] == st.shape.num_hospitals;
                    if gone {
                        st.exhausted_doctors += 1;
                        st.last_exhausted = Some(*old);
                    }
                    !gone
                });
                self.pending.accepted(doctor, displaced);

                if st.phase == Phase::Balanced && st.matched_hospitals == st.shape.num_hospitals {
                    st.phase = Phase::Unbalanced;
                    st.balanced_end_ranks = Some(st.hospital_partner_rank.clone());
                    st.available_at_switch = st
                        .hospital_partner_rank
                        .iter()
                        .enumerate()
                        .filter(|&(_, &r)| self.accept.accepts(1, Some(r)))
                        .map(|(h, _)| Hospital(h as u32))
                        .collect();
                }
            }
        }
        if !event.accepted && st.doctor_proposals[d] == st.shape.num_hospitals {
            st.exhausted_doctors += 1;
            st.last_exhausted = Some(doctor);
            self.pending.retire(doctor);
        }
        debug_assert_eq!(
            st.unmatched_doctors as usize,
            self.pending.len() + st.exhausted_doctors as usize
        );
        debug_assert!(
            st.phase == Phase::Balanced
                || st.unmatched_doctors == st.shape.num_doctors.saturating_sub(st.shape.num_hospitals)
        );

        // exhausted doctors leave the pool; the run ends once nobody can propose
        if self.pending.len() == 0 {
            st.termination = Some(match st.last_exhausted {
                None => TerminationCause::AllDoctorsMatched,
                Some(x) => TerminationCause::DoctorExhausted(x),
            });
        }

        if self.record_history {
            st.history.push(event.clone());
        }
        Ok(event)
    }

    pub fn run_observed<O: Observer>(mut self, observer: &mut O) -> RunOutcome {
        while !self.is_terminated() {
            let event = self.step().expect("step on a live run");
            observer.on_event(&self.state, &event);
        }
        self.finish()
    }

    pub fn run_to_end(self) -> RunOutcome {
        self.run_observed(&mut ())
    }

    /// Outcome of the run so far. Call after termination for final figures.
    pub fn finish(self) -> RunOutcome {
        RunOutcome::from_state(self.state, self.record_history)
    }
}

/// Runs the meta-algorithm to termination on `oracle`.
pub fn run<A: AcceptRule>(
    oracle: &mut PreferenceOracle,
    next: NextPolicy,
    accept: A,
    options: RunOptions,
) -> RunOutcome {
    Engine::new(oracle, next, accept, options).run_to_end()
}

/// Final matching and every metric collected during a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub num_doctors: u32,
    pub num_hospitals: u32,
    pub matching: Matching,
    pub termination_cause: TerminationCause,
    pub total_proposals: u64,
    pub proposals_balanced: u64,
    pub proposals_unbalanced: u64,
    /// Amnesiac repeats, included in the totals above.
    pub redundant_proposals: u64,
    /// Mean `rank_d(μ(d))` over matched doctors.
    pub avg_doctor_rank: f64,
    /// Mean `rank_h(μ(h))` over matched hospitals.
    pub avg_hospital_rank: f64,
    /// `total_proposals / num_doctors`.
    pub avg_doctor_proposals: f64,
    /// `num_hospitals + 1` when a doctor ends unmatched.
    pub unmatched_doctor_rank: Option<Rank>,
    pub heavy_doctor_count: u32,
    pub heavy_hospital_count: u32,
    /// `f_h` per hospital.
    pub first_match_rank: Vec<Option<Rank>>,
    pub doctor_proposals: Vec<u32>,
    pub hospital_offers: Vec<u32>,
    /// Accepted proposals per hospital; more than one means re-matched.
    pub hospital_accepts: Vec<u32>,
    /// `rank_h(μ(h))` at the moment every hospital was first matched.
    pub balanced_end_ranks: Option<Vec<Option<Rank>>>,
    pub final_hospital_ranks: Vec<Option<Rank>>,
    /// Hospitals that would still accept a better doctor when the last
    /// hospital got matched.
    pub available_at_unbalanced_start: Vec<Hospital>,
    /// Hospitals that switched partner after every hospital was matched.
    pub rematched_in_unbalanced: Vec<Hospital>,
    /// Distinct doctors proposing after every hospital was matched.
    pub unbalanced_proposers: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub history: Option<Vec<HistoryEvent>>,
}

fn mean_nonzero(xs: &[Rank]) -> f64 {
    let (sum, count) = xs
        .iter()
        .filter(|&&r| r != 0)
        .fold((0u64, 0u64), |(s, c), &r| (s + r as u64, c + 1));
    if count == 0 {
        0.0
    } else {
        sum as f64 / count as f64
    }
}

impl RunOutcome {
    fn from_state(st: MatchingState, keep_history: bool) -> Self {
        let nh = st.shape.num_hospitals;
        let heavy = |m: &u32| 2 * *m as u64 >= nh as u64;
        let matching = st.matching();
        let total = st.total_proposals();
        RunOutcome {
            num_doctors: st.shape.num_doctors,
            num_hospitals: nh,
            termination_cause: st.termination.unwrap_or(TerminationCause::AllDoctorsMatched),
            total_proposals: total,
            proposals_balanced: st.proposals_balanced,
            proposals_unbalanced: st.proposals_unbalanced,
            redundant_proposals: st.redundant_proposals,
            avg_doctor_rank: mean_nonzero(&st.doctor_partner_rank),
            avg_hospital_rank: mean_nonzero(&st.hospital_partner_rank),
            avg_doctor_proposals: total as f64 / st.shape.num_doctors as f64,
            unmatched_doctor_rank: (st.unmatched_doctors > 0).then_some(nh + 1),
            heavy_doctor_count: st.doctor_proposals.iter().filter(|m| heavy(m)).count() as u32,
            heavy_hospital_count: st.hospital_offers.iter().filter(|m| heavy(m)).count() as u32,
            first_match_rank: st.first_match_rank.iter().map(|&r| rank_opt(r)).collect(),
            balanced_end_ranks: st
                .balanced_end_ranks
                .as_ref()
                .map(|v| v.iter().map(|&r| rank_opt(r)).collect()),
            final_hospital_ranks: st.hospital_ranks(),
            available_at_unbalanced_start: st.available_at_switch,
            rematched_in_unbalanced: st
                .rematched_unbalanced
                .iter()
                .enumerate()
                .filter(|(_, &b)| b)
                .map(|(h, _)| Hospital(h as u32))
                .collect(),
            unbalanced_proposers: st.unbalanced_proposers,
            doctor_proposals: st.doctor_proposals,
            hospital_offers: st.hospital_offers,
            hospital_accepts: st.hospital_accepts,
            history: keep_history.then_some(st.history),
            matching,
        }
    }

    pub fn shape(&self) -> MarketShape {
        MarketShape {
            num_doctors: self.num_doctors,
            num_hospitals: self.num_hospitals,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
