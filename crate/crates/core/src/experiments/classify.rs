use serde::{Deserialize, Serialize};

use super::shuffled_order;
use crate::engine::{AcceptPolicy, Engine, HistoryEvent, MatchingState, NextPolicy, Observer, RunOptions};
use crate::prefs::{MarketShape, PreferenceOracle};
use crate::{Error, Rank, Result};

/// Hospital counts by the rank of their current partner, for `k = n/c`.
///
/// With `a = n/c`: `F` holds ranks in `[1, a]`, `H` in `(a, a + sqrt n]`,
/// `M` in `(a + sqrt n, 2a]`, `E_i` in `((i+1)a, (i+2)a]`, and `U` the
/// unmatched. `e[i - 1]` counts `E_i`; the last bucket also takes any rank
/// beyond its upper end.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HospitalClasses {
    pub f: u32,
    pub h: u32,
    pub m: u32,
    pub e: Vec<u32>,
    pub u: u32,
}

impl HospitalClasses {
    pub fn total(&self) -> u32 {
        self.f + self.h + self.m + self.u + self.e.iter().sum::<u32>()
    }

    /// No hospital left in `M`, any `E_i`, or `U`.
    pub fn only_final_or_hard(&self) -> bool {
        self.m == 0 && self.u == 0 && self.e.iter().all(|&x| x == 0)
    }
}

#[derive(Copy, Clone, Debug, PartialEq)]
enum Class {
    F,
    H,
    M,
    E(usize),
    U,
}

#[derive(Clone, Debug)]
struct Bounds {
    n: f64,
    c: f64,
    sqrt_n: f64,
    e_buckets: usize,
}

impl Bounds {
    fn new(n: u32, c: f64) -> Result<Self> {
        let nf = n as f64;
        if !(c >= 3.0 && c < nf.sqrt()) {
            return Err(Error::InvalidSpec(format!(
                "class parameter c must satisfy 3 <= c < sqrt(n), got c={c} for n={n}"
            )));
        }
        Ok(Bounds {
            n: nf,
            c,
            sqrt_n: nf.sqrt(),
            e_buckets: c.ceil() as usize - 2,
        })
    }

    fn class_of(&self, rank: Option<Rank>) -> Class {
        let Some(r) = rank else { return Class::U };
        let r = r as f64;
        let a = self.n / self.c;
        if r <= a {
            Class::F
        } else if r <= a + self.sqrt_n {
            Class::H
        } else if r <= 2.0 * a {
            Class::M
        } else {
            let i = (r * self.c / self.n).ceil() as usize;
            Class::E(i.saturating_sub(2).clamp(1, self.e_buckets) - 1)
        }
    }

    fn empty(&self) -> HospitalClasses {
        HospitalClasses {
            e: vec![0; self.e_buckets],
            ..HospitalClasses::default()
        }
    }
}

fn slot(classes: &mut HospitalClasses, class: Class) -> &mut u32 {
    match class {
        Class::F => &mut classes.f,
        Class::H => &mut classes.h,
        Class::M => &mut classes.m,
        Class::E(i) => &mut classes.e[i],
        Class::U => &mut classes.u,
    }
}

/// Partition of hospitals by current partner rank; `ranks[h]` is `None`
/// for an unmatched hospital.
pub fn classify_hospitals(ranks: &[Option<Rank>], n: u32, c: f64) -> Result<HospitalClasses> {
    let bounds = Bounds::new(n, c)?;
    let mut classes = bounds.empty();
    for &r in ranks {
        *slot(&mut classes, bounds.class_of(r)) += 1;
    }
    Ok(classes)
}

/// The first instant at which every hospital is in `F` or `H`, or the end
/// of the run if that comes first.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModerateEnd {
    pub proposals: u64,
    pub classes: HospitalClasses,
    /// False when the run terminated with hospitals still outside `F` and `H`.
    pub reached: bool,
}

/// Observer keeping [`HospitalClasses`] up to date one proposal at a time.
#[derive(Clone, Debug)]
pub struct ClassTracker {
    bounds: Bounds,
    ranks: Vec<Option<Rank>>,
    classes: HospitalClasses,
    moderate_end: Option<ModerateEnd>,
}

impl ClassTracker {
    pub fn new(num_hospitals: u32, c: f64) -> Result<Self> {
        let bounds = Bounds::new(num_hospitals, c)?;
        let mut classes = bounds.empty();
        classes.u = num_hospitals;
        Ok(ClassTracker {
            bounds,
            ranks: vec![None; num_hospitals as usize],
            classes,
            moderate_end: None,
        })
    }

    pub fn classes(&self) -> &HospitalClasses {
        &self.classes
    }

    pub fn moderate_end(&self) -> Option<&ModerateEnd> {
        self.moderate_end.as_ref()
    }
}

impl Observer for ClassTracker {
    fn on_event(&mut self, state: &MatchingState, event: &HistoryEvent) {
        if event.accepted {
            let h = event.hospital.index();
            let old = self.bounds.class_of(self.ranks[h]);
            self.ranks[h] = event.rank;
            let new = self.bounds.class_of(event.rank);
            *slot(&mut self.classes, old) -= 1;
            *slot(&mut self.classes, new) += 1;
        }
        if self.moderate_end.is_none() && self.classes.only_final_or_hard() {
            self.moderate_end = Some(ModerateEnd {
                proposals: state.total_proposals(),
                classes: self.classes.clone(),
                reached: true,
            });
        }
    }
}

/// Runs an unbalanced market of size `n` at `k = floor(n/c)` until every
/// hospital is in `F` or `H`, or until the run terminates.
pub fn moderate_phase_end(n: u32, c: f64, seed: u64) -> Result<ModerateEnd> {
    let mut tracker = ClassTracker::new(n, c)?;
    let shape = MarketShape::unbalanced(n)?;
    let k = (n as f64 / c).floor() as u32;
    let mut oracle = PreferenceOracle::lazy(shape, seed);
    let options = RunOptions {
        initial_order: Some(shuffled_order(shape, seed)),
        ..RunOptions::default()
    };
    let mut engine = Engine::new(&mut oracle, NextPolicy::Fifo, AcceptPolicy::Loyalty(k), options);
    while !engine.is_terminated() {
        let event = engine.step()?;
        tracker.on_event(engine.state(), &event);
        if tracker.moderate_end.is_some() {
            break;
        }
    }
    Ok(tracker.moderate_end.unwrap_or_else(|| ModerateEnd {
        proposals: engine.state().total_proposals(),
        classes: tracker.classes,
        reached: false,
    }))
}
