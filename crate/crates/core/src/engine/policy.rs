use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Doctor, Error, Rank, Result};

/// Hospital acceptance rule, expressed on ranks: does a hospital holding a
/// doctor of rank `incumbent` (or nobody) take a proposer of rank `candidate`?
pub trait AcceptRule: Send + Sync {
    fn accepts(&self, candidate: Rank, incumbent: Option<Rank>) -> bool;
}

impl<A: AcceptRule + ?Sized> AcceptRule for &A {
    fn accepts(&self, candidate: Rank, incumbent: Option<Rank>) -> bool {
        (**self).accepts(candidate, incumbent)
    }
}

/// Loyalty accept rule: an unmatched hospital always accepts; a matched one
/// switches only when `rank_new < rank_incumbent - k`.
#[inline]
pub fn accept_loyal(rank_new: Rank, rank_incumbent: Option<Rank>, k: u32) -> bool {
    match rank_incumbent {
        None => true,
        Some(inc) => (rank_new as u64) + (k as u64) < inc as u64,
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AcceptPolicy {
    /// Textbook deferred acceptance, identical to `Loyalty(0)`.
    Classic,
    Loyalty(u32),
}

impl AcceptPolicy {
    pub fn loyalty(&self) -> u32 {
        match *self {
            AcceptPolicy::Classic => 0,
            AcceptPolicy::Loyalty(k) => k,
        }
    }

    /// `k` must lie in `[0, num_doctors - 1]`.
    pub fn validate(&self, num_doctors: u32) -> Result<()> {
        let k = self.loyalty();
        if num_doctors == 0 || k > num_doctors - 1 {
            return Err(Error::InvalidLoyalty {
                k: k as u64,
                max: num_doctors.saturating_sub(1),
            });
        }
        Ok(())
    }
}

impl AcceptRule for AcceptPolicy {
    #[inline]
    fn accepts(&self, candidate: Rank, incumbent: Option<Rank>) -> bool {
        accept_loyal(candidate, incumbent, self.loyalty())
    }
}

/// How the next proposer is picked from the unmatched doctors.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NextPolicy {
    /// Queue; a displaced doctor rejoins at the tail.
    Fifo,
    /// Stack; a displaced doctor proposes next.
    Lifo,
    /// Uniform over the unmatched set at every step.
    #[serde(rename = "random", alias = "uniform")]
    UniformRandom,
}

impl NextPolicy {
    pub const ALL: [NextPolicy; 3] = [NextPolicy::Fifo, NextPolicy::Lifo, NextPolicy::UniformRandom];

    pub fn name(&self) -> &'static str {
        match self {
            NextPolicy::Fifo => "fifo",
            NextPolicy::Lifo => "lifo",
            NextPolicy::UniformRandom => "random",
        }
    }
}

impl fmt::Display for NextPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NextPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fifo" => Ok(NextPolicy::Fifo),
            "lifo" => Ok(NextPolicy::Lifo),
            "random" | "uniform" => Ok(NextPolicy::UniformRandom),
            other => Err(Error::InvalidSpec(format!(
                "unknown next policy {other:?} (fifo, lifo, random)"
            ))),
        }
    }
}

/// The unmatched set `U`, organized for a [`NextPolicy`].
#[derive(Clone, Debug)]
pub(crate) enum Pending {
    Fifo(VecDeque<Doctor>),
    /// Top of the stack is the last element.
    Lifo(Vec<Doctor>),
    Random {
        pool: Vec<Doctor>,
        chosen: usize,
    },
}

impl Pending {
    /// `order[0]` is the first doctor offered the turn.
    pub(crate) fn new(policy: NextPolicy, order: Vec<Doctor>) -> Self {
        match policy {
            NextPolicy::Fifo => Pending::Fifo(order.into()),
            NextPolicy::Lifo => {
                let mut stack = order;
                stack.reverse();
                Pending::Lifo(stack)
            }
            NextPolicy::UniformRandom => Pending::Random {
                pool: order,
                chosen: 0,
            },
        }
    }

    pub(crate) fn len(&self) -> usize {
        match self {
            Pending::Fifo(q) => q.len(),
            Pending::Lifo(s) => s.len(),
            Pending::Random { pool, .. } => pool.len(),
        }
    }

    /// Next proposer; stays in the set until [`accepted`](Self::accepted).
    pub(crate) fn choose<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Option<Doctor> {
        match self {
            Pending::Fifo(q) => q.front().copied(),
            Pending::Lifo(s) => s.last().copied(),
            Pending::Random { pool, chosen } => {
                if pool.is_empty() {
                    return None;
                }
                *chosen = rng.random_range(0..pool.len());
                Some(pool[*chosen])
            }
        }
    }

    /// The last chosen doctor leaves `U` for good without a partner.
    pub(crate) fn retire(&mut self, proposer: Doctor) {
        match self {
            Pending::Fifo(q) => {
                let front = q.pop_front();
                debug_assert_eq!(front, Some(proposer));
            }
            Pending::Lifo(s) => {
                let top = s.pop();
                debug_assert_eq!(top, Some(proposer));
            }
            Pending::Random { pool, chosen } => {
                debug_assert_eq!(pool[*chosen], proposer);
                pool.swap_remove(*chosen);
            }
        }
    }

    /// The last chosen doctor was accepted; `displaced` re-enters `U`.
    pub(crate) fn accepted(&mut self, proposer: Doctor, displaced: Option<Doctor>) {
        match self {
            Pending::Fifo(q) => {
                let front = q.pop_front();
                debug_assert_eq!(front, Some(proposer));
                q.extend(displaced);
            }
            Pending::Lifo(s) => {
                let top = s.pop();
                debug_assert_eq!(top, Some(proposer));
                s.extend(displaced);
            }
            Pending::Random { pool, chosen } => {
                debug_assert_eq!(pool[*chosen], proposer);
                pool.swap_remove(*chosen);
                pool.extend(displaced);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn loyalty_formula() {
        assert!(accept_loyal(3, Some(5), 1));
        assert!(!accept_loyal(4, Some(5), 1));
        assert!(accept_loyal(10, None, 7));
        assert!(accept_loyal(1, Some(2), 0));
        assert!(!accept_loyal(2, Some(1), 0));
        // maximal loyalty never switches
        assert!(!accept_loyal(1, Some(10), 9));
    }

    #[test]
    fn classic_is_loyalty_zero() {
        for a in 1..6 {
            for b in 1..6 {
                assert_eq!(
                    AcceptPolicy::Classic.accepts(a, Some(b)),
                    AcceptPolicy::Loyalty(0).accepts(a, Some(b))
                );
            }
        }
    }

    #[test]
    fn loyalty_range() {
        assert!(AcceptPolicy::Loyalty(4).validate(5).is_ok());
        assert!(AcceptPolicy::Loyalty(5).validate(5).is_err());
        assert!(AcceptPolicy::Classic.validate(1).is_ok());
    }

    #[test]
    fn fifo_displaced_goes_to_tail() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut p = Pending::new(NextPolicy::Fifo, vec![Doctor(0), Doctor(1), Doctor(2)]);
        assert_eq!(p.choose(&mut rng), Some(Doctor(0)));
        p.accepted(Doctor(0), None);
        assert_eq!(p.choose(&mut rng), Some(Doctor(1)));
        p.accepted(Doctor(1), Some(Doctor(0)));
        assert_eq!(p.choose(&mut rng), Some(Doctor(2)));
        p.accepted(Doctor(2), None);
        assert_eq!(p.choose(&mut rng), Some(Doctor(0)));
    }

    #[test]
    fn lifo_displaced_goes_next() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut p = Pending::new(NextPolicy::Lifo, vec![Doctor(0), Doctor(1), Doctor(2)]);
        assert_eq!(p.choose(&mut rng), Some(Doctor(0)));
        p.accepted(Doctor(0), Some(Doctor(2)));
        assert_eq!(p.choose(&mut rng), Some(Doctor(2)));
    }

    #[test]
    fn random_stays_in_set() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut p = Pending::new(NextPolicy::UniformRandom, (0..5).map(Doctor).collect());
        let mut live: Vec<Doctor> = (0..5).map(Doctor).collect();
        while let Some(d) = p.choose(&mut rng) {
            assert!(live.contains(&d));
            live.retain(|&x| x != d);
            p.accepted(d, None);
        }
        assert!(live.is_empty());
    }
}
