//! Simulation of one-to-one doctor/hospital matching markets in which
//! hospitals are loyal to their current match.
//!
//! The crate runs the doctor-proposing deferred acceptance meta-algorithm
//! with pluggable proposal orders ([`NextPolicy`]) and accept functions
//! ([`AcceptRule`]), over uniformly random preferences that are sampled
//! lazily so that large markets never materialize full preference lists.
//!
//! Modules:
//! - [`prefs`]: lazy and explicit preference oracles, instance files.
//! - [`engine`]: the proposal loop and its instrumentation.
//! - [`stability`]: blocking-pair verification and accept-rule consistency checks.
//! - [`oracle`]: brute-force stable-set enumeration and auxiliary stochastic processes.
//! - [`experiments`]: loyalty sweeps, phase snapshots, CSV/JSON/SVG output.
//! - [`cli`]: the `loyal-match` command line front end.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub mod cli;
pub mod engine;
pub mod error;
pub mod experiments;
pub mod oracle;
pub mod prefs;
pub mod stability;

pub use engine::{
    accept_loyal, run, AcceptPolicy, AcceptRule, Engine, HistoryEvent, Matching, MatchingState,
    NextPolicy, Observer, Phase, RunOptions, RunOutcome, TerminationCause,
};
pub use error::{Error, Result};
pub use prefs::{Instance, MarketShape, PreferenceOracle};
pub use stability::{check_consistency, verify_stable, BlockingReport};

/// 1-based rank of an agent in a preference list.
pub type Rank = u32;

macro_rules! agent_id {
    ($name:ident, $prefix:literal) => {
        /// Zero-based agent index. Displayed and serialized 1-based.
        #[derive(Copy, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub struct $name(pub u32);

        impl $name {
            #[inline]
            pub fn index(self) -> usize {
                self.0 as usize
            }

            /// Builds an id from a 1-based label; `None` for zero.
            pub fn from_one_based(label: u32) -> Option<Self> {
                label.checked_sub(1).map($name)
            }

            pub fn one_based(self) -> u32 {
                self.0 + 1
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, concat!($prefix, "{}"), self.0 + 1)
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                fmt::Display::fmt(self, f)
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
                s.serialize_u32(self.one_based())
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
                let label = u32::deserialize(d)?;
                $name::from_one_based(label)
                    .ok_or_else(|| serde::de::Error::custom("agent labels are 1-based"))
            }
        }
    };
}

agent_id!(Doctor, "d");
agent_id!(Hospital, "h");

/// `H_n = 1 + 1/2 + ... + 1/n`.
pub fn harmonic(n: u64) -> f64 {
    (1..=n).map(|i| 1.0 / i as f64).sum()
}
