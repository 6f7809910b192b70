use serde::{Deserialize, Serialize};

use super::{row_of, run_single, t_set, ExperimentSpec, Market, SweepRow};
use crate::{Error, Hospital, Rank, Result};

/// Default number of rank bins.
pub const DEFAULT_BINS: u32 = 50;

/// `rank_h(μ(h))` for every hospital at one instant, plus binned counts.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankHistogram {
    pub ranks: Vec<Option<Rank>>,
    pub max_rank: u32,
    pub bin_width: u32,
    /// `counts[i]` covers ranks `i * bin_width + 1 ..= (i + 1) * bin_width`.
    pub counts: Vec<u32>,
}

impl RankHistogram {
    pub fn from_ranks(ranks: &[Option<Rank>], max_rank: u32) -> Self {
        Self::with_bins(ranks, max_rank, DEFAULT_BINS)
    }

    pub fn with_bins(ranks: &[Option<Rank>], max_rank: u32, bins: u32) -> Self {
        let max_rank = max_rank.max(1);
        let bin_width = max_rank.div_ceil(bins.clamp(1, max_rank));
        let mut counts = vec![0; max_rank.div_ceil(bin_width) as usize];
        for r in ranks.iter().flatten() {
            let bin = ((r.clamp(&1, &max_rank) - 1) / bin_width) as usize;
            counts[bin] += 1;
        }
        RankHistogram {
            ranks: ranks.to_vec(),
            max_rank,
            bin_width,
            counts,
        }
    }

    pub fn mass(&self) -> u32 {
        self.counts.iter().sum()
    }

    pub fn matched(&self) -> u32 {
        self.ranks.iter().flatten().count() as u32
    }
}

/// Hospital ranks at the end of the balanced phase and at termination of a
/// single unbalanced run, with the hospitals that moved in between.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub n: u32,
    pub k: u32,
    pub seed: u64,
    pub balanced_end: RankHistogram,
    pub termination: RankHistogram,
    /// Hospitals that changed partner during the unbalanced phase.
    pub rematched: Vec<Hospital>,
    pub s_a: Vec<Hospital>,
    pub t: Vec<Hospital>,
    /// Members of `T` accepted a second proposal at some point.
    pub t_rematched: Vec<Hospital>,
    pub rematched_fraction: f64,
    pub s_a_rematched_fraction: f64,
    pub t_rematched_fraction: f64,
    pub unbalanced_proposers: u32,
    pub row: SweepRow,
}

fn fraction(part: usize, whole: usize) -> f64 {
    if whole == 0 {
        0.0
    } else {
        part as f64 / whole as f64
    }
}

/// Snapshot of the first loyalty value of `spec` at `spec.base_seed`.
pub fn snapshot(spec: &ExperimentSpec) -> Result<Snapshot> {
    let Market::Unbalanced(_) = spec.market else {
        return Err(Error::InvalidSpec("snapshots need an unbalanced market".into()));
    };
    let ks = spec.loyalty_values()?;
    let &[k] = ks.as_slice() else {
        return Err(Error::InvalidSpec(format!(
            "snapshots take exactly one loyalty value, got {}",
            ks.len()
        )));
    };
    let shape = spec.market.shape()?;
    let seed = spec.base_seed;
    let out = run_single(shape, k, seed, spec.next_policy, spec.amnesiac)?;
    let (row, diag) = row_of(spec.market, k, seed, spec.next_policy, &out);
    let n = shape.num_hospitals;

    let moved = |h: &&Hospital| out.rematched_in_unbalanced.binary_search(h).is_ok();
    let s_a = out.available_at_unbalanced_start.clone();
    let t = t_set(&out.first_match_rank, k, n);
    let t_rematched: Vec<Hospital> = t
        .iter()
        .copied()
        .filter(|h| out.hospital_accepts[h.index()] >= 2)
        .collect();
    let s_a_moved = s_a.iter().filter(moved).count();
    Ok(Snapshot {
        n,
        k,
        seed,
        balanced_end: RankHistogram::from_ranks(
            out.balanced_end_ranks.as_deref().unwrap_or(&[]),
            shape.num_doctors,
        ),
        termination: RankHistogram::from_ranks(&out.final_hospital_ranks, shape.num_doctors),
        rematched_fraction: fraction(out.rematched_in_unbalanced.len(), n as usize),
        s_a_rematched_fraction: fraction(s_a_moved, s_a.len()),
        t_rematched_fraction: fraction(t_rematched.len(), t.len()),
        rematched: out.rematched_in_unbalanced.clone(),
        s_a,
        t,
        t_rematched,
        unbalanced_proposers: diag.unbalanced_proposers,
        row,
    })
}
