//! Declarative sweeps over loyalty levels and seeds.
//!
//! A sweep runs the engine once per `(k, seed)` pair on lazily sampled
//! preferences and records one [`SweepRow`] per run. Runs fan out over the
//! rayon pool; rows are collected in grid order, so output never depends on
//! the number of threads.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{AcceptPolicy, NextPolicy, RunOptions, RunOutcome};
use crate::prefs::{stream_rng, MarketShape, PreferenceOracle, QUEUE_ORDER_STREAM};
use crate::{Doctor, Error, Hospital, Rank, Result};

mod classify;
pub mod emit;
mod snapshot;

pub use classify::{classify_hospitals, moderate_phase_end, ClassTracker, HospitalClasses, ModerateEnd};
pub use emit::{emit, Format};
pub use snapshot::{snapshot, RankHistogram, Snapshot};

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Market {
    /// `n` doctors, `n` hospitals.
    Balanced(u32),
    /// `n + 1` doctors, `n` hospitals.
    Unbalanced(u32),
}

impl Market {
    pub fn n(&self) -> u32 {
        match *self {
            Market::Balanced(n) | Market::Unbalanced(n) => n,
        }
    }

    pub fn shape(&self) -> Result<MarketShape> {
        match *self {
            Market::Balanced(n) => MarketShape::balanced(n),
            Market::Unbalanced(n) => MarketShape::unbalanced(n),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Market::Balanced(_) => "balanced",
            Market::Unbalanced(_) => "unbalanced",
        }
    }

    pub fn with_n(&self, n: u32) -> Market {
        match self {
            Market::Balanced(_) => Market::Balanced(n),
            Market::Unbalanced(_) => Market::Unbalanced(n),
        }
    }
}

/// A loyalty level, possibly relative to the number of hospitals `n`.
/// Every form is floored to an integer.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum LoyaltyExpr {
    Absolute(u32),
    /// `n / c`
    Divide(u32),
    /// `n * x`
    Scale(f64),
    /// `n - sqrt(n)`
    NMinusSqrtN,
    /// `n - sqrt(n) * ln(n)`
    NMinusSqrtNLnN,
    /// `n`: the largest admissible value, `|D| - 1`.
    Max,
}

impl LoyaltyExpr {
    /// Integer loyalty for a market with `num_hospitals` hospitals.
    pub fn evaluate(&self, shape: MarketShape) -> u32 {
        let n = shape.num_hospitals as f64;
        let floor = |x: f64| x.max(0.0).floor() as u32;
        match *self {
            LoyaltyExpr::Absolute(k) => k,
            LoyaltyExpr::Divide(c) => shape.num_hospitals / c.max(1),
            LoyaltyExpr::Scale(x) => floor(n * x),
            LoyaltyExpr::NMinusSqrtN => floor(n - n.sqrt()),
            LoyaltyExpr::NMinusSqrtNLnN => floor(n - n.sqrt() * n.ln()),
            LoyaltyExpr::Max => shape.num_doctors - 1,
        }
    }
}

impl fmt::Display for LoyaltyExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LoyaltyExpr::Absolute(k) => write!(f, "{k}"),
            LoyaltyExpr::Divide(c) => write!(f, "n/{c}"),
            LoyaltyExpr::Scale(x) => write!(f, "n*{x}"),
            LoyaltyExpr::NMinusSqrtN => f.write_str("n-sqrt(n)"),
            LoyaltyExpr::NMinusSqrtNLnN => f.write_str("n-sqrt(n)*ln(n)"),
            LoyaltyExpr::Max => f.write_str("n"),
        }
    }
}

impl FromStr for LoyaltyExpr {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let compact: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        let bad = || Error::InvalidSpec(format!("cannot parse loyalty expression {s:?}"));
        let expr = match compact.as_str() {
            "n" => LoyaltyExpr::Max,
            "n-sqrt(n)" | "n-sqrtn" => LoyaltyExpr::NMinusSqrtN,
            "n-sqrt(n)*ln(n)" | "n-sqrt(n)ln(n)" | "n-sqrtnlnn" => LoyaltyExpr::NMinusSqrtNLnN,
            other => {
                if let Some(c) = other.strip_prefix("n/") {
                    match c.parse() {
                        Ok(c) if c > 0 => LoyaltyExpr::Divide(c),
                        _ => return Err(bad()),
                    }
                } else if let Some(x) = other.strip_prefix("n*") {
                    match x.parse::<f64>() {
                        Ok(x) if x.is_finite() && x >= 0.0 => LoyaltyExpr::Scale(x),
                        _ => return Err(bad()),
                    }
                } else {
                    LoyaltyExpr::Absolute(other.parse().map_err(|_| bad())?)
                }
            }
        };
        Ok(expr)
    }
}

impl TryFrom<String> for LoyaltyExpr {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<LoyaltyExpr> for String {
    fn from(e: LoyaltyExpr) -> String {
        e.to_string()
    }
}

#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnapshotFlags {
    pub balanced_end: bool,
    pub termination: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub market: Market,
    pub k_grid: Vec<LoyaltyExpr>,
    pub seeds: u32,
    pub base_seed: u64,
    pub next_policy: NextPolicy,
    pub amnesiac: bool,
    pub snapshots: SnapshotFlags,
}

impl ExperimentSpec {
    pub fn new(market: Market, k_grid: Vec<LoyaltyExpr>, seeds: u32) -> Self {
        ExperimentSpec {
            market,
            k_grid,
            seeds,
            base_seed: 0,
            next_policy: NextPolicy::Fifo,
            amnesiac: false,
            snapshots: SnapshotFlags::default(),
        }
    }

    /// Evaluated loyalty grid, checked against `[0, |D| - 1]`.
    pub fn loyalty_values(&self) -> Result<Vec<u32>> {
        let shape = self.market.shape()?;
        self.k_grid
            .iter()
            .map(|e| {
                let k = e.evaluate(shape);
                AcceptPolicy::Loyalty(k).validate(shape.num_doctors)?;
                Ok(k)
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.loyalty_values().map(drop)
    }

    /// Named figure recipe; `n` overrides the market size.
    pub fn preset(name: &str, n: Option<u32>) -> Result<Self> {
        use LoyaltyExpr::*;
        let tenths = |last: LoyaltyExpr| {
            let mut grid = vec![Absolute(0)];
            grid.extend((1..10).map(|i| Scale(i as f64 / 10.0)));
            grid.push(last);
            grid
        };
        // increasing in k at n = 1000
        let unbalanced_grid = || {
            let mut grid = vec![Absolute(0)];
            grid.extend((1..8).map(|i| Scale(i as f64 / 10.0)));
            grid.extend([NMinusSqrtNLnN, Scale(0.8), Scale(0.9), NMinusSqrtN, Max]);
            grid
        };
        let mut spec = match name {
            "fig1a" => ExperimentSpec::new(Market::Balanced(1000), tenths(Max), 100),
            "fig1b" | "fig3" => ExperimentSpec::new(Market::Unbalanced(1000), unbalanced_grid(), 100),
            "fig4" | "fig5" | "fig6" | "fig7" => {
                let k = match name {
                    "fig4" => Absolute(0),
                    "fig5" => Divide(2),
                    "fig6" => NMinusSqrtNLnN,
                    _ => NMinusSqrtN,
                };
                let mut s = ExperimentSpec::new(Market::Unbalanced(500), vec![k], 1);
                s.snapshots = SnapshotFlags {
                    balanced_end: true,
                    termination: true,
                };
                s
            }
            other => {
                return Err(Error::InvalidSpec(format!(
                    "unknown preset {other:?} (fig1a, fig1b, fig3, fig4, fig5, fig6, fig7)"
                )))
            }
        };
        if let Some(n) = n {
            spec.market = spec.market.with_n(n);
        }
        Ok(spec)
    }
}

pub const PRESETS: [&str; 7] = ["fig1a", "fig1b", "fig3", "fig4", "fig5", "fig6", "fig7"];

/// One run of a sweep. Field order is the CSV column order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub market: String,
    pub n: u32,
    pub k: u32,
    pub seed: u64,
    pub policy: NextPolicy,
    pub total_proposals: u64,
    pub proposals_balanced: u64,
    pub proposals_unbalanced: u64,
    pub avg_doctor_rank: f64,
    pub avg_hospital_rank: f64,
    pub heavy_doctors: u32,
    pub heavy_hospitals: u32,
    pub s_a_size: u32,
    pub t_size: u32,
    pub t_rematched: u32,
    pub termination: String,
}

impl SweepRow {
    pub const COLUMNS: [&'static str; 16] = [
        "market",
        "n",
        "k",
        "seed",
        "policy",
        "total_proposals",
        "proposals_balanced",
        "proposals_unbalanced",
        "avg_doctor_rank",
        "avg_hospital_rank",
        "heavy_doctors",
        "heavy_hospitals",
        "s_a_size",
        "t_size",
        "t_rematched",
        "termination",
    ];
}

/// Per-run quantities that do not appear in the CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RowDiagnostics {
    pub unbalanced_proposers: u32,
    pub s_a_rematched: u32,
    pub rematched_in_unbalanced: u32,
    pub redundant_proposals: u64,
    pub avg_doctor_proposals: f64,
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single value.
    pub sd: f64,
}

impl Summary {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Summary {
        let xs: Vec<f64> = values.into_iter().collect();
        if xs.is_empty() {
            return Summary { mean: 0.0, sd: 0.0 };
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let sd = if xs.len() > 1 {
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Summary { mean, sd }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KAggregate {
    pub k: u32,
    pub expr: LoyaltyExpr,
    pub runs: u32,
    pub avg_doctor_rank: Summary,
    pub avg_hospital_rank: Summary,
    pub total_proposals: Summary,
    pub proposals_balanced: Summary,
    pub proposals_unbalanced: Summary,
    pub heavy_doctors: Summary,
    pub heavy_hospitals: Summary,
    pub s_a_size: Summary,
    pub t_size: Summary,
    pub t_rematched: Summary,
    pub unbalanced_proposers: Summary,
    /// Pooled over runs: re-matched members of `S_A` over total `|S_A|`.
    pub s_a_rematched_fraction: f64,
    /// Pooled over runs: re-matched members of `T` over total `|T|`.
    pub t_rematched_fraction: f64,
    pub doctor_exhausted_runs: u32,
}

/// Rank histograms kept for one run when snapshot flags are set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunHistograms {
    pub k: u32,
    pub seed: u64,
    pub balanced_end: Option<RankHistogram>,
    pub termination: Option<RankHistogram>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub spec: ExperimentSpec,
    pub rows: Vec<SweepRow>,
    pub diagnostics: Vec<RowDiagnostics>,
    pub aggregates: Vec<KAggregate>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub histograms: Vec<RunHistograms>,
}

/// Initial proposal order for a seed: a uniform shuffle of all doctors.
pub fn shuffled_order(shape: MarketShape, seed: u64) -> Vec<Doctor> {
    let mut order: Vec<Doctor> = shape.doctors().collect();
    order.shuffle(&mut stream_rng(seed, QUEUE_ORDER_STREAM));
    order
}

/// One engine run with lazily sampled preferences and a shuffled queue.
pub fn run_single(
    shape: MarketShape,
    k: u32,
    seed: u64,
    next: NextPolicy,
    amnesiac: bool,
) -> Result<RunOutcome> {
    let accept = AcceptPolicy::Loyalty(k);
    accept.validate(shape.num_doctors)?;
    let mut oracle = PreferenceOracle::lazy(shape, seed);
    let options = RunOptions {
        amnesiac,
        record_history: false,
        initial_order: Some(shuffled_order(shape, seed)),
    };
    Ok(crate::engine::run(&mut oracle, next, accept, options))
}

/// `T = {h : k + l/2 + 1 <= f_h <= k + l}` with `l = sqrt(n) ln n`.
pub fn t_set(first_match_rank: &[Option<Rank>], k: u32, n: u32) -> Vec<Hospital> {
    let nf = n as f64;
    let ell = nf.sqrt() * nf.ln();
    let lo = k as f64 + ell / 2.0 + 1.0;
    let hi = k as f64 + ell;
    first_match_rank
        .iter()
        .enumerate()
        .filter(|(_, f)| f.is_some_and(|f| (lo..=hi).contains(&(f as f64))))
        .map(|(h, _)| Hospital(h as u32))
        .collect()
}

fn row_of(market: Market, k: u32, seed: u64, next: NextPolicy, out: &RunOutcome) -> (SweepRow, RowDiagnostics) {
    let n = out.num_hospitals;
    let t = t_set(&out.first_match_rank, k, n);
    let t_rematched = t.iter().filter(|h| out.hospital_accepts[h.index()] >= 2).count() as u32;
    let mut rematched = vec![false; n as usize];
    for h in &out.rematched_in_unbalanced {
        rematched[h.index()] = true;
    }
    let s_a_rematched = out
        .available_at_unbalanced_start
        .iter()
        .filter(|h| rematched[h.index()])
        .count() as u32;
    let row = SweepRow {
        market: market.name().to_string(),
        n,
        k,
        seed,
        policy: next,
        total_proposals: out.total_proposals,
        proposals_balanced: out.proposals_balanced,
        proposals_unbalanced: out.proposals_unbalanced,
        avg_doctor_rank: out.avg_doctor_rank,
        avg_hospital_rank: out.avg_hospital_rank,
        heavy_doctors: out.heavy_doctor_count,
        heavy_hospitals: out.heavy_hospital_count,
        s_a_size: out.available_at_unbalanced_start.len() as u32,
        t_size: t.len() as u32,
        t_rematched,
        termination: out.termination_cause.label().to_string(),
    };
    let diag = RowDiagnostics {
        unbalanced_proposers: out.unbalanced_proposers,
        s_a_rematched,
        rematched_in_unbalanced: out.rematched_in_unbalanced.len() as u32,
        redundant_proposals: out.redundant_proposals,
        avg_doctor_proposals: out.avg_doctor_proposals,
    };
    (row, diag)
}

fn aggregate(k: u32, expr: LoyaltyExpr, rows: &[SweepRow], diags: &[RowDiagnostics]) -> KAggregate {
    let of = |f: &dyn Fn(&SweepRow) -> f64| Summary::of(rows.iter().map(f));
    let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let s_a_total: u64 = rows.iter().map(|r| r.s_a_size as u64).sum();
    let t_total: u64 = rows.iter().map(|r| r.t_size as u64).sum();
    KAggregate {
        k,
        expr,
        runs: rows.len() as u32,
        avg_doctor_rank: of(&|r| r.avg_doctor_rank),
        avg_hospital_rank: of(&|r| r.avg_hospital_rank),
        total_proposals: of(&|r| r.total_proposals as f64),
        proposals_balanced: of(&|r| r.proposals_balanced as f64),
        proposals_unbalanced: of(&|r| r.proposals_unbalanced as f64),
        heavy_doctors: of(&|r| r.heavy_doctors as f64),
        heavy_hospitals: of(&|r| r.heavy_hospitals as f64),
        s_a_size: of(&|r| r.s_a_size as f64),
        t_size: of(&|r| r.t_size as f64),
        t_rematched: of(&|r| r.t_rematched as f64),
        unbalanced_proposers: Summary::of(diags.iter().map(|d| d.unbalanced_proposers as f64)),
        s_a_rematched_fraction: ratio(diags.iter().map(|d| d.s_a_rematched as u64).sum(), s_a_total),
        t_rematched_fraction: ratio(rows.iter().map(|r| r.t_rematched as u64).sum(), t_total),
        doctor_exhausted_runs: rows.iter().filter(|r| r.termination == "doctor_exhausted").count() as u32,
    }
}

/// Runs every `(k, seed)` pair of `spec`. Seed `i` of the grid uses
/// `base_seed + i` for every `k`, so loyalty levels share preferences.
pub fn sweep(spec: &ExperimentSpec) -> Result<SweepResult> {
    let ks = spec.loyalty_values()?;
    let shape = spec.market.shape()?;
    let seeds = spec.seeds as u64;
    let jobs: Vec<(u32, u64)> = ks
        .iter()
        .flat_map(|&k| (0..seeds).map(move |i| (k, spec.base_seed.wrapping_add(i))))
        .collect();
    let keep_histograms = spec.snapshots.balanced_end || spec.snapshots.termination;
    let runs: Vec<(SweepRow, RowDiagnostics, Option<RunHistograms>)> = jobs
        .par_iter()
        .map(|&(k, seed)| {
            let out = run_single(shape, k, seed, spec.next_policy, spec.amnesiac)?;
            let (row, diag) = row_of(spec.market, k, seed, spec.next_policy, &out);
            let hist = keep_histograms.then(|| RunHistograms {
                k,
                seed,
                balanced_end: spec
                    .snapshots
                    .balanced_end
                    .then(|| RankHistogram::from_ranks(out.balanced_end_ranks.as_deref().unwrap_or(&[]), shape.num_doctors)),
                termination: spec
                    .snapshots
                    .termination
                    .then(|| RankHistogram::from_ranks(&out.final_hospital_ranks, shape.num_doctors)),
            });
            Ok((row, diag, hist))
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::with_capacity(runs.len());
    let mut diagnostics = Vec::with_capacity(runs.len());
    let mut histograms = Vec::new();
    for (row, diag, hist) in runs {
        rows.push(row);
        diagnostics.push(diag);
        histograms.extend(hist);
    }
    let per_k = spec.seeds as usize;
    let aggregates = ks
        .iter()
        .zip(&spec.k_grid)
        .enumerate()
        .map(|(i, (&k, &expr))| {
            let range = i * per_k..(i + 1) * per_k;
            aggregate(k, expr, &rows[range.clone()], &diagnostics[range])
        })
        .collect();
    Ok(SweepResult {
        spec: spec.clone(),
        rows,
        diagnostics,
        aggregates,
        histograms,
    })
}
