//! Coupon-collector style processes, run in parallel with one RNG stream
//! per trial so results do not depend on the thread count.

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::prefs::stream_rng;
use crate::{harmonic, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollectorStats {
    pub n: u32,
    pub trials: u32,
    /// Retention probability of the absent-minded variant.
    pub q: Option<f64>,
    pub mean_attempts: f64,
    pub std_dev: f64,
    /// `n * H_n`, divided by `q` for the absent-minded variant.
    pub expected_attempts: f64,
    /// `2 n ln n`
    pub tail_threshold: f64,
    /// Fraction of trials exceeding `tail_threshold`.
    pub tail_probability: f64,
}

impl CollectorStats {
    fn from_samples(n: u32, q: Option<f64>, samples: &[u64]) -> Self {
        let trials = samples.len() as f64;
        let mean = samples.iter().map(|&s| s as f64).sum::<f64>() / trials;
        let var = if samples.len() > 1 {
            samples.iter().map(|&s| (s as f64 - mean).powi(2)).sum::<f64>() / (trials - 1.0)
        } else {
            0.0
        };
        let nf = n as f64;
        let tail_threshold = 2.0 * nf * nf.ln();
        let tail = samples.iter().filter(|&&s| s as f64 > tail_threshold).count();
        CollectorStats {
            n,
            trials: samples.len() as u32,
            q,
            mean_attempts: mean,
            std_dev: var.sqrt(),
            expected_attempts: nf * harmonic(n as u64) / q.unwrap_or(1.0),
            tail_threshold,
            tail_probability: tail as f64 / trials,
        }
    }
}

fn check(n: u32, trials: u32) -> Result<()> {
    if n == 0 || trials == 0 {
        return Err(Error::InvalidSpec(format!(
            "collector needs n > 0 and trials > 0 (got n={n}, trials={trials})"
        )));
    }
    Ok(())
}

fn collect(n: u32, q: f64, rng: &mut impl Rng) -> u64 {
    let mut kept = vec![false; n as usize];
    let mut remaining = n;
    let mut attempts = 0u64;
    while remaining > 0 {
        attempts += 1;
        let x = rng.random_range(0..n) as usize;
        if !kept[x] && (q >= 1.0 || rng.random_bool(q)) {
            kept[x] = true;
            remaining -= 1;
        }
    }
    attempts
}

fn simulate(n: u32, q: f64, trials: u32, seed: u64) -> Vec<u64> {
    (0..trials)
        .into_par_iter()
        .map(|t| collect(n, q, &mut stream_rng(seed, t as u64)))
        .collect()
}

/// Draws uniformly from `n` coupons until every one has been seen.
pub fn coupon_collector_sim(n: u32, trials: u32, seed: u64) -> Result<CollectorStats> {
    check(n, trials)?;
    Ok(CollectorStats::from_samples(n, None, &simulate(n, 1.0, trials, seed)))
}

/// Like [`coupon_collector_sim`], but a new coupon is only kept with
/// probability `q`. With `q >= 1` it matches the plain collector draw for draw.
pub fn absent_minded_sim(n: u32, q: f64, trials: u32, seed: u64) -> Result<CollectorStats> {
    check(n, trials)?;
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::InvalidSpec(format!("retention probability must be in (0, 1], got {q}")));
    }
    Ok(CollectorStats::from_samples(n, Some(q), &simulate(n, q, trials, seed)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinElementStats {
    pub n: u32,
    pub k: u32,
    pub trials: u32,
    pub mean_min: f64,
    /// `(n + 1) / (k + 1)`
    pub expected: f64,
}

/// Mean of the smallest element of a uniform `k`-subset of `1..=n`.
pub fn min_element_sim(n: u32, k: u32, trials: u32, seed: u64) -> Result<MinElementStats> {
    check(n, trials)?;
    if k == 0 || k > n {
        return Err(Error::InvalidSpec(format!("subset size must be in 1..={n}, got {k}")));
    }
    let total: u64 = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream_rng(seed, t as u64);
            index::sample(&mut rng, n as usize, k as usize)
                .iter()
                .min()
                .map_or(0, |m| m as u64 + 1)
        })
        .sum();
    Ok(MinElementStats {
        n,
        k,
        trials,
        mean_min: total as f64 / trials as f64,
        expected: (n as f64 + 1.0) / (k as f64 + 1.0),
    })
}
