//! Regenerates `fixtures/pilot_thresholds.json`.
//!
//! Runs the k = 0 snapshot of an unbalanced market with 500 hospitals over
//! 50 seeds and records the smallest fraction of hospitals re-matched during
//! the unbalanced phase. The stored threshold is rounded down to one decimal.
//!
//!     cargo run --release --example pilot_thresholds > fixtures/pilot_thresholds.json

use loyal_match::experiments::{snapshot, ExperimentSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n = 500;
    let seeds = 50u64;
    let mut fractions = Vec::new();
    for seed in 0..seeds {
        let mut spec = ExperimentSpec::preset("fig4", Some(n))?;
        spec.base_seed = seed;
        fractions.push(snapshot(&spec)?.rematched_fraction);
    }
    let min = fractions.iter().copied().fold(f64::INFINITY, f64::min);
    let mean = fractions.iter().sum::<f64>() / fractions.len() as f64;
    let doc = serde_json::json!({
        "k0_rematched_fraction": {
            "threshold": (min * 10.0).floor() / 10.0,
            "pilot_min": min,
            "pilot_mean": mean,
            "n": n,
            "seeds": seeds,
            "provenance": "minimum over seeds 0..50 of the fig4 snapshot (k = 0, FIFO, shuffled queue), rounded down to one decimal; regenerate with examples/pilot_thresholds.rs",
        }
    });
    println!("{}", serde_json::to_string_pretty(&doc)?);
    Ok(())
}
