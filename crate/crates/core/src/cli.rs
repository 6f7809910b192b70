//! Command-line front end.
//!
//! Every flag can also be given in a `key = value` file passed with
//! `--config`; keys are long flag names (`k-grid` or `k_grid`). Flags on
//! the command line win over the file. Exit status is 0 on success, 1 when
//! verification finds blocking pairs and 2 for usage or runtime errors.

use std::ffi::OsString;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{ArgAction, Args, CommandFactory, Parser, Subcommand};
use serde::Serialize;

use crate::engine::{run as run_engine, AcceptPolicy, Matching, NextPolicy, RunOptions};
use crate::experiments::emit::{emit_snapshot, json_with_config};
use crate::experiments::{
    emit, shuffled_order, snapshot, sweep, ExperimentSpec, Format, LoyaltyExpr, Market,
};
use crate::oracle::{
    absent_minded_sim, coupon_collector_sim, enumerate_stable, find_unmatched_divergence,
    min_element_sim, rural_hospital_check, Universe,
};
use crate::prefs::{MarketShape, PreferenceOracle};
use crate::stability::{verify_sampled, verify_stable};
use crate::{Error, Instance, Result};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "LOYAL_MATCH_OUT_DIR";

/// Comma-separated loyalty expressions.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(transparent)]
pub struct KGrid(pub Vec<LoyaltyExpr>);

impl FromStr for KGrid {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        s.split(',').map(str::parse).collect::<Result<_>>().map(KGrid)
    }
}

/// Comma-separated output formats.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Formats(pub Vec<Format>);

impl FromStr for Formats {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        s.split(',').map(str::parse).collect::<Result<_>>().map(Formats)
    }
}

#[derive(Parser, Debug)]
#[command(name = "loyal-match", version, about = "Deferred acceptance with loyal hospitals")]
#[command(args_override_self = true)]
pub struct Cli {
    /// `key = value` file supplying defaults for any flag.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output directory; falls back to $LOYAL_MATCH_OUT_DIR, then `.`.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Output formats for sweep and snapshot: any of csv,json,svg.
    #[arg(long, global = true, value_name = "LIST")]
    format: Option<Formats>,
    /// Progress on standard error; repeat for more.
    #[arg(short, long, global = true, action = ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// One run; prints the outcome as JSON.
    Run(RunArgs),
    /// Runs a grid of loyalty values and seeds; writes CSV, JSON and SVG.
    Sweep(SweepArgs),
    /// Hospital rank histograms of one unbalanced run.
    Snapshot(SnapshotArgs),
    /// Brute-force and Monte Carlo reference computations.
    #[command(subcommand)]
    Oracle(OracleCommand),
    /// Checks a matching for blocking pairs; exit 1 if any.
    Verify(VerifyArgs),
}

#[derive(Args, Debug, Default, Serialize)]
struct MarketArgs {
    /// n doctors and n hospitals.
    #[arg(long, value_name = "N")]
    balanced: Option<u32>,
    /// n + 1 doctors and n hospitals.
    #[arg(long, value_name = "N")]
    unbalanced: Option<u32>,
    /// Arbitrary market: number of doctors (with --hospitals).
    #[arg(long)]
    doctors: Option<u32>,
    /// Number of hospitals (with --doctors).
    #[arg(long)]
    hospitals: Option<u32>,
}

impl MarketArgs {
    fn shape(&self) -> Result<Option<MarketShape>> {
        match (self.balanced, self.unbalanced, self.doctors, self.hospitals) {
            (None, None, None, None) => Ok(None),
            (Some(n), None, None, None) => MarketShape::balanced(n).map(Some),
            (None, Some(n), None, None) => MarketShape::unbalanced(n).map(Some),
            (None, None, Some(d), Some(h)) => MarketShape::new(d, h).map(Some),
            _ => Err(Error::InvalidSpec(
                "give one of --balanced, --unbalanced, or --doctors with --hospitals".into(),
            )),
        }
    }

    fn market(&self) -> Result<Option<Market>> {
        match (self.balanced, self.unbalanced, self.doctors, self.hospitals) {
            (None, None, None, None) => Ok(None),
            (Some(n), None, None, None) => Ok(Some(Market::Balanced(n))),
            (None, Some(n), None, None) => Ok(Some(Market::Unbalanced(n))),
            _ => Err(Error::InvalidSpec(
                "experiments take exactly one of --balanced or --unbalanced".into(),
            )),
        }
    }
}

#[derive(Args, Debug, Serialize)]
#[command(args_override_self = true)]
struct RunArgs {
    #[command(flatten)]
    market: MarketArgs,
    /// Preference file (explicit mode) instead of sampled preferences.
    #[arg(long, value_name = "FILE")]
    instance: Option<PathBuf>,
    /// Loyalty: an integer or n/c, n*x, n-sqrt(n), n-sqrt(n)*ln(n), n.
    #[arg(long, default_value = "0")]
    k: LoyaltyExpr,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// fifo, lifo or random.
    #[arg(long, default_value = "fifo")]
    policy: NextPolicy,
    /// Doctors draw hospitals with replacement.
    #[arg(long)]
    amnesiac: bool,
    /// Keep every proposal in the output.
    #[arg(long)]
    history: bool,
    /// Check the result for blocking pairs.
    #[arg(long)]
    verify: bool,
}

#[derive(Args, Debug, Serialize)]
#[command(args_override_self = true)]
struct SweepArgs {
    /// fig1a, fig1b, fig3, fig4, fig5, fig6 or fig7.
    #[arg(long)]
    preset: Option<String>,
    /// Market size override for presets.
    #[arg(long)]
    n: Option<u32>,
    #[command(flatten)]
    market: MarketArgs,
    /// Comma-separated loyalty expressions.
    #[arg(long, value_name = "LIST")]
    k_grid: Option<KGrid>,
    /// Runs per loyalty value.
    #[arg(long)]
    seeds: Option<u32>,
    /// Seed of the first run; run i uses base + i.
    #[arg(long)]
    base_seed: Option<u64>,
    /// fifo, lifo or random; defaults to fifo.
    #[arg(long)]
    policy: Option<NextPolicy>,
    /// Doctors draw hospitals with replacement.
    #[arg(long)]
    amnesiac: bool,
    /// Keep rank histograms at the end of the balanced phase.
    #[arg(long)]
    snapshot_balanced: bool,
    /// Keep rank histograms at termination.
    #[arg(long)]
    snapshot_final: bool,
    /// File name stem; defaults to the preset name or `sweep`.
    #[arg(long)]
    stem: Option<String>,
}

#[derive(Args, Debug, Serialize)]
#[command(args_override_self = true)]
struct SnapshotArgs {
    /// fig4, fig5, fig6 or fig7.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    n: Option<u32>,
    #[arg(long, value_name = "N")]
    unbalanced: Option<u32>,
    #[arg(long)]
    k: Option<LoyaltyExpr>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    policy: Option<NextPolicy>,
    #[arg(long)]
    stem: Option<String>,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "snake_case")]
enum OracleCommand {
    /// Plain coupon collector.
    Coupon(CollectorArgs),
    /// Coupon collector keeping new coupons with probability q.
    Absent(AbsentArgs),
    /// Smallest element of a uniform k-subset of 1..=n.
    Min(MinArgs),
    /// All stable matchings of a small instance.
    Stable(StableArgs),
    /// Whether the unmatched doctor is the same in every stable matching.
    Rural(RuralArgs),
}

#[derive(Args, Debug, Serialize)]
#[command(args_override_self = true)]
struct CollectorArgs {
    #[arg(long, default_value_t = 1000)]
    n: u32,
    #[arg(long, default_value_t = 2000)]
    trials: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug, Serialize)]
#[command(args_override_self = true)]
struct AbsentArgs {
    #[arg(long, default_value_t = 100)]
    n: u32,
    #[arg(long, default_value_t = 0.5)]
    q: f64,
    #[arg(long, default_value_t = 5000)]
    trials: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug, Serialize)]
#[command(args_override_self = true)]
struct MinArgs {
    #[arg(long, default_value_t = 99)]
    n: u32,
    #[arg(long, default_value_t = 9)]
    k: u32,
    #[arg(long, default_value_t = 100_000)]
    trials: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug, Serialize)]
#[command(args_override_self = true)]
struct StableArgs {
    #[arg(long, value_name = "FILE")]
    instance: PathBuf,
    #[arg(long, default_value = "0")]
    k: LoyaltyExpr,
    /// Also consider matchings that leave both a doctor and a hospital free.
    #[arg(long)]
    all: bool,
}

#[derive(Args, Debug, Serialize)]
#[command(args_override_self = true)]
struct RuralArgs {
    #[arg(long, value_name = "FILE", required_unless_present = "search")]
    instance: Option<PathBuf>,
    #[arg(long, default_value = "0")]
    k: LoyaltyExpr,
    /// Search every profile with this many hospitals for a counterexample.
    #[arg(long, value_name = "HOSPITALS", conflicts_with = "instance")]
    search: Option<u32>,
}

#[derive(Args, Debug, Serialize)]
#[command(args_override_self = true)]
struct VerifyArgs {
    #[arg(long, value_name = "FILE")]
    instance: PathBuf,
    /// Matching JSON: {"num_doctors", "num_hospitals", "pairs": [[d, h], ...]}, 1-based.
    #[arg(long, value_name = "FILE")]
    matching: PathBuf,
    #[arg(long, default_value = "0")]
    k: LoyaltyExpr,
    /// Fraction of doctors to inspect.
    #[arg(long, default_value_t = 1.0)]
    fraction: f64,
    /// Seed for the inspected sample.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Process exit status.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Exit {
    Success,
    Unstable,
    Usage,
}

impl Exit {
    pub fn code(self) -> i32 {
        match self {
            Exit::Success => 0,
            Exit::Unstable => 1,
            Exit::Usage => 2,
        }
    }
}

/// Flags that name the market; one on the command line hides all of them
/// in the config file.
const MARKET_KEYS: [&str; 6] = ["preset", "balanced", "unbalanced", "doctors", "hospitals", "instance"];

struct ConfigError(String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

fn parse_config(text: &str, path: &Path) -> std::result::Result<Vec<(String, String)>, ConfigError> {
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(ConfigError(format!(
                "{}:{}: expected `key = value`",
                path.display(),
                i + 1
            )));
        };
        entries.push((key.trim().replace('_', "-"), value.trim().to_string()));
    }
    Ok(entries)
}

fn flag_name(token: &str) -> Option<&str> {
    let name = token.strip_prefix("--")?;
    Some(name.split_once('=').map_or(name, |(k, _)| k))
}

/// Splices config-file entries into `args` right after the (innermost)
/// subcommand name, ahead of the user's own flags so those take precedence.
fn expand_config(args: Vec<String>) -> std::result::Result<Vec<String>, ConfigError> {
    let mut path = None;
    let mut rest = Vec::with_capacity(args.len());
    let mut it = args.into_iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            path = Some(it.next().ok_or_else(|| ConfigError("--config needs a file".into()))?);
        } else if let Some(p) = a.strip_prefix("--config=") {
            path = Some(p.to_string());
        } else {
            rest.push(a);
        }
    }
    let Some(path) = path else { return Ok(rest) };
    let path = PathBuf::from(path);
    let text = fs::read_to_string(&path)
        .map_err(|e| ConfigError(format!("cannot read config {}: {e}", path.display())))?;
    let entries = parse_config(&text, &path)?;

    let root = Cli::command();
    let Some(sub_at) = rest
        .iter()
        .position(|a| root.get_subcommands().any(|s| s.get_name() == a))
    else {
        return Err(ConfigError("--config needs a subcommand".into()));
    };
    let mut cmd = root.find_subcommand(&rest[sub_at]).expect("matched above").clone();
    let mut insert_at = sub_at + 1;
    if cmd.has_subcommands() {
        if let Some(inner) = rest.get(insert_at).and_then(|a| cmd.find_subcommand(a)).cloned() {
            cmd = inner;
            insert_at += 1;
        }
    }
    let given: Vec<&str> = rest[insert_at..].iter().filter_map(|a| flag_name(a)).collect();
    let market_given = given.iter().any(|g| MARKET_KEYS.contains(g));

    let mut injected = Vec::new();
    for (key, value) in entries {
        if market_given && MARKET_KEYS.contains(&key.as_str()) {
            continue;
        }
        let arg = cmd
            .get_arguments()
            .chain(root.get_arguments())
            .find(|a| a.get_long() == Some(key.as_str()))
            .ok_or_else(|| ConfigError(format!("{}: unknown key {key:?}", path.display())))?;
        match arg.get_action() {
            ArgAction::SetTrue => {
                let on = match value.to_ascii_lowercase().as_str() {
                    "true" | "yes" | "1" | "on" => true,
                    "false" | "no" | "0" | "off" => false,
                    _ => return Err(ConfigError(format!("{key}: expected a boolean, got {value:?}"))),
                };
                if on {
                    injected.push(format!("--{key}"));
                }
            }
            ArgAction::Count => {
                let times: u8 = value
                    .parse()
                    .map_err(|_| ConfigError(format!("{key}: expected a count, got {value:?}")))?;
                injected.extend((0..times).map(|_| format!("--{key}")));
            }
            _ => injected.push(format!("--{key}={value}")),
        }
    }
    rest.splice(insert_at..insert_at, injected);
    Ok(rest)
}

struct Context {
    out_dir: PathBuf,
    formats: Vec<Format>,
    verbose: u8,
    /// Echoed into output files; excludes the thread count so output bytes
    /// do not depend on it.
    config: serde_json::Value,
}

impl Context {
    fn log(&self, msg: impl fmt::Display) {
        if self.verbose > 0 {
            eprintln!("{msg}");
        }
    }
}

fn echo_config<T: Serialize>(command: &str, args: &T, out_dir: &Path, formats: &[Format]) -> serde_json::Value {
    serde_json::json!({
        "command": command,
        "args": args,
        "out": out_dir,
        "format": formats,
    })
}

fn resolve_k(expr: LoyaltyExpr, shape: MarketShape) -> Result<AcceptPolicy> {
    let policy = AcceptPolicy::Loyalty(expr.evaluate(shape));
    policy.validate(shape.num_doctors)?;
    Ok(policy)
}

fn print_json(out: &mut dyn Write, s: &str) -> Result<()> {
    out.write_all(s.as_bytes()).map_err(|e| Error::io("<stdout>", e))
}

fn cmd_run(args: &RunArgs, ctx: &Context, out: &mut dyn Write) -> Result<Exit> {
    let (mut oracle, shape) = match (&args.instance, args.market.shape()?) {
        (Some(path), None) => {
            let inst = Instance::load(path)?;
            let shape = inst.shape();
            (inst.oracle(args.seed), shape)
        }
        (None, Some(shape)) => (PreferenceOracle::lazy(shape, args.seed), shape),
        (Some(_), Some(_)) => {
            return Err(Error::InvalidSpec("--instance cannot be combined with a market size".into()))
        }
        (None, None) => {
            return Err(Error::InvalidSpec(
                "give a market (--balanced, --unbalanced, --doctors/--hospitals) or --instance".into(),
            ))
        }
    };
    let accept = resolve_k(args.k, shape)?;
    let options = RunOptions {
        amnesiac: args.amnesiac,
        record_history: args.history,
        initial_order: Some(shuffled_order(shape, args.seed)),
    };
    ctx.log(format_args!("running {} doctors, {} hospitals, k = {}", shape.num_doctors, shape.num_hospitals, accept.loyalty()));
    let outcome = run_engine(&mut oracle, args.policy, accept, options);
    let mut exit = Exit::Success;
    let mut doc = serde_json::to_value(&outcome)?;
    if args.verify {
        let report = verify_stable(&outcome.matching, &mut oracle, &accept);
        if !report.is_stable {
            exit = Exit::Unstable;
        }
        doc["verification"] = serde_json::to_value(&report)?;
    }
    print_json(out, &json_with_config(&doc, Some(&ctx.config))?)?;
    Ok(exit)
}

fn sweep_spec(args: &SweepArgs) -> Result<ExperimentSpec> {
    let mut spec = match (&args.preset, args.market.market()?) {
        (Some(name), None) => ExperimentSpec::preset(name, args.n)?,
        (None, Some(market)) => {
            if args.n.is_some() {
                return Err(Error::InvalidSpec("--n only applies to presets".into()));
            }
            let grid = args
                .k_grid
                .clone()
                .ok_or_else(|| Error::InvalidSpec("--k-grid is required without a preset".into()))?;
            ExperimentSpec::new(market, grid.0, 1)
        }
        (Some(_), Some(_)) => {
            return Err(Error::InvalidSpec("--preset cannot be combined with a market size".into()))
        }
        (None, None) => return Err(Error::InvalidSpec("give --preset or a market size".into())),
    };
    if let Some(grid) = &args.k_grid {
        spec.k_grid = grid.0.clone();
    }
    if let Some(seeds) = args.seeds {
        spec.seeds = seeds;
    }
    if let Some(base) = args.base_seed {
        spec.base_seed = base;
    }
    if let Some(policy) = args.policy {
        spec.next_policy = policy;
    }
    spec.amnesiac |= args.amnesiac;
    spec.snapshots.balanced_end |= args.snapshot_balanced;
    spec.snapshots.termination |= args.snapshot_final;
    spec.validate()?;
    Ok(spec)
}

#[derive(Serialize)]
struct Written<'a> {
    written: &'a [PathBuf],
}

fn cmd_sweep(args: &SweepArgs, ctx: &Context, out: &mut dyn Write) -> Result<Exit> {
    let spec = sweep_spec(args)?;
    ctx.log(format_args!(
        "sweep: {} market n = {}, {} loyalty values x {} seeds",
        spec.market.name(),
        spec.market.n(),
        spec.k_grid.len(),
        spec.seeds
    ));
    let result = sweep(&spec)?;
    let stem = args
        .stem
        .clone()
        .or_else(|| args.preset.clone())
        .unwrap_or_else(|| "sweep".into());
    let written = emit(&result, &ctx.formats, &ctx.out_dir, &stem, Some(&ctx.config))?;
    for a in &result.aggregates {
        ctx.log(format_args!(
            "k = {:>6}  rank {:>9.3}  proposals {:>12.1}",
            a.k, a.avg_doctor_rank.mean, a.total_proposals.mean
        ));
    }
    print_json(out, &(serde_json::to_string_pretty(&Written { written: &written })? + "\n"))?;
    Ok(Exit::Success)
}

fn cmd_snapshot(args: &SnapshotArgs, ctx: &Context, out: &mut dyn Write) -> Result<Exit> {
    let mut spec = match (&args.preset, args.unbalanced) {
        (Some(name), None) => ExperimentSpec::preset(name, args.n)?,
        (None, Some(n)) => ExperimentSpec::new(Market::Unbalanced(n), vec![LoyaltyExpr::Absolute(0)], 1),
        _ => return Err(Error::InvalidSpec("give exactly one of --preset or --unbalanced".into())),
    };
    if let Some(k) = args.k {
        spec.k_grid = vec![k];
    }
    if let Some(policy) = args.policy {
        spec.next_policy = policy;
    }
    spec.base_seed = args.seed;
    let snap = snapshot(&spec)?;
    let stem = args
        .stem
        .clone()
        .or_else(|| args.preset.clone())
        .unwrap_or_else(|| "snapshot".into());
    let written = emit_snapshot(&snap, &ctx.formats, &ctx.out_dir, &stem, Some(&ctx.config))?;
    ctx.log(format_args!(
        "k = {}: {} hospitals re-matched, S_A {} ({:.3} re-matched), T {} ({:.3} re-matched)",
        snap.k,
        snap.rematched.len(),
        snap.s_a.len(),
        snap.s_a_rematched_fraction,
        snap.t.len(),
        snap.t_rematched_fraction
    ));
    print_json(out, &(serde_json::to_string_pretty(&Written { written: &written })? + "\n"))?;
    Ok(Exit::Success)
}

fn cmd_oracle(cmd: &OracleCommand, ctx: &Context, out: &mut dyn Write) -> Result<Exit> {
    let doc = match cmd {
        OracleCommand::Coupon(a) => json_with_config(&coupon_collector_sim(a.n, a.trials, a.seed)?, Some(&ctx.config))?,
        OracleCommand::Absent(a) => {
            json_with_config(&absent_minded_sim(a.n, a.q, a.trials, a.seed)?, Some(&ctx.config))?
        }
        OracleCommand::Min(a) => json_with_config(&min_element_sim(a.n, a.k, a.trials, a.seed)?, Some(&ctx.config))?,
        OracleCommand::Stable(a) => {
            let inst = Instance::load(&a.instance)?;
            let accept = resolve_k(a.k, inst.shape())?;
            let universe = if a.all { Universe::All } else { Universe::Saturating };
            let set = enumerate_stable(&inst, &accept, universe)?;
            let mut doc = serde_json::to_value(&set)?;
            doc["count"] = set.matchings.len().into();
            json_with_config(&doc, Some(&ctx.config))?
        }
        OracleCommand::Rural(a) => {
            let doc = match (&a.instance, a.search) {
                (Some(path), _) => {
                    let inst = Instance::load(path)?;
                    let accept = resolve_k(a.k, inst.shape())?;
                    serde_json::json!({ "unique_unmatched": rural_hospital_check(&inst, &accept)? })
                }
                (None, Some(h)) => {
                    let shape = MarketShape::unbalanced(h)?;
                    let accept = resolve_k(a.k, shape)?;
                    let found = find_unmatched_divergence(h, &accept)?;
                    serde_json::json!({
                        "counterexample": found.as_ref().map(Instance::to_text),
                    })
                }
                (None, None) => unreachable!("clap requires one of them"),
            };
            json_with_config(&doc, Some(&ctx.config))?
        }
    };
    print_json(out, &doc)?;
    Ok(Exit::Success)
}

fn cmd_verify(args: &VerifyArgs, ctx: &Context, out: &mut dyn Write) -> Result<Exit> {
    let inst = Instance::load(&args.instance)?;
    let text = fs::read_to_string(&args.matching).map_err(|e| Error::io(&args.matching, e))?;
    let matching: Matching = serde_json::from_str(&text)?;
    if matching.shape() != inst.shape() {
        return Err(Error::InvalidMatching(format!(
            "matching is {}x{} but the instance is {}x{}",
            matching.shape().num_doctors,
            matching.shape().num_hospitals,
            inst.shape().num_doctors,
            inst.shape().num_hospitals
        )));
    }
    let accept = resolve_k(args.k, inst.shape())?;
    let mut oracle = inst.oracle(0);
    let report = verify_sampled(&matching, &mut oracle, &accept, args.fraction, args.seed);
    print_json(out, &json_with_config(&report, Some(&ctx.config))?)?;
    Ok(if report.is_stable { Exit::Success } else { Exit::Unstable })
}

fn dispatch(cli: &Cli, out: &mut dyn Write) -> Result<Exit> {
    let out_dir = cli
        .out
        .clone()
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    let formats = cli
        .format
        .clone()
        .map_or_else(|| vec![Format::Csv, Format::Json, Format::Svg], |f| f.0);
    let config = match &cli.command {
        Command::Run(a) => echo_config("run", a, &out_dir, &formats),
        Command::Sweep(a) => echo_config("sweep", a, &out_dir, &formats),
        Command::Snapshot(a) => echo_config("snapshot", a, &out_dir, &formats),
        Command::Oracle(a) => echo_config("oracle", a, &out_dir, &formats),
        Command::Verify(a) => echo_config("verify", a, &out_dir, &formats),
    };
    let ctx = Context {
        out_dir,
        formats,
        verbose: cli.verbose,
        config,
    };
    match &cli.command {
        Command::Run(a) => cmd_run(a, &ctx, out),
        Command::Sweep(a) => cmd_sweep(a, &ctx, out),
        Command::Snapshot(a) => cmd_snapshot(a, &ctx, out),
        Command::Oracle(a) => cmd_oracle(a, &ctx, out),
        Command::Verify(a) => cmd_verify(a, &ctx, out),
    }
}

/// Parses `args` (program name first), runs the command, and returns the
/// process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let args: Vec<String> = match args
        .into_iter()
        .map(|a| a.into().into_string())
        .collect::<std::result::Result<_, _>>()
    {
        Ok(a) => a,
        Err(bad) => {
            eprintln!("error: argument is not valid UTF-8: {bad:?}");
            return Exit::Usage.code();
        }
    };
    let args = match expand_config(args) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return Exit::Usage.code();
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let run = || dispatch(&cli, &mut std::io::stdout().lock());
    let result = match cli.jobs {
        Some(jobs) => match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
            Ok(pool) => pool.install(run),
            Err(e) => {
                eprintln!("error: cannot start {jobs} worker threads: {e}");
                return Exit::Usage.code();
            }
        },
        None => run(),
    };
    match result {
        Ok(exit) => exit.code(),
        Err(e) => {
            eprintln!("error: {e}");
            Exit::Usage.code()
        }
    }
}
