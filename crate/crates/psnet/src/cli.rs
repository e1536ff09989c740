//! Command-line front end.
//!
//! Every subcommand reads one JSON config document (see [`crate::config`]),
//! applies `--set path=value` overrides, runs, and prints a single JSON
//! document `{"manifest": ..., "report": ...}` on stdout with a short human
//! summary on stderr. The `example` subcommand is the one exception: its
//! stdout is a bare config document so that
//! `psnet example ex1 > run.json && psnet simulate --config run.json`
//! round-trips.
//!
//! Exit codes:
//!
//! * `0` - the run completed and reached its verdict (a passing scan, a
//!   stable or unstable classification, a bracketed critical parameter, a
//!   finished simulation).
//! * `2` - the run completed but the answer is indeterminate: a drift scan
//!   that certifies nothing on the box, a classification inside its error
//!   band, a threshold search that collapsed on an indeterminate midpoint.
//! * `3` - validation failures (bad config, dimension mismatches, a network
//!   failing the capacity condition in `check-capacity`).
//! * `4` - numerical failures (unresolved limits, solver breakdowns,
//!   refused reduced chains).
//!
//! With `--csv-dir DIR` the subcommands also drop flat CSV sidecars:
//! `trajectory.csv` (simulate), `violations.csv` (drift-scan), `trace.csv`
//! (classify), `probes.csv` (threshold).
//!
//! The seed is resolved as CLI `--seed`, then `sim.seed` from the config,
//! then the `PSNET_SEED` environment variable, then zero. Replication
//! results are independent of `--jobs`.

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use crate::classifier::{
    check_monotone, classify, classify_search_orders, critical_threshold, StationaryMethod,
    Verdict,
};
use crate::config::{
    apply_override, sha256_hex, Config, RunManifest, SimSection, ThresholdFamilySpec,
};
use crate::control::ControlLaw;
use crate::error::{Error, Result};
use crate::fairshare::{solve_alpha_fair, Alpha, AlphaFairParams, DEFAULT_SOLVE_TOL};
use crate::lyapunov::{
    capacity_slack_deltas, foster_scan, instability_evidence, Region, ScanConfig,
};
use crate::net::{capacity_condition, NetworkSpec};
use crate::sim::{
    detect_growth, service_law_check, simulate_replications, NetworkModel, SimConfig, StopRule,
    TrajectoryStats,
};

/// Processor-sharing networks: simulation, fair allocation, drift
/// certificates, and stability classification.
#[derive(Debug, Parser)]
#[command(name = "psnet", version, about)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Path to the JSON run config.
    #[arg(long, global = false)]
    pub config: Option<PathBuf>,
    /// RNG seed; overrides the config and `PSNET_SEED`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override one config leaf, e.g. `--set sim.events=200000`. Repeatable;
    /// values parse as JSON when possible, otherwise as bare strings.
    #[arg(long = "set", value_name = "PATH=VALUE")]
    pub set: Vec<String>,
    /// Directory for CSV sidecar files.
    #[arg(long, value_name = "DIR")]
    pub csv_dir: Option<PathBuf>,
    /// Worker threads for replications (default: available cores).
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate the strict capacity condition on the offered loads.
    CheckCapacity(CheckCapacityArgs),
    /// Solve one alpha-fair allocation at a real-valued occupancy.
    SolveAlloc(SolveAllocArgs),
    /// Simulate the network under its control and report time averages.
    Simulate(SimulateArgs),
    /// Scan a Lyapunov drift certificate over a box of states.
    DriftScan(DriftScanArgs),
    /// Classify stability by the reduced-chain recursion.
    Classify(ClassifyArgs),
    /// Bisect a parametric family for its critical arrival rate.
    Threshold(ThresholdArgs),
    /// Write a bundled example as a complete, runnable config.
    Example(ExampleArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::CheckCapacity(_) => "check-capacity",
            Command::SolveAlloc(_) => "solve-alloc",
            Command::Simulate(_) => "simulate",
            Command::DriftScan(_) => "drift-scan",
            Command::Classify(_) => "classify",
            Command::Threshold(_) => "threshold",
            Command::Example(_) => "example",
        }
    }

    fn common(&self) -> &CommonArgs {
        match self {
            Command::CheckCapacity(a) => &a.common,
            Command::SolveAlloc(a) => &a.common,
            Command::Simulate(a) => &a.common,
            Command::DriftScan(a) => &a.common,
            Command::Classify(a) => &a.common,
            Command::Threshold(a) => &a.common,
            Command::Example(a) => &a.common,
        }
    }
}

#[derive(Debug, Args)]
pub struct CheckCapacityArgs {
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct SolveAllocArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Occupancy vector, comma-separated; overrides `allocation.state`.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub state: Option<Vec<f64>>,
    /// Fairness exponent; a number or `inf`.
    #[arg(long)]
    pub alpha: Option<String>,
    /// Per-class weights, comma-separated.
    #[arg(long, value_delimiter = ',')]
    pub weights: Option<Vec<f64>>,
    /// Solver tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Stop each replication after this many jumps.
    #[arg(long)]
    pub events: Option<u64>,
    /// Stop each replication at this simulated time (overrides --events).
    #[arg(long)]
    pub time: Option<f64>,
    /// Warmup fraction discarded before statistics, in [0, 1).
    #[arg(long)]
    pub warmup: Option<f64>,
    /// Number of independent replications.
    #[arg(long)]
    pub replications: Option<usize>,
    /// Initial state, comma-separated.
    #[arg(long, value_delimiter = ',')]
    pub initial: Option<Vec<u64>>,
}

#[derive(Debug, Args)]
pub struct DriftScanArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Inclusive upper corner of the scanned box, comma-separated.
    #[arg(long = "box", value_name = "N0,N1,...", value_delimiter = ',')]
    pub box_bounds: Option<Vec<u64>>,
    /// Required drift margin; defaults to half the smallest capacity slack.
    #[arg(long)]
    pub epsilon: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Stage order, e.g. `1,0` or `0+1,2` to group classes in one stage.
    #[arg(long)]
    pub order: Option<String>,
    /// Error-band width in standard errors (z).
    #[arg(long)]
    pub confidence: Option<f64>,
    /// Try every singleton order and combine the verdicts.
    #[arg(long)]
    pub search_orders: bool,
    /// Events per reduced-chain simulation.
    #[arg(long)]
    pub events: Option<u64>,
    /// Skip the monotonicity probe; see `classify.assume_monotone`.
    #[arg(long)]
    pub assume_monotone: bool,
}

#[derive(Debug, Args)]
pub struct ThresholdArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Skip the monotonicity probe; see `classify.assume_monotone`.
    #[arg(long)]
    pub assume_monotone: bool,
}

#[derive(Debug, Args)]
pub struct ExampleArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Example name: ex1, ex2, ex3, ex4, ex5 or ex6.
    pub name: String,
    /// Write the config here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Fan-out (classes for ex4, crossed resources for ex5).
    #[arg(long)]
    pub k: Option<usize>,
    /// Threshold level for the threshold-based examples.
    #[arg(long)]
    pub a: Option<u64>,
    /// Fairness exponent for ex4; a number or `inf`.
    #[arg(long)]
    pub alpha: Option<String>,
    /// Variant selector for ex6: `switching` or `proportional`.
    #[arg(long)]
    pub variant: Option<String>,
    /// Arrival rates; one value broadcasts to every class.
    #[arg(long, value_delimiter = ',')]
    pub nu: Option<Vec<f64>>,
    /// Service rates; one value broadcasts to every class.
    #[arg(long, value_delimiter = ',')]
    pub mu: Option<Vec<f64>>,
    /// Capacities; one value broadcasts to every resource.
    #[arg(long, value_delimiter = ',')]
    pub c: Option<Vec<f64>>,
    /// Fairness weights for ex4.
    #[arg(long, value_delimiter = ',')]
    pub weights: Option<Vec<f64>>,
}

/// What a subcommand hands back to the printer.
struct Outcome {
    report: Value,
    summary: Vec<String>,
    exit: i32,
    /// `(file name, content)` sidecars, written under `--csv-dir`.
    csv: Vec<(String, String)>,
    /// Print the report alone, without the manifest wrapper.
    bare: bool,
}

impl Outcome {
    fn new(report: Value, exit: i32) -> Self {
        Self {
            report,
            summary: Vec::new(),
            exit,
            csv: Vec::new(),
            bare: false,
        }
    }
}

/// Parses `std::env::args` and runs; returns the process exit code.
pub fn run() -> i32 {
    match Cli::try_parse() {
        Ok(cli) => run_cli(&cli),
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 3,
            };
            let _ = e.print();
            code
        }
    }
}

/// Runs one parsed invocation end to end, including output.
pub fn run_cli(cli: &Cli) -> i32 {
    let started = Instant::now();
    let mut manifest = RunManifest::new(cli.command.name());
    let outcome = match execute(&cli.command, &mut manifest) {
        Ok(outcome) => outcome,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    manifest.wall_ms = started.elapsed().as_millis();
    if let Some(dir) = &cli.command.common().csv_dir {
        if let Err(e) = write_sidecars(dir, &outcome.csv) {
            eprintln!("error: {e}");
            return e.exit_code();
        }
        for (name, _) in &outcome.csv {
            eprintln!("wrote {}", dir.join(name).display());
        }
    }
    let doc = if outcome.bare {
        outcome.report
    } else {
        json!({ "manifest": manifest, "report": outcome.report })
    };
    match serde_json::to_string_pretty(&doc) {
        Ok(text) => println!("{text}"),
        Err(e) => {
            eprintln!("error: {e}");
            return 4;
        }
    }
    for line in &outcome.summary {
        eprintln!("{line}");
    }
    outcome.exit
}

fn execute(command: &Command, manifest: &mut RunManifest) -> Result<Outcome> {
    match command {
        Command::CheckCapacity(args) => {
            let config = load_config(&args.common, manifest)?;
            cmd_check_capacity(&config)
        }
        Command::SolveAlloc(args) => {
            let config = load_config(&args.common, manifest)?;
            cmd_solve_alloc(args, &config)
        }
        Command::Simulate(args) => {
            let config = load_config(&args.common, manifest)?;
            let seed = resolve_seed(&args.common, &config)?;
            manifest.seed = Some(seed);
            cmd_simulate(args, &config, seed, resolve_jobs(&args.common))
        }
        Command::DriftScan(args) => {
            let config = load_config(&args.common, manifest)?;
            cmd_drift_scan(args, &config)
        }
        Command::Classify(args) => {
            let config = load_config(&args.common, manifest)?;
            let seed = resolve_seed(&args.common, &config)?;
            manifest.seed = Some(seed);
            cmd_classify(args, &config, seed)
        }
        Command::Threshold(args) => {
            let config = load_config(&args.common, manifest)?;
            let seed = resolve_seed(&args.common, &config)?;
            manifest.seed = Some(seed);
            cmd_threshold(args, &config, seed)
        }
        Command::Example(args) => cmd_example(args, manifest),
    }
}

/// Reads the config file (or an empty document), applies overrides, and
/// records provenance in the manifest.
fn load_config(common: &CommonArgs, manifest: &mut RunManifest) -> Result<Config> {
    let mut raw = match &common.config {
        Some(path) => {
            let bytes = std::fs::read(path)?;
            manifest.config_path = Some(path.display().to_string());
            manifest.config_sha256 = Some(sha256_hex(&bytes));
            serde_json::from_slice(&bytes)?
        }
        None => json!({}),
    };
    for assignment in &common.set {
        apply_override(&mut raw, assignment)?;
        manifest.overrides.push(assignment.clone());
    }
    Config::from_value(raw)
}

/// CLI flag, then `sim.seed`, then `PSNET_SEED`, then zero.
fn resolve_seed(common: &CommonArgs, config: &Config) -> Result<u64> {
    if let Some(seed) = common.seed {
        return Ok(seed);
    }
    if let Some(seed) = config.sim.seed {
        return Ok(seed);
    }
    match std::env::var("PSNET_SEED") {
        Ok(text) => text
            .parse()
            .map_err(|_| Error::Config(format!("PSNET_SEED is not an integer: {text:?}"))),
        Err(_) => Ok(0),
    }
}

fn resolve_jobs(common: &CommonArgs) -> usize {
    common.jobs.unwrap_or_else(|| {
        std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1)
    })
}

fn parse_alpha(text: &str) -> Result<Alpha> {
    if text == "inf" || text == "infinity" {
        return Ok(Alpha::Infinite);
    }
    text.parse::<f64>()
        .map(Alpha::Finite)
        .map_err(|_| Error::InvalidParameter(format!("alpha must be a number or \"inf\", got {text:?}")))
}

/// Parses `--order` syntax: comma-separated stages, `+`-joined classes
/// inside a stage. `"0+1,2"` is one grouped stage then a singleton.
fn parse_stages(text: &str) -> Result<Vec<Vec<usize>>> {
    let mut stages = Vec::new();
    for part in text.split(',') {
        let mut stage = Vec::new();
        for item in part.split('+') {
            let trimmed = item.trim();
            let r: usize = trimmed.parse().map_err(|_| {
                Error::InvalidParameter(format!("class index {trimmed:?} in order {text:?}"))
            })?;
            stage.push(r);
        }
        stages.push(stage);
    }
    Ok(stages)
}

/// Builds the run plan from the `sim` section and subcommand flags; flags
/// win, time-based stopping wins over event counts.
fn build_sim_config(
    section: &SimSection,
    dim: usize,
    seed: u64,
    events: Option<u64>,
    time: Option<f64>,
    warmup: Option<f64>,
    initial: Option<Vec<u64>>,
) -> SimConfig {
    let initial = initial
        .or_else(|| section.initial.clone())
        .unwrap_or_else(|| vec![0; dim]);
    let stop = if let Some(t) = time {
        StopRule::Time(t)
    } else if let Some(n) = events {
        StopRule::Events(n)
    } else if let Some(t) = section.time {
        StopRule::Time(t)
    } else {
        StopRule::Events(section.events.unwrap_or(1_000_000))
    };
    let mut config = SimConfig::events(initial, 1, seed);
    config.stop = stop;
    config.warmup_fraction = warmup.or(section.warmup_fraction).unwrap_or(0.2);
    if let Some(batches) = section.batches {
        config.batches = batches;
    }
    if let Some(checkpoints) = section.checkpoints {
        config.checkpoints = checkpoints;
    }
    config
}

fn write_sidecars(dir: &PathBuf, files: &[(String, String)]) -> Result<()> {
    if files.is_empty() {
        return Ok(());
    }
    std::fs::create_dir_all(dir)?;
    for (name, content) in files {
        std::fs::write(dir.join(name), content)?;
    }
    Ok(())
}

fn csv_field(text: &str) -> String {
    if text.contains(',') || text.contains('"') || text.contains('\n') {
        format!("\"{}\"", text.replace('"', "\"\""))
    } else {
        text.to_owned()
    }
}

fn verdict_str(v: Verdict) -> &'static str {
    match v {
        Verdict::Stable => "stable",
        Verdict::Unstable => "unstable",
        Verdict::Indeterminate => "indeterminate",
    }
}

fn verdict_exit(v: Verdict) -> i32 {
    if v == Verdict::Indeterminate {
        2
    } else {
        0
    }
}

fn cmd_check_capacity(config: &Config) -> Result<Outcome> {
    let spec = config.network()?;
    let (holds, slack) = capacity_condition(&spec);
    let kappas = spec.kappas();
    let report = json!({
        "holds": holds,
        "offered_loads": kappas,
        "slack": slack,
    });
    // A failed necessary condition is a validation verdict on the input.
    let mut outcome = Outcome::new(report, if holds { 0 } else { 3 });
    if holds {
        let min = slack.iter().copied().fold(f64::INFINITY, f64::min);
        outcome
            .summary
            .push(format!("capacity condition holds; smallest slack {min:.6}"));
    } else {
        let j = slack
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(j, _)| j)
            .unwrap_or(0);
        outcome.summary.push(format!(
            "capacity condition fails at resource {j} (slack {:.6})",
            slack[j]
        ));
    }
    Ok(outcome)
}

fn cmd_solve_alloc(args: &SolveAllocArgs, config: &Config) -> Result<Outcome> {
    let spec = config.network()?;
    let section = config.allocation.as_ref();
    let state = args
        .state
        .clone()
        .or_else(|| section.map(|s| s.state.clone()))
        .ok_or_else(|| Error::Config("solve-alloc needs --state or an `allocation` section".into()))?;
    let alpha = match &args.alpha {
        Some(text) => parse_alpha(text)?,
        None => section
            .map(|s| s.alpha)
            .ok_or_else(|| Error::Config("solve-alloc needs --alpha or an `allocation` section".into()))?,
    };
    let weights = args
        .weights
        .clone()
        .or_else(|| section.and_then(|s| s.weights.clone()))
        .unwrap_or_else(|| vec![1.0; spec.num_types()]);
    let tol = args
        .tol
        .or_else(|| section.and_then(|s| s.tol))
        .unwrap_or(DEFAULT_SOLVE_TOL);
    let params = AlphaFairParams::new(alpha, weights);
    let solved = solve_alpha_fair(&spec, &state, &params, tol)?;
    let report = json!({
        "state": state,
        "alpha": params.alpha,
        "weights": params.weights,
        "solve": solved,
    });
    let mut outcome = Outcome::new(report, 0);
    let bw: Vec<String> = solved
        .allocation
        .bandwidths()
        .iter()
        .map(|b| format!("{b:.6}"))
        .collect();
    outcome.summary.push(format!(
        "allocation [{}], kkt residual {:.2e}, binding resources {:?}",
        bw.join(", "),
        solved.kkt_residual,
        solved.binding_resources
    ));
    Ok(outcome)
}

fn cmd_simulate(args: &SimulateArgs, config: &Config, seed: u64, jobs: usize) -> Result<Outcome> {
    let spec = config.network()?;
    let control = config.control()?;
    let model = NetworkModel::new(&spec, control)?;
    let sim = build_sim_config(
        &config.sim,
        spec.num_types(),
        seed,
        args.events,
        args.time,
        args.warmup,
        args.initial.clone(),
    );
    let reps = args
        .replications
        .or(config.sim.replications)
        .unwrap_or(1);
    let runs = simulate_replications(&model, &sim, reps, jobs)?;
    let merged = TrajectoryStats::merge_all(&runs)?;
    let growth: Vec<_> = runs
        .iter()
        .map(|run| detect_growth(run, 8))
        .collect::<Result<_>>()?;
    let kappas = spec.kappas();
    let law_rows = service_law_check(&merged, &kappas, spec.mu(), 3.0)?;
    let per_class: Vec<Value> = (0..spec.num_types())
        .map(|r| {
            json!({
                "class": r,
                "avg_service": merged.avg_service(r),
                "avg_occupancy": merged.avg_occupancy(r),
                "offered_load": kappas[r],
                "arrivals": merged.arrivals[r],
                "departures": merged.departures[r],
            })
        })
        .collect();
    let report = json!({
        "replications": reps,
        "events": merged.events,
        "observed_time": merged.total_time,
        "per_class": per_class,
        "total_occupancy": merged.avg_total_occupancy(),
        "growth": growth,
        "service_law": law_rows,
    });
    let mut outcome = Outcome::new(report, 0);
    outcome.summary.push(format!(
        "{} events across {} replication(s), {:.1} observed time units",
        merged.events, reps, merged.total_time
    ));
    for r in 0..spec.num_types() {
        let s = merged.avg_service(r);
        let q = merged.avg_occupancy(r);
        outcome.summary.push(format!(
            "class {r}: avg service {:.4} (offered {:.4}), avg occupancy {:.3}",
            s.mean, kappas[r], q.mean
        ));
    }
    let bounded = growth
        .iter()
        .filter(|g| matches!(g, crate::sim::GrowthVerdict::Growing))
        .count();
    if bounded > 0 {
        outcome
            .summary
            .push(format!("{bounded}/{reps} replication(s) show a growing backlog"));
    }
    // Sidecar: the first replication's checkpoint path with allocations.
    let law = control.compile(&spec)?;
    let mut csv = String::from("time");
    for r in 0..spec.num_types() {
        csv.push_str(&format!(",n{r}"));
    }
    for r in 0..spec.num_types() {
        csv.push_str(&format!(",b{r}"));
    }
    csv.push('\n');
    for (t, state) in &runs[0].checkpoints {
        let reals: Vec<f64> = state.iter().map(|&v| v as f64).collect();
        let b = law.allocate(&reals)?;
        csv.push_str(&format!("{t:.6}"));
        for v in state {
            csv.push_str(&format!(",{v}"));
        }
        for v in &b {
            csv.push_str(&format!(",{v:.6}"));
        }
        csv.push('\n');
    }
    outcome.csv.push(("trajectory.csv".into(), csv));
    Ok(outcome)
}

fn cmd_drift_scan(args: &DriftScanArgs, config: &Config) -> Result<Outcome> {
    let spec = config.network()?;
    let control = config.control()?;
    let law = control.compile(&spec)?;
    let section = config
        .scan
        .as_ref()
        .ok_or_else(|| Error::Config("drift-scan needs a `scan` section".into()))?;
    let bounds = args
        .box_bounds
        .clone()
        .unwrap_or_else(|| section.bounds.clone());
    let direction = section.direction.as_deref().unwrap_or("decrease");
    let epsilon = match (args.epsilon.or(section.epsilon), direction) {
        (Some(e), _) => e,
        (None, "decrease") => {
            let (d_up, d_down) = capacity_slack_deltas(&spec)?;
            0.5 * d_up.min(d_down)
        }
        (None, _) => {
            return Err(Error::Config(
                "an increase-direction scan needs an explicit epsilon".into(),
            ))
        }
    };
    let scan = ScanConfig {
        bounds,
        epsilon,
        exclude: section.exclude.clone().unwrap_or(Region::Empty),
    };
    let (report, passed, states, bad, worst) = match direction {
        "decrease" => {
            let rep = foster_scan(&spec, &law, &section.function, &scan)?;
            (
                json!({ "direction": "decrease", "scan": rep }),
                rep.passed,
                rep.states_checked,
                rep.violation_count,
                rep.worst.clone(),
            )
        }
        "increase" => {
            let rep = instability_evidence(&spec, &law, &section.function, &scan)?;
            (
                json!({ "direction": "increase", "scan": rep }),
                rep.passed,
                rep.states_checked,
                rep.failure_count,
                rep.weakest.clone(),
            )
        }
        other => {
            return Err(Error::Config(format!(
                "scan direction must be \"decrease\" or \"increase\", got {other:?}"
            )))
        }
    };
    // A scan that certifies nothing is an indeterminate outcome, not an error.
    let mut outcome = Outcome::new(report.clone(), if passed { 0 } else { 2 });
    let what = if direction == "decrease" {
        "negative-drift certificate"
    } else {
        "upward-drift evidence"
    };
    if passed {
        outcome.summary.push(format!(
            "{what} holds on the box (epsilon {epsilon}, {states} states checked)"
        ));
    } else {
        outcome.summary.push(format!(
            "{what} fails at {bad} of {states} states (epsilon {epsilon})"
        ));
    }
    if let Some(w) = &worst {
        let label = if direction == "decrease" { "largest" } else { "smallest" };
        outcome
            .summary
            .push(format!("{label} drift {:.6} at {:?}", w.drift, w.state));
    }
    // Sidecar: every reported offending state.
    let mut csv = String::new();
    for r in 0..spec.num_types() {
        csv.push_str(&format!("n{r},"));
    }
    csv.push_str("drift\n");
    let rows = report["scan"]["violations"]
        .as_array()
        .or_else(|| report["scan"]["failures"].as_array())
        .cloned()
        .unwrap_or_default();
    for row in rows {
        if let (Some(state), Some(drift)) = (row["state"].as_array(), row["drift"].as_f64()) {
            for v in state {
                csv.push_str(&format!("{v},"));
            }
            csv.push_str(&format!("{drift:.9}\n"));
        }
    }
    outcome.csv.push(("violations.csv".into(), csv));
    Ok(outcome)
}

/// Largest probe-box side with at most two million allocation pairs,
/// capped at 7 levels per coordinate.
fn probe_bounds(dim: usize) -> Vec<u64> {
    let mut side = 6u64;
    while side > 1 {
        let states = (side as u128 + 1).pow(dim as u32);
        if states.saturating_mul(dim as u128) <= 2_000_000 {
            break;
        }
        side -= 1;
    }
    vec![side; dim]
}

/// Runs the monotonicity probe unless told to assume it; a violating
/// control invalidates the recursion, so it is a hard error.
fn monotone_gate(
    spec: &NetworkSpec,
    law: &dyn ControlLaw,
    assume: bool,
) -> Result<Value> {
    if assume {
        return Ok(json!("assumed"));
    }
    let bounds = probe_bounds(spec.num_types());
    let report = check_monotone(law, spec, &bounds, 1e-6)?;
    if !report.monotone {
        let first = report
            .violations
            .first()
            .map(|v| {
                format!(
                    " (class {} moves {:.6} -> {:.6} when class {} grows at {:?})",
                    v.class, v.before, v.after, v.direction, v.state
                )
            })
            .unwrap_or_default();
        return Err(Error::InvalidControl(format!(
            "the control is not monotone on the probe box{first}; the recursion verdict only \
             covers monotone controls. Pass --assume-monotone (or set \
             classify.assume_monotone) when structure justifies the reduction anyway"
        )));
    }
    Ok(json!({ "bounds": bounds, "checked_pairs": report.checked_pairs }))
}

fn cmd_classify(args: &ClassifyArgs, config: &Config, seed: u64) -> Result<Outcome> {
    let spec = config.network()?;
    let control = config.control()?;
    let law: Arc<dyn ControlLaw> = Arc::new(control.compile(&spec)?);
    let section = config.classify.clone().unwrap_or_default();
    let mut params = section.to_params(spec.num_types(), seed);
    if let Some(order) = &args.order {
        params.stages = parse_stages(order)?;
    }
    if let Some(z) = args.confidence {
        params.z = z;
    }
    if let Some(events) = args.events {
        params.method = match params.method {
            StationaryMethod::Simulation { reps, seed, .. } => {
                StationaryMethod::Simulation { events, reps, seed }
            }
            StationaryMethod::Matrix { .. } => StationaryMethod::Simulation {
                events,
                reps: 1,
                seed,
            },
        };
    }
    let assume = args.assume_monotone || section.assume_monotone.unwrap_or(false);
    let probe = monotone_gate(&spec, law.as_ref(), assume)?;
    let search = args.search_orders || section.search_orders.unwrap_or(false);
    let mut csv = String::from("stage,subset_before,expected,se,offered,verdict,note\n");
    let (report, verdict, summary_lines) = if search {
        let out = classify_search_orders(&spec, law, &params)?;
        let mut lines = vec![format!(
            "order search over {} orders: {}",
            out.tried.len(),
            verdict_str(out.verdict)
        )];
        if let Some(best) = &out.best {
            for stage in &best.stages {
                lines.push(stage_line(stage));
                push_stage_csv(&mut csv, stage);
            }
        }
        (
            json!({ "monotone_probe": probe, "order_search": out }),
            out.verdict,
            lines,
        )
    } else {
        let out = classify(&spec, law, &params)?;
        let mut lines = vec![format!("classification: {}", verdict_str(out.verdict))];
        for stage in &out.stages {
            lines.push(stage_line(stage));
            push_stage_csv(&mut csv, stage);
        }
        (
            json!({ "monotone_probe": probe, "classification": out }),
            out.verdict,
            lines,
        )
    };
    let mut outcome = Outcome::new(report, verdict_exit(verdict));
    outcome.summary = summary_lines;
    outcome.csv.push(("trace.csv".into(), csv));
    Ok(outcome)
}

fn stage_line(stage: &crate::classifier::StageReport) -> String {
    let rate = stage
        .expected_rate
        .map(|e| format!("{:.6} +- {:.6}", e.mean, e.se))
        .unwrap_or_else(|| "-".into());
    let offered = stage
        .offered
        .map(|k| format!("{k:.6}"))
        .unwrap_or_else(|| "-".into());
    format!(
        "stage {:?} given {:?}: rate {} vs offered {} -> {} ({})",
        stage.stage,
        stage.subset_before,
        rate,
        offered,
        verdict_str(stage.verdict),
        stage.note
    )
}

fn push_stage_csv(csv: &mut String, stage: &crate::classifier::StageReport) {
    let ids: Vec<String> = stage.stage.iter().map(|r| r.to_string()).collect();
    let before: Vec<String> = stage.subset_before.iter().map(|r| r.to_string()).collect();
    csv.push_str(&format!(
        "{},{},{},{},{},{},{}\n",
        csv_field(&ids.join("+")),
        csv_field(&before.join("+")),
        stage
            .expected_rate
            .map(|e| format!("{:.9}", e.mean))
            .unwrap_or_default(),
        stage
            .expected_rate
            .map(|e| format!("{:.9}", e.se))
            .unwrap_or_default(),
        stage.offered.map(|k| format!("{k:.9}")).unwrap_or_default(),
        verdict_str(stage.verdict),
        csv_field(&stage.note),
    ));
}

fn cmd_threshold(args: &ThresholdArgs, config: &Config, seed: u64) -> Result<Outcome> {
    let base_net = config
        .network
        .clone()
        .ok_or_else(|| Error::Config("the run needs a `network` section".into()))?;
    let spec = base_net.build()?;
    let control = config.control()?.clone();
    let section = config
        .threshold
        .clone()
        .ok_or_else(|| Error::Config("threshold needs a `threshold` section".into()))?;
    let classify_section = config.classify.clone().unwrap_or_default();
    let params = classify_section.to_params(spec.num_types(), seed);
    let assume = args.assume_monotone || classify_section.assume_monotone.unwrap_or(false);
    // Arrival rates never enter the allocation map, so one probe on the
    // base network covers the whole family.
    let base_law = control.compile(&spec)?;
    let probe = monotone_gate(&spec, &base_law, assume)?;
    let family_spec = section.family.clone();
    let family = move |theta: f64| -> Result<(NetworkSpec, Arc<dyn ControlLaw>)> {
        if !(theta > 0.0) || !theta.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "arrival parameter must be positive, got {theta}"
            )));
        }
        let mut net = base_net.clone();
        match &family_spec {
            ThresholdFamilySpec::UniformArrival => {
                for v in &mut net.arrival_rates {
                    *v = theta;
                }
            }
            ThresholdFamilySpec::ClassArrival { class } => {
                if *class >= net.arrival_rates.len() {
                    return Err(Error::IndexOutOfRange(format!(
                        "threshold family tunes class {class}, network has {} classes",
                        net.arrival_rates.len()
                    )));
                }
                net.arrival_rates[*class] = theta;
            }
        }
        let spec = net.build()?;
        let law: Arc<dyn ControlLaw> = Arc::new(control.compile(&spec)?);
        Ok((spec, law))
    };
    let search = critical_threshold(family, &params, section.bracket, section.tol, section.budget)?;
    let mut csv = String::from("theta,verdict\n");
    for probe_row in &search.probes {
        csv.push_str(&format!(
            "{:.9},{}\n",
            probe_row.theta,
            verdict_str(probe_row.verdict)
        ));
    }
    let exit = if search.collapsed_indeterminate { 2 } else { 0 };
    let mut outcome = Outcome::new(
        json!({ "monotone_probe": probe, "search": search }),
        exit,
    );
    let s = &search;
    outcome.summary.push(format!(
        "critical arrival rate near {:.6} (stable at {:.6}, unstable at {:.6}, {} probes{})",
        s.critical,
        s.lo,
        s.hi,
        s.probes.len(),
        if s.collapsed_indeterminate {
            "; stopped on an indeterminate midpoint"
        } else {
            ""
        }
    ));
    outcome.csv.push(("probes.csv".into(), csv));
    Ok(outcome)
}

fn broadcast(values: Option<Vec<f64>>, len: usize) -> Option<Vec<f64>> {
    match values {
        Some(v) if v.len() == 1 && len > 1 => Some(vec![v[0]; len]),
        other => other,
    }
}

fn cmd_example(args: &ExampleArgs, manifest: &mut RunManifest) -> Result<Outcome> {
    let mut example = crate::builtin::BuiltinExample::named(&args.name)?;
    example.k = args.k;
    example.a = args.a;
    example.alpha = match &args.alpha {
        Some(text) => Some(parse_alpha(text)?),
        None => None,
    };
    example.variant = args.variant.clone();
    example.weights = args.weights.clone();
    // Build once to learn the shape, so scalar rate flags can broadcast.
    let base = example.build_config()?;
    let net = base
        .network
        .as_ref()
        .expect("bundled examples always carry a network");
    let classes = net.arrival_rates.len();
    let resources = net.capacities.len();
    example.nu = broadcast(args.nu.clone(), classes);
    example.mu = broadcast(args.mu.clone(), classes);
    example.c = broadcast(args.c.clone(), resources);
    let config = example.build_config()?;
    let mut raw = serde_json::to_value(&config)?;
    for assignment in &args.common.set {
        apply_override(&mut raw, assignment)?;
        manifest.overrides.push(assignment.clone());
    }
    // Overrides may touch anything; prove the result still loads.
    let reparsed = Config::from_value(raw.clone())?;
    reparsed.network()?;
    let mut outcome = Outcome::new(raw.clone(), 0);
    outcome.bare = true;
    if let Some(path) = &args.out {
        let text = serde_json::to_string_pretty(&raw)?;
        std::fs::write(path, text + "\n")?;
        outcome.report = json!({ "wrote": path.display().to_string() });
        outcome.bare = false;
        outcome
            .summary
            .push(format!("wrote {} config to {}", args.name, path.display()));
    } else {
        outcome
            .summary
            .push(format!("{} config on stdout; pipe to a file to run it", args.name));
    }
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(args).expect("test arguments parse")
    }

    fn exec(args: &[&str]) -> Result<Outcome> {
        let cli = parse(args);
        let mut manifest = RunManifest::new(cli.command.name());
        execute(&cli.command, &mut manifest)
    }

    fn pair_overrides() -> Vec<String> {
        vec![
            r#"network={"incidence":[[1,1],[0,1]],"capacities":[1.0,1.0],"arrival_rates":[0.5,0.3],"service_rates":[1.0,1.0]}"#.into(),
            r#"control={"variant":"static_priority","levels":[[0],[1]]}"#.into(),
        ]
    }

    #[test]
    fn order_syntax_parses_groups() {
        assert_eq!(parse_stages("0+1,2").unwrap(), vec![vec![0, 1], vec![2]]);
        assert_eq!(parse_stages("2,1,0").unwrap(), vec![vec![2], vec![1], vec![0]]);
        assert!(parse_stages("a,b").is_err());
    }

    #[test]
    fn alpha_strings_parse() {
        assert_eq!(parse_alpha("1").unwrap(), Alpha::Finite(1.0));
        assert_eq!(parse_alpha("inf").unwrap(), Alpha::Infinite);
        assert!(parse_alpha("one").is_err());
    }

    #[test]
    fn capacity_check_reports_and_gates() {
        let mut args = vec!["psnet".to_string(), "check-capacity".to_string()];
        for o in pair_overrides() {
            args.push("--set".into());
            args.push(o);
        }
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        let outcome = exec(&refs).unwrap();
        assert_eq!(outcome.exit, 0);
        assert_eq!(outcome.report["holds"], json!(true));

        // Jam class 1 so resource 1 saturates.
        args.push("--set".into());
        args.push("network.arrival_rates.1=1.2".into());
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        let outcome = exec(&refs).unwrap();
        assert_eq!(outcome.exit, 3);
        assert_eq!(outcome.report["holds"], json!(false));
    }

    #[test]
    fn solve_alloc_splits_a_shared_resource_evenly() {
        let outcome = exec(&[
            "psnet",
            "solve-alloc",
            "--set",
            r#"network={"incidence":[[1,1]],"capacities":[1.0],"arrival_rates":[0.1,0.1],"service_rates":[1.0,1.0]}"#,
            "--state",
            "1,1",
            "--alpha",
            "1",
        ])
        .unwrap();
        assert_eq!(outcome.exit, 0);
        let b = outcome.report["solve"]["allocation"]["bandwidths"]
            .as_array()
            .unwrap()
            .clone();
        assert!((b[0].as_f64().unwrap() - 0.5).abs() < 1e-6);
        assert!((b[1].as_f64().unwrap() - 0.5).abs() < 1e-6);
    }

    #[test]
    fn simulate_runs_the_priority_pair() {
        let mut args = vec![
            "psnet".to_string(),
            "simulate".to_string(),
            "--events".into(),
            "20000".into(),
            "--seed".into(),
            "7".into(),
        ];
        for o in pair_overrides() {
            args.push("--set".into());
            args.push(o);
        }
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        let outcome = exec(&refs).unwrap();
        assert_eq!(outcome.exit, 0);
        assert_eq!(outcome.report["events"], json!(20000));
        let (name, csv) = &outcome.csv[0];
        assert_eq!(name, "trajectory.csv");
        assert!(csv.starts_with("time,n0,n1,b0,b1\n"));
        assert!(csv.lines().count() > 100);
    }

    #[test]
    fn drift_scan_certifies_the_stable_pair() {
        let mut args = vec!["psnet".to_string(), "drift-scan".to_string()];
        for o in pair_overrides() {
            args.push("--set".into());
            args.push(o);
        }
        args.push("--set".into());
        args.push(r#"scan={"function":{"kind":"linear"},"bounds":[40,40],"exclude":{"shape":"box","below":[1,1]}}"#.into());
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        let outcome = exec(&refs).unwrap();
        assert_eq!(outcome.exit, 0, "report: {}", outcome.report);
        assert_eq!(outcome.report["scan"]["passed"], json!(true));
        // Epsilon defaulted to half the smallest slack, 0.2 / 2.
        assert!((outcome.report["scan"]["epsilon"].as_f64().unwrap() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn classify_exits_zero_on_a_stable_verdict() {
        let mut args = vec!["psnet".to_string(), "classify".to_string()];
        for o in pair_overrides() {
            args.push("--set".into());
            args.push(o);
        }
        args.push("--set".into());
        args.push(r#"classify={"stages":[[0],[1]],"method":{"method":"matrix","level_cap":400}}"#.into());
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        let outcome = exec(&refs).unwrap();
        assert_eq!(outcome.exit, 0, "report: {}", outcome.report);
        assert_eq!(outcome.report["classification"]["verdict"], json!("stable"));
        assert!(outcome.report["monotone_probe"]["checked_pairs"].as_u64().unwrap() > 0);
        let (name, csv) = &outcome.csv[0];
        assert_eq!(name, "trace.csv");
        assert_eq!(csv.lines().count(), 3);
    }

    #[test]
    fn example_output_round_trips_into_a_runnable_config() {
        let outcome = exec(&["psnet", "example", "ex1"]).unwrap();
        assert_eq!(outcome.exit, 0);
        assert!(outcome.bare, "example prints a bare config document");
        let config = Config::from_value(outcome.report.clone()).unwrap();
        config.network().unwrap();
        assert!(config.control.is_some());

        // The written file feeds straight back into another subcommand.
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ex1.json");
        let outcome = exec(&[
            "psnet",
            "example",
            "ex1",
            "--out",
            path.to_str().unwrap(),
        ])
        .unwrap();
        assert!(!outcome.bare);
        let outcome = exec(&["psnet", "check-capacity", "--config", path.to_str().unwrap()]).unwrap();
        assert_eq!(outcome.exit, 0);
    }

    #[test]
    fn example_rate_flags_broadcast_scalars() {
        let outcome = exec(&["psnet", "example", "ex2", "--nu", "0.4"]).unwrap();
        let rates = outcome.report["network"]["arrival_rates"].as_array().unwrap();
        assert_eq!(rates.len(), 3);
        for v in rates {
            assert!((v.as_f64().unwrap() - 0.4).abs() < 1e-12);
        }
    }

    #[test]
    fn seed_resolution_prefers_the_flag() {
        let config = Config::from_value(json!({ "sim": { "seed": 9 } })).unwrap();
        let mut common = CommonArgs::default();
        assert_eq!(resolve_seed(&common, &config).unwrap(), 9);
        common.seed = Some(4);
        assert_eq!(resolve_seed(&common, &config).unwrap(), 4);
    }

    #[test]
    fn probe_boxes_shrink_with_dimension() {
        assert_eq!(probe_bounds(2), vec![6, 6]);
        assert_eq!(probe_bounds(5), vec![6, 6, 6, 6, 6]);
        let wide = probe_bounds(8);
        assert!(wide[0] < 6);
        let states = (wide[0] as u128 + 1).pow(8);
        assert!(states * 8 <= 2_000_000);
    }
}
