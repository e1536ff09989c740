//! Exact continuous-time simulation of the network Markov chain.
//!
//! The chain jumps from `n` to `n + e_r` at rate `nu[r]` and to `n - e_r`
//! at rate `mu[r] * b[r](n)`, where `b` is the control under study. The
//! simulator draws the exponential sojourn from the total rate, picks the
//! transition proportionally, and accumulates time-weighted statistics:
//! long-run service and occupancy averages with batch-means standard
//! errors, joint and marginal occupation-time distributions, and a thinned
//! trajectory of checkpoints for growth diagnostics.
//!
//! [`RateModel`] abstracts the jump structure so the same loop drives both
//! the full network ([`NetworkModel`]) and reduced chains in which a subset
//! of coordinates is pinned at infinity (built by [`crate::classifier`]).
//! Models can expose extra per-state observables; their time averages come
//! with batch errors too.
//!
//! A deterministic fluid counterpart ([`fluid_integrate`]) integrates
//! `dx/dt = nu - mu * b(x)` for the same control, which is useful to read
//! off drain rates and to contrast stochastic entrainment effects with the
//! fluid picture.

use crate::control::{ControlLaw, ControlSpec};
use crate::error::{Error, Result};
use crate::net::NetworkSpec;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::sync::Arc;

/// Entry caps for the occupation-time maps; excess time is tracked in
/// overflow buckets rather than dropped.
const MARGINAL_CAP: usize = 65_536;

/// Jump structure of a continuous-time chain on multi-dimensional counts.
pub trait RateModel: Send + Sync {
    fn dim(&self) -> usize;
    /// Per-coordinate arrival rates, all positive.
    fn arrivals(&self) -> &[f64];
    /// Per-coordinate service scales: coordinate `r` departs at
    /// `service_scale()[r] * allocations(n)[r]`.
    fn service_scale(&self) -> &[f64];
    /// Bandwidth allocation at the given counts; zero on empty coordinates.
    fn allocations(&self, counts: &[u64]) -> Result<Vec<f64>>;
    /// Extra per-state quantities to average over time.
    fn observables(&self, _counts: &[u64], _alloc: &[f64]) -> Result<Vec<f64>> {
        Ok(Vec::new())
    }
    fn num_observables(&self) -> usize {
        0
    }
}

/// The full network under a compiled control.
pub struct NetworkModel {
    spec: Arc<NetworkSpec>,
    law: Arc<dyn ControlLaw>,
}

impl NetworkModel {
    pub fn new(spec: &NetworkSpec, control: &ControlSpec) -> Result<Self> {
        let compiled = control.compile(spec)?;
        Ok(Self {
            spec: Arc::new(spec.clone()),
            law: Arc::new(compiled),
        })
    }

    pub fn from_law(spec: &NetworkSpec, law: Arc<dyn ControlLaw>) -> Self {
        Self {
            spec: Arc::new(spec.clone()),
            law,
        }
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }
}

impl RateModel for NetworkModel {
    fn dim(&self) -> usize {
        self.spec.num_types()
    }

    fn arrivals(&self) -> &[f64] {
        self.spec.nu()
    }

    fn service_scale(&self) -> &[f64] {
        self.spec.mu()
    }

    fn allocations(&self, counts: &[u64]) -> Result<Vec<f64>> {
        let reals: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
        self.law.allocate(&reals)
    }
}

/// When a run ends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopRule {
    /// After this many jumps.
    Events(u64),
    /// At this simulated time.
    Time(f64),
}

/// Simulation plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub initial: Vec<u64>,
    pub stop: StopRule,
    pub seed: u64,
    /// Fraction of the run discarded before statistics start.
    #[serde(default = "default_warmup")]
    pub warmup_fraction: f64,
    /// Number of batches for standard errors.
    #[serde(default = "default_batches")]
    pub batches: usize,
    /// Target number of trajectory checkpoints.
    #[serde(default = "default_checkpoints")]
    pub checkpoints: usize,
    /// Entry cap for the joint occupation-time map.
    #[serde(default = "default_state_cap")]
    pub state_cap: usize,
}

fn default_warmup() -> f64 {
    0.2
}
fn default_batches() -> usize {
    10
}
fn default_checkpoints() -> usize {
    1024
}
fn default_state_cap() -> usize {
    1_000_000
}

impl SimConfig {
    pub fn events(initial: Vec<u64>, events: u64, seed: u64) -> Self {
        Self {
            initial,
            stop: StopRule::Events(events),
            seed,
            warmup_fraction: default_warmup(),
            batches: default_batches(),
            checkpoints: default_checkpoints(),
            state_cap: default_state_cap(),
        }
    }

    pub fn time(initial: Vec<u64>, horizon: f64, seed: u64) -> Self {
        Self {
            initial,
            stop: StopRule::Time(horizon),
            seed,
            warmup_fraction: default_warmup(),
            batches: default_batches(),
            checkpoints: default_checkpoints(),
            state_cap: default_state_cap(),
        }
    }

    fn validate(&self, dim: usize) -> Result<()> {
        if self.initial.len() != dim {
            return Err(Error::DimensionMismatch(format!(
                "initial state of dimension {} for {} coordinates",
                self.initial.len(),
                dim
            )));
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return Err(Error::InvalidParameter(
                "warmup fraction must lie in [0, 1)".into(),
            ));
        }
        if self.batches == 0 {
            return Err(Error::InvalidParameter("need at least one batch".into()));
        }
        if self.checkpoints < 2 {
            return Err(Error::InvalidParameter(
                "need at least two checkpoints".into(),
            ));
        }
        match self.stop {
            StopRule::Events(n) => {
                let warm = (n as f64 * self.warmup_fraction) as u64;
                if n == 0 || n - warm < self.batches as u64 {
                    return Err(Error::InvalidParameter(format!(
                        "{n} events leave fewer post-warmup jumps than {} batches",
                        self.batches
                    )));
                }
            }
            StopRule::Time(t) => {
                if !(t > 0.0) || !t.is_finite() {
                    return Err(Error::InvalidParameter(
                        "time horizon must be positive and finite".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// One batch of post-warmup time integrals.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats {
    pub time: f64,
    pub service: Vec<f64>,
    pub occupancy: Vec<f64>,
    pub obs: Vec<f64>,
}

/// A point estimate with a batch-means standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
    pub batches: usize,
}

/// Time-weighted statistics of one run (or of merged replications).
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryStats {
    pub dim: usize,
    pub num_obs: usize,
    /// Observed (post-warmup) time.
    pub total_time: f64,
    pub warmup_time: f64,
    pub events: u64,
    pub service_integral: Vec<f64>,
    pub occupancy_integral: Vec<f64>,
    pub obs_integral: Vec<f64>,
    pub batches: Vec<BatchStats>,
    /// Occupation time per visited state, capped; the remainder lands in
    /// `joint_overflow`.
    pub joint: HashMap<Vec<u64>, f64>,
    pub joint_overflow: f64,
    pub marginals: Vec<HashMap<u64, f64>>,
    pub marginal_overflow: Vec<f64>,
    pub total_marginal: HashMap<u64, f64>,
    pub total_marginal_overflow: f64,
    /// `(time, state)` samples across the whole run, warmup included.
    pub checkpoints: Vec<(f64, Vec<u64>)>,
    pub arrivals: Vec<u64>,
    pub departures: Vec<u64>,
    pub sum_initial: Vec<u64>,
    pub end_states: Vec<Vec<u64>>,
}

impl TrajectoryStats {
    fn new(dim: usize, num_obs: usize, batches: usize, initial: &[u64]) -> Self {
        Self {
            dim,
            num_obs,
            total_time: 0.0,
            warmup_time: 0.0,
            events: 0,
            service_integral: vec![0.0; dim],
            occupancy_integral: vec![0.0; dim],
            obs_integral: vec![0.0; num_obs],
            batches: (0..batches)
                .map(|_| BatchStats {
                    time: 0.0,
                    service: vec![0.0; dim],
                    occupancy: vec![0.0; dim],
                    obs: vec![0.0; num_obs],
                })
                .collect(),
            joint: HashMap::new(),
            joint_overflow: 0.0,
            marginals: vec![HashMap::new(); dim],
            marginal_overflow: vec![0.0; dim],
            total_marginal: HashMap::new(),
            total_marginal_overflow: 0.0,
            checkpoints: Vec::new(),
            arrivals: vec![0; dim],
            departures: vec![0; dim],
            sum_initial: initial.to_vec(),
            end_states: Vec::new(),
        }
    }

    fn deposit(
        &mut self,
        dt: f64,
        counts: &[u64],
        alloc: &[f64],
        obs: &[f64],
        batch: usize,
        state_cap: usize,
    ) {
        if dt <= 0.0 {
            return;
        }
        self.total_time += dt;
        let b = &mut self.batches[batch];
        b.time += dt;
        for r in 0..self.dim {
            self.service_integral[r] += alloc[r] * dt;
            self.occupancy_integral[r] += counts[r] as f64 * dt;
            b.service[r] += alloc[r] * dt;
            b.occupancy[r] += counts[r] as f64 * dt;
        }
        for k in 0..self.num_obs {
            self.obs_integral[k] += obs[k] * dt;
            b.obs[k] += obs[k] * dt;
        }
        if self.joint.len() < state_cap || self.joint.contains_key(counts) {
            *self.joint.entry(counts.to_vec()).or_insert(0.0) += dt;
        } else {
            self.joint_overflow += dt;
        }
        let mut total = 0u64;
        for r in 0..self.dim {
            total += counts[r];
            let map = &mut self.marginals[r];
            if map.len() < MARGINAL_CAP || map.contains_key(&counts[r]) {
                *map.entry(counts[r]).or_insert(0.0) += dt;
            } else {
                self.marginal_overflow[r] += dt;
            }
        }
        if self.total_marginal.len() < MARGINAL_CAP || self.total_marginal.contains_key(&total) {
            *self.total_marginal.entry(total).or_insert(0.0) += dt;
        } else {
            self.total_marginal_overflow += dt;
        }
    }

    fn estimate(&self, pick: impl Fn(&BatchStats) -> f64) -> Estimate {
        let mean = if self.total_time > 0.0 {
            self.batches.iter().map(&pick).sum::<f64>() / self.total_time
        } else {
            f64::NAN
        };
        let means: Vec<f64> = self
            .batches
            .iter()
            .filter(|b| b.time > 0.0)
            .map(|b| pick(b) / b.time)
            .collect();
        let k = means.len();
        let se = if k >= 2 {
            let m = means.iter().sum::<f64>() / k as f64;
            let var = means.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (k - 1) as f64;
            (var / k as f64).sqrt()
        } else {
            f64::INFINITY
        };
        Estimate {
            mean,
            se,
            batches: k,
        }
    }

    /// Long-run average bandwidth of coordinate `r`.
    pub fn avg_service(&self, r: usize) -> Estimate {
        self.estimate(|b| b.service[r])
    }

    /// Long-run average occupancy of coordinate `r`.
    pub fn avg_occupancy(&self, r: usize) -> Estimate {
        self.estimate(|b| b.occupancy[r])
    }

    /// Long-run average total population.
    pub fn avg_total_occupancy(&self) -> Estimate {
        self.estimate(|b| b.occupancy.iter().sum())
    }

    /// Long-run average of observable `k`.
    pub fn avg_observable(&self, k: usize) -> Estimate {
        self.estimate(|b| b.obs[k])
    }

    /// Fraction of observed time the predicate held; the second value is
    /// the unattributed overflow fraction (an upper bound on the error).
    pub fn time_fraction(&self, pred: impl Fn(&[u64]) -> bool) -> (f64, f64) {
        if self.total_time <= 0.0 {
            return (f64::NAN, 0.0);
        }
        let hit: f64 = self
            .joint
            .iter()
            .filter(|(state, _)| pred(state))
            .map(|(_, &dt)| dt)
            .sum();
        (hit / self.total_time, self.joint_overflow / self.total_time)
    }

    /// Occupation-time distribution of coordinate `r`, sorted by level and
    /// normalised by observed time.
    pub fn marginal_pmf(&self, r: usize) -> Vec<(u64, f64)> {
        let mut rows: Vec<(u64, f64)> = self.marginals[r]
            .iter()
            .map(|(&level, &dt)| (level, dt / self.total_time))
            .collect();
        rows.sort_by_key(|&(level, _)| level);
        rows
    }

    /// Merges independent replications: integrals and counters add, batches
    /// concatenate (so standard errors pool across runs), checkpoints are
    /// dropped (they describe a single path).
    pub fn merge_all(runs: &[TrajectoryStats]) -> Result<TrajectoryStats> {
        let first = runs
            .first()
            .ok_or_else(|| Error::InsufficientData("no runs to merge".into()))?;
        let mut merged = TrajectoryStats::new(first.dim, first.num_obs, 0, &vec![0; first.dim]);
        merged.sum_initial = vec![0; first.dim];
        for run in runs {
            if run.dim != first.dim || run.num_obs != first.num_obs {
                return Err(Error::DimensionMismatch(
                    "replications disagree on dimensions".into(),
                ));
            }
            merged.total_time += run.total_time;
            merged.warmup_time += run.warmup_time;
            merged.events += run.events;
            for r in 0..merged.dim {
                merged.service_integral[r] += run.service_integral[r];
                merged.occupancy_integral[r] += run.occupancy_integral[r];
                merged.arrivals[r] += run.arrivals[r];
                merged.departures[r] += run.departures[r];
                merged.sum_initial[r] += run.sum_initial[r];
                merged.marginal_overflow[r] += run.marginal_overflow[r];
                for (&level, &dt) in &run.marginals[r] {
                    *merged.marginals[r].entry(level).or_insert(0.0) += dt;
                }
            }
            for k in 0..merged.num_obs {
                merged.obs_integral[k] += run.obs_integral[k];
            }
            merged.batches.extend(run.batches.iter().cloned());
            for (state, &dt) in &run.joint {
                *merged.joint.entry(state.clone()).or_insert(0.0) += dt;
            }
            merged.joint_overflow += run.joint_overflow;
            for (&level, &dt) in &run.total_marginal {
                *merged.total_marginal.entry(level).or_insert(0.0) += dt;
            }
            merged.total_marginal_overflow += run.total_marginal_overflow;
            merged.end_states.extend(run.end_states.iter().cloned());
        }
        Ok(merged)
    }
}

/// Runs one trajectory.
pub fn simulate(model: &dyn RateModel, config: &SimConfig) -> Result<TrajectoryStats> {
    config.validate(model.dim())?;
    let dim = model.dim();
    let nu = model.arrivals();
    let mu = model.service_scale();
    if nu.len() != dim || mu.len() != dim {
        return Err(Error::DimensionMismatch(
            "model rate vectors disagree with its dimension".into(),
        ));
    }
    if nu.iter().chain(mu).any(|&v| !v.is_finite() || v <= 0.0) {
        return Err(Error::InvalidParameter(
            "arrival rates and service scales must be positive".into(),
        ));
    }

    let mut stats = TrajectoryStats::new(dim, model.num_observables(), config.batches, &config.initial);
    let mut counts = config.initial.clone();
    let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
    let mut t = 0.0f64;
    stats.checkpoints.push((0.0, counts.clone()));

    // Event-mode plan.
    let (total_events, warm_jumps, cp_every) = match config.stop {
        StopRule::Events(n) => {
            let warm = (n as f64 * config.warmup_fraction) as u64;
            (n, warm, (n / config.checkpoints as u64).max(1))
        }
        StopRule::Time(_) => (0, 0, 0),
    };
    // Time-mode plan.
    let (horizon, warm_time, cp_dt) = match config.stop {
        StopRule::Time(t_end) => (
            t_end,
            t_end * config.warmup_fraction,
            t_end / config.checkpoints as f64,
        ),
        StopRule::Events(_) => (0.0, 0.0, 0.0),
    };
    let mut next_cp = cp_dt;
    let mut jumps = 0u64;

    loop {
        let alloc = model.allocations(&counts)?;
        if alloc.len() != dim {
            return Err(Error::DimensionMismatch(
                "control returned an allocation of the wrong dimension".into(),
            ));
        }
        let mut lambda: f64 = nu.iter().sum();
        for r in 0..dim {
            if counts[r] > 0 {
                lambda += mu[r] * alloc[r];
            } else if alloc[r] > 1e-9 {
                return Err(Error::InvalidControl(format!(
                    "control grants bandwidth {} to empty coordinate {r}",
                    alloc[r]
                )));
            }
        }
        if !(lambda > 0.0) {
            return Err(Error::SolverFailure("total jump rate vanished".into()));
        }
        let u: f64 = rng.gen();
        let tau = -(1.0 - u).ln() / lambda;
        let obs = model.observables(&counts, &alloc)?;

        match config.stop {
            StopRule::Events(_) => {
                // The sojourn before jump `jumps` belongs to batch
                // floor((jumps - warm) * batches / post).
                if jumps >= warm_jumps {
                    let post = total_events - warm_jumps;
                    let batch =
                        (((jumps - warm_jumps) as u128 * config.batches as u128) / post as u128)
                            as usize;
                    stats.deposit(tau, &counts, &alloc, &obs, batch, config.state_cap);
                } else {
                    stats.warmup_time += tau;
                }
                t += tau;
            }
            StopRule::Time(_) => {
                let end = (t + tau).min(horizon);
                // Split the sojourn at the warmup boundary and then across
                // the equal-time batch windows.
                let seg_start = t.max(warm_time);
                if end > seg_start {
                    let width = (horizon - warm_time) / config.batches as f64;
                    let mut lo = seg_start;
                    while lo < end {
                        let idx = (((lo - warm_time) / width) as usize).min(config.batches - 1);
                        let hi = (warm_time + (idx + 1) as f64 * width).min(end);
                        stats.deposit(hi - lo, &counts, &alloc, &obs, idx, config.state_cap);
                        if hi <= lo {
                            break;
                        }
                        lo = hi;
                    }
                }
                if t < warm_time {
                    stats.warmup_time += (end.min(warm_time)) - t;
                }
                while next_cp <= end + 1e-12 && next_cp <= horizon {
                    stats.checkpoints.push((next_cp, counts.clone()));
                    next_cp += cp_dt;
                }
                if t + tau >= horizon {
                    stats.events = jumps;
                    stats.end_states.push(counts);
                    return Ok(stats);
                }
                t += tau;
            }
        }

        // Pick the transition proportionally to its rate.
        let mut pick = rng.gen::<f64>() * lambda;
        let mut applied = false;
        for r in 0..dim {
            pick -= nu[r];
            if pick < 0.0 {
                counts[r] += 1;
                stats.arrivals[r] += 1;
                applied = true;
                break;
            }
        }
        if !applied {
            for r in 0..dim {
                if counts[r] > 0 {
                    pick -= mu[r] * alloc[r];
                    if pick < 0.0 {
                        counts[r] -= 1;
                        stats.departures[r] += 1;
                        applied = true;
                        break;
                    }
                }
            }
        }
        if !applied {
            // Floating-point edge: attribute to the last positive rate.
            let r = (0..dim)
                .rev()
                .find(|&r| counts[r] > 0 && alloc[r] > 0.0)
                .unwrap_or(dim - 1);
            if counts[r] > 0 && alloc[r] > 0.0 {
                counts[r] -= 1;
                stats.departures[r] += 1;
            } else {
                counts[r] += 1;
                stats.arrivals[r] += 1;
            }
        }
        jumps += 1;

        if let StopRule::Events(n) = config.stop {
            if jumps % cp_every == 0 {
                stats.checkpoints.push((t, counts.clone()));
            }
            if jumps == n {
                stats.events = jumps;
                stats.end_states.push(counts);
                return Ok(stats);
            }
        }
    }
}

/// Runs `reps` independent replications (seeds `seed ^ i`) on up to `jobs`
/// threads and returns them in replication order.
pub fn simulate_replications(
    model: &dyn RateModel,
    config: &SimConfig,
    reps: usize,
    jobs: usize,
) -> Result<Vec<TrajectoryStats>> {
    if reps == 0 {
        return Err(Error::InvalidParameter("need at least one replication".into()));
    }
    let jobs = jobs.max(1).min(reps);
    let mut results: Vec<Option<Result<TrajectoryStats>>> = (0..reps).map(|_| None).collect();
    std::thread::scope(|scope| {
        let chunks: Vec<&mut [Option<Result<TrajectoryStats>>]> =
            chunk_mut(&mut results, jobs.max(1));
        let mut offset = 0usize;
        for chunk in chunks {
            let start = offset;
            offset += chunk.len();
            let cfg = config.clone();
            scope.spawn(move || {
                for (k, slot) in chunk.iter_mut().enumerate() {
                    let mut c = cfg.clone();
                    c.seed = cfg.seed ^ (start + k) as u64;
                    *slot = Some(simulate(model, &c));
                }
            });
        }
    });
    results
        .into_iter()
        .map(|slot| slot.expect("every replication slot is filled"))
        .collect()
}

fn chunk_mut<T>(slice: &mut [T], parts: usize) -> Vec<&mut [T]> {
    let len = slice.len();
    let base = len / parts;
    let extra = len % parts;
    let mut out = Vec::with_capacity(parts);
    let mut rest = slice;
    for i in 0..parts {
        let take = base + usize::from(i < extra);
        let (head, tail) = rest.split_at_mut(take.min(rest.len()));
        if !head.is_empty() {
            out.push(head);
        }
        rest = tail;
    }
    out
}

/// Trend of the total population across a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GrowthVerdict {
    Growing,
    Shrinking,
    Bounded,
}

/// Classifies the trajectory by least-squares slopes of the total count
/// over `windows` equal segments of the checkpoint list: growing (or
/// shrinking) needs a slope exceeding four standard errors in at least
/// three quarters of the windows.
pub fn detect_growth(stats: &TrajectoryStats, windows: usize) -> Result<GrowthVerdict> {
    if windows == 0 {
        return Err(Error::InvalidParameter("need at least one window".into()));
    }
    let points: Vec<(f64, f64)> = stats
        .checkpoints
        .iter()
        .map(|(t, state)| (*t, state.iter().sum::<u64>() as f64))
        .collect();
    if points.len() < 4 * windows {
        return Err(Error::InsufficientData(format!(
            "{} checkpoints cannot fill {windows} windows of 4 points",
            points.len()
        )));
    }
    let mut up = 0usize;
    let mut down = 0usize;
    let per = points.len() / windows;
    for w in 0..windows {
        let lo = w * per;
        let hi = if w + 1 == windows {
            points.len()
        } else {
            lo + per
        };
        let seg = &points[lo..hi];
        let m = seg.len() as f64;
        let tbar = seg.iter().map(|p| p.0).sum::<f64>() / m;
        let ybar = seg.iter().map(|p| p.1).sum::<f64>() / m;
        let sxx: f64 = seg.iter().map(|p| (p.0 - tbar).powi(2)).sum();
        if sxx <= 0.0 {
            continue;
        }
        let sxy: f64 = seg.iter().map(|p| (p.0 - tbar) * (p.1 - ybar)).sum();
        let slope = sxy / sxx;
        let rss: f64 = seg
            .iter()
            .map(|p| (p.1 - ybar - slope * (p.0 - tbar)).powi(2))
            .sum();
        let se = (rss / (m - 2.0) / sxx).sqrt();
        if slope > 4.0 * se {
            up += 1;
        } else if slope < -4.0 * se {
            down += 1;
        }
    }
    let quorum = (3 * windows).div_ceil(4);
    if up >= quorum {
        Ok(GrowthVerdict::Growing)
    } else if down >= quorum {
        Ok(GrowthVerdict::Shrinking)
    } else {
        Ok(GrowthVerdict::Bounded)
    }
}

/// One class's long-run service average against its offered load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceLawRow {
    pub class: usize,
    pub avg_service: f64,
    pub se: f64,
    pub offered: f64,
    /// Allowance for the initial backlog draining through the window.
    pub drain_allowance: f64,
    pub ok: bool,
}

/// Checks the long-run service law: the time-average bandwidth of a class
/// can never exceed its offered load `nu/mu`, up to the initial backlog
/// and statistical noise. Violations point at accounting bugs, not at the
/// control.
pub fn service_law_check(
    stats: &TrajectoryStats,
    offered: &[f64],
    service_scale: &[f64],
    z: f64,
) -> Result<Vec<ServiceLawRow>> {
    if offered.len() != stats.dim || service_scale.len() != stats.dim {
        return Err(Error::DimensionMismatch(
            "offered-load vector disagrees with the statistics dimension".into(),
        ));
    }
    let mut rows = Vec::with_capacity(stats.dim);
    for r in 0..stats.dim {
        let est = stats.avg_service(r);
        let drain = stats.sum_initial[r] as f64 / (service_scale[r] * stats.total_time.max(1e-12));
        let slack = z * est.se + drain + 1e-9;
        rows.push(ServiceLawRow {
            class: r,
            avg_service: est.mean,
            se: est.se,
            offered: offered[r],
            drain_allowance: drain,
            ok: est.mean <= offered[r] + slack,
        });
    }
    Ok(rows)
}

/// Plan for the deterministic fluid integration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluidConfig {
    pub initial: Vec<f64>,
    pub dt: f64,
    pub horizon: f64,
}

/// Euler path of `dx/dt = nu - mu * b(x)`, clipped at zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluidPath {
    /// Thinned samples, always including the final state.
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// First time the total population reached (numerical) zero.
    pub drain_time: Option<f64>,
    /// Largest total population seen after the drain, if any.
    pub peak_after_drain: f64,
}

/// Integrates the fluid dynamics of a control.
pub fn fluid_integrate(
    spec: &NetworkSpec,
    law: &dyn ControlLaw,
    config: &FluidConfig,
) -> Result<FluidPath> {
    let dim = spec.num_types();
    if config.initial.len() != dim {
        return Err(Error::DimensionMismatch(format!(
            "initial fluid state of dimension {} for {} types",
            config.initial.len(),
            dim
        )));
    }
    if config.initial.iter().any(|&v| !v.is_finite() || v < 0.0) {
        return Err(Error::InvalidParameter(
            "fluid initial state must be finite and non-negative".into(),
        ));
    }
    if !(config.dt > 0.0) || !(config.horizon > config.dt) {
        return Err(Error::InvalidParameter(
            "need 0 < dt < horizon for fluid integration".into(),
        ));
    }
    let steps = (config.horizon / config.dt).ceil() as u64;
    if steps > 20_000_000 {
        return Err(Error::ScanTooLarge(format!(
            "fluid integration would take {steps} steps"
        )));
    }
    let stride = (steps / 4096).max(1);
    let mut x = config.initial.clone();
    let mut path = FluidPath {
        times: vec![0.0],
        states: vec![x.clone()],
        drain_time: None,
        peak_after_drain: 0.0,
    };
    for step in 1..=steps {
        let b = law.allocate(&x)?;
        for r in 0..dim {
            x[r] = (x[r] + config.dt * (spec.nu()[r] - spec.mu()[r] * b[r])).max(0.0);
        }
        let t = step as f64 * config.dt;
        let total: f64 = x.iter().sum();
        if path.drain_time.is_none() && total <= 1e-9 {
            path.drain_time = Some(t);
        }
        if path.drain_time.is_some() {
            path.peak_after_drain = path.peak_after_drain.max(total);
        }
        if step % stride == 0 || step == steps {
            path.times.push(t);
            path.states.push(x.clone());
        }
    }
    Ok(path)
}
