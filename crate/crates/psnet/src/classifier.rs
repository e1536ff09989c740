//! Stability classification of monotone controls by chain reduction.
//!
//! The central object is the reduced chain: pick a subset `S` of classes,
//! pin every other class at infinity, and let the kept coordinates evolve
//! under the limiting allocation. [`SubsetControl`] computes those limits
//! numerically from any [`ControlLaw`]:
//!
//! * [`SubsetControl::rates_in`]: the joint limit of `b[r]`, `r` in `S`,
//!   as all pinned coordinates grow together;
//! * [`SubsetControl::rate_out`]: the iterated limit of `b[r]` for a pinned
//!   class `r`: first the other pinned coordinates grow, then `n[r]` does.
//!   The order matters and is part of the definition.
//!
//! For a monotone control (own coordinate raises your bandwidth, other
//! coordinates lower it) stability is decided by a recursion: starting from
//! `S` empty, a class `r` outside `S` can be added when its limiting
//! service rate under the stationary law of the `S`-reduced chain exceeds
//! its offered load, `E[b^S_r] > nu_r / mu_r`. If every class joins, the
//! network is stable; if some class's limiting rate falls strictly below
//! its offered load, it is unstable. [`classify`] runs the recursion for a
//! fixed processing order, [`classify_search_orders`] tries all orders, and
//! [`critical_threshold`] bisects a parametric family for the boundary.
//!
//! Stationary laws of reduced chains come either from exact truncated
//! solves ([`StationaryMethod::Matrix`]: a birth-death product form in one
//! dimension, uniformised power iteration in several) or from simulation
//! with batch-means errors ([`StationaryMethod::Simulation`]). Verdicts are
//! banded: the comparison must clear `z` standard errors plus a small
//! absolute tolerance, otherwise the step is indeterminate.

use crate::control::ControlLaw;
use crate::error::{Error, Result};
use crate::net::NetworkSpec;
use crate::sim::{
    detect_growth, simulate_replications, Estimate, GrowthVerdict, RateModel, SimConfig,
    TrajectoryStats,
};
use itertools::Itertools;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::sync::{Arc, Mutex};

/// Cap on truncated matrix solves, in states.
const MATRIX_CAP: usize = 100_000;
/// Stationary mass on significance below which a state is skipped when
/// integrating limiting rates.
const PI_FLOOR: f64 = 1e-12;

/// How numeric limits are swept.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitParams {
    /// First pin level.
    #[serde(default = "default_n_inf")]
    pub n_inf: u64,
    /// Geometric growth factor between sweeps.
    #[serde(default = "default_growth")]
    pub growth: u64,
    /// Agreement tolerance between consecutive sweeps.
    #[serde(default = "default_limit_tol")]
    pub tol: f64,
    /// Sweeps tried before giving up.
    #[serde(default = "default_max_sweeps")]
    pub max_sweeps: usize,
}

fn default_n_inf() -> u64 {
    64
}
fn default_growth() -> u64 {
    4
}
fn default_limit_tol() -> f64 {
    1e-9
}
fn default_max_sweeps() -> usize {
    6
}

impl Default for LimitParams {
    fn default() -> Self {
        Self {
            n_inf: default_n_inf(),
            growth: default_growth(),
            tol: default_limit_tol(),
            max_sweeps: default_max_sweeps(),
        }
    }
}

impl LimitParams {
    fn validate(&self) -> Result<()> {
        if self.n_inf == 0 || self.growth < 2 || self.max_sweeps == 0 {
            return Err(Error::InvalidParameter(
                "limit sweeps need n_inf >= 1, growth >= 2, max_sweeps >= 1".into(),
            ));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidParameter(
                "limit tolerance must be positive".into(),
            ));
        }
        Ok(())
    }

    fn level(&self, sweep: usize) -> u64 {
        self.n_inf.saturating_mul(self.growth.saturating_pow(sweep as u32))
    }

    /// Ladder for an inner limit: starts above `floor` so the swept
    /// coordinates dwarf the one held fixed.
    fn level_above(&self, floor: u64, sweep: usize) -> u64 {
        self.n_inf
            .max(floor.saturating_mul(self.growth))
            .saturating_mul(self.growth.saturating_pow(sweep as u32))
    }
}

/// A control with part of the state pinned at infinity.
pub struct SubsetControl {
    spec: Arc<NetworkSpec>,
    law: Arc<dyn ControlLaw>,
    subset: Vec<usize>,
    out: Vec<usize>,
    params: LimitParams,
    in_cache: Mutex<HashMap<Vec<u64>, Vec<f64>>>,
    out_cache: Mutex<HashMap<(Vec<u64>, usize), f64>>,
}

impl SubsetControl {
    pub fn new(
        spec: &NetworkSpec,
        law: Arc<dyn ControlLaw>,
        subset: &[usize],
        params: LimitParams,
    ) -> Result<Self> {
        params.validate()?;
        let num_types = spec.num_types();
        let mut seen = vec![false; num_types];
        for &r in subset {
            if r >= num_types {
                return Err(Error::IndexOutOfRange(format!(
                    "class {r} in subset, network has {num_types} classes"
                )));
            }
            if seen[r] {
                return Err(Error::InvalidParameter(format!(
                    "class {r} repeated in subset"
                )));
            }
            seen[r] = true;
        }
        let mut subset = subset.to_vec();
        subset.sort_unstable();
        let out: Vec<usize> = (0..num_types).filter(|r| !seen[*r]).collect();
        Ok(Self {
            spec: Arc::new(spec.clone()),
            law,
            subset,
            out,
            params,
            in_cache: Mutex::new(HashMap::new()),
            out_cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn subset(&self) -> &[usize] {
        &self.subset
    }

    pub fn out_classes(&self) -> &[usize] {
        &self.out
    }

    pub fn params(&self) -> LimitParams {
        self.params
    }

    fn full_state(&self, n_sub: &[u64], pins: &[(usize, u64)]) -> Vec<f64> {
        let mut full = vec![0.0; self.spec.num_types()];
        for (i, &r) in self.subset.iter().enumerate() {
            full[r] = n_sub[i] as f64;
        }
        for &(r, level) in pins {
            full[r] = level as f64;
        }
        full
    }

    /// Limiting allocation of the kept classes at finite part `n_sub`: all
    /// pinned coordinates grow together until consecutive sweeps agree.
    pub fn rates_in(&self, n_sub: &[u64]) -> Result<Vec<f64>> {
        if n_sub.len() != self.subset.len() {
            return Err(Error::DimensionMismatch(format!(
                "reduced state of dimension {} for a subset of {}",
                n_sub.len(),
                self.subset.len()
            )));
        }
        if let Some(hit) = self.in_cache.lock().unwrap().get(n_sub) {
            return Ok(hit.clone());
        }
        let value = if self.out.is_empty() {
            let full = self.full_state(n_sub, &[]);
            let b = self.law.allocate(&full)?;
            self.subset.iter().map(|&r| b[r]).collect()
        } else {
            let mut prev: Option<Vec<f64>> = None;
            let mut found = None;
            for sweep in 0..=self.params.max_sweeps {
                let level = self.params.level(sweep);
                let pins: Vec<(usize, u64)> = self.out.iter().map(|&r| (r, level)).collect();
                let b = self.law.allocate(&self.full_state(n_sub, &pins))?;
                let now: Vec<f64> = self.subset.iter().map(|&r| b[r]).collect();
                if let Some(p) = &prev {
                    let gap = p
                        .iter()
                        .zip(&now)
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0, f64::max);
                    if gap <= self.params.tol {
                        found = Some(now.clone());
                        break;
                    }
                }
                prev = Some(now);
            }
            found.ok_or_else(|| Error::LimitUnresolved {
                horizon: self.params.level(self.params.max_sweeps),
                context: format!(
                    "joint limit of classes {:?} at reduced state {:?}",
                    self.subset, n_sub
                ),
            })?
        };
        self.in_cache
            .lock()
            .unwrap()
            .insert(n_sub.to_vec(), value.clone());
        Ok(value)
    }

    /// Iterated limiting rate of a pinned class `r` at finite part `n_sub`:
    /// the other pinned coordinates grow first, then `n[r]` does. The
    /// iteration order is part of the definition and differs from the joint
    /// limit for controls that compare pinned coordinates with each other.
    pub fn rate_out(&self, n_sub: &[u64], r: usize) -> Result<f64> {
        if n_sub.len() != self.subset.len() {
            return Err(Error::DimensionMismatch(format!(
                "reduced state of dimension {} for a subset of {}",
                n_sub.len(),
                self.subset.len()
            )));
        }
        if !self.out.contains(&r) {
            return Err(Error::InvalidParameter(format!(
                "class {r} is not pinned in this reduction"
            )));
        }
        let key = (n_sub.to_vec(), r);
        if let Some(&hit) = self.out_cache.lock().unwrap().get(&key) {
            return Ok(hit);
        }
        let others: Vec<usize> = self.out.iter().cloned().filter(|&s| s != r).collect();
        let inner = |own_level: u64| -> Result<f64> {
            if others.is_empty() {
                let pins = vec![(r, own_level)];
                let b = self.law.allocate(&self.full_state(n_sub, &pins))?;
                return Ok(b[r]);
            }
            let mut prev: Option<f64> = None;
            for sweep in 0..=self.params.max_sweeps {
                let level = self.params.level_above(own_level, sweep);
                let mut pins: Vec<(usize, u64)> =
                    others.iter().map(|&s| (s, level)).collect();
                pins.push((r, own_level));
                let b = self.law.allocate(&self.full_state(n_sub, &pins))?;
                if let Some(p) = prev {
                    if (p - b[r]).abs() <= self.params.tol {
                        return Ok(b[r]);
                    }
                }
                prev = Some(b[r]);
            }
            Err(Error::LimitUnresolved {
                horizon: self.params.level_above(own_level, self.params.max_sweeps),
                context: format!(
                    "inner limit for class {r} at reduced state {n_sub:?}, own level {own_level}"
                ),
            })
        };
        let mut prev: Option<f64> = None;
        let mut found = None;
        for sweep in 0..=self.params.max_sweeps {
            let own = self.params.level(sweep);
            let v = inner(own)?;
            if let Some(p) = prev {
                if (p - v).abs() <= self.params.tol {
                    found = Some(v);
                    break;
                }
            }
            prev = Some(v);
        }
        let value = found.ok_or_else(|| Error::LimitUnresolved {
            horizon: self.params.level(self.params.max_sweeps),
            context: format!("outer limit for class {r} at reduced state {n_sub:?}"),
        })?;
        self.out_cache.lock().unwrap().insert(key, value);
        Ok(value)
    }
}

/// The reduced chain as a simulatable model: kept classes keep their rates,
/// and every pinned class's limiting rate becomes an observable whose time
/// average estimates `E[b^S_r]`.
pub struct ReducedModel {
    sc: Arc<SubsetControl>,
    arrivals: Vec<f64>,
    scales: Vec<f64>,
}

impl ReducedModel {
    pub fn new(sc: Arc<SubsetControl>) -> Self {
        let arrivals = sc.subset.iter().map(|&r| sc.spec.nu()[r]).collect();
        let scales = sc.subset.iter().map(|&r| sc.spec.mu()[r]).collect();
        Self {
            sc,
            arrivals,
            scales,
        }
    }
}

impl RateModel for ReducedModel {
    fn dim(&self) -> usize {
        self.sc.subset.len()
    }

    fn arrivals(&self) -> &[f64] {
        &self.arrivals
    }

    fn service_scale(&self) -> &[f64] {
        &self.scales
    }

    fn allocations(&self, counts: &[u64]) -> Result<Vec<f64>> {
        self.sc.rates_in(counts)
    }

    fn observables(&self, counts: &[u64], _alloc: &[f64]) -> Result<Vec<f64>> {
        self.sc
            .out
            .iter()
            .map(|&r| self.sc.rate_out(counts, r))
            .collect()
    }

    fn num_observables(&self) -> usize {
        self.sc.out.len()
    }
}

/// How the stationary law of a reduced chain is computed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum StationaryMethod {
    /// Simulate the reduced chain; errors are batch-means. A growing run
    /// aborts with [`Error::ReducedChainUnstable`].
    Simulation {
        events: u64,
        #[serde(default = "default_reps")]
        reps: usize,
        seed: u64,
    },
    /// Exact solve on a truncated box: product form in one dimension,
    /// uniformised power iteration in several. `level_cap` bounds each
    /// coordinate; the box shrinks automatically to stay solvable, and the
    /// report carries the truncated boundary mass.
    Matrix { level_cap: u64 },
}

fn default_reps() -> usize {
    1
}

/// Stationary summary of one reduced chain.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StationaryReport {
    pub subset: Vec<usize>,
    /// `(pinned class, estimate of E[b^S_r])`, one row per pinned class.
    pub out_rates: Vec<(usize, Estimate)>,
    /// Stationary mass lost to truncation (matrix) or unattributed state
    /// mass (simulation overflow).
    pub truncation_mass: f64,
    pub growth: Option<GrowthVerdict>,
    pub method: String,
}

impl StationaryReport {
    pub fn rate_for(&self, class: usize) -> Option<Estimate> {
        self.out_rates
            .iter()
            .find(|(r, _)| *r == class)
            .map(|&(_, e)| e)
    }
}

/// Computes `E[b^S_r]` for every pinned class under the stationary law of
/// the `S`-reduced chain.
pub fn reduced_stationary(
    sc: &Arc<SubsetControl>,
    method: &StationaryMethod,
) -> Result<StationaryReport> {
    if sc.subset.is_empty() {
        // The empty reduction has a trivial point-mass law.
        let mut out_rates = Vec::new();
        for &r in &sc.out {
            let v = sc.rate_out(&[], r)?;
            out_rates.push((
                r,
                Estimate {
                    mean: v,
                    se: 0.0,
                    batches: 0,
                },
            ));
        }
        return Ok(StationaryReport {
            subset: Vec::new(),
            out_rates,
            truncation_mass: 0.0,
            growth: None,
            method: "point-mass".into(),
        });
    }
    match method {
        StationaryMethod::Simulation { events, reps, seed } => {
            let model = ReducedModel::new(sc.clone());
            let mut config = SimConfig::events(vec![0; sc.subset.len()], *events, *seed);
            config.seed = *seed;
            let runs = simulate_replications(&model, &config, (*reps).max(1), *reps)?;
            for run in &runs {
                if detect_growth(run, 8)? == GrowthVerdict::Growing {
                    return Err(Error::ReducedChainUnstable(format!(
                        "the {:?}-reduced chain grows; no stationary law to average over",
                        sc.subset
                    )));
                }
            }
            let merged = TrajectoryStats::merge_all(&runs)?;
            let out_rates = sc
                .out
                .iter()
                .enumerate()
                .map(|(k, &r)| (r, merged.avg_observable(k)))
                .collect();
            Ok(StationaryReport {
                subset: sc.subset.clone(),
                out_rates,
                truncation_mass: merged.joint_overflow / merged.total_time.max(1e-12),
                growth: Some(detect_growth(&runs[0], 8)?),
                method: format!("simulation({events} events x {reps})"),
            })
        }
        StationaryMethod::Matrix { level_cap } => {
            let (pi, states, truncation) = if sc.subset.len() == 1 {
                birth_death_stationary(sc, *level_cap)?
            } else {
                truncated_stationary(sc, *level_cap)?
            };
            let mut skipped = 0.0;
            let mut sums = vec![0.0; sc.out.len()];
            for (state, &mass) in states.iter().zip(&pi) {
                if mass <= PI_FLOOR {
                    skipped += mass;
                    continue;
                }
                for (k, &r) in sc.out.iter().enumerate() {
                    sums[k] += mass * sc.rate_out(state, r)?;
                }
            }
            let out_rates = sc
                .out
                .iter()
                .enumerate()
                .map(|(k, &r)| {
                    let bound = sc.spec.solo_capacity(r);
                    (
                        r,
                        Estimate {
                            mean: sums[k],
                            se: (truncation + skipped) * bound,
                            batches: 0,
                        },
                    )
                })
                .collect();
            Ok(StationaryReport {
                subset: sc.subset.clone(),
                out_rates,
                truncation_mass: truncation,
                growth: None,
                method: format!("matrix(level_cap {level_cap})"),
            })
        }
    }
}

/// Product-form stationary law of a one-dimensional reduced chain. Levels
/// below the highest zero-death level are transient and carry no mass.
fn birth_death_stationary(
    sc: &Arc<SubsetControl>,
    level_cap: u64,
) -> Result<(Vec<f64>, Vec<Vec<u64>>, f64)> {
    let cap = level_cap.min(MATRIX_CAP as u64 - 1);
    let class = sc.subset[0];
    let nu = sc.spec.nu()[class];
    let mu = sc.spec.mu()[class];
    let mut deaths = Vec::with_capacity(cap as usize + 1);
    for k in 0..=cap {
        let b = sc.rates_in(&[k])?;
        deaths.push(mu * b[0]);
    }
    let floor = (0..=cap as usize)
        .rev()
        .find(|&k| k == 0 || deaths[k] <= 1e-12)
        .unwrap_or(0);
    let rho_top = nu / deaths[cap as usize];
    if !rho_top.is_finite() || rho_top >= 1.0 - 1e-9 {
        return Err(Error::ReducedChainUnstable(format!(
            "death rate {:.6} at the truncation boundary does not dominate arrivals {:.6}",
            deaths[cap as usize], nu
        )));
    }
    // Log-domain product form from the floor upward.
    let mut logw = vec![f64::NEG_INFINITY; cap as usize + 1];
    logw[floor] = 0.0;
    for k in floor + 1..=cap as usize {
        logw[k] = logw[k - 1] + nu.ln() - deaths[k].ln();
    }
    let top = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logw
        .iter()
        .map(|&lw| if lw.is_finite() { (lw - top).exp() } else { 0.0 })
        .collect();
    let tail = weights[cap as usize] * rho_top / (1.0 - rho_top);
    let total: f64 = weights.iter().sum::<f64>() + tail;
    let truncation = tail / total;
    if truncation > 0.01 {
        return Err(Error::ReducedChainUnstable(format!(
            "truncated tail mass {truncation:.4} exceeds 1% at level {cap}"
        )));
    }
    let pi: Vec<f64> = weights.iter().map(|w| w / total).collect();
    let states: Vec<Vec<u64>> = (0..=cap).map(|k| vec![k]).collect();
    Ok((pi, states, truncation))
}

/// Uniformised power iteration on a censored box for reductions with two
/// or more kept classes.
fn truncated_stationary(
    sc: &Arc<SubsetControl>,
    level_cap: u64,
) -> Result<(Vec<f64>, Vec<Vec<u64>>, f64)> {
    let d = sc.subset.len();
    let auto = (MATRIX_CAP as f64).powf(1.0 / d as f64).floor() as u64 - 1;
    let cap = level_cap.min(auto);
    if cap < 8 {
        return Err(Error::ScanTooLarge(format!(
            "a {d}-dimensional truncated solve cannot afford even 8 levels per coordinate"
        )));
    }
    let side = cap as usize + 1;
    let total = side.pow(d as u32);
    let mut strides = vec![1usize; d];
    for i in 1..d {
        strides[i] = strides[i - 1] * side;
    }
    let nu: Vec<f64> = sc.subset.iter().map(|&r| sc.spec.nu()[r]).collect();
    let mu: Vec<f64> = sc.subset.iter().map(|&r| sc.spec.mu()[r]).collect();

    // Death rates per state, plus the uniformisation constant.
    let mut deaths = vec![0.0f64; total * d];
    let mut lambda: f64 = 0.0;
    let mut counts = vec![0u64; d];
    for idx in 0..total {
        let b = sc.rates_in(&counts)?;
        let mut outflow: f64 = 0.0;
        for i in 0..d {
            let rate = if counts[i] > 0 { mu[i] * b[i] } else { 0.0 };
            deaths[idx * d + i] = rate;
            outflow += rate;
            if counts[i] < cap {
                outflow += nu[i];
            }
        }
        lambda = lambda.max(outflow);
        // Odometer.
        for i in 0..d {
            if counts[i] < cap {
                counts[i] += 1;
                break;
            }
            counts[i] = 0;
        }
    }
    lambda = lambda * 1.001 + 1e-9;

    let mut pi = vec![1.0 / total as f64; total];
    let mut next = vec![0.0f64; total];
    let mut converged = false;
    for _ in 0..100_000 {
        next.iter_mut().for_each(|v| *v = 0.0);
        let mut counts = vec![0u64; d];
        for idx in 0..total {
            let mass = pi[idx];
            if mass > 0.0 {
                let mut stay = mass;
                for i in 0..d {
                    if counts[i] < cap {
                        let p = nu[i] / lambda * mass;
                        next[idx + strides[i]] += p;
                        stay -= p;
                    }
                    let death = deaths[idx * d + i];
                    if death > 0.0 {
                        let p = death / lambda * mass;
                        next[idx - strides[i]] += p;
                        stay -= p;
                    }
                }
                next[idx] += stay;
            }
            for i in 0..d {
                if counts[i] < cap {
                    counts[i] += 1;
                    break;
                }
                counts[i] = 0;
            }
        }
        let delta = pi
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        std::mem::swap(&mut pi, &mut next);
        if delta < 1e-13 {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::SolverFailure(
            "power iteration did not converge on the truncated box".into(),
        ));
    }

    // Boundary shell mass measures what the censoring distorted.
    let mut boundary = 0.0;
    let mut states = Vec::with_capacity(total);
    let mut counts = vec![0u64; d];
    for idx in 0..total {
        if counts.iter().any(|&v| v == cap) {
            boundary += pi[idx];
        }
        states.push(counts.clone());
        for i in 0..d {
            if counts[i] < cap {
                counts[i] += 1;
                break;
            }
            counts[i] = 0;
        }
    }
    if boundary > 0.01 {
        return Err(Error::ReducedChainUnstable(format!(
            "boundary mass {boundary:.4} exceeds 1% on the {cap}-level box"
        )));
    }
    Ok((pi, states, boundary))
}

/// Outcome of one recursion step or of the whole classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Stable,
    Unstable,
    Indeterminate,
}

/// Banded comparison of a limiting service rate against an offered load:
/// the gap must clear `z` standard errors plus a `1e-9` absolute margin.
pub fn recursion_step(expected: f64, se: f64, offered: f64, z: f64) -> Verdict {
    if !expected.is_finite() || !se.is_finite() {
        return Verdict::Indeterminate;
    }
    let band = (z * se).max(1e-9);
    if expected - offered > band {
        Verdict::Stable
    } else if offered - expected > band {
        Verdict::Unstable
    } else {
        Verdict::Indeterminate
    }
}

/// Plan for [`classify`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifyParams {
    /// Partition of all classes in processing order. Singleton stages run
    /// the banded recursion step; multi-class stages are promoted together
    /// when their joint reduced chain is empirically stable.
    pub stages: Vec<Vec<usize>>,
    #[serde(default)]
    pub limit: LimitParams,
    pub method: StationaryMethod,
    /// Error-band width in standard errors.
    #[serde(default = "default_z")]
    pub z: f64,
}

fn default_z() -> f64 {
    3.0
}

impl ClassifyParams {
    pub fn singleton_order(order: &[usize], method: StationaryMethod) -> Self {
        Self {
            stages: order.iter().map(|&r| vec![r]).collect(),
            limit: LimitParams::default(),
            method,
            z: default_z(),
        }
    }

    fn validate(&self, num_types: usize) -> Result<()> {
        self.limit.validate()?;
        if !(self.z > 0.0) {
            return Err(Error::InvalidParameter("z must be positive".into()));
        }
        let mut seen = vec![false; num_types];
        for stage in &self.stages {
            if stage.is_empty() {
                return Err(Error::InvalidParameter("empty classification stage".into()));
            }
            for &r in stage {
                if r >= num_types {
                    return Err(Error::IndexOutOfRange(format!(
                        "class {r} in stages, network has {num_types} classes"
                    )));
                }
                if seen[r] {
                    return Err(Error::InvalidParameter(format!(
                        "class {r} appears in more than one stage"
                    )));
                }
                seen[r] = true;
            }
        }
        if let Some(r) = seen.iter().position(|&s| !s) {
            return Err(Error::InvalidParameter(format!(
                "class {r} is missing from the stages"
            )));
        }
        Ok(())
    }
}

/// One stage of the recursion trace.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: Vec<usize>,
    pub subset_before: Vec<usize>,
    /// Estimated limiting service rate (singleton stages only).
    pub expected_rate: Option<Estimate>,
    /// Offered load of the candidate class (singleton stages only).
    pub offered: Option<f64>,
    pub verdict: Verdict,
    pub note: String,
}

/// Full recursion outcome.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Classification {
    pub verdict: Verdict,
    pub stages: Vec<StageReport>,
}

fn stage_method(method: &StationaryMethod, stage_idx: usize) -> StationaryMethod {
    match method {
        StationaryMethod::Simulation { events, reps, seed } => StationaryMethod::Simulation {
            events: *events,
            reps: *reps,
            seed: seed ^ 0x9E37_79B9_7F4A_7C15u64.wrapping_mul(stage_idx as u64 + 1),
        },
        m @ StationaryMethod::Matrix { .. } => m.clone(),
    }
}

/// Runs the stability recursion in the given stage order.
///
/// Singleton stages compare the class's limiting stationary service rate
/// against its offered load with a `z`-standard-error band; the first
/// unstable or indeterminate stage stops the recursion. A multi-class
/// stage is promoted when its joint reduced chain simulates as
/// non-growing, which is an empirical extension recorded in the trace.
pub fn classify(
    spec: &NetworkSpec,
    law: Arc<dyn ControlLaw>,
    params: &ClassifyParams,
) -> Result<Classification> {
    params.validate(spec.num_types())?;
    let mut kept: Vec<usize> = Vec::new();
    let mut stages = Vec::new();
    for (idx, stage) in params.stages.iter().enumerate() {
        let method = stage_method(&params.method, idx);
        if stage.len() == 1 {
            let r = stage[0];
            let sc = Arc::new(SubsetControl::new(spec, law.clone(), &kept, params.limit)?);
            let report = reduced_stationary(&sc, &method);
            let (est, verdict, note) = match report {
                Ok(rep) => {
                    let est = rep.rate_for(r).expect("pinned class has a rate row");
                    let verdict = recursion_step(est.mean, est.se, spec.kappa(r), params.z);
                    (Some(est), verdict, format!("{} via {}", verdict_word(verdict), rep.method))
                }
                Err(Error::ReducedChainUnstable(msg)) => (
                    None,
                    Verdict::Unstable,
                    format!("reduced chain refused a stationary law: {msg}"),
                ),
                Err(e) => return Err(e),
            };
            let stage_report = StageReport {
                stage: stage.clone(),
                subset_before: kept.clone(),
                expected_rate: est,
                offered: Some(spec.kappa(r)),
                verdict,
                note,
            };
            let stop = verdict != Verdict::Stable;
            stages.push(stage_report);
            if stop {
                return Ok(Classification { verdict, stages });
            }
            kept.push(r);
            kept.sort_unstable();
        } else {
            // Group promotion: the joint reduced chain over the kept set
            // plus the group must hold a stationary law empirically.
            let mut joint = kept.clone();
            joint.extend_from_slice(stage);
            let sc = Arc::new(SubsetControl::new(spec, law.clone(), &joint, params.limit)?);
            let group_method = match &method {
                m @ StationaryMethod::Simulation { .. } => m.clone(),
                m @ StationaryMethod::Matrix { .. } => m.clone(),
            };
            let outcome = reduced_stationary(&sc, &group_method);
            match outcome {
                Ok(rep) => {
                    stages.push(StageReport {
                        stage: stage.clone(),
                        subset_before: kept.clone(),
                        expected_rate: None,
                        offered: None,
                        verdict: Verdict::Stable,
                        note: format!(
                            "group promoted empirically: joint reduced chain holds a stationary law ({})",
                            rep.method
                        ),
                    });
                    kept = joint;
                    kept.sort_unstable();
                }
                Err(Error::ReducedChainUnstable(msg)) => {
                    stages.push(StageReport {
                        stage: stage.clone(),
                        subset_before: kept.clone(),
                        expected_rate: None,
                        offered: None,
                        verdict: Verdict::Unstable,
                        note: format!("group reduced chain grew: {msg}"),
                    });
                    return Ok(Classification {
                        verdict: Verdict::Unstable,
                        stages,
                    });
                }
                Err(e) => return Err(e),
            }
        }
    }
    Ok(Classification {
        verdict: Verdict::Stable,
        stages,
    })
}

fn verdict_word(v: Verdict) -> &'static str {
    match v {
        Verdict::Stable => "stable",
        Verdict::Unstable => "unstable",
        Verdict::Indeterminate => "indeterminate",
    }
}

/// One tried order in an order search.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OrderOutcome {
    pub order: Vec<usize>,
    pub verdict: Option<Verdict>,
    pub note: String,
}

/// Outcome of trying every processing order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OrderSearch {
    pub verdict: Verdict,
    pub tried: Vec<OrderOutcome>,
    pub best: Option<Classification>,
}

/// Tries every singleton order (up to 5 classes) and combines: stable if
/// some order certifies stability, unstable if every order lands unstable,
/// indeterminate otherwise. Orders that fail with unresolved limits are
/// recorded and treated as indeterminate.
pub fn classify_search_orders(
    spec: &NetworkSpec,
    law: Arc<dyn ControlLaw>,
    template: &ClassifyParams,
) -> Result<OrderSearch> {
    let num_types = spec.num_types();
    if num_types > 5 {
        return Err(Error::ScanTooLarge(format!(
            "order search over {num_types} classes would try {} orders",
            (1..=num_types).product::<usize>()
        )));
    }
    let mut tried = Vec::new();
    let mut best = None;
    let mut any_non_unstable = false;
    for order in (0..num_types).permutations(num_types) {
        let mut params = template.clone();
        params.stages = order.iter().map(|&r| vec![r]).collect();
        match classify(spec, law.clone(), &params) {
            Ok(c) => {
                let verdict = c.verdict;
                tried.push(OrderOutcome {
                    order: order.clone(),
                    verdict: Some(verdict),
                    note: String::new(),
                });
                if verdict == Verdict::Stable {
                    return Ok(OrderSearch {
                        verdict: Verdict::Stable,
                        tried,
                        best: Some(c),
                    });
                }
                if verdict != Verdict::Unstable {
                    any_non_unstable = true;
                }
                if best.is_none() {
                    best = Some(c);
                }
            }
            Err(e @ (Error::LimitUnresolved { .. } | Error::ScanTooLarge(_))) => {
                any_non_unstable = true;
                tried.push(OrderOutcome {
                    order: order.clone(),
                    verdict: None,
                    note: e.to_string(),
                });
            }
            Err(e) => return Err(e),
        }
    }
    Ok(OrderSearch {
        verdict: if any_non_unstable {
            Verdict::Indeterminate
        } else {
            Verdict::Unstable
        },
        tried,
        best,
    })
}

/// One probe of a parametric family.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeOutcome {
    pub theta: f64,
    pub verdict: Verdict,
}

/// Bracket refinement for the stability boundary of a family.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThresholdSearch {
    /// Largest parameter that classified stable.
    pub lo: f64,
    /// Smallest parameter that classified unstable.
    pub hi: f64,
    /// Midpoint of the final bracket.
    pub critical: f64,
    pub probes: Vec<ProbeOutcome>,
    /// True when the bisection stopped on an indeterminate midpoint: the
    /// reported critical value then sits inside the statistical band.
    pub collapsed_indeterminate: bool,
}

/// Bisects `family(theta)` between a stable `bracket.0` and an unstable
/// `bracket.1`. Every probe runs the full recursion with deterministic
/// per-probe seeds; an indeterminate midpoint ends the search at that
/// point, since finer brackets cannot beat the statistical resolution.
pub fn critical_threshold<F>(
    family: F,
    params: &ClassifyParams,
    bracket: (f64, f64),
    tol: f64,
    budget: usize,
) -> Result<ThresholdSearch>
where
    F: Fn(f64) -> Result<(NetworkSpec, Arc<dyn ControlLaw>)>,
{
    if !(bracket.0 < bracket.1) {
        return Err(Error::InvalidParameter(
            "bracket must satisfy lo < hi".into(),
        ));
    }
    if !(tol > 0.0) || budget < 2 {
        return Err(Error::InvalidParameter(
            "need a positive tolerance and at least two probes".into(),
        ));
    }
    let mut probes = Vec::new();
    let probe = |theta: f64, idx: usize, probes: &mut Vec<ProbeOutcome>| -> Result<Verdict> {
        let (spec, law) = family(theta)?;
        let mut p = params.clone();
        p.method = stage_method(&params.method, 1000 + idx);
        let verdict = classify(&spec, law, &p)?.verdict;
        probes.push(ProbeOutcome { theta, verdict });
        Ok(verdict)
    };
    let lo_v = probe(bracket.0, 0, &mut probes)?;
    let hi_v = probe(bracket.1, 1, &mut probes)?;
    if lo_v != Verdict::Stable || hi_v != Verdict::Unstable {
        return Err(Error::NonMonotoneVerdicts(format!(
            "bracket ends classify as {lo_v:?} / {hi_v:?}; need stable at {} and unstable at {}",
            bracket.0, bracket.1
        )));
    }
    let (mut lo, mut hi) = bracket;
    let mut collapsed = false;
    let mut idx = 2;
    while hi - lo > tol && idx < budget {
        let mid = 0.5 * (lo + hi);
        match probe(mid, idx, &mut probes)? {
            Verdict::Stable => lo = mid,
            Verdict::Unstable => hi = mid,
            Verdict::Indeterminate => {
                collapsed = true;
                break;
            }
        }
        idx += 1;
    }
    Ok(ThresholdSearch {
        lo,
        hi,
        critical: 0.5 * (lo + hi),
        probes,
        collapsed_indeterminate: collapsed,
    })
}

/// One broken monotonicity relation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotoneViolation {
    pub state: Vec<u64>,
    /// Coordinate that was incremented.
    pub direction: usize,
    /// Class whose bandwidth moved the wrong way.
    pub class: usize,
    pub before: f64,
    pub after: f64,
}

/// Outcome of a monotonicity scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotoneReport {
    pub monotone: bool,
    pub checked_pairs: u64,
    /// At most 1000 violations, scan order.
    pub violations: Vec<MonotoneViolation>,
}

/// Checks the monotone-control property on a box: raising a class's own
/// count must not lower its bandwidth, and raising another class's count
/// must not raise it.
pub fn check_monotone(
    law: &dyn ControlLaw,
    spec: &NetworkSpec,
    bounds: &[u64],
    tol: f64,
) -> Result<MonotoneReport> {
    let d = spec.num_types();
    if bounds.len() != d {
        return Err(Error::DimensionMismatch(format!(
            "bounds of dimension {} for {} types",
            bounds.len(),
            d
        )));
    }
    if !(tol >= 0.0) {
        return Err(Error::InvalidParameter("tolerance must be non-negative".into()));
    }
    let total: u128 = bounds.iter().map(|&b| b as u128 + 1).product();
    if total.saturating_mul(d as u128) > 2_000_000 {
        return Err(Error::ScanTooLarge(format!(
            "monotonicity scan would evaluate {} state pairs",
            total * d as u128
        )));
    }
    let mut report = MonotoneReport {
        monotone: true,
        checked_pairs: 0,
        violations: Vec::new(),
    };
    let mut counts = vec![0u64; d];
    loop {
        let here: Vec<f64> = counts.iter().map(|&v| v as f64).collect();
        let b_here = law.allocate(&here)?;
        for s in 0..d {
            if counts[s] >= bounds[s] {
                continue;
            }
            let mut bumped = here.clone();
            bumped[s] += 1.0;
            let b_bump = law.allocate(&bumped)?;
            report.checked_pairs += 1;
            for r in 0..d {
                let broken = if r == s {
                    b_bump[r] < b_here[r] - tol
                } else {
                    b_bump[r] > b_here[r] + tol
                };
                if broken {
                    report.monotone = false;
                    if report.violations.len() < 1000 {
                        report.violations.push(MonotoneViolation {
                            state: counts.clone(),
                            direction: s,
                            class: r,
                            before: b_here[r],
                            after: b_bump[r],
                        });
                    }
                }
            }
        }
        let mut i = 0;
        loop {
            if i == d {
                return Ok(report);
            }
            if counts[i] < bounds[i] {
                counts[i] += 1;
                break;
            }
            counts[i] = 0;
            i += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::{threshold_modify, ControlSpec, ThresholdFamily, WithinLevel};

    fn nested_pair() -> NetworkSpec {
        NetworkSpec::new(
            vec![vec![1, 1], vec![0, 1]],
            vec![1.0, 1.0],
            vec![0.5, 0.3],
            vec![1.0, 1.0],
        )
        .unwrap()
    }

    fn cyclic_trio(c: f64, nu: f64) -> NetworkSpec {
        NetworkSpec::new(
            vec![vec![0, 1, 1], vec![1, 0, 1], vec![1, 1, 0]],
            vec![c; 3],
            vec![nu; 3],
            vec![1.0; 3],
        )
        .unwrap()
    }

    fn law(spec: &NetworkSpec, control: &ControlSpec) -> Arc<dyn ControlLaw> {
        Arc::new(control.compile(spec).unwrap())
    }

    #[test]
    fn limits_of_the_priority_pair() {
        let spec = nested_pair();
        let control = law(&spec, &ControlSpec::priority(vec![vec![0], vec![1]]));
        // Everything pinned: the prioritised class keeps full service.
        let sc = SubsetControl::new(&spec, control.clone(), &[], LimitParams::default()).unwrap();
        assert_eq!(sc.rate_out(&[], 0).unwrap(), 1.0);
        assert_eq!(sc.rate_out(&[], 1).unwrap(), 0.0);
        // Class 0 kept: its own rates, and class 1's rate per level.
        let sc =
            SubsetControl::new(&spec, control, &[0], LimitParams::default()).unwrap();
        assert_eq!(sc.rates_in(&[3]).unwrap(), vec![1.0]);
        assert_eq!(sc.rates_in(&[0]).unwrap(), vec![0.0]);
        assert_eq!(sc.rate_out(&[0], 1).unwrap(), 1.0);
        assert_eq!(sc.rate_out(&[2], 1).unwrap(), 0.0);
    }

    #[test]
    fn iterated_limit_differs_from_the_joint_limit() {
        // b[1] answers whether its own queue at least matches class 2's.
        // Growing both together keeps the indicator at 1; growing class 2
        // first (the defined iteration order) collapses it to 0.
        struct Comparator;
        impl ControlLaw for Comparator {
            fn allocate(&self, n: &[f64]) -> Result<Vec<f64>> {
                Ok(vec![
                    if n[0] > 0.0 { 1.0 } else { 0.0 },
                    if n[1] > 0.0 && n[1] >= n[2] { 1.0 } else { 0.0 },
                    if n[2] > 0.0 { 0.5 } else { 0.0 },
                ])
            }
        }
        let spec = NetworkSpec::new(
            vec![vec![1, 1, 1]],
            vec![10.0],
            vec![0.1; 3],
            vec![1.0; 3],
        )
        .unwrap();
        let sc =
            SubsetControl::new(&spec, Arc::new(Comparator), &[], LimitParams::default()).unwrap();
        assert_eq!(sc.rate_out(&[], 1).unwrap(), 0.0);
        // The joint sweep would have reported 1: pin both at equal levels.
        let joint = Comparator.allocate(&[64.0, 64.0, 64.0]).unwrap();
        assert_eq!(joint[1], 1.0);
    }

    #[test]
    fn fair_sharing_leaves_the_limit_unresolved() {
        // Proportional fairness is scale invariant: pinned coordinates
        // keep a vanishing but never-settling share, so the sweep cannot
        // certify a limit.
        let spec = NetworkSpec::new(
            vec![vec![1, 1], vec![1, 0], vec![0, 1]],
            vec![1.0, 1.0, 1.0],
            vec![0.3, 0.3],
            vec![1.0, 1.0],
        )
        .unwrap();
        let control = law(
            &spec,
            &ControlSpec::AlphaFair {
                alpha: crate::fairshare::Alpha::Finite(1.0),
                weights: vec![1.0, 1.0],
                tol: 1e-8,
            },
        );
        let sc = SubsetControl::new(&spec, control, &[0], LimitParams::default()).unwrap();
        assert!(matches!(
            sc.rates_in(&[3]),
            Err(Error::LimitUnresolved { .. })
        ));
    }

    #[test]
    fn recursion_step_bands() {
        assert_eq!(recursion_step(0.5, 0.0, 0.3, 3.0), Verdict::Stable);
        assert_eq!(recursion_step(0.2, 0.0, 0.3, 3.0), Verdict::Unstable);
        assert_eq!(recursion_step(0.3, 0.0, 0.3, 3.0), Verdict::Indeterminate);
        // Wide error bands swallow the gap.
        assert_eq!(recursion_step(0.5, 0.1, 0.3, 3.0), Verdict::Indeterminate);
        assert_eq!(recursion_step(0.5, 0.01, 0.3, 3.0), Verdict::Stable);
        assert_eq!(
            recursion_step(f64::NAN, 0.0, 0.3, 3.0),
            Verdict::Indeterminate
        );
    }

    #[test]
    fn priority_pair_classifies_stable_with_exact_reduction() {
        let spec = nested_pair();
        let control = law(&spec, &ControlSpec::priority(vec![vec![0], vec![1]]));
        let params = ClassifyParams::singleton_order(
            &[0, 1],
            StationaryMethod::Matrix { level_cap: 400 },
        );
        let c = classify(&spec, control, &params).unwrap();
        assert_eq!(c.verdict, Verdict::Stable);
        // First stage: full service against offered load 0.5.
        let e0 = c.stages[0].expected_rate.unwrap();
        assert!((e0.mean - 1.0).abs() < 1e-9);
        // Second stage: class 1 is served exactly when class 0 idles, and
        // the reduced class-0 chain idles half the time.
        let e1 = c.stages[1].expected_rate.unwrap();
        assert!((e1.mean - 0.5).abs() < 1e-6, "mean {}", e1.mean);
    }

    #[test]
    fn misordered_stages_are_rescued_by_the_order_search() {
        let spec = nested_pair();
        let control = law(&spec, &ControlSpec::priority(vec![vec![0], vec![1]]));
        // Processing class 1 first fails: pinned class 0 starves it.
        let bad = ClassifyParams::singleton_order(
            &[1, 0],
            StationaryMethod::Matrix { level_cap: 400 },
        );
        let c = classify(&spec, control.clone(), &bad).unwrap();
        assert_eq!(c.verdict, Verdict::Unstable);

        let search = classify_search_orders(&spec, control, &bad).unwrap();
        assert_eq!(search.verdict, Verdict::Stable);
        assert!(search.best.is_some());
    }

    #[test]
    fn threshold_rescue_shifts_the_reduced_chain_floor() {
        let spec = nested_pair();
        let a = 5u64;
        let base = ControlSpec::priority(vec![vec![0], vec![1]]);
        let modified = threshold_modify(&spec, base, ThresholdFamily::NestedPair, a).unwrap();
        let control = law(&spec, &modified);
        let params = ClassifyParams::singleton_order(
            &[0, 1],
            StationaryMethod::Matrix { level_cap: 400 },
        );
        let c = classify(&spec, control, &params).unwrap();
        assert_eq!(c.verdict, Verdict::Stable);
        // With class 1 pinned, class 0 is served only at or above the
        // threshold, so the reduced chain lives on {a-1, a, ...} and idles
        // below the threshold with probability 1/2.
        let e1 = c.stages[1].expected_rate.unwrap();
        assert!((e1.mean - 0.5).abs() < 1e-6, "mean {}", e1.mean);
    }

    #[test]
    fn switching_recursion_on_the_trio() {
        let c = 1.0;
        for (nu, expected) in [(0.3, Verdict::Stable), (0.42, Verdict::Unstable)] {
            let spec = cyclic_trio(c, nu);
            let control = law(&spec, &ControlSpec::SwitchingMax);
            let params = ClassifyParams::singleton_order(
                &[0, 1, 2],
                StationaryMethod::Matrix { level_cap: 127 },
            );
            let out = classify(&spec, control, &params).unwrap();
            assert_eq!(out.verdict, expected, "nu = {nu}");
            // Limiting rates walk down by one arrival rate per stage.
            let e0 = out.stages[0].expected_rate.unwrap().mean;
            assert!((e0 - c).abs() < 1e-9);
            let e1 = out.stages[1].expected_rate.unwrap().mean;
            assert!((e1 - (c - nu)).abs() < 1e-3, "stage 1 rate {e1}");
            let e2 = out.stages[2].expected_rate.unwrap().mean;
            assert!((e2 - (c - 2.0 * nu)).abs() < 1e-3, "stage 2 rate {e2}");
        }
    }

    #[test]
    fn grouped_stage_promotes_the_fair_pair() {
        let spec = cyclic_trio(1.0, 0.3);
        let grouped = ControlSpec::StaticPriority {
            levels: vec![vec![0, 1], vec![2]],
            within: WithinLevel::ProportionalFair,
        };
        let control = law(&spec, &grouped);
        let params = ClassifyParams {
            stages: vec![vec![0, 1], vec![2]],
            limit: LimitParams::default(),
            method: StationaryMethod::Simulation {
                events: 200_000,
                reps: 1,
                seed: 12,
            },
            z: 3.0,
        };
        let out = classify(&spec, control, &params).unwrap();
        assert_eq!(out.verdict, Verdict::Stable);
        assert!(out.stages[0].note.contains("promoted"));
        // The last class's limiting rate is averaged over the pair chain.
        let e2 = out.stages[1].expected_rate.unwrap();
        assert!(e2.mean > 0.3 + 3.0 * e2.se, "rate {} se {}", e2.mean, e2.se);
    }

    #[test]
    fn switching_critical_arrival_rate_sits_at_a_third() {
        let params = ClassifyParams::singleton_order(
            &[0, 1, 2],
            StationaryMethod::Matrix { level_cap: 127 },
        );
        let search = critical_threshold(
            |nu| {
                let spec = cyclic_trio(1.0, nu);
                let control = ControlSpec::SwitchingMax.compile(&spec)?;
                Ok((spec, Arc::new(control) as Arc<dyn ControlLaw>))
            },
            &params,
            (0.25, 0.45),
            1e-3,
            40,
        )
        .unwrap();
        assert!(
            (search.critical - 1.0 / 3.0).abs() < 2e-3,
            "critical {} bracket ({}, {})",
            search.critical,
            search.lo,
            search.hi
        );
        assert!(search.probes.len() >= 5);
    }

    #[test]
    fn bad_brackets_are_rejected() {
        let params = ClassifyParams::singleton_order(
            &[0, 1, 2],
            StationaryMethod::Matrix { level_cap: 64 },
        );
        let family = |nu: f64| {
            let spec = cyclic_trio(1.0, nu);
            let control = ControlSpec::SwitchingMax.compile(&spec)?;
            Ok((spec, Arc::new(control) as Arc<dyn ControlLaw>))
        };
        // Both ends stable.
        assert!(matches!(
            critical_threshold(family, &params, (0.1, 0.2), 1e-3, 20),
            Err(Error::NonMonotoneVerdicts(_))
        ));
    }

    #[test]
    fn switching_is_monotone_but_a_grouped_fair_level_is_not() {
        let spec = cyclic_trio(1.0, 0.3);
        let switching = law(&spec, &ControlSpec::SwitchingMax);
        let report = check_monotone(switching.as_ref(), &spec, &[4, 4, 4], 1e-9).unwrap();
        assert!(report.monotone, "violations: {:?}", report.violations);
        assert!(report.checked_pairs > 0);

        // Proportionally fair first level: a bigger class-0 queue grabs
        // share from class 1 on resource 2, releasing resource 0 capacity
        // to class 2, whose bandwidth then rises with a foreign queue.
        let grouped = law(
            &spec,
            &ControlSpec::StaticPriority {
                levels: vec![vec![0, 1], vec![2]],
                within: WithinLevel::ProportionalFair,
            },
        );
        let report = check_monotone(grouped.as_ref(), &spec, &[3, 3, 2], 1e-6).unwrap();
        assert!(!report.monotone);
        assert!(report
            .violations
            .iter()
            .any(|v| v.class == 2 && v.direction != 2));
    }

    #[test]
    fn stage_validation_rejects_non_partitions() {
        let spec = nested_pair();
        let control = law(&spec, &ControlSpec::priority(vec![vec![0], vec![1]]));
        for stages in [
            vec![vec![0]],
            vec![vec![0, 1], vec![1]],
            vec![vec![0], vec![5]],
            vec![vec![0], vec![]],
        ] {
            let params = ClassifyParams {
                stages,
                limit: LimitParams::default(),
                method: StationaryMethod::Matrix { level_cap: 64 },
                z: 3.0,
            };
            assert!(classify(&spec, control.clone(), &params).is_err());
        }
    }
}
