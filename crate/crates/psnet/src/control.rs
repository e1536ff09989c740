//! Bandwidth-sharing controls.
//!
//! A control maps the occupancy vector to a feasible allocation. Controls
//! are described declaratively by [`ControlSpec`] (serialisable, so they can
//! live in config files) and compiled against a [`NetworkSpec`] into a
//! [`CompiledControl`] that validates topology and dimensions once and then
//! evaluates states cheaply.
//!
//! The catalogue:
//!
//! * [`ControlSpec::CompletePartitioning`]: a fixed reservation `bhat[r]`
//!   for every occupied class, independent of queue lengths.
//! * [`ControlSpec::StaticPriority`]: ordered priority levels; each level
//!   consumes residual capacity either by progressive filling (max-min) or
//!   by a proportionally fair split.
//! * [`ControlSpec::ThresholdPriority`]: a base control that is overridden
//!   near the origin by a family-specific rescue policy; see
//!   [`ThresholdFamily`].
//! * [`ControlSpec::AlphaFair`]: the weighted alpha-fair optimiser of
//!   [`crate::fairshare`], memoised per state.
//! * [`ControlSpec::SwitchingMax`]: serves only the lowest-indexed occupied
//!   class, at the full capacity its own resources allow.
//! * [`ControlSpec::ReservedGreedy`]: guarantees `bhat[r]` to every occupied
//!   class and hands out the remaining capacity greedily by class index;
//!   the result dominates the plain reservation and is Pareto efficient.
//! * [`ControlSpec::CustomTable`]: an explicit lookup table on a finite box.
//!
//! All evaluators accept real-valued occupancies so the same control drives
//! both the stochastic and the fluid dynamics; table and threshold controls
//! apply integer thresholds to the floor of the occupancy.

use crate::error::{Error, Result};
use crate::fairshare::{
    self, progressive_fill, Alpha, AlphaFairParams, Constraint, Subproblem, DEFAULT_SOLVE_TOL,
};
use crate::net::{is_feasible, AllocationVector, NetworkSpec, State};
use serde::{Deserialize, Serialize};
use std::collections::{HashMap, HashSet};
use std::sync::{Arc, Mutex};

/// Cap on memoised states per compiled alpha-fair control.
const ALPHA_CACHE_CAP: usize = 1_000_000;
/// Cap on explicit table size.
const TABLE_CAP: u128 = 2_000_000;

/// A bandwidth-sharing rule evaluated at real-valued occupancies.
///
/// Implementations must be deterministic. Entries of the returned vector are
/// non-negative, zero for empty classes, and jointly feasible.
pub trait ControlLaw: Send + Sync {
    fn allocate(&self, n: &[f64]) -> Result<Vec<f64>>;
}

/// How a priority level splits its residual capacity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WithinLevel {
    /// Progressive filling: all occupied members rise together, freezing on
    /// their tightest residual resource.
    #[default]
    MaxMin,
    /// Proportionally fair split of the residual capacities, weighted by
    /// occupancy.
    ProportionalFair,
}

/// Topology families with a built-in near-origin rescue policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdFamily {
    /// Two classes. While `n[0] < a`, class 1 gets strict priority.
    NestedPair,
    /// One shared resource (index 0) plus one dedicated resource per class.
    /// While `min_r n[r] < a`, capacity is assigned in occupancy shells:
    /// classes further above the threshold are served first.
    SharedDedicated,
    /// Class 0 crosses every resource; class `r >= 1` uses resource `r - 1`
    /// alone. While `max_{r >= 1} n[r] < a`, class 0 gets strict priority.
    Backbone,
}

/// What a table control does outside its box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailRule {
    /// Evaluating a state outside the box is an error.
    #[default]
    Reject,
    /// Coordinates are clamped onto the box boundary.
    Clamp,
}

/// One row of an explicit control table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableEntry {
    pub n: Vec<u64>,
    pub b: Vec<f64>,
}

/// Declarative description of a control; see the module docs for the
/// catalogue. Compile against a network before evaluating.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum ControlSpec {
    CompletePartitioning {
        bhat: Vec<f64>,
    },
    StaticPriority {
        levels: Vec<Vec<usize>>,
        #[serde(default)]
        within: WithinLevel,
    },
    ThresholdPriority {
        base: Box<ControlSpec>,
        family: ThresholdFamily,
        a: u64,
    },
    AlphaFair {
        alpha: Alpha,
        weights: Vec<f64>,
        #[serde(default = "default_solve_tol")]
        tol: f64,
    },
    SwitchingMax,
    ReservedGreedy {
        bhat: Vec<f64>,
    },
    CustomTable {
        box_max: Vec<u64>,
        entries: Vec<TableEntry>,
        #[serde(default)]
        tail: TailRule,
    },
}

fn default_solve_tol() -> f64 {
    DEFAULT_SOLVE_TOL
}

impl ControlSpec {
    /// Strict priority with max-min filling inside each level.
    pub fn priority(levels: Vec<Vec<usize>>) -> Self {
        ControlSpec::StaticPriority {
            levels,
            within: WithinLevel::MaxMin,
        }
    }

    /// Validates this description against a network and precomputes
    /// everything evaluation needs.
    pub fn compile(&self, spec: &NetworkSpec) -> Result<CompiledControl> {
        let spec = Arc::new(spec.clone());
        let kernel = build_kernel(self, &spec)?;
        Ok(CompiledControl {
            spec,
            source: self.clone(),
            kernel,
        })
    }
}

/// A control bound to a network, ready for repeated evaluation.
pub struct CompiledControl {
    spec: Arc<NetworkSpec>,
    source: ControlSpec,
    kernel: Kernel,
}

impl CompiledControl {
    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn source(&self) -> &ControlSpec {
        &self.source
    }

    /// Evaluates at an integer state.
    pub fn allocate_state(&self, state: &State) -> Result<AllocationVector> {
        let b = self.allocate(&state.to_reals())?;
        Ok(AllocationVector::new(b))
    }

    #[cfg(test)]
    pub(crate) fn cached_states(&self) -> usize {
        match &self.kernel {
            Kernel::AlphaFair { cache, .. } => cache.lock().unwrap().len(),
            _ => 0,
        }
    }
}

impl ControlLaw for CompiledControl {
    fn allocate(&self, n: &[f64]) -> Result<Vec<f64>> {
        if n.len() != self.spec.num_types() {
            return Err(Error::DimensionMismatch(format!(
                "occupancy of length {} for {} types",
                n.len(),
                self.spec.num_types()
            )));
        }
        if n.iter().any(|&v| !v.is_finite() || v < 0.0) {
            return Err(Error::InvalidParameter(
                "occupancy entries must be finite and non-negative".into(),
            ));
        }
        let mut b = self.kernel.allocate(&self.spec, n)?;
        for v in b.iter_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        Ok(b)
    }
}

enum Kernel {
    Partition {
        bhat: Vec<f64>,
    },
    Priority(PriorityKernel),
    Threshold {
        family: ThresholdFamily,
        a: u64,
        base: Box<Kernel>,
        alt: AltKernel,
    },
    AlphaFair {
        params: AlphaFairParams,
        tol: f64,
        cache: Mutex<HashMap<Vec<u64>, Vec<f64>>>,
    },
    SwitchingMax {
        solo: Vec<f64>,
    },
    ReservedGreedy {
        bhat: Vec<f64>,
    },
    Table {
        box_max: Vec<u64>,
        map: HashMap<Vec<u64>, Vec<f64>>,
        tail: TailRule,
    },
}

enum AltKernel {
    Priority(PriorityKernel),
    /// Shell allocation for the shared-plus-dedicated family:
    /// `dedicated[r]` is the private resource of class `r`.
    Shells { dedicated: Vec<usize> },
}

struct PriorityKernel {
    levels: Vec<Vec<usize>>,
    within: WithinLevel,
}

fn build_kernel(spec_desc: &ControlSpec, spec: &NetworkSpec) -> Result<Kernel> {
    match spec_desc {
        ControlSpec::CompletePartitioning { bhat } => {
            check_reservation(spec, bhat)?;
            Ok(Kernel::Partition { bhat: bhat.clone() })
        }
        ControlSpec::StaticPriority { levels, within } => Ok(Kernel::Priority(
            PriorityKernel::new(spec, levels.clone(), *within)?,
        )),
        ControlSpec::ThresholdPriority { base, family, a } => {
            if *a == 0 {
                return Err(Error::InvalidParameter(
                    "threshold must be at least 1".into(),
                ));
            }
            let base = Box::new(build_kernel(base, spec)?);
            let alt = build_alt(*family, spec)?;
            Ok(Kernel::Threshold {
                family: *family,
                a: *a,
                base,
                alt,
            })
        }
        ControlSpec::AlphaFair {
            alpha,
            weights,
            tol,
        } => {
            if weights.len() != spec.num_types() {
                return Err(Error::DimensionMismatch(format!(
                    "{} weights for {} types",
                    weights.len(),
                    spec.num_types()
                )));
            }
            if weights.iter().any(|&w| !w.is_finite() || w <= 0.0) {
                return Err(Error::InvalidParameter("weights must be positive".into()));
            }
            if let Alpha::Finite(a) = alpha {
                if !a.is_finite() || *a < 0.0 {
                    return Err(Error::InvalidParameter(format!(
                        "alpha must be non-negative, got {a}"
                    )));
                }
            }
            if !(*tol > 0.0) {
                return Err(Error::InvalidParameter("tolerance must be positive".into()));
            }
            Ok(Kernel::AlphaFair {
                params: AlphaFairParams::new(*alpha, weights.clone()),
                tol: *tol,
                cache: Mutex::new(HashMap::new()),
            })
        }
        ControlSpec::SwitchingMax => Ok(Kernel::SwitchingMax {
            solo: (0..spec.num_types()).map(|r| spec.solo_capacity(r)).collect(),
        }),
        ControlSpec::ReservedGreedy { bhat } => {
            check_reservation(spec, bhat)?;
            Ok(Kernel::ReservedGreedy { bhat: bhat.clone() })
        }
        ControlSpec::CustomTable {
            box_max,
            entries,
            tail,
        } => {
            let map = build_table(spec, box_max, entries)?;
            Ok(Kernel::Table {
                box_max: box_max.clone(),
                map,
                tail: *tail,
            })
        }
    }
}

/// A reservation must be non-negative and feasible even with every class
/// occupied at once.
fn check_reservation(spec: &NetworkSpec, bhat: &[f64]) -> Result<()> {
    if bhat.len() != spec.num_types() {
        return Err(Error::DimensionMismatch(format!(
            "reservation of length {} for {} types",
            bhat.len(),
            spec.num_types()
        )));
    }
    if bhat.iter().any(|&v| !v.is_finite() || v < 0.0) {
        return Err(Error::InvalidParameter(
            "reservations must be finite and non-negative".into(),
        ));
    }
    if !is_feasible(spec, bhat, crate::net::DEFAULT_TOL)? {
        return Err(Error::InfeasibleAllocation(format!(
            "reservation {bhat:?} overloads a resource when all classes are occupied"
        )));
    }
    Ok(())
}

fn build_alt(family: ThresholdFamily, spec: &NetworkSpec) -> Result<AltKernel> {
    let num_types = spec.num_types();
    match family {
        ThresholdFamily::NestedPair => {
            if num_types != 2 {
                return Err(Error::TopologyMismatch(format!(
                    "nested-pair thresholds need exactly 2 classes, network has {num_types}"
                )));
            }
            Ok(AltKernel::Priority(PriorityKernel::new(
                spec,
                vec![vec![1], vec![0]],
                WithinLevel::MaxMin,
            )?))
        }
        ThresholdFamily::Backbone => {
            if spec.num_resources() + 1 != num_types {
                return Err(Error::TopologyMismatch(format!(
                    "backbone topology needs {} resources for {} classes, network has {}",
                    num_types.saturating_sub(1),
                    num_types,
                    spec.num_resources()
                )));
            }
            if spec.resources_of(0).len() != spec.num_resources() {
                return Err(Error::TopologyMismatch(
                    "backbone topology requires class 0 to cross every resource".into(),
                ));
            }
            for r in 1..num_types {
                if spec.resources_of(r) != [r - 1] {
                    return Err(Error::TopologyMismatch(format!(
                        "backbone topology requires class {r} to use resource {} alone",
                        r - 1
                    )));
                }
            }
            Ok(AltKernel::Priority(PriorityKernel::new(
                spec,
                vec![vec![0], (1..num_types).collect()],
                WithinLevel::MaxMin,
            )?))
        }
        ThresholdFamily::SharedDedicated => {
            if spec.num_resources() != num_types + 1 {
                return Err(Error::TopologyMismatch(format!(
                    "shared-plus-dedicated topology needs {} resources for {} classes, network has {}",
                    num_types + 1,
                    num_types,
                    spec.num_resources()
                )));
            }
            if spec.types_of(0).len() != num_types {
                return Err(Error::TopologyMismatch(
                    "shared-plus-dedicated topology requires resource 0 to serve every class"
                        .into(),
                ));
            }
            let mut dedicated = vec![0usize; num_types];
            let mut seen = HashSet::new();
            for r in 0..num_types {
                let res = spec.resources_of(r);
                if res.len() != 2 || res[0] != 0 {
                    return Err(Error::TopologyMismatch(format!(
                        "class {r} must use resource 0 and exactly one dedicated resource"
                    )));
                }
                let d = res[1];
                if spec.types_of(d) != [r] || !seen.insert(d) {
                    return Err(Error::TopologyMismatch(format!(
                        "resource {d} must be dedicated to class {r} alone"
                    )));
                }
                dedicated[r] = d;
            }
            Ok(AltKernel::Shells { dedicated })
        }
    }
}

fn build_table(
    spec: &NetworkSpec,
    box_max: &[u64],
    entries: &[TableEntry],
) -> Result<HashMap<Vec<u64>, Vec<f64>>> {
    let num_types = spec.num_types();
    if box_max.len() != num_types {
        return Err(Error::DimensionMismatch(format!(
            "table box of dimension {} for {} types",
            box_max.len(),
            num_types
        )));
    }
    let states: u128 = box_max.iter().map(|&m| m as u128 + 1).product();
    if states > TABLE_CAP {
        return Err(Error::ScanTooLarge(format!(
            "table box holds {states} states, cap is {TABLE_CAP}"
        )));
    }
    let mut map = HashMap::with_capacity(entries.len());
    for entry in entries {
        if entry.n.len() != num_types || entry.b.len() != num_types {
            return Err(Error::TableDomain(format!(
                "entry {:?} has the wrong dimension",
                entry.n
            )));
        }
        if entry.n.iter().zip(box_max).any(|(&v, &m)| v > m) {
            return Err(Error::TableDomain(format!(
                "entry {:?} lies outside the box {box_max:?}",
                entry.n
            )));
        }
        let state = State::new(entry.n.clone());
        let alloc = AllocationVector::new(entry.b.clone());
        alloc.check_against(&state)?;
        if !is_feasible(spec, &entry.b, crate::net::DEFAULT_TOL)? {
            return Err(Error::InfeasibleAllocation(format!(
                "table entry at {:?} overloads a resource",
                entry.n
            )));
        }
        if map.insert(entry.n.clone(), entry.b.clone()).is_some() {
            return Err(Error::TableDomain(format!(
                "duplicate table entry at {:?}",
                entry.n
            )));
        }
    }
    if map.len() as u128 != states {
        return Err(Error::TableDomain(format!(
            "table covers {} of {states} box states; every state needs a row",
            map.len()
        )));
    }
    Ok(map)
}

impl Kernel {
    fn allocate(&self, spec: &NetworkSpec, n: &[f64]) -> Result<Vec<f64>> {
        match self {
            Kernel::Partition { bhat } => Ok((0..n.len())
                .map(|r| if n[r] > 0.0 { bhat[r] } else { 0.0 })
                .collect()),
            Kernel::Priority(kernel) => kernel.allocate(spec, n),
            Kernel::Threshold {
                family,
                a,
                base,
                alt,
            } => {
                let threshold = *a as f64;
                let triggered = match family {
                    ThresholdFamily::NestedPair => n[0] < threshold,
                    ThresholdFamily::Backbone => {
                        n.iter().skip(1).cloned().fold(0.0, f64::max) < threshold
                    }
                    ThresholdFamily::SharedDedicated => {
                        n.iter().cloned().fold(f64::INFINITY, f64::min) < threshold
                    }
                };
                if triggered {
                    match alt {
                        AltKernel::Priority(kernel) => kernel.allocate(spec, n),
                        AltKernel::Shells { dedicated } => {
                            Ok(shell_allocate(spec, dedicated, *a, n))
                        }
                    }
                } else {
                    base.allocate(spec, n)
                }
            }
            Kernel::AlphaFair { params, tol, cache } => {
                let key: Vec<u64> = n.iter().map(|v| v.to_bits()).collect();
                if let Some(b) = cache.lock().unwrap().get(&key) {
                    return Ok(b.clone());
                }
                let report = fairshare::solve_alpha_fair(spec, n, params, *tol)?;
                let b = report.allocation.into_vec();
                let mut guard = cache.lock().unwrap();
                if guard.len() < ALPHA_CACHE_CAP {
                    guard.insert(key, b.clone());
                }
                Ok(b)
            }
            Kernel::SwitchingMax { solo } => {
                let mut b = vec![0.0; n.len()];
                if let Some(r) = (0..n.len()).find(|&r| n[r] > 0.0) {
                    b[r] = solo[r];
                }
                Ok(b)
            }
            Kernel::ReservedGreedy { bhat } => Ok(reserved_greedy(spec, bhat, n)),
            Kernel::Table { box_max, map, tail } => {
                let mut key = Vec::with_capacity(n.len());
                for (r, &v) in n.iter().enumerate() {
                    let mut c = v.floor() as u64;
                    if c > box_max[r] {
                        match tail {
                            TailRule::Reject => {
                                return Err(Error::TableDomain(format!(
                                    "state {n:?} lies outside the table box {box_max:?}"
                                )))
                            }
                            TailRule::Clamp => c = box_max[r],
                        }
                    }
                    key.push(c);
                }
                map.get(&key).cloned().ok_or_else(|| {
                    Error::TableDomain(format!("no table row for state {key:?}"))
                })
            }
        }
    }
}

impl PriorityKernel {
    fn new(spec: &NetworkSpec, levels: Vec<Vec<usize>>, within: WithinLevel) -> Result<Self> {
        let num_types = spec.num_types();
        let mut seen = vec![false; num_types];
        for level in &levels {
            if level.is_empty() {
                return Err(Error::InvalidControl("empty priority level".into()));
            }
            for &r in level {
                if r >= num_types {
                    return Err(Error::IndexOutOfRange(format!(
                        "class {r} in priority levels, network has {num_types} classes"
                    )));
                }
                if seen[r] {
                    return Err(Error::InvalidControl(format!(
                        "class {r} appears in more than one priority level"
                    )));
                }
                seen[r] = true;
            }
        }
        if let Some(r) = seen.iter().position(|&s| !s) {
            return Err(Error::InvalidControl(format!(
                "class {r} is missing from the priority levels"
            )));
        }
        Ok(Self { levels, within })
    }

    fn allocate(&self, spec: &NetworkSpec, n: &[f64]) -> Result<Vec<f64>> {
        let mut b = vec![0.0; n.len()];
        let mut rem = spec.capacities().to_vec();
        for level in &self.levels {
            let occupied: Vec<usize> = level.iter().cloned().filter(|&r| n[r] > 0.0).collect();
            if occupied.is_empty() {
                continue;
            }
            let shares = match self.within {
                WithinLevel::MaxMin => {
                    let speeds = vec![1.0; occupied.len()];
                    progressive_fill(spec, &mut rem, &occupied, &speeds).0
                }
                WithinLevel::ProportionalFair => {
                    let shares = proportional_level(spec, &rem, &occupied, n)?;
                    for (i, &r) in occupied.iter().enumerate() {
                        for &j in spec.resources_of(r) {
                            if rem[j].is_finite() {
                                rem[j] = (rem[j] - shares[i]).max(0.0);
                            }
                        }
                    }
                    shares
                }
            };
            for (i, &r) in occupied.iter().enumerate() {
                b[r] = shares[i];
            }
        }
        Ok(b)
    }
}

/// Proportionally fair split of the residual capacities among one level's
/// occupied members, weighted by their occupancies.
fn proportional_level(
    spec: &NetworkSpec,
    rem: &[f64],
    occupied: &[usize],
    n: &[f64],
) -> Result<Vec<f64>> {
    // Members starved of residual capacity get zero outright; the rest have
    // a strictly feasible interior. Coverage guarantees the minimum below
    // ranges over at least one finite resource.
    let min_rem = |r: usize| -> f64 {
        spec.resources_of(r)
            .iter()
            .map(|&j| rem[j])
            .filter(|v| v.is_finite())
            .fold(f64::INFINITY, f64::min)
    };
    let live: Vec<usize> = (0..occupied.len())
        .filter(|&i| min_rem(occupied[i]) > 1e-12)
        .collect();
    let mut shares = vec![0.0; occupied.len()];
    if live.is_empty() {
        return Ok(shares);
    }
    if live.len() == 1 {
        shares[live[0]] = min_rem(occupied[live[0]]);
        return Ok(shares);
    }
    let mut cons = Vec::new();
    for j in 0..spec.num_resources() {
        if !rem[j].is_finite() {
            continue;
        }
        let members: Vec<usize> = (0..live.len())
            .filter(|&k| spec.uses(j, occupied[live[k]]))
            .collect();
        if !members.is_empty() {
            cons.push(Constraint {
                members,
                cap: rem[j],
            });
        }
    }
    let lgam: Vec<f64> = live.iter().map(|&i| n[occupied[i]].ln()).collect();
    let sol = Subproblem::new(cons, lgam, 1.0)?.barrier_solve(DEFAULT_SOLVE_TOL)?;
    for (k, &i) in live.iter().enumerate() {
        shares[i] = sol.x[k].max(0.0);
    }
    Ok(shares)
}

/// Shell allocation for the shared-plus-dedicated family. Classes are
/// grouped by how far their (floored) occupancy sits below the threshold
/// `a`; groups further up receive capacity first, and each group splits its
/// budget by water filling against the dedicated capacities.
fn shell_allocate(spec: &NetworkSpec, dedicated: &[usize], a: u64, n: &[f64]) -> Vec<f64> {
    let counts: Vec<u64> = n.iter().map(|&v| v.floor().max(0.0) as u64).collect();
    let shared_cap = spec.capacity(0);
    let group_cap = |set: &[usize]| -> f64 {
        let ded: f64 = set.iter().map(|&r| spec.capacity(dedicated[r])).sum();
        shared_cap.min(ded)
    };
    let mut b = vec![0.0; n.len()];
    let mut inner_total = 0.0;
    for level in (1..=a).rev() {
        let upper: Vec<usize> = (0..counts.len()).filter(|&r| counts[r] >= level).collect();
        if upper.is_empty() {
            continue;
        }
        let total = group_cap(&upper);
        let shell: Vec<usize> = upper
            .iter()
            .cloned()
            .filter(|&r| if level == a { true } else { counts[r] == level })
            .collect();
        let budget = (total - inner_total).max(0.0);
        if !shell.is_empty() && budget > 0.0 {
            let caps: Vec<f64> = shell.iter().map(|&r| spec.capacity(dedicated[r])).collect();
            let fill = water_fill(budget, &caps);
            for (i, &r) in shell.iter().enumerate() {
                b[r] = fill[i];
            }
        }
        inner_total = total;
    }
    b
}

/// Splits `budget` evenly, freezing members at their caps; returns the
/// per-member amounts. Absorbs at most `sum(caps)`.
fn water_fill(mut budget: f64, caps: &[f64]) -> Vec<f64> {
    let mut fill = vec![0.0; caps.len()];
    loop {
        let active: Vec<usize> = (0..caps.len())
            .filter(|&i| fill[i] < caps[i] - 1e-15)
            .collect();
        if active.is_empty() || budget <= 0.0 {
            return fill;
        }
        let head_room = active
            .iter()
            .map(|&i| caps[i] - fill[i])
            .fold(f64::INFINITY, f64::min);
        let raise = head_room.min(budget / active.len() as f64);
        if raise <= 0.0 {
            return fill;
        }
        for &i in &active {
            fill[i] += raise;
        }
        budget -= raise * active.len() as f64;
    }
}

/// Reservation followed by a greedy top-up in class order; see
/// [`dominate_with_pareto`].
fn reserved_greedy(spec: &NetworkSpec, bhat: &[f64], n: &[f64]) -> Vec<f64> {
    let mut b: Vec<f64> = (0..n.len())
        .map(|r| if n[r] > 0.0 { bhat[r] } else { 0.0 })
        .collect();
    let mut rem: Vec<f64> = (0..spec.num_resources())
        .map(|j| {
            let c = spec.capacity(j);
            if c.is_finite() {
                let load: f64 = spec.types_of(j).iter().map(|&r| b[r]).sum();
                (c - load).max(0.0)
            } else {
                f64::INFINITY
            }
        })
        .collect();
    for r in 0..n.len() {
        if n[r] <= 0.0 {
            continue;
        }
        let extra = spec
            .resources_of(r)
            .iter()
            .map(|&j| rem[j])
            .fold(f64::INFINITY, f64::min);
        if extra.is_finite() && extra > 0.0 {
            b[r] += extra;
            for &j in spec.resources_of(r) {
                if rem[j].is_finite() {
                    rem[j] = (rem[j] - extra).max(0.0);
                }
            }
        }
    }
    b
}

/// Evaluates a declarative control at one state. Compiles on every call;
/// for repeated evaluation compile once via [`ControlSpec::compile`].
pub fn evaluate(control: &ControlSpec, spec: &NetworkSpec, state: &State) -> Result<AllocationVector> {
    let compiled = control.compile(spec)?;
    let alloc = compiled.allocate_state(state)?;
    alloc.check_against(state)?;
    if !is_feasible(spec, alloc.bandwidths(), 1e-6)? {
        return Err(Error::InfeasibleAllocation(format!(
            "control produced an infeasible allocation at {:?}",
            state.counts()
        )));
    }
    Ok(alloc)
}

/// Whether the fixed reservation `bhat` keeps every class stable on its own:
/// it must be feasible with all classes occupied and exceed every offered
/// load `nu[r] / mu[r]` strictly.
pub fn partitioning_stable(spec: &NetworkSpec, bhat: &[f64]) -> Result<bool> {
    check_reservation(spec, bhat)?;
    Ok((0..spec.num_types()).all(|r| bhat[r] > spec.kappa(r)))
}

/// Upgrades a feasible reservation into a Pareto-efficient control that
/// never gives an occupied class less than its reservation: after reserving
/// `bhat[r]` for every occupied class, leftover capacity is handed out
/// greedily in class order, so every occupied class ends on a saturated
/// resource.
pub fn dominate_with_pareto(spec: &NetworkSpec, bhat: &[f64]) -> Result<ControlSpec> {
    check_reservation(spec, bhat)?;
    Ok(ControlSpec::ReservedGreedy {
        bhat: bhat.to_vec(),
    })
}

/// Wraps `base` with the near-origin rescue policy of `family` at threshold
/// `a`, validating the topology eagerly.
pub fn threshold_modify(
    spec: &NetworkSpec,
    base: ControlSpec,
    family: ThresholdFamily,
    a: u64,
) -> Result<ControlSpec> {
    let wrapped = ControlSpec::ThresholdPriority {
        base: Box::new(base),
        family,
        a,
    };
    wrapped.compile(spec)?;
    Ok(wrapped)
}
