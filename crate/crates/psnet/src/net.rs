//! Network description and state space.
//!
//! A network couples R call types to J resources through a 0/1 incidence
//! matrix `a[j][r]`: a call of type r simultaneously occupies one unit of
//! bandwidth on every resource j with `a[j][r] = 1`. Calls of type r arrive
//! at rate `nu[r]` and carry exponential service requirements with rate
//! `mu[r]`; the offered load per type is `kappa[r] = nu[r] / mu[r]`.
//!
//! An allocation `b` is feasible when every finite resource capacity covers
//! its total load:
//!
//! ```text
//! sum_r a[j][r] * b[r] <= c[j]        for every resource j
//! ```
//!
//! and the capacity condition asks the same of the offered loads with strict
//! inequality, which is necessary for any control to stabilise the network.
//! Pareto efficiency is the local no-waste property: every occupied type
//! touches at least one saturated resource.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Default absolute tolerance for feasibility and saturation comparisons.
pub const DEFAULT_TOL: f64 = 1e-9;

/// Immutable description of a processor-sharing network.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    /// `incidence[j][r] = 1` when type r uses resource j.
    incidence: Vec<Vec<u8>>,
    /// Capacity per resource; `f64::INFINITY` marks an unconstrained resource.
    capacities: Vec<f64>,
    /// Arrival rate per type, strictly positive.
    nu: Vec<f64>,
    /// Service rate per type, strictly positive.
    mu: Vec<f64>,
    /// Resources used by each type (precomputed from the incidence).
    resources_of: Vec<Vec<usize>>,
    /// Types using each resource (precomputed from the incidence).
    types_of: Vec<Vec<usize>>,
}

impl NetworkSpec {
    /// Validates and builds a network. Reports the first violated invariant.
    pub fn new(
        incidence: Vec<Vec<u8>>,
        capacities: Vec<f64>,
        nu: Vec<f64>,
        mu: Vec<f64>,
    ) -> Result<Self> {
        let num_resources = incidence.len();
        if num_resources == 0 {
            return Err(Error::InvalidNetwork("incidence has no rows".into()));
        }
        let num_types = incidence[0].len();
        if num_types == 0 {
            return Err(Error::InvalidNetwork("incidence has no columns".into()));
        }
        for (j, row) in incidence.iter().enumerate() {
            if row.len() != num_types {
                return Err(Error::InvalidNetwork(format!(
                    "incidence row {j} has {} entries, expected {num_types}",
                    row.len()
                )));
            }
            if let Some(r) = row.iter().position(|&v| v > 1) {
                return Err(Error::InvalidNetwork(format!(
                    "incidence[{j}][{r}] = {} is not 0/1",
                    row[r]
                )));
            }
        }
        if capacities.len() != num_resources {
            return Err(Error::DimensionMismatch(format!(
                "{} capacities for {num_resources} resources",
                capacities.len()
            )));
        }
        for (j, &c) in capacities.iter().enumerate() {
            if c.is_nan() || c <= 0.0 {
                return Err(Error::InvalidNetwork(format!(
                    "capacity of resource {j} must be positive or infinite, got {c}"
                )));
            }
        }
        if nu.len() != num_types {
            return Err(Error::DimensionMismatch(format!(
                "{} arrival rates for {num_types} types",
                nu.len()
            )));
        }
        if mu.len() != num_types {
            return Err(Error::DimensionMismatch(format!(
                "{} service rates for {num_types} types",
                mu.len()
            )));
        }
        for (r, &v) in nu.iter().enumerate() {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::InvalidNetwork(format!(
                    "arrival rate of type {r} must be positive and finite, got {v}"
                )));
            }
        }
        for (r, &v) in mu.iter().enumerate() {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::InvalidNetwork(format!(
                    "service rate of type {r} must be positive and finite, got {v}"
                )));
            }
        }
        let mut resources_of = vec![Vec::new(); num_types];
        let mut types_of = vec![Vec::new(); num_resources];
        for (j, row) in incidence.iter().enumerate() {
            for (r, &v) in row.iter().enumerate() {
                if v == 1 {
                    resources_of[r].push(j);
                    types_of[j].push(r);
                }
            }
        }
        // Every type must be covered by a finite-capacity resource, otherwise
        // its bandwidth is unbounded and no stationary analysis applies.
        for r in 0..num_types {
            let covered = resources_of[r].iter().any(|&j| capacities[j].is_finite());
            if !covered {
                return Err(Error::InvalidNetwork(format!(
                    "type {r} is not covered by any finite-capacity resource"
                )));
            }
        }
        Ok(Self {
            incidence,
            capacities,
            nu,
            mu,
            resources_of,
            types_of,
        })
    }

    pub fn num_types(&self) -> usize {
        self.nu.len()
    }

    pub fn num_resources(&self) -> usize {
        self.capacities.len()
    }

    /// True when type `r` uses resource `j`.
    pub fn uses(&self, j: usize, r: usize) -> bool {
        self.incidence[j][r] == 1
    }

    pub fn incidence(&self) -> &[Vec<u8>] {
        &self.incidence
    }

    pub fn capacity(&self, j: usize) -> f64 {
        self.capacities[j]
    }

    pub fn capacities(&self) -> &[f64] {
        &self.capacities
    }

    pub fn nu(&self) -> &[f64] {
        &self.nu
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    /// Offered load `nu[r] / mu[r]` of type `r`.
    pub fn kappa(&self, r: usize) -> f64 {
        self.nu[r] / self.mu[r]
    }

    /// Offered load vector.
    pub fn kappas(&self) -> Vec<f64> {
        (0..self.num_types()).map(|r| self.kappa(r)).collect()
    }

    /// Resources used by type `r`.
    pub fn resources_of(&self, r: usize) -> &[usize] {
        &self.resources_of[r]
    }

    /// Types using resource `j`.
    pub fn types_of(&self, j: usize) -> &[usize] {
        &self.types_of[j]
    }

    /// Largest bandwidth type `r` can receive alone: the smallest capacity
    /// among its resources. Finite by the coverage invariant.
    pub fn solo_capacity(&self, r: usize) -> f64 {
        self.resources_of[r]
            .iter()
            .map(|&j| self.capacities[j])
            .fold(f64::INFINITY, f64::min)
    }

    fn check_type_len(&self, len: usize, what: &str) -> Result<()> {
        if len != self.num_types() {
            return Err(Error::DimensionMismatch(format!(
                "{what} has length {len}, expected {}",
                self.num_types()
            )));
        }
        Ok(())
    }
}

/// Occupancy vector: number of calls in progress per type.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct State {
    counts: Vec<u64>,
}

impl State {
    pub fn new(counts: Vec<u64>) -> Self {
        Self { counts }
    }

    /// All-empty state of the given dimension.
    pub fn empty(num_types: usize) -> Self {
        Self {
            counts: vec![0; num_types],
        }
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.iter().all(|&n| n == 0)
    }

    pub fn get(&self, r: usize) -> u64 {
        self.counts[r]
    }

    /// State after one arrival of type `r`.
    pub fn up(&self, r: usize) -> State {
        let mut counts = self.counts.clone();
        counts[r] += 1;
        State { counts }
    }

    /// State after one departure of type `r`; rejected when the class is empty.
    pub fn down(&self, r: usize) -> Result<State> {
        if self.counts[r] == 0 {
            return Err(Error::StateUnderflow(format!(
                "type {r} is empty in {:?}",
                self.counts
            )));
        }
        let mut counts = self.counts.clone();
        counts[r] -= 1;
        Ok(State { counts })
    }

    /// Smallest per-type count.
    pub fn min_count(&self) -> u64 {
        self.counts.iter().copied().min().unwrap_or(0)
    }

    /// Largest count among types 1.., the non-spanning types of a backbone
    /// layout (type 0 is the one crossing every resource).
    pub fn max_tail_count(&self) -> u64 {
        self.counts.iter().skip(1).copied().max().unwrap_or(0)
    }

    /// Real-valued view used by controls and the fluid integrator.
    pub fn to_reals(&self) -> Vec<f64> {
        self.counts.iter().map(|&n| n as f64).collect()
    }
}

impl From<Vec<u64>> for State {
    fn from(counts: Vec<u64>) -> Self {
        State { counts }
    }
}

/// Bandwidth allocated to each type at some state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationVector {
    bandwidths: Vec<f64>,
}

impl AllocationVector {
    pub fn new(bandwidths: Vec<f64>) -> Self {
        Self { bandwidths }
    }

    pub fn bandwidths(&self) -> &[f64] {
        &self.bandwidths
    }

    pub fn get(&self, r: usize) -> f64 {
        self.bandwidths[r]
    }

    pub fn len(&self) -> usize {
        self.bandwidths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bandwidths.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.bandwidths
    }

    /// Checks the structural allocation invariant: non-negative entries and
    /// zero bandwidth for empty classes.
    pub fn check_against(&self, n: &State) -> Result<()> {
        if self.bandwidths.len() != n.len() {
            return Err(Error::DimensionMismatch(format!(
                "allocation of length {} against state of length {}",
                self.bandwidths.len(),
                n.len()
            )));
        }
        for (r, &b) in self.bandwidths.iter().enumerate() {
            if !(b >= 0.0) {
                return Err(Error::InfeasibleAllocation(format!(
                    "b[{r}] = {b} is negative or NaN"
                )));
            }
            if n.get(r) == 0 && b != 0.0 {
                return Err(Error::InfeasibleAllocation(format!(
                    "b[{r}] = {b} but class {r} is empty"
                )));
            }
        }
        Ok(())
    }
}

impl From<Vec<f64>> for AllocationVector {
    fn from(bandwidths: Vec<f64>) -> Self {
        AllocationVector { bandwidths }
    }
}

/// Total load `sum_r a[j][r] * b[r]` placed on resource `j`.
pub fn resource_load(spec: &NetworkSpec, j: usize, b: &[f64]) -> Result<f64> {
    if j >= spec.num_resources() {
        return Err(Error::IndexOutOfRange(format!(
            "resource {j} of {}",
            spec.num_resources()
        )));
    }
    spec.check_type_len(b.len(), "allocation")?;
    Ok(spec.types_of(j).iter().map(|&r| b[r]).sum())
}

/// True when every finite resource capacity covers its load within `tol`.
pub fn is_feasible(spec: &NetworkSpec, b: &[f64], tol: f64) -> Result<bool> {
    spec.check_type_len(b.len(), "allocation")?;
    if b.iter().any(|&v| !(v >= 0.0)) {
        return Ok(false);
    }
    for j in 0..spec.num_resources() {
        let c = spec.capacity(j);
        if !c.is_finite() {
            continue;
        }
        if resource_load(spec, j, b)? > c + tol {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Finite-capacity resources whose load sits within `tol` of capacity.
pub fn saturated_resources(spec: &NetworkSpec, b: &[f64], tol: f64) -> Result<Vec<usize>> {
    spec.check_type_len(b.len(), "allocation")?;
    let mut out = Vec::new();
    for j in 0..spec.num_resources() {
        let c = spec.capacity(j);
        if !c.is_finite() {
            continue;
        }
        if (resource_load(spec, j, b)? - c).abs() <= tol {
            out.push(j);
        }
    }
    Ok(out)
}

/// Pareto efficiency at state `n`: every occupied type touches a saturated
/// resource. An infeasible allocation is an error, not `false`.
pub fn is_pareto_efficient(spec: &NetworkSpec, n: &State, b: &[f64], tol: f64) -> Result<bool> {
    spec.check_type_len(n.len(), "state")?;
    if !is_feasible(spec, b, tol)? {
        return Err(Error::InfeasibleAllocation(
            "Pareto efficiency is undefined for an infeasible allocation".into(),
        ));
    }
    let saturated = saturated_resources(spec, b, tol)?;
    for r in 0..spec.num_types() {
        if n.get(r) == 0 {
            continue;
        }
        if !spec.resources_of(r).iter().any(|j| saturated.contains(j)) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Strict capacity condition on the offered loads, with the slack
/// `c[j] - sum_r a[j][r] * kappa[r]` per resource. Infinite capacities have
/// infinite slack. Holding is necessary for any control to be stable.
pub fn capacity_condition(spec: &NetworkSpec) -> (bool, Vec<f64>) {
    let kappas = spec.kappas();
    let mut slack = Vec::with_capacity(spec.num_resources());
    let mut holds = true;
    for j in 0..spec.num_resources() {
        let c = spec.capacity(j);
        if !c.is_finite() {
            slack.push(f64::INFINITY);
            continue;
        }
        let load: f64 = spec.types_of(j).iter().map(|&r| kappas[r]).sum();
        let s = c - load;
        if s <= 0.0 {
            holds = false;
        }
        slack.push(s);
    }
    (holds, slack)
}
