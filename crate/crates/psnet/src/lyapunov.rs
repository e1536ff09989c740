//! Drift of Lyapunov functions under the network dynamics.
//!
//! For a function `f` on states, the generator applied at `n` is
//!
//! ```text
//! D f(n) = sum_r  nu[r]          * (f(n + e_r) - f(n))
//!        + sum_r  mu[r] * b[r](n) * (f(n - e_r) - f(n))
//! ```
//!
//! A negative-drift certificate checks `D f(n) <= -epsilon` for every state
//! of a finite box outside an excluded region `F`. When `f` grows along
//! every direction and the same bound can be argued off the box, such a
//! certificate implies positive recurrence; the scan itself only certifies
//! the box it visited, and the report says exactly which states failed.
//!
//! The function catalogue pairs a linear part with a quadratic smoothing
//! near the origin: [`LyapunovFn::SmoothedFirst`] replaces the first
//! coordinate by the convex function `g_a` equal to `a/2 + n^2 / (2a)`
//! below `a` and to `n` above, which rounds off the kink that a pure
//! priority argument leaves at the threshold.

use crate::control::ControlLaw;
use crate::error::{Error, Result};
use crate::net::{NetworkSpec, State};
use serde::{Deserialize, Serialize};

/// Cap on box scans, in states.
const SCAN_CAP: u128 = 5_000_000;

/// Quadratic-then-identity smoothing: `a/2 + n^2/(2a)` for `n < a`, `n`
/// for `n >= a`. Convex, minorised by `n`, and continuous at `a`.
pub fn smoothed(a: u64, n: u64) -> f64 {
    let af = a as f64;
    let nf = n as f64;
    if n < a {
        af / 2.0 + nf * nf / (2.0 * af)
    } else {
        nf
    }
}

/// State functions whose drift the module evaluates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LyapunovFn {
    /// `sum_r w[r] * n[r]`; unit weights when omitted.
    Linear {
        #[serde(default)]
        weights: Option<Vec<f64>>,
    },
    /// `g_a(n[0]) + sum_{r >= 1} n[r]`.
    SmoothedFirst { a: u64 },
    /// `sum_r g_a(n[r])`.
    SmoothedAll { a: u64 },
    /// `n[0] + g_a(max of n[1..])`. At states where two or more tail
    /// coordinates share the maximum the down-step increments of `g_a` are
    /// not available; scans exclude and report such tie states instead of
    /// smoothing them away.
    SmoothedMaxTail { a: u64 },
}

impl LyapunovFn {
    pub fn validate(&self, num_types: usize) -> Result<()> {
        match self {
            LyapunovFn::Linear { weights: Some(w) } => {
                if w.len() != num_types {
                    return Err(Error::DimensionMismatch(format!(
                        "{} weights for {} types",
                        w.len(),
                        num_types
                    )));
                }
                if w.iter().any(|&v| !v.is_finite() || v < 0.0) {
                    return Err(Error::InvalidParameter(
                        "weights must be finite and non-negative".into(),
                    ));
                }
                Ok(())
            }
            LyapunovFn::Linear { weights: None } => Ok(()),
            LyapunovFn::SmoothedFirst { a } | LyapunovFn::SmoothedAll { a } => {
                if *a == 0 {
                    Err(Error::InvalidParameter(
                        "smoothing width must be at least 1".into(),
                    ))
                } else {
                    Ok(())
                }
            }
            LyapunovFn::SmoothedMaxTail { a } => {
                if *a == 0 {
                    Err(Error::InvalidParameter(
                        "smoothing width must be at least 1".into(),
                    ))
                } else if num_types < 2 {
                    Err(Error::InvalidParameter(
                        "the max-tail function needs at least two classes".into(),
                    ))
                } else {
                    Ok(())
                }
            }
        }
    }

    pub fn value(&self, counts: &[u64]) -> f64 {
        match self {
            LyapunovFn::Linear { weights } => counts
                .iter()
                .enumerate()
                .map(|(r, &n)| {
                    let w = weights.as_ref().map_or(1.0, |w| w[r]);
                    w * n as f64
                })
                .sum(),
            LyapunovFn::SmoothedFirst { a } => {
                let mut v = smoothed(*a, counts[0]);
                for &n in &counts[1..] {
                    v += n as f64;
                }
                v
            }
            LyapunovFn::SmoothedAll { a } => counts.iter().map(|&n| smoothed(*a, n)).sum(),
            LyapunovFn::SmoothedMaxTail { a } => {
                let m = counts[1..].iter().copied().max().unwrap_or(0);
                counts[0] as f64 + smoothed(*a, m)
            }
        }
    }

    /// True when the state is a tie the function cannot resolve: for the
    /// max-tail variant, two or more tail coordinates sharing a positive
    /// maximum. Other variants never tie.
    pub fn has_tie(&self, counts: &[u64]) -> bool {
        match self {
            LyapunovFn::SmoothedMaxTail { .. } => {
                let m = counts[1..].iter().copied().max().unwrap_or(0);
                m > 0 && counts[1..].iter().filter(|&&n| n == m).count() >= 2
            }
            _ => false,
        }
    }
}

/// A set of states, used to carve the excluded region out of a scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Region {
    Empty,
    /// `n[r] < bound`.
    CoordBelow { r: usize, bound: u64 },
    /// `n[r] == value`.
    CoordEquals { r: usize, value: u64 },
    /// `n[r] < below[r]` for every `r`.
    Box { below: Vec<u64> },
    /// `max of n[1..] < bound`.
    TailMaxBelow { bound: u64 },
    Union { parts: Vec<Region> },
    Intersection { parts: Vec<Region> },
}

impl Region {
    pub fn validate(&self, num_types: usize) -> Result<()> {
        match self {
            Region::Empty => Ok(()),
            Region::CoordBelow { r, .. } | Region::CoordEquals { r, .. } => {
                if *r >= num_types {
                    Err(Error::IndexOutOfRange(format!(
                        "region coordinate {r}, network has {num_types} types"
                    )))
                } else {
                    Ok(())
                }
            }
            Region::Box { below } => {
                if below.len() != num_types {
                    Err(Error::DimensionMismatch(format!(
                        "region box of dimension {} for {} types",
                        below.len(),
                        num_types
                    )))
                } else {
                    Ok(())
                }
            }
            Region::TailMaxBelow { .. } => {
                if num_types < 2 {
                    Err(Error::InvalidParameter(
                        "a tail-max region needs at least two classes".into(),
                    ))
                } else {
                    Ok(())
                }
            }
            Region::Union { parts } | Region::Intersection { parts } => {
                parts.iter().try_for_each(|p| p.validate(num_types))
            }
        }
    }

    pub fn contains(&self, counts: &[u64]) -> bool {
        match self {
            Region::Empty => false,
            Region::CoordBelow { r, bound } => counts[*r] < *bound,
            Region::CoordEquals { r, value } => counts[*r] == *value,
            Region::Box { below } => counts.iter().zip(below).all(|(&n, &b)| n < b),
            Region::TailMaxBelow { bound } => {
                counts[1..].iter().copied().max().unwrap_or(0) < *bound
            }
            Region::Union { parts } => parts.iter().any(|p| p.contains(counts)),
            Region::Intersection { parts } => parts.iter().all(|p| p.contains(counts)),
        }
    }

    /// The origin alone.
    pub fn origin(num_types: usize) -> Region {
        Region::Box {
            below: vec![1; num_types],
        }
    }
}

/// Drift of `f` under `law` at one state.
///
/// The control contract (zero bandwidth for empty classes) is enforced here
/// because a violation would silently read `f` below the state space.
pub fn drift(
    spec: &NetworkSpec,
    law: &dyn ControlLaw,
    f: &LyapunovFn,
    state: &State,
) -> Result<f64> {
    f.validate(spec.num_types())?;
    if state.len() != spec.num_types() {
        return Err(Error::DimensionMismatch(format!(
            "state of dimension {} for {} types",
            state.len(),
            spec.num_types()
        )));
    }
    let b = law.allocate(&state.to_reals())?;
    if b.len() != spec.num_types() {
        return Err(Error::DimensionMismatch(
            "control returned an allocation of the wrong dimension".into(),
        ));
    }
    let here = f.value(state.counts());
    let mut total = 0.0;
    for r in 0..spec.num_types() {
        let up = state.up(r);
        total += spec.nu()[r] * (f.value(up.counts()) - here);
        if state.get(r) > 0 {
            let down = state.down(r)?;
            total += spec.mu()[r] * b[r] * (f.value(down.counts()) - here);
        } else if b[r] > 1e-9 {
            return Err(Error::InvalidControl(format!(
                "control grants bandwidth {} to empty class {r}",
                b[r]
            )));
        }
    }
    Ok(total)
}

/// Negative-drift scan over a box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanConfig {
    /// Inclusive upper corner of the scanned box.
    pub bounds: Vec<u64>,
    /// Required decrease: pass needs `drift <= -epsilon` outside `exclude`.
    pub epsilon: f64,
    /// States exempt from the requirement (the finite set of the
    /// certificate).
    #[serde(default = "Region::default_exclude")]
    pub exclude: Region,
}

impl Region {
    fn default_exclude() -> Region {
        Region::Empty
    }
}

/// One state failing the drift requirement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftViolation {
    pub state: Vec<u64>,
    pub drift: f64,
}

/// Outcome of a box scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanReport {
    pub passed: bool,
    pub epsilon: f64,
    /// States evaluated (excluded states are not counted).
    pub states_checked: u64,
    pub violation_count: u64,
    /// At most [`ScanReport::VIOLATION_SAMPLE`] violations, scan order.
    pub violations: Vec<DriftViolation>,
    /// The largest drift seen among evaluated states, violating or not.
    pub worst: Option<DriftViolation>,
    /// States the function could not resolve (max-tail ties): excluded by
    /// construction, counted separately from the exempt region.
    #[serde(default)]
    pub tie_states_excluded: u64,
    /// At most [`ScanReport::TIE_SAMPLE`] tie states, scan order.
    #[serde(default)]
    pub tie_sample: Vec<Vec<u64>>,
}

impl ScanReport {
    pub const VIOLATION_SAMPLE: usize = 10_000;
    pub const TIE_SAMPLE: usize = 100;
}

/// Evaluates the drift of `f` at every non-excluded state of the box and
/// reports states where it exceeds `-epsilon` (with a `1e-9` slack for
/// exact-boundary arithmetic).
pub fn foster_scan(
    spec: &NetworkSpec,
    law: &dyn ControlLaw,
    f: &LyapunovFn,
    config: &ScanConfig,
) -> Result<ScanReport> {
    let num_types = spec.num_types();
    if config.bounds.len() != num_types {
        return Err(Error::DimensionMismatch(format!(
            "scan box of dimension {} for {} types",
            config.bounds.len(),
            num_types
        )));
    }
    if !(config.epsilon > 0.0) || !config.epsilon.is_finite() {
        return Err(Error::InvalidParameter(
            "epsilon must be positive and finite".into(),
        ));
    }
    f.validate(num_types)?;
    config.exclude.validate(num_types)?;
    let total: u128 = config.bounds.iter().map(|&b| b as u128 + 1).product();
    if total > SCAN_CAP {
        return Err(Error::ScanTooLarge(format!(
            "box holds {total} states, cap is {SCAN_CAP}"
        )));
    }

    let mut report = ScanReport {
        passed: true,
        epsilon: config.epsilon,
        states_checked: 0,
        violation_count: 0,
        violations: Vec::new(),
        worst: None,
        tie_states_excluded: 0,
        tie_sample: Vec::new(),
    };
    let mut counts = vec![0u64; num_types];
    loop {
        if f.has_tie(&counts) && !config.exclude.contains(&counts) {
            report.tie_states_excluded += 1;
            if report.tie_sample.len() < ScanReport::TIE_SAMPLE {
                report.tie_sample.push(counts.clone());
            }
        } else if !config.exclude.contains(&counts) {
            let state = State::new(counts.clone());
            let d = drift(spec, law, f, &state)?;
            report.states_checked += 1;
            if report.worst.as_ref().map_or(true, |w| d > w.drift) {
                report.worst = Some(DriftViolation {
                    state: counts.clone(),
                    drift: d,
                });
            }
            if d > -config.epsilon + 1e-9 {
                report.passed = false;
                report.violation_count += 1;
                if report.violations.len() < ScanReport::VIOLATION_SAMPLE {
                    report.violations.push(DriftViolation {
                        state: counts.clone(),
                        drift: d,
                    });
                }
            }
        }
        // Odometer step through the box.
        let mut r = 0;
        loop {
            if r == num_types {
                return Ok(report);
            }
            if counts[r] < config.bounds[r] {
                counts[r] += 1;
                break;
            }
            counts[r] = 0;
            r += 1;
        }
    }
}

/// Outcome of a uniform-positive-drift scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceReport {
    /// True when drift >= +epsilon at every evaluated state.
    pub passed: bool,
    pub epsilon: f64,
    pub states_checked: u64,
    pub failure_count: u64,
    /// States whose drift fell short, at most the violation sample cap.
    pub failures: Vec<DriftViolation>,
    /// The smallest drift seen among evaluated states.
    pub weakest: Option<DriftViolation>,
}

/// Checks that a linear function drifts upward by at least `epsilon` at
/// every non-excluded state of the box (the origin is always exempt). A
/// pass is transience evidence on the scanned box: linear functions have
/// bounded jumps, so a uniform positive drift that extends off the box
/// rules out positive recurrence. The scan certifies only the box.
pub fn instability_evidence(
    spec: &NetworkSpec,
    law: &dyn ControlLaw,
    f: &LyapunovFn,
    config: &ScanConfig,
) -> Result<EvidenceReport> {
    if !matches!(f, LyapunovFn::Linear { .. }) {
        return Err(Error::InvalidParameter(
            "instability evidence requires a linear function: unbounded jumps of a nonlinear one break the martingale argument".into(),
        ));
    }
    let num_types = spec.num_types();
    if config.bounds.len() != num_types {
        return Err(Error::DimensionMismatch(format!(
            "scan box of dimension {} for {} types",
            config.bounds.len(),
            num_types
        )));
    }
    if !(config.epsilon > 0.0) || !config.epsilon.is_finite() {
        return Err(Error::InvalidParameter(
            "epsilon must be positive and finite".into(),
        ));
    }
    f.validate(num_types)?;
    config.exclude.validate(num_types)?;
    let total: u128 = config.bounds.iter().map(|&b| b as u128 + 1).product();
    if total > SCAN_CAP {
        return Err(Error::ScanTooLarge(format!(
            "box holds {total} states, cap is {SCAN_CAP}"
        )));
    }
    let mut report = EvidenceReport {
        passed: true,
        epsilon: config.epsilon,
        states_checked: 0,
        failure_count: 0,
        failures: Vec::new(),
        weakest: None,
    };
    let mut counts = vec![0u64; num_types];
    loop {
        let origin = counts.iter().all(|&n| n == 0);
        if !origin && !config.exclude.contains(&counts) {
            let state = State::new(counts.clone());
            let d = drift(spec, law, f, &state)?;
            report.states_checked += 1;
            if report.weakest.as_ref().map_or(true, |w| d < w.drift) {
                report.weakest = Some(DriftViolation {
                    state: counts.clone(),
                    drift: d,
                });
            }
            if d < config.epsilon - 1e-9 {
                report.passed = false;
                report.failure_count += 1;
                if report.failures.len() < ScanReport::VIOLATION_SAMPLE {
                    report.failures.push(DriftViolation {
                        state: counts.clone(),
                        drift: d,
                    });
                }
            }
        }
        let mut r = 0;
        loop {
            if r == num_types {
                return Ok(report);
            }
            if counts[r] < config.bounds[r] {
                counts[r] += 1;
                break;
            }
            counts[r] = 0;
            r += 1;
        }
    }
}

/// Decrease margins read off the capacity slack: both values equal the
/// smallest slack `c_j - sum_r a_jr * kappa_r` over finite, used resources.
/// The first is the per-class margin a certificate can ask for, the second
/// the aggregate one; a scan epsilon of half their minimum is attainable
/// whenever the strict capacity condition holds.
pub fn capacity_slack_deltas(spec: &NetworkSpec) -> Result<(f64, f64)> {
    let mut min_slack = f64::INFINITY;
    for j in 0..spec.num_resources() {
        let cap = spec.capacity(j);
        if !cap.is_finite() || spec.types_of(j).is_empty() {
            continue;
        }
        let load: f64 = spec.types_of(j).iter().map(|&r| spec.kappa(r)).sum();
        min_slack = min_slack.min(cap - load);
    }
    if !min_slack.is_finite() || min_slack <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "no positive capacity slack (worst {min_slack:.6}); no control can drain the load"
        )));
    }
    Ok((min_slack, min_slack))
}

/// A threshold value together with the scan that certified it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdCertificate {
    pub a: u64,
    pub report: ScanReport,
}

/// Searches `a = 1..=a_max` for the smallest threshold whose drift scan
/// passes. `controls`, `functions` and `regions` build the per-`a`
/// control, Lyapunov function and exempt region; absence of a passing
/// threshold is a value, not an error.
pub fn find_threshold_a<C, F, G>(
    spec: &NetworkSpec,
    controls: C,
    functions: F,
    regions: G,
    bounds: &[u64],
    epsilon: f64,
    a_max: u64,
) -> Result<Option<ThresholdCertificate>>
where
    C: Fn(u64) -> Result<Box<dyn ControlLaw>>,
    F: Fn(u64) -> LyapunovFn,
    G: Fn(u64) -> Region,
{
    if a_max == 0 {
        return Err(Error::InvalidParameter(
            "threshold search needs a_max >= 1".into(),
        ));
    }
    for a in 1..=a_max {
        let law = controls(a)?;
        let config = ScanConfig {
            bounds: bounds.to_vec(),
            epsilon,
            exclude: regions(a),
        };
        let report = foster_scan(spec, law.as_ref(), &functions(a), &config)?;
        if report.passed {
            return Ok(Some(ThresholdCertificate { a, report }));
        }
    }
    Ok(None)
}
