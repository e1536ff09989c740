//! Weighted alpha-fair bandwidth allocation.
//!
//! At occupancy `n` the allocation maximises
//!
//! ```text
//! sum_r  w[r] * n[r]^alpha * b[r]^(1-alpha) / (1-alpha)      alpha != 1
//! sum_r  w[r] * n[r] * log b[r]                              alpha  = 1
//! ```
//!
//! over feasible allocations that give zero bandwidth to empty classes. The
//! parameter sweeps from throughput maximisation (`alpha = 0`, a linear
//! program) through proportional fairness (`alpha = 1`) to max-min fairness
//! (`alpha = infinity`, progressive filling).
//!
//! Strictly concave cases (`0 < alpha < infinity`) are solved by a primal
//! log-barrier interior-point method with Newton centering; problem sizes
//! here are tiny (at most ~10 occupied classes), so each Newton step is a
//! dense symmetric solve. `alpha = 0` is solved exactly by vertex
//! enumeration with a lexicographic-max tie rule, `alpha = infinity` by
//! weighted progressive filling.

use crate::error::{Error, Result};
use crate::net::{saturated_resources, AllocationVector, NetworkSpec};
use serde::{Deserialize, Serialize};

/// Default convergence tolerance for the interior-point solver.
pub const DEFAULT_SOLVE_TOL: f64 = 1e-8;
/// Iteration cap across all Newton steps of one solve.
pub const MAX_ITERATIONS: u64 = 100_000;

/// Fairness exponent. `Infinite` selects max-min fairness.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Alpha {
    Finite(f64),
    #[serde(with = "infinite_alpha")]
    Infinite,
}

mod infinite_alpha {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str("inf")
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<(), D::Error> {
        let tag = String::deserialize(d)?;
        if tag == "inf" || tag == "infinity" {
            Ok(())
        } else {
            Err(serde::de::Error::custom("expected \"inf\""))
        }
    }
}

/// Parameters of the allocation objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaFairParams {
    pub alpha: Alpha,
    /// Strictly positive per-type weights.
    pub weights: Vec<f64>,
}

impl AlphaFairParams {
    pub fn new(alpha: Alpha, weights: Vec<f64>) -> Self {
        Self { alpha, weights }
    }

    /// Unit weights.
    pub fn unweighted(alpha: Alpha, num_types: usize) -> Self {
        Self {
            alpha,
            weights: vec![1.0; num_types],
        }
    }
}

/// Outcome of one allocation solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub allocation: AllocationVector,
    /// Worst relative stationarity / complementarity / feasibility residual.
    /// Zero for the exact `alpha = 0` and `alpha = infinity` algorithms.
    pub kkt_residual: f64,
    pub iterations: u64,
    /// Finite resources whose constraint is active at the optimum.
    pub binding_resources: Vec<usize>,
}

/// Wraps the solver as a declarative control with per-state caching.
pub fn as_control(params: &AlphaFairParams, tol: f64) -> crate::control::ControlSpec {
    crate::control::ControlSpec::AlphaFair {
        alpha: params.alpha,
        weights: params.weights.clone(),
        tol,
    }
}

/// Solves the alpha-fair problem at real-valued occupancy `n`.
pub fn solve_alpha_fair(
    spec: &NetworkSpec,
    n: &[f64],
    params: &AlphaFairParams,
    tol: f64,
) -> Result<SolveReport> {
    if n.len() != spec.num_types() {
        return Err(Error::DimensionMismatch(format!(
            "occupancy of length {} for {} types",
            n.len(),
            spec.num_types()
        )));
    }
    if params.weights.len() != spec.num_types() {
        return Err(Error::DimensionMismatch(format!(
            "{} weights for {} types",
            params.weights.len(),
            spec.num_types()
        )));
    }
    if params.weights.iter().any(|&w| !w.is_finite() || w <= 0.0) {
        return Err(Error::InvalidParameter("weights must be positive".into()));
    }
    if n.iter().any(|&v| !v.is_finite() || v < 0.0) {
        return Err(Error::InvalidParameter(
            "occupancy entries must be finite and non-negative".into(),
        ));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter("tolerance must be positive".into()));
    }
    if let Alpha::Finite(a) = params.alpha {
        if !a.is_finite() || a < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "alpha must be non-negative, got {a}"
            )));
        }
    }

    let occupied: Vec<usize> = (0..n.len()).filter(|&r| n[r] > 0.0).collect();
    if occupied.is_empty() {
        return Ok(SolveReport {
            allocation: AllocationVector::new(vec![0.0; spec.num_types()]),
            kkt_residual: 0.0,
            iterations: 0,
            binding_resources: Vec::new(),
        });
    }

    let (local, iterations, kkt_residual) = match params.alpha {
        Alpha::Infinite => {
            let speeds: Vec<f64> = occupied.iter().map(|&r| params.weights[r]).collect();
            let mut rem = spec.capacities().to_vec();
            let (b, rounds) = progressive_fill(spec, &mut rem, &occupied, &speeds);
            (b, rounds, 0.0)
        }
        Alpha::Finite(a) if a == 0.0 => {
            let obj: Vec<f64> = occupied
                .iter()
                .map(|&r| params.weights[r] * n[r])
                .collect();
            let (b, examined) = lp_lexmax(spec, &occupied, &obj)?;
            (b, examined, 0.0)
        }
        Alpha::Finite(a) => {
            let problem = Subproblem::from_network(spec, n, &params.weights, &occupied, a)?;
            let sol = problem.barrier_solve(tol)?;
            (sol.x, sol.iterations, sol.residual)
        }
    };

    let mut allocation = vec![0.0; spec.num_types()];
    for (i, &r) in occupied.iter().enumerate() {
        allocation[r] = local[i].max(0.0);
    }
    let binding_resources = saturated_resources(spec, &allocation, (tol * 10.0).max(1e-7))?;
    Ok(SolveReport {
        allocation: AllocationVector::new(allocation),
        kkt_residual,
        iterations,
        binding_resources,
    })
}

/// Progressive filling: the bandwidth of member `i` rises at `speeds[i]`
/// until one of its resources runs out of remaining capacity. `rem` is
/// consumed in place so that callers can fill level by level. Returns the
/// per-member bandwidth and the number of fill rounds.
pub(crate) fn progressive_fill(
    spec: &NetworkSpec,
    rem: &mut [f64],
    members: &[usize],
    speeds: &[f64],
) -> (Vec<f64>, u64) {
    debug_assert_eq!(members.len(), speeds.len());
    let mut b = vec![0.0; members.len()];
    let mut active: Vec<usize> = (0..members.len()).filter(|&i| speeds[i] > 0.0).collect();
    let mut rounds = 0u64;
    while !active.is_empty() {
        rounds += 1;
        // Tightest resource under the current joint fill speeds.
        let mut dt = f64::INFINITY;
        for j in 0..rem.len() {
            if !rem[j].is_finite() {
                continue;
            }
            let speed: f64 = active
                .iter()
                .filter(|&&i| spec.uses(j, members[i]))
                .map(|&i| speeds[i])
                .sum();
            if speed > 0.0 {
                dt = dt.min(rem[j] / speed);
            }
        }
        if !dt.is_finite() {
            // Every active member sees only infinite remaining capacity;
            // impossible under the finite-coverage invariant.
            debug_assert!(false, "progressive fill unbounded");
            break;
        }
        let dt = dt.max(0.0);
        for &i in &active {
            b[i] += speeds[i] * dt;
            for &j in spec.resources_of(members[i]) {
                if rem[j].is_finite() {
                    rem[j] -= speeds[i] * dt;
                }
            }
        }
        let scale: f64 = 1e-12;
        for v in rem.iter_mut() {
            if v.is_finite() && v.abs() < scale {
                *v = 0.0;
            }
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        // Freeze members that touch an exhausted resource.
        active.retain(|&i| spec.resources_of(members[i]).iter().all(|&j| rem[j] > 0.0));
    }
    (b, rounds)
}

/// Exact linear-program solve for `alpha = 0` by vertex enumeration.
///
/// Among maximisers of `sum obj[i] * b[i]` the lexicographically largest
/// vertex (by type index) is returned; the optimal face of a bounded
/// polytope attains its lexicographic maximum at a vertex, so enumeration
/// realises the tie rule exactly.
fn lp_lexmax(spec: &NetworkSpec, occupied: &[usize], obj: &[f64]) -> Result<(Vec<f64>, u64)> {
    let d = occupied.len();
    // Constraint rows: finite resources touching an occupied type, then
    // non-negativity for each variable.
    let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
    for j in 0..spec.num_resources() {
        let c = spec.capacity(j);
        if !c.is_finite() {
            continue;
        }
        let coeffs: Vec<f64> = occupied
            .iter()
            .map(|&r| if spec.uses(j, r) { 1.0 } else { 0.0 })
            .collect();
        if coeffs.iter().any(|&v| v != 0.0) {
            rows.push((coeffs, c));
        }
    }
    for i in 0..d {
        let mut coeffs = vec![0.0; d];
        coeffs[i] = -1.0;
        rows.push((coeffs, 0.0));
    }
    let m = rows.len();
    let combos = binomial(m, d);
    if combos > 2_000_000 {
        return Err(Error::ScanTooLarge(format!(
            "throughput LP would enumerate {combos} bases"
        )));
    }

    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut examined = 0u64;
    let mut choice: Vec<usize> = (0..d).collect();
    loop {
        examined += 1;
        if let Some(x) = solve_square(&choice, &rows, d) {
            if feasible_point(&rows, &x) {
                let val: f64 = (0..d).map(|i| obj[i] * x[i]).sum();
                let better = match &best {
                    None => true,
                    Some((bv, bx)) => {
                        if val > bv + 1e-9 * (1.0 + bv.abs()) {
                            true
                        } else if val < bv - 1e-9 * (1.0 + bv.abs()) {
                            false
                        } else {
                            lex_greater(&x, bx)
                        }
                    }
                };
                if better {
                    best = Some((val, x));
                }
            }
        }
        if !next_combination(&mut choice, m, d) {
            break;
        }
    }
    let (_, x) = best.ok_or_else(|| {
        Error::SolverFailure("throughput LP found no feasible vertex".into())
    })?;
    Ok((x.iter().map(|&v| v.max(0.0)).collect(), examined))
}

fn binomial(n: usize, k: usize) -> u128 {
    let mut acc: u128 = 1;
    for i in 0..k.min(n) {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > 1 << 60 {
            return acc;
        }
    }
    acc
}

fn next_combination(choice: &mut [usize], m: usize, d: usize) -> bool {
    if d == 0 {
        return false;
    }
    let mut i = d;
    while i > 0 {
        i -= 1;
        if choice[i] < m - (d - i) {
            choice[i] += 1;
            for j in i + 1..d {
                choice[j] = choice[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Solves the d x d equality system of the chosen rows; `None` when singular.
fn solve_square(choice: &[usize], rows: &[(Vec<f64>, f64)], d: usize) -> Option<Vec<f64>> {
    let mut a = vec![vec![0.0; d + 1]; d];
    for (i, &k) in choice.iter().enumerate() {
        a[i][..d].copy_from_slice(&rows[k].0);
        a[i][d] = rows[k].1;
    }
    for col in 0..d {
        let (pivot, pv) = (col..d)
            .map(|r| (r, a[r][col].abs()))
            .max_by(|x, y| x.1.total_cmp(&y.1))?;
        if pv < 1e-10 {
            return None;
        }
        a.swap(col, pivot);
        for r in 0..d {
            if r == col {
                continue;
            }
            let f = a[r][col] / a[col][col];
            if f != 0.0 {
                for c in col..=d {
                    a[r][c] -= f * a[col][c];
                }
            }
        }
    }
    Some((0..d).map(|i| a[i][d] / a[i][i]).collect())
}

fn feasible_point(rows: &[(Vec<f64>, f64)], x: &[f64]) -> bool {
    rows.iter().all(|(coeffs, cap)| {
        let load: f64 = coeffs.iter().zip(x).map(|(a, v)| a * v).sum();
        load <= cap + 1e-9 * (1.0 + cap.abs())
    })
}

fn lex_greater(a: &[f64], b: &[f64]) -> bool {
    for (x, y) in a.iter().zip(b) {
        if (x - y).abs() > 1e-9 {
            return x > y;
        }
    }
    false
}

/// Strictly concave subproblem over the occupied classes.
///
/// Shared by the full network solve and by priority levels that share their
/// capacity proportionally (see [`crate::control`]).
pub(crate) struct Subproblem {
    /// Constraints `sum_{i in members} x[i] <= cap`, tagged with the original
    /// resource index for the binding report.
    cons: Vec<Constraint>,
    /// Normalised log objective coefficients `log(w) + alpha * log(n)`.
    lgam: Vec<f64>,
    alpha: f64,
}

pub(crate) struct Constraint {
    pub members: Vec<usize>,
    pub cap: f64,
}

pub(crate) struct BarrierSolution {
    pub x: Vec<f64>,
    pub iterations: u64,
    pub residual: f64,
}

impl Subproblem {
    fn from_network(
        spec: &NetworkSpec,
        n: &[f64],
        weights: &[f64],
        occupied: &[usize],
        alpha: f64,
    ) -> Result<Self> {
        let mut cons = Vec::new();
        for j in 0..spec.num_resources() {
            let cap = spec.capacity(j);
            if !cap.is_finite() {
                continue;
            }
            let members: Vec<usize> = (0..occupied.len())
                .filter(|&i| spec.uses(j, occupied[i]))
                .collect();
            if !members.is_empty() {
                cons.push(Constraint { members, cap });
            }
        }
        let lgam: Vec<f64> = occupied
            .iter()
            .map(|&r| weights[r].ln() + alpha * n[r].ln())
            .collect();
        Self::new(cons, lgam, alpha)
    }

    pub(crate) fn new(cons: Vec<Constraint>, mut lgam: Vec<f64>, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "interior-point solve requires 0 < alpha < infinity, got {alpha}"
            )));
        }
        let top = lgam.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for v in lgam.iter_mut() {
            *v = (*v - top).max(-600.0);
        }
        for i in 0..lgam.len() {
            if !cons.iter().any(|c| c.members.contains(&i)) {
                return Err(Error::InvalidNetwork(format!(
                    "variable {i} is unconstrained; finite coverage is required"
                )));
            }
        }
        Ok(Self { cons, lgam, alpha })
    }

    fn utility(&self, x: &[f64]) -> f64 {
        let a = self.alpha;
        if (a - 1.0).abs() < 1e-12 {
            x.iter()
                .zip(&self.lgam)
                .map(|(&xi, &lg)| lg.exp() * xi.ln())
                .sum()
        } else {
            x.iter()
                .zip(&self.lgam)
                .map(|(&xi, &lg)| lg.exp() * xi.powf(1.0 - a) / (1.0 - a))
                .sum()
        }
    }

    /// Marginal utility `w n^alpha x^(-alpha)`, evaluated in log space.
    fn marginal(&self, i: usize, xi: f64) -> f64 {
        (self.lgam[i] - self.alpha * xi.ln()).exp()
    }

    fn slacks(&self, x: &[f64]) -> Vec<f64> {
        self.cons
            .iter()
            .map(|c| c.cap - c.members.iter().map(|&i| x[i]).sum::<f64>())
            .collect()
    }

    /// Strictly feasible starting point: half of an even split of the
    /// tightest resource of each variable.
    fn start(&self) -> Vec<f64> {
        let d = self.lgam.len();
        let mut x = vec![f64::INFINITY; d];
        for c in &self.cons {
            let share = 0.5 * c.cap / c.members.len() as f64;
            for &i in &c.members {
                x[i] = x[i].min(share);
            }
        }
        for v in x.iter_mut() {
            debug_assert!(v.is_finite());
            *v = v.max(1e-300);
        }
        x
    }

    /// Log-barrier path following. The returned residual is the worst of the
    /// relative stationarity, complementarity and feasibility measures.
    pub(crate) fn barrier_solve(&self, tol: f64) -> Result<BarrierSolution> {
        let d = self.lgam.len();
        let m = self.cons.len();
        let mut x = self.start();
        let mut t = 1.0f64;
        let t_final = 100.0 * m as f64 / tol;
        let mut iterations = 0u64;
        // Best measured iterate along the path. Binding slacks shrink like
        // 1/t, so past t ~ 1/sqrt(eps) the evaluated residual is dominated
        // by cancellation in `cap - sum x` even though x keeps improving;
        // the minimum over stages is the honest achieved accuracy.
        let mut best: Option<(Vec<f64>, f64)> = None;

        loop {
            // Newton centering at barrier weight t.
            for _ in 0..200 {
                iterations += 1;
                if iterations > MAX_ITERATIONS {
                    return Err(Error::SolverFailure(format!(
                        "barrier exceeded {MAX_ITERATIONS} Newton steps"
                    )));
                }
                let s = self.slacks(&x);
                let mut grad = vec![0.0; d];
                for i in 0..d {
                    grad[i] = t * self.marginal(i, x[i]);
                }
                for (k, c) in self.cons.iter().enumerate() {
                    for &i in &c.members {
                        grad[i] -= 1.0 / s[k];
                    }
                }
                // A = -Hessian, symmetric positive definite.
                let mut a = vec![vec![0.0; d]; d];
                for i in 0..d {
                    a[i][i] = t * self.alpha * (self.lgam[i] - (self.alpha + 1.0) * x[i].ln()).exp();
                }
                for (k, c) in self.cons.iter().enumerate() {
                    let w = 1.0 / (s[k] * s[k]);
                    for &i in &c.members {
                        for &jj in &c.members {
                            a[i][jj] += w;
                        }
                    }
                }
                let p = cholesky_solve(&mut a, &grad).ok_or_else(|| {
                    Error::SolverFailure("Newton system not positive definite".into())
                })?;
                let lambda2: f64 = grad.iter().zip(&p).map(|(g, pi)| g * pi).sum();
                if lambda2 <= 1e-18 * (1.0 + t) {
                    break;
                }
                // Backtrack to stay interior, then for sufficient increase.
                let phi0 = t * self.utility(&x) + s.iter().map(|v| v.ln()).sum::<f64>();
                let mut eta = 1.0f64;
                let mut accepted = false;
                for _ in 0..70 {
                    let xn: Vec<f64> = x.iter().zip(&p).map(|(&xi, &pi)| xi + eta * pi).collect();
                    if xn.iter().all(|&v| v > 0.0) {
                        let sn = self.slacks(&xn);
                        if sn.iter().all(|&v| v > 0.0) {
                            let phin =
                                t * self.utility(&xn) + sn.iter().map(|v| v.ln()).sum::<f64>();
                            if phin >= phi0 + 0.01 * eta * lambda2 {
                                x = xn;
                                accepted = true;
                                break;
                            }
                        }
                    }
                    eta *= 0.5;
                }
                if !accepted {
                    // The quadratic model has flattened out at this scale.
                    break;
                }
            }
            let res = self.residual_at(&x, t);
            if best.as_ref().map_or(true, |(_, b)| res < *b) {
                best = Some((x.clone(), res));
            }
            if t >= t_final {
                break;
            }
            t = (t * 20.0).min(t_final);
        }

        let (x, residual) = best.expect("at least one barrier stage ran");
        Ok(BarrierSolution {
            x,
            iterations,
            residual,
        })
    }

    /// KKT residuals with the barrier multipliers `y_k = 1 / (t s_k)`.
    fn residual_at(&self, x: &[f64], t: f64) -> f64 {
        let d = self.lgam.len();
        let s = self.slacks(x);
        let mut stationarity = 0.0f64;
        for i in 0..d {
            let g = self.marginal(i, x[i]);
            let mut q = 0.0;
            for (k, c) in self.cons.iter().enumerate() {
                if c.members.contains(&i) {
                    q += 1.0 / (t * s[k]);
                }
            }
            let denom = g.max(q).max(1e-300);
            stationarity = stationarity.max((g - q).abs() / denom);
        }
        let mut complementarity = 0.0f64;
        let mut feasibility = 0.0f64;
        for (k, c) in self.cons.iter().enumerate() {
            let y = 1.0 / (t * s[k]);
            complementarity = complementarity.max(y * s[k] / (1.0 + y * c.cap));
            feasibility = feasibility.max((-s[k]).max(0.0) / (1.0 + c.cap));
        }
        stationarity.max(complementarity).max(feasibility)
    }
}

/// Solves `A p = g` for symmetric positive definite `A`, in place.
fn cholesky_solve(a: &mut [Vec<f64>], g: &[f64]) -> Option<Vec<f64>> {
    let d = g.len();
    // Ridge fallback keeps borderline systems factorable; the residual
    // check downstream still reports the achieved accuracy honestly.
    for attempt in 0..2 {
        if attempt == 1 {
            let scale: f64 = (0..d).map(|i| a[i][i]).fold(0.0, f64::max);
            for i in 0..d {
                a[i][i] += 1e-12 * scale.max(1e-300);
            }
        }
        let mut l = vec![vec![0.0; d]; d];
        let mut ok = true;
        'outer: for i in 0..d {
            for j in 0..=i {
                let mut sum = a[i][j];
                for k in 0..j {
                    sum -= l[i][k] * l[j][k];
                }
                if i == j {
                    if sum <= 0.0 {
                        ok = false;
                        break 'outer;
                    }
                    l[i][j] = sum.sqrt();
                } else {
                    l[i][j] = sum / l[j][j];
                }
            }
        }
        if !ok {
            continue;
        }
        let mut z = vec![0.0; d];
        for i in 0..d {
            let mut sum = g[i];
            for k in 0..i {
                sum -= l[i][k] * z[k];
            }
            z[i] = sum / l[i][i];
        }
        let mut p = vec![0.0; d];
        for i in (0..d).rev() {
            let mut sum = z[i];
            for k in i + 1..d {
                sum -= l[k][i] * p[k];
            }
            p[i] = sum / l[i][i];
        }
        return Some(p);
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::is_feasible;

    fn single_resource(num_types: usize, c: f64) -> NetworkSpec {
        NetworkSpec::new(
            vec![vec![1; num_types]],
            vec![c],
            vec![0.1; num_types],
            vec![1.0; num_types],
        )
        .unwrap()
    }

    fn nested_pair() -> NetworkSpec {
        NetworkSpec::new(
            vec![vec![1, 1], vec![0, 1]],
            vec![1.0, 1.0],
            vec![0.5, 0.3],
            vec![1.0, 1.0],
        )
        .unwrap()
    }

    /// Brute-force maximiser over a feasibility grid; independent of the
    /// solver and deliberately slow.
    fn grid_oracle_2d(
        spec: &NetworkSpec,
        n: &[f64],
        params: &AlphaFairParams,
        step: f64,
    ) -> Vec<f64> {
        let a = match params.alpha {
            Alpha::Finite(a) => a,
            Alpha::Infinite => panic!("grid oracle only covers finite alpha"),
        };
        let util = |b: &[f64]| -> f64 {
            let mut u = 0.0;
            for r in 0..n.len() {
                if n[r] <= 0.0 {
                    continue;
                }
                let coeff = params.weights[r] * n[r].powf(a);
                u += if (a - 1.0).abs() < 1e-12 {
                    coeff * b[r].max(1e-12).ln()
                } else {
                    coeff * b[r].max(1e-12).powf(1.0 - a) / (1.0 - a)
                };
            }
            u
        };
        let bound: f64 = spec
            .capacities()
            .iter()
            .cloned()
            .filter(|c| c.is_finite())
            .fold(0.0, f64::max);
        let steps = (bound / step).round() as usize;
        let mut best = (f64::NEG_INFINITY, vec![0.0; n.len()]);
        for i in 0..=steps {
            for k in 0..=steps {
                let mut b = vec![0.0; n.len()];
                if n[0] > 0.0 {
                    b[0] = i as f64 * step;
                }
                if n.len() > 1 && n[1] > 0.0 {
                    b[1] = k as f64 * step;
                }
                if !is_feasible(spec, &b, 1e-9).unwrap() {
                    continue;
                }
                let u = util(&b);
                if u > best.0 {
                    best = (u, b);
                }
            }
        }
        best.1
    }

    #[test]
    fn proportional_fair_single_resource_closed_form() {
        let spec = single_resource(2, 1.0);
        let params = AlphaFairParams::unweighted(Alpha::Finite(1.0), 2);
        let rep = solve_alpha_fair(&spec, &[1.0, 3.0], &params, 1e-10).unwrap();
        let b = rep.allocation.bandwidths();
        assert!((b[0] - 0.25).abs() < 1e-8, "b = {b:?}");
        assert!((b[1] - 0.75).abs() < 1e-8);
        // The evaluated residual floors near sqrt(eps): binding slacks of
        // size 1/t cancel against the capacity in doubles.
        assert!(rep.kkt_residual <= 1e-6, "residual {}", rep.kkt_residual);
        assert_eq!(rep.binding_resources, vec![0]);

        let oracle = grid_oracle_2d(&spec, &[1.0, 3.0], &params, 1e-3);
        assert!((b[0] - oracle[0]).abs() < 2e-3);
        assert!((b[1] - oracle[1]).abs() < 2e-3);
    }

    #[test]
    fn nested_pair_even_split() {
        let spec = nested_pair();
        let params = AlphaFairParams::unweighted(Alpha::Finite(1.0), 2);
        let rep = solve_alpha_fair(&spec, &[1.0, 1.0], &params, 1e-10).unwrap();
        let b = rep.allocation.bandwidths();
        assert!((b[0] - 0.5).abs() < 1e-8);
        assert!((b[1] - 0.5).abs() < 1e-8);

        let oracle = grid_oracle_2d(&spec, &[1.0, 1.0], &params, 1e-3);
        assert!((b[0] - oracle[0]).abs() < 2e-3);
        assert!((b[1] - oracle[1]).abs() < 2e-3);
    }

    #[test]
    fn empty_classes_get_zero() {
        let spec = nested_pair();
        for alpha in [Alpha::Finite(0.0), Alpha::Finite(0.5), Alpha::Finite(2.0), Alpha::Infinite]
        {
            let params = AlphaFairParams::unweighted(alpha, 2);
            let rep = solve_alpha_fair(&spec, &[0.0, 2.0], &params, 1e-9).unwrap();
            let b = rep.allocation.bandwidths();
            assert_eq!(b[0], 0.0);
            assert!((b[1] - 1.0).abs() < 1e-6, "alpha {alpha:?} gave {b:?}");
        }
        let params = AlphaFairParams::unweighted(Alpha::Finite(1.0), 2);
        let rep = solve_alpha_fair(&spec, &[0.0, 0.0], &params, 1e-9).unwrap();
        assert_eq!(rep.allocation.bandwidths(), &[0.0, 0.0]);
        assert_eq!(rep.iterations, 0);
    }

    #[test]
    fn scale_invariance_at_alpha_one() {
        let spec = nested_pair();
        let params = AlphaFairParams::unweighted(Alpha::Finite(1.0), 2);
        let a = solve_alpha_fair(&spec, &[2.0, 5.0], &params, 1e-10).unwrap();
        let b = solve_alpha_fair(&spec, &[6.0, 15.0], &params, 1e-10).unwrap();
        for r in 0..2 {
            assert!(
                (a.allocation.get(r) - b.allocation.get(r)).abs() < 1e-9,
                "scaling occupancy changed the alpha=1 optimum"
            );
        }
    }

    #[test]
    fn throughput_lp_prefers_heavy_class_and_breaks_ties_lexicographically() {
        let spec = single_resource(3, 1.0);
        let params = AlphaFairParams::unweighted(Alpha::Finite(0.0), 3);
        let rep = solve_alpha_fair(&spec, &[1.0, 4.0, 2.0], &params, 1e-9).unwrap();
        assert_eq!(rep.allocation.bandwidths(), &[0.0, 1.0, 0.0]);

        // Equal products: the lexicographically largest optimum wins.
        let rep = solve_alpha_fair(&spec, &[2.0, 2.0, 2.0], &params, 1e-9).unwrap();
        assert_eq!(rep.allocation.bandwidths(), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn throughput_lp_beats_grid_search() {
        let spec = nested_pair();
        let params = AlphaFairParams::new(Alpha::Finite(0.0), vec![1.0, 2.0]);
        let n = [2.0, 3.0];
        let rep = solve_alpha_fair(&spec, &n, &params, 1e-9).unwrap();
        let value: f64 = (0..2)
            .map(|r| params.weights[r] * n[r] * rep.allocation.get(r))
            .sum();
        // Coarse independent grid maximum.
        let mut grid_best = f64::NEG_INFINITY;
        for i in 0..=100 {
            for k in 0..=100 {
                let b = [i as f64 / 100.0, k as f64 / 100.0];
                if is_feasible(&spec, &b, 1e-9).unwrap() {
                    let v: f64 = (0..2).map(|r| params.weights[r] * n[r] * b[r]).sum();
                    grid_best = grid_best.max(v);
                }
            }
        }
        assert!(value >= grid_best - 1e-9);
    }

    #[test]
    fn max_min_progressive_fill() {
        // Shared resource 1.5 plus unit dedicated resources.
        let spec = NetworkSpec::new(
            vec![vec![1, 1, 1], vec![1, 0, 0], vec![0, 1, 0], vec![0, 0, 1]],
            vec![1.5, 1.0, 1.0, 1.0],
            vec![0.1; 3],
            vec![1.0; 3],
        )
        .unwrap();
        let params = AlphaFairParams::unweighted(Alpha::Infinite, 3);
        let rep = solve_alpha_fair(&spec, &[1.0, 1.0, 1.0], &params, 1e-9).unwrap();
        let b = rep.allocation.bandwidths();
        for r in 0..3 {
            assert!((b[r] - 0.5).abs() < 1e-12, "even split expected, got {b:?}");
        }
        // One class empty: the rest split the shared link up to their caps.
        let rep = solve_alpha_fair(&spec, &[3.0, 0.0, 1.0], &params, 1e-9).unwrap();
        let b = rep.allocation.bandwidths();
        assert!((b[0] - 0.75).abs() < 1e-12);
        assert_eq!(b[1], 0.0);
        assert!((b[2] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn weighted_max_min_fills_at_weight_speeds() {
        let spec = single_resource(2, 1.0);
        let params = AlphaFairParams::new(Alpha::Infinite, vec![3.0, 1.0]);
        let rep = solve_alpha_fair(&spec, &[1.0, 1.0], &params, 1e-9).unwrap();
        let b = rep.allocation.bandwidths();
        assert!((b[0] - 0.75).abs() < 1e-12);
        assert!((b[1] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn kkt_residual_meets_tolerance_on_random_instances() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(7);
        for case in 0..60 {
            let num_types = rng.gen_range(1..=6);
            let num_resources = rng.gen_range(1..=4);
            let mut incidence = vec![vec![0u8; num_types]; num_resources];
            for r in 0..num_types {
                // Guarantee coverage, then sprinkle extra memberships.
                incidence[rng.gen_range(0..num_resources)][r] = 1;
                for j in 0..num_resources {
                    if rng.gen_bool(0.4) {
                        incidence[j][r] = 1;
                    }
                }
            }
            let capacities: Vec<f64> = (0..num_resources)
                .map(|_| rng.gen_range(0.5..4.0))
                .collect();
            let spec = NetworkSpec::new(
                incidence,
                capacities,
                vec![0.1; num_types],
                vec![1.0; num_types],
            )
            .unwrap();
            let n: Vec<f64> = (0..num_types)
                .map(|_| if rng.gen_bool(0.2) { 0.0 } else { rng.gen_range(1..40) as f64 })
                .collect();
            let weights: Vec<f64> = (0..num_types).map(|_| rng.gen_range(0.5..2.0)).collect();
            for alpha in [0.5, 1.0, 2.0] {
                let params = AlphaFairParams::new(Alpha::Finite(alpha), weights.clone());
                let rep = solve_alpha_fair(&spec, &n, &params, 1e-8).unwrap();
                assert!(
                    rep.kkt_residual <= 1e-6,
                    "case {case} alpha {alpha}: residual {}",
                    rep.kkt_residual
                );
                assert!(is_feasible(&spec, rep.allocation.bandwidths(), 1e-7).unwrap());
                for r in 0..num_types {
                    if n[r] == 0.0 {
                        assert_eq!(rep.allocation.get(r), 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn feasible_random_perturbations_never_improve_the_objective() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(11);
        let spec = nested_pair();
        let n = [2.0, 4.0];
        for &alpha in &[0.5, 1.0, 2.0] {
            let params = AlphaFairParams::unweighted(Alpha::Finite(alpha), 2);
            let rep = solve_alpha_fair(&spec, &n, &params, 1e-10).unwrap();
            let b = rep.allocation.bandwidths();
            let util = |b: &[f64]| -> f64 {
                (0..2)
                    .map(|r| {
                        let coeff = n[r].powf(alpha);
                        if (alpha - 1.0).abs() < 1e-12 {
                            coeff * b[r].ln()
                        } else {
                            coeff * b[r].powf(1.0 - alpha) / (1.0 - alpha)
                        }
                    })
                    .sum()
            };
            let base = util(b);
            for _ in 0..500 {
                let d0 = rng.gen_range(-1.0..1.0);
                let d1 = rng.gen_range(-1.0..1.0);
                let eps = 1e-4;
                let cand = [b[0] + eps * d0, b[1] + eps * d1];
                if cand.iter().any(|&v| v <= 0.0) || !is_feasible(&spec, &cand, 0.0).unwrap() {
                    continue;
                }
                assert!(
                    util(&cand) <= base + 1e-9,
                    "feasible perturbation improved the alpha={alpha} objective"
                );
            }
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        let spec = nested_pair();
        let params = AlphaFairParams::new(Alpha::Finite(1.0), vec![1.0]);
        assert!(solve_alpha_fair(&spec, &[1.0, 1.0], &params, 1e-8).is_err());
        let params = AlphaFairParams::new(Alpha::Finite(-1.0), vec![1.0, 1.0]);
        assert!(solve_alpha_fair(&spec, &[1.0, 1.0], &params, 1e-8).is_err());
        let params = AlphaFairParams::unweighted(Alpha::Finite(1.0), 2);
        assert!(solve_alpha_fair(&spec, &[1.0, -1.0], &params, 1e-8).is_err());
        assert!(solve_alpha_fair(&spec, &[1.0, 1.0], &params, 0.0).is_err());
    }
}
