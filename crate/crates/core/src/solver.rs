//! Relative value iteration for the single-user dual problem.
//!
//! The dual problem charges the per-slot ladder penalty plus `W` per
//! transmission. On the truncated ladder `0..=j_max` the update is
//!
//! ```text
//! V(j) <- min{ c(j) + V(j+1);  c(j) + W + rho·V(0) + (1-rho)·V(j+1) }
//! ```
//!
//! with the truncation state self-looping in place of `j+1`. Iterates are
//! normalized at state 0 and convergence is declared when the span seminorm
//! of successive differences drops below `eps`; the optimal average cost
//! `theta` is the midpoint of the span bounds. A solve is rejected when the
//! active action is not optimal at the truncation state, so the boundary
//! cannot silently distort the extracted policy.

use crate::closed_form::{whittle_aoi, whittle_aoii, Metric, ThresholdPolicy};
use crate::model::SourceParams;
use thiserror::Error;

pub const DEFAULT_EPS: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: u64 = 1_000_000;

/// Hard cap on the truncated ladder size.
pub const J_MAX_CAP: u32 = 1 << 20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("transmission penalty must be finite and nonnegative, got {0}")]
    InvalidPenalty(f64),

    #[error("truncation index must be at least 2, got {0}")]
    TruncationTooShort(u32),

    #[error("no convergence after {iterations} iterations (span residual {residual:e})")]
    NotConverged { residual: f64, iterations: u64 },

    #[error("active action is not optimal at truncation state {j_max}; enlarge the ladder")]
    TruncationTooSmall { j_max: u32 },

    #[error("policy is not threshold-form: active at {first_active}, passive again at {passive_after}")]
    NonThresholdPolicy { first_active: u32, passive_after: u32 },

    #[error("policy has no active state")]
    AllPassive,

    #[error(
        "bisection bracket [{lo}, {hi}] does not straddle the threshold switch \
         (thresholds {threshold_lo} and {threshold_hi})"
    )]
    BracketFailure { lo: f64, hi: f64, threshold_lo: u32, threshold_hi: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    Passive,
    Active,
}

/// Single-user average-cost problem with transmission penalty `w` on the
/// ladder selected by `metric`, truncated at `j_max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualProblem {
    params: SourceParams,
    w: f64,
    metric: Metric,
    j_max: u32,
}

impl DualProblem {
    pub fn new(
        params: SourceParams,
        w: f64,
        metric: Metric,
        j_max: u32,
    ) -> Result<Self, SolverError> {
        if !w.is_finite() || w < 0.0 {
            return Err(SolverError::InvalidPenalty(w));
        }
        if j_max < 2 {
            return Err(SolverError::TruncationTooShort(j_max));
        }
        Ok(Self { params, w, metric, j_max })
    }

    pub fn params(&self) -> &SourceParams {
        &self.params
    }

    pub fn w(&self) -> f64 {
        self.w
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn j_max(&self) -> u32 {
        self.j_max
    }
}

/// Converged solve: differential value function (normalized to `value(0) =
/// 0`), optimal average cost, greedy policy and convergence diagnostics.
#[derive(Debug, Clone)]
pub struct SolveResult {
    problem: DualProblem,
    value: Vec<f64>,
    theta: f64,
    policy: Vec<Action>,
    iterations: u64,
    residual: f64,
}

impl SolveResult {
    pub fn problem(&self) -> &DualProblem {
        &self.problem
    }

    pub fn value(&self, j: u32) -> f64 {
        self.value[j as usize]
    }

    pub fn values(&self) -> &[f64] {
        &self.value
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn policy(&self) -> &[Action] {
        &self.policy
    }

    pub fn iterations(&self) -> u64 {
        self.iterations
    }

    pub fn residual(&self) -> f64 {
        self.residual
    }
}

/// Runs relative value iteration until the span of successive differences
/// drops below `eps`. Ties between the two actions resolve to passive, so
/// the reported threshold is the largest optimal one.
pub fn rvia_solve(
    prob: &DualProblem,
    eps: f64,
    max_iter: u64,
) -> Result<SolveResult, SolverError> {
    assert!(eps > 0.0, "eps must be positive");
    let jm = prob.j_max as usize;
    let rho = prob.params.rho();
    let w = prob.w;
    let cost: Vec<f64> = (0..=jm)
        .map(|j| prob.metric.ladder_value(j as u32, &prob.params))
        .collect();

    let mut v = vec![0.0; jm + 1];
    let mut tv = vec![0.0; jm + 1];
    let mut iterations = 0u64;
    let (theta, residual) = loop {
        iterations += 1;
        let reset = w + rho * v[0];
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for j in 0..=jm {
            let cont = v[if j < jm { j + 1 } else { jm }];
            let passive = cost[j] + cont;
            let active = cost[j] + reset + (1.0 - rho) * cont;
            let best = passive.min(active);
            tv[j] = best;
            let diff = best - v[j];
            lo = lo.min(diff);
            hi = hi.max(diff);
        }
        let span = hi - lo;
        let offset = tv[0];
        for j in 0..=jm {
            v[j] = tv[j] - offset;
        }
        if span < eps {
            break (0.5 * (hi + lo), span);
        }
        if iterations >= max_iter {
            return Err(SolverError::NotConverged { residual: span, iterations });
        }
    };

    let reset = w + rho * v[0];
    let policy: Vec<Action> = (0..=jm)
        .map(|j| {
            let cont = v[if j < jm { j + 1 } else { jm }];
            let active = reset + (1.0 - rho) * cont;
            if active < cont {
                Action::Active
            } else {
                Action::Passive
            }
        })
        .collect();
    if policy[jm] != Action::Active {
        return Err(SolverError::TruncationTooSmall { j_max: prob.j_max });
    }

    Ok(SolveResult { problem: *prob, value: v, theta, policy, iterations, residual })
}

/// Finds the unique threshold of a passive-then-active action sequence.
pub fn threshold_from_actions(policy: &[Action]) -> Result<ThresholdPolicy, SolverError> {
    let Some(first_active) = policy.iter().position(|a| *a == Action::Active) else {
        return Err(SolverError::AllPassive);
    };
    if let Some(offset) = policy[first_active..].iter().position(|a| *a == Action::Passive) {
        return Err(SolverError::NonThresholdPolicy {
            first_active: first_active as u32,
            passive_after: (first_active + offset) as u32,
        });
    }
    Ok(ThresholdPolicy(first_active as u32))
}

/// Extracts the threshold of a converged solve, failing loudly if the
/// optimal policy is not threshold-form.
pub fn extract_threshold(result: &SolveResult) -> Result<ThresholdPolicy, SolverError> {
    threshold_from_actions(&result.policy)
}

/// Active-minus-passive action value at state `j`, via the identity
/// `ΔV(j) = W + rho·(V(0) - V(j+1))`. Requires `j + 1 <= j_max`.
pub fn delta_v(result: &SolveResult, j: u32) -> f64 {
    assert!(j + 1 <= result.problem.j_max, "j+1 exceeds the truncated ladder");
    let rho = result.problem.params.rho();
    result.problem.w + rho * (result.value(0) - result.value(j + 1))
}

/// Truncation index sized for a penalty `w`: four times the expected
/// threshold scale plus the geometric tail length at 1e-12.
pub fn auto_j_max(params: &SourceParams, w: f64, metric: Metric) -> u32 {
    let index = |n: u32| match metric {
        Metric::Aoii => whittle_aoii(n, params),
        Metric::Aoi => whittle_aoi(n, params.rho()).expect("validated rho"),
    };
    let mut scale = 0u32;
    while index(scale) < w && scale < 100_000 {
        scale += 1;
    }
    let rho = params.rho();
    let tail = if rho < 1.0 {
        (1e-12f64.ln() / (1.0 - rho).ln()).ceil() as u32
    } else {
        0
    };
    (4 * (scale + 2) + tail).clamp(8, J_MAX_CAP)
}

/// Solves with an automatically sized ladder, doubling the truncation index
/// until the active action is optimal at the boundary (or the cap binds).
pub fn solve_auto(
    params: &SourceParams,
    w: f64,
    metric: Metric,
) -> Result<SolveResult, SolverError> {
    let mut j_max = auto_j_max(params, w, metric);
    loop {
        let prob = DualProblem::new(*params, w, metric, j_max)?;
        match rvia_solve(&prob, DEFAULT_EPS, DEFAULT_MAX_ITER) {
            Err(SolverError::TruncationTooSmall { .. }) if j_max < J_MAX_CAP => {
                j_max = (j_max * 2).min(J_MAX_CAP);
            }
            other => return other,
        }
    }
}

/// Penalty at which the optimal threshold switches from `n` to `n+1`, found
/// by bisection over RVIA solves. Independent oracle for the closed-form
/// index of state `n`: the two agree up to the bisection tolerance.
pub fn threshold_boundary(
    params: &SourceParams,
    n: u32,
    metric: Metric,
) -> Result<f64, SolverError> {
    let closed = match metric {
        Metric::Aoii => whittle_aoii(n, params),
        Metric::Aoi => whittle_aoi(n, params.rho()).expect("validated rho"),
    };
    let threshold_at = |w: f64| -> Result<u32, SolverError> {
        Ok(extract_threshold(&solve_auto(params, w, metric)?)?.n())
    };

    let mut lo = 0.0;
    let mut hi = (closed * 4.0).max(1.0);
    let t_lo = threshold_at(lo)?;
    let t_hi = threshold_at(hi)?;
    if t_lo > n || t_hi <= n {
        return Err(SolverError::BracketFailure {
            lo,
            hi,
            threshold_lo: t_lo,
            threshold_hi: t_hi,
        });
    }

    for _ in 0..200 {
        if hi - lo <= 1e-6 * hi.max(1.0) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if threshold_at(mid)? > n {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closed_form::{avg_active, avg_aoii};

    fn params(p: f64, d: f64, rho: f64) -> SourceParams {
        SourceParams::new(p, d, rho).unwrap()
    }

    #[test]
    fn free_transmission_schedules_everywhere() {
        let result = solve_auto(&params(0.8, 5.0, 0.5), 0.0, Metric::Aoii).unwrap();
        assert!(result.policy().iter().all(|a| *a == Action::Active));
        assert_eq!(extract_threshold(&result).unwrap(), ThresholdPolicy(0));
    }

    #[test]
    fn thresholds_bracket_the_closed_form_indices() {
        let pr = params(0.8, 5.0, 0.5);
        // Index values at states 0 and 1 are 8 and 26.
        let r = solve_auto(&pr, 8.5, Metric::Aoii).unwrap();
        assert_eq!(extract_threshold(&r).unwrap(), ThresholdPolicy(1));
        let r = solve_auto(&pr, 30.0, Metric::Aoii).unwrap();
        assert_eq!(extract_threshold(&r).unwrap(), ThresholdPolicy(2));
    }

    #[test]
    fn threshold_from_actions_examples() {
        use Action::{Active as A, Passive as P};
        assert_eq!(threshold_from_actions(&[A, A, A]).unwrap(), ThresholdPolicy(0));
        assert_eq!(threshold_from_actions(&[P, A, A]).unwrap(), ThresholdPolicy(1));
        assert_eq!(
            threshold_from_actions(&[P, A, P, A]),
            Err(SolverError::NonThresholdPolicy { first_active: 1, passive_after: 2 })
        );
        assert_eq!(threshold_from_actions(&[P, P]), Err(SolverError::AllPassive));
    }

    #[test]
    fn value_function_is_nondecreasing() {
        for &w in &[0.0, 5.0, 30.0] {
            let r = solve_auto(&params(0.8, 5.0, 0.5), w, Metric::Aoii).unwrap();
            for pair in r.values().windows(2) {
                assert!(pair[1] >= pair[0] - 1e-9, "w={w}: {} then {}", pair[0], pair[1]);
            }
            assert_eq!(r.value(0), 0.0);
        }
    }

    #[test]
    fn delta_v_is_nonincreasing_and_flips_at_threshold() {
        let pr = params(0.8, 5.0, 0.5);
        let r = solve_auto(&pr, 30.0, Metric::Aoii).unwrap();
        let n = extract_threshold(&r).unwrap().n();
        let j_max = r.problem().j_max();
        for j in 0..j_max - 1 {
            assert!(delta_v(&r, j + 1) <= delta_v(&r, j) + 1e-9, "j={j}");
        }
        for j in 0..j_max {
            if j < n {
                assert!(delta_v(&r, j) >= 0.0, "passive state {j} has negative gap");
            } else {
                assert!(delta_v(&r, j) < 0.0, "active state {j} has nonnegative gap");
            }
        }
    }

    #[test]
    fn free_transmission_has_negative_gap() {
        let r = solve_auto(&params(0.8, 5.0, 0.5), 0.0, Metric::Aoii).unwrap();
        // Any state whose successor value exceeds V(0) strictly prefers reset.
        assert!(delta_v(&r, 3) < 0.0);
    }

    #[test]
    fn theta_matches_threshold_cost_line() {
        let pr = params(0.8, 5.0, 0.5);
        let w = 30.0;
        let r = solve_auto(&pr, w, Metric::Aoii).unwrap();
        let n = extract_threshold(&r).unwrap();
        let line = |n: ThresholdPolicy| {
            avg_aoii(n, &pr) + w * avg_active(n, pr.rho()).unwrap()
        };
        let at_opt = line(n);
        assert!((r.theta() - at_opt).abs() <= 1e-6 * at_opt.abs().max(1.0));
        assert!(at_opt <= line(ThresholdPolicy(n.n() + 1)) + 1e-9);
        if n.n() > 0 {
            assert!(at_opt <= line(ThresholdPolicy(n.n() - 1)) + 1e-9);
        }
    }

    #[test]
    fn extracted_threshold_is_monotone_in_w() {
        let pr = params(0.5, 1.0, 0.3);
        let mut last = 0;
        for k in 0..12 {
            let w = 0.25 * 1.8f64.powi(k);
            let n = extract_threshold(&solve_auto(&pr, w, Metric::Aoii).unwrap())
                .unwrap()
                .n();
            assert!(n >= last, "w={w}: threshold dropped from {last} to {n}");
            last = n;
        }
    }

    #[test]
    fn boundary_matches_closed_forms() {
        let pr = params(0.8, 5.0, 0.5);
        let b = threshold_boundary(&pr, 0, Metric::Aoi).unwrap();
        assert!((b - 1.0).abs() < 1e-4, "AoI boundary at 0: {b}");
        let b = threshold_boundary(&pr, 0, Metric::Aoii).unwrap();
        assert!((b - 8.0).abs() < 1e-3, "AoII boundary at 0: {b}");
        let b = threshold_boundary(&pr, 1, Metric::Aoii).unwrap();
        assert!((b - 26.0).abs() < 1e-3, "AoII boundary at 1: {b}");
    }

    #[test]
    fn rejects_invalid_problems() {
        let pr = params(0.8, 5.0, 0.5);
        assert!(matches!(
            DualProblem::new(pr, -1.0, Metric::Aoii, 32),
            Err(SolverError::InvalidPenalty(_))
        ));
        assert!(matches!(
            DualProblem::new(pr, 1.0, Metric::Aoii, 1),
            Err(SolverError::TruncationTooShort(1))
        ));
    }
}
