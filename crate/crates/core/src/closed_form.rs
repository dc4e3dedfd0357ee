//! Closed forms for the single-user chain under a threshold policy.
//!
//! A threshold policy `tp(n)` schedules iff the ladder index is at least
//! `n`. Under `tp(n)` the predicted-AoII chain has the stationary
//! distribution
//!
//! ```text
//! u^n(j) = rho/(n·rho + 1)                     for 0 <= j <= n
//! u^n(j) = (1-rho)^(j-n) · rho/(n·rho + 1)     for j >= n+1
//! ```
//!
//! from which the long-run average penalty and active time follow in closed
//! form, and the Whittle index of state `n` is the intersection point of the
//! cost lines of `tp(n)` and `tp(n+1)`:
//!
//! ```text
//! W(n) = (s̄^{n+1} - s̄^n) / (ā^n - ā^{n+1})
//! ```
//!
//! All polynomials in `n` are evaluated by Horner's scheme.

use crate::model::{ModelError, SourceParams};

/// Schedule iff the ladder index is at least `n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct ThresholdPolicy(pub u32);

impl ThresholdPolicy {
    pub fn n(self) -> u32 {
        self.0
    }

    pub fn is_active(self, j: u32) -> bool {
        j >= self.0
    }
}

/// Which ladder an index or a solver instance refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Metric {
    Aoii,
    Aoi,
}

impl Metric {
    /// Penalty of ladder state `j` under this metric.
    pub fn ladder_value(self, j: u32, params: &SourceParams) -> f64 {
        let jf = f64::from(j);
        match self {
            Metric::Aoii => params.d() * params.p() * 0.5 * jf * (jf + 1.0),
            Metric::Aoi => jf,
        }
    }
}

fn guard_rho(rho: f64) -> Result<(), ModelError> {
    if rho > 0.0 && rho <= 1.0 {
        Ok(())
    } else {
        Err(ModelError::ChannelProbability(rho))
    }
}

/// Stationary distribution of the predicted chain under `tp(n)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyState {
    n: ThresholdPolicy,
    rho: f64,
}

impl SteadyState {
    pub fn new(n: ThresholdPolicy, rho: f64) -> Result<Self, ModelError> {
        guard_rho(rho)?;
        Ok(Self { n, rho })
    }

    /// Probability mass at ladder index `j`.
    pub fn mass(&self, j: u32) -> f64 {
        let n = self.n.n();
        let base = self.rho / (f64::from(n) * self.rho + 1.0);
        if j <= n {
            base
        } else {
            (1.0 - self.rho).powi((j - n) as i32) * base
        }
    }

    /// Total mass strictly above `j_max`: `(1-rho)^(j_max-n+1) / (n·rho+1)`.
    pub fn tail_mass(&self, j_max: u32) -> f64 {
        let n = self.n.n();
        let j_max = j_max.max(n);
        (1.0 - self.rho).powi((j_max - n + 1) as i32) / (f64::from(n) * self.rho + 1.0)
    }

    /// Smallest truncation index whose tail mass is below `tol`.
    pub fn truncation_index(&self, tol: f64) -> u32 {
        let n = self.n.n();
        if self.rho >= 1.0 {
            return n;
        }
        let extra = (tol.ln() / (1.0 - self.rho).ln()).ceil();
        n + extra.max(0.0) as u32
    }
}

/// Prop-1 closed form: mass of ladder index `j` under `tp(n)`.
pub fn stationary_mass(n: ThresholdPolicy, rho: f64, j: u32) -> Result<f64, ModelError> {
    Ok(SteadyState::new(n, rho)?.mass(j))
}

fn active_time(nf: f64, rho: f64) -> f64 {
    1.0 / (nf * rho + 1.0)
}

fn aoii_mean(nf: f64, dp: f64, rho: f64) -> f64 {
    let bracket = ((nf / 6.0 + 1.0 / (2.0 * rho)) * nf
        + (6.0 - rho * rho - 3.0 * rho) / (6.0 * rho * rho))
        * nf
        + (1.0 - rho) / (rho * rho * rho);
    dp * rho / (nf * rho + 1.0) * bracket
}

fn aoi_mean(nf: f64, rho: f64) -> f64 {
    let bracket = (0.5 * nf + 0.5 + (1.0 - rho) / rho) * nf + (1.0 - rho) / (rho * rho);
    rho / (nf * rho + 1.0) * bracket
}

/// Long-run average predicted AoII under `tp(n)`.
pub fn avg_aoii(n: ThresholdPolicy, params: &SourceParams) -> f64 {
    aoii_mean(f64::from(n.n()), params.d() * params.p(), params.rho())
}

/// Long-run fraction of active slots under `tp(n)`: `1/(n·rho+1)`.
pub fn avg_active(n: ThresholdPolicy, rho: f64) -> Result<f64, ModelError> {
    guard_rho(rho)?;
    Ok(active_time(f64::from(n.n()), rho))
}

/// Long-run average AoI under `tp(n)` (the AoI ladder shares the Prop-1
/// distribution; this is its first moment).
pub fn avg_aoi(n: ThresholdPolicy, rho: f64) -> Result<f64, ModelError> {
    guard_rho(rho)?;
    Ok(aoi_mean(f64::from(n.n()), rho))
}

/// Whittle index of predicted-AoII state `n`:
/// `d·p·[rho·n³/3 + (1+rho/2)·n² + (1+rho/6+1/rho)·n + 1/rho]`.
pub fn whittle_aoii(n: u32, params: &SourceParams) -> f64 {
    let rho = params.rho();
    let nf = f64::from(n);
    let poly = ((rho / 3.0 * nf + 1.0 + rho / 2.0) * nf + 1.0 + rho / 6.0 + 1.0 / rho) * nf
        + 1.0 / rho;
    params.d() * params.p() * poly
}

/// Whittle index of AoI state `n`: `n(n+1)·rho/2 + n + 1`.
pub fn whittle_aoi(n: u32, rho: f64) -> Result<f64, ModelError> {
    guard_rho(rho)?;
    let nf = f64::from(n);
    Ok((rho / 2.0 * nf + rho / 2.0 + 1.0) * nf + 1.0)
}

/// Index of state `n` computed as the intersection of the cost lines of
/// `tp(n)` and `tp(n+1)`, `(s̄^{n+1} - s̄^n) / (ā^n - ā^{n+1})`, evaluating
/// averages rather than the index polynomial. Serves as an independent route
/// to [`whittle_aoii`] / [`whittle_aoi`].
pub fn whittle_intersection(n: u32, params: &SourceParams, metric: Metric) -> f64 {
    let rho = params.rho();
    let nf = f64::from(n);
    let (s_lo, s_hi) = match metric {
        Metric::Aoii => {
            let dp = params.d() * params.p();
            (aoii_mean(nf, dp, rho), aoii_mean(nf + 1.0, dp, rho))
        }
        Metric::Aoi => (aoi_mean(nf, rho), aoi_mean(nf + 1.0, rho)),
    };
    let denom = active_time(nf, rho) - active_time(nf + 1.0, rho);
    (s_hi - s_lo) / denom
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IndexabilityViolation {
    ActiveTimeNotDecreasing { n: u32, at: f64, next: f64 },
    IndexNotIncreasing { n: u32, at: f64, next: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndexabilityReport {
    pub indexable: bool,
    pub first_violation: Option<IndexabilityViolation>,
}

/// Checks indexability numerically over `n ∈ [0, n_max]`: the average active
/// time must strictly decrease and the AoII Whittle index strictly increase.
pub fn check_indexability(params: &SourceParams, n_max: u32) -> IndexabilityReport {
    assert!(n_max >= 1, "n_max must be at least 1");
    let rho = params.rho();
    let mut active = active_time(0.0, rho);
    let mut index = whittle_aoii(0, params);
    for n in 0..n_max {
        let next_active = active_time(f64::from(n + 1), rho);
        if next_active >= active {
            return IndexabilityReport {
                indexable: false,
                first_violation: Some(IndexabilityViolation::ActiveTimeNotDecreasing {
                    n,
                    at: active,
                    next: next_active,
                }),
            };
        }
        let next_index = whittle_aoii(n + 1, params);
        if next_index <= index {
            return IndexabilityReport {
                indexable: false,
                first_violation: Some(IndexabilityViolation::IndexNotIncreasing {
                    n,
                    at: index,
                    next: next_index,
                }),
            };
        }
        active = next_active;
        index = next_index;
    }
    IndexabilityReport { indexable: true, first_violation: None }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(p: f64, d: f64, rho: f64) -> SourceParams {
        SourceParams::new(p, d, rho).unwrap()
    }

    fn rel_err(got: f64, want: f64) -> f64 {
        (got - want).abs() / want.abs().max(1e-12)
    }

    /// Power-iterate the truncated chain under tp(n) until the distribution
    /// is stationary: passive states advance deterministically, active ones
    /// reset with probability rho; the last state self-loops on failure.
    fn balance_pmf(n: u32, rho: f64, j_max: usize) -> Vec<f64> {
        let n = n as usize;
        let mut pi = vec![1.0 / (j_max as f64 + 1.0); j_max + 1];
        let mut next = vec![0.0; j_max + 1];
        for _ in 0..2_000_000 {
            next.iter_mut().for_each(|x| *x = 0.0);
            for (j, &mass) in pi.iter().enumerate() {
                let up = (j + 1).min(j_max);
                if j < n {
                    next[up] += mass;
                } else {
                    next[0] += rho * mass;
                    next[up] += (1.0 - rho) * mass;
                }
            }
            let diff: f64 = pi.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
            std::mem::swap(&mut pi, &mut next);
            if diff < 1e-15 {
                break;
            }
        }
        pi
    }

    #[test]
    fn stationary_mass_examples() {
        assert_eq!(stationary_mass(ThresholdPolicy(0), 0.5, 0).unwrap(), 0.5);
        let got = stationary_mass(ThresholdPolicy(2), 0.5, 4).unwrap();
        assert!((got - 0.0625).abs() < 1e-15);
        assert_eq!(stationary_mass(ThresholdPolicy(2), 1.0, 3).unwrap(), 0.0);
        assert!(stationary_mass(ThresholdPolicy(2), 0.0, 3).is_err());
    }

    #[test]
    fn stationary_mass_matches_balance_solver() {
        for &(n, rho) in &[(0u32, 0.5), (2, 0.5), (3, 0.8), (5, 0.3), (1, 1.0)] {
            let j_max = 220usize;
            let oracle = balance_pmf(n, rho, j_max);
            let ss = SteadyState::new(ThresholdPolicy(n), rho).unwrap();
            // Stay clear of the self-looping truncation state.
            for j in 0..=(j_max / 2) {
                let got = ss.mass(j as u32);
                assert!(
                    (got - oracle[j]).abs() < 1e-9,
                    "n={n} rho={rho} j={j}: {got} vs {}",
                    oracle[j]
                );
            }
        }
    }

    #[test]
    fn stationary_mass_sums_to_one_with_tail() {
        for n in [0u32, 1, 2, 5, 10, 25] {
            for rho in [0.1, 0.3, 0.5, 0.7, 0.9, 1.0] {
                let ss = SteadyState::new(ThresholdPolicy(n), rho).unwrap();
                let j_max = ss.truncation_index(1e-14);
                let total: f64 = (0..=j_max).map(|j| ss.mass(j)).sum::<f64>() + ss.tail_mass(j_max);
                assert!((total - 1.0).abs() < 1e-12, "n={n} rho={rho}: total={total}");
            }
        }
    }

    #[test]
    fn avg_aoii_examples() {
        assert_eq!(avg_aoii(ThresholdPolicy(0), &params(0.5, 1.0, 1.0)), 0.0);
        let pr = params(0.8, 5.0, 0.5);
        assert!(rel_err(avg_aoii(ThresholdPolicy(0), &pr), 8.0) < 1e-12);
        assert!(rel_err(avg_aoii(ThresholdPolicy(1), &pr), 32.0 / 3.0) < 1e-12);
    }

    #[test]
    fn avg_active_examples() {
        assert_eq!(avg_active(ThresholdPolicy(0), 0.37).unwrap(), 1.0);
        assert_eq!(avg_active(ThresholdPolicy(2), 0.5).unwrap(), 0.5);
        assert_eq!(avg_active(ThresholdPolicy(4), 0.25).unwrap(), 0.5);
        assert!(avg_active(ThresholdPolicy(1), 0.0).is_err());
    }

    #[test]
    fn avg_active_matches_stationary_tail() {
        // Σ_{j>=n} u^n(j), truncated where the geometric tail is negligible.
        let ss = SteadyState::new(ThresholdPolicy(4), 0.25).unwrap();
        let j_max = ss.truncation_index(1e-14);
        let sum: f64 = (4..=j_max).map(|j| ss.mass(j)).sum::<f64>() + ss.tail_mass(j_max);
        assert!((sum - 0.5).abs() < 1e-12);
    }

    #[test]
    fn avg_aoi_examples() {
        assert_eq!(avg_aoi(ThresholdPolicy(0), 1.0).unwrap(), 0.0);
        assert!(rel_err(avg_aoi(ThresholdPolicy(0), 0.5).unwrap(), 1.0) < 1e-12);
        assert!(rel_err(avg_aoi(ThresholdPolicy(1), 0.5).unwrap(), 4.0 / 3.0) < 1e-12);
    }

    #[test]
    fn whittle_aoii_examples() {
        let pr = params(0.8, 5.0, 0.5);
        assert!(rel_err(whittle_aoii(0, &pr), 8.0) < 1e-12);
        assert!(rel_err(whittle_aoii(1, &pr), 26.0) < 1e-12);
        assert!(rel_err(whittle_aoii(2, &params(1.0, 1.0, 1.0)), 14.0) < 1e-12);
    }

    #[test]
    fn whittle_aoi_examples() {
        assert_eq!(whittle_aoi(0, 0.3).unwrap(), 1.0);
        assert!(rel_err(whittle_aoi(1, 0.5).unwrap(), 2.5) < 1e-12);
        assert!(rel_err(whittle_aoi(2, 0.5).unwrap(), 4.5) < 1e-12);
        assert!(whittle_aoi(2, 0.0).is_err());
    }

    #[test]
    fn intersection_matches_polynomials() {
        let pr = params(0.8, 5.0, 0.5);
        assert!(rel_err(whittle_intersection(0, &pr, Metric::Aoi), 1.0) < 1e-12);
        assert!(rel_err(whittle_intersection(0, &pr, Metric::Aoii), 8.0) < 1e-12);

        let pr2 = params(0.5, 1.0, 0.3);
        assert!(
            rel_err(whittle_intersection(5, &pr2, Metric::Aoii), whittle_aoii(5, &pr2)) < 1e-9
        );

        for n in 0..=50u32 {
            for &rho in &[0.1, 0.5, 0.9, 1.0] {
                let pr = params(0.7, 3.0, rho);
                assert!(
                    rel_err(whittle_intersection(n, &pr, Metric::Aoii), whittle_aoii(n, &pr))
                        < 1e-9,
                    "AoII n={n} rho={rho}"
                );
                assert!(
                    rel_err(
                        whittle_intersection(n, &pr, Metric::Aoi),
                        whittle_aoi(n, rho).unwrap()
                    ) < 1e-9,
                    "AoI n={n} rho={rho}"
                );
            }
        }
    }

    #[test]
    fn whittle_indices_strictly_increase() {
        let pr = params(0.8, 5.0, 0.5);
        for n in 0..200u32 {
            assert!(whittle_aoii(n + 1, &pr) > whittle_aoii(n, &pr));
            assert!(whittle_aoi(n + 1, 0.5).unwrap() > whittle_aoi(n, 0.5).unwrap());
        }
    }

    #[test]
    fn indexability_examples() {
        assert!(check_indexability(&params(0.8, 5.0, 0.5), 200).indexable);
        assert!(check_indexability(&params(1.0, 1.0, 1.0), 50).indexable);
        assert!(check_indexability(&params(0.99, 100.0, 0.01), 500).indexable);
    }

    #[test]
    fn indexability_reports_degenerate_sources() {
        // p = 0 flattens the index to zero, which breaks strict increase.
        let report = check_indexability(&params(0.0, 5.0, 0.5), 10);
        assert!(!report.indexable);
        assert!(matches!(
            report.first_violation,
            Some(IndexabilityViolation::IndexNotIncreasing { n: 0, .. })
        ));
    }
}
