//! Grid-based property suites for the planner primitives.
//!
//! Each suite reports whether every check passed and the smallest margin seen,
//! where a negative margin marks a violation.

use serde::Serialize;

use crate::error::Result;
use crate::planner::{
    chernoff_lower, chernoff_upper, hypergeom_tail_exact, kl_bernoulli, kl_bernoulli_dalpha,
    min_tolerable_byz, min_tolerable_byz_linear, SamplingSpec,
};

pub const DERIVATIVE_TOL: f64 = 1e-6;
pub const CONVEXITY_SLACK: f64 = 1e-9;
pub const DIAGONAL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub checks: usize,
    pub violations: usize,
    pub worst_margin: f64,
    /// Grid point with the smallest margin.
    pub worst_case: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub outcomes: Vec<CheckOutcome>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.outcomes.iter().all(|o| o.passed)
    }
}

struct Tally {
    name: &'static str,
    checks: usize,
    violations: usize,
    worst_margin: f64,
    worst_case: String,
}

impl Tally {
    fn new(name: &'static str) -> Self {
        Self {
            name,
            checks: 0,
            violations: 0,
            worst_margin: f64::INFINITY,
            worst_case: String::new(),
        }
    }

    fn record(&mut self, margin: f64, case: impl FnOnce() -> String) {
        self.checks += 1;
        if margin.is_nan() || margin < 0.0 {
            self.violations += 1;
        }
        if margin < self.worst_margin || margin.is_nan() {
            self.worst_margin = margin;
            self.worst_case = case();
        }
    }

    fn finish(self) -> CheckOutcome {
        CheckOutcome {
            name: self.name.to_string(),
            passed: self.violations == 0,
            checks: self.checks,
            violations: self.violations,
            worst_margin: self.worst_margin,
            worst_case: self.worst_case,
        }
    }
}

/// `{0.05, 0.10, ..., 0.95}`.
pub fn probability_grid() -> Vec<f64> {
    (1..=19).map(|i| i as f64 * 0.05).collect()
}

/// Derivative, monotonicity, positivity and convexity of `D(alpha || beta)` on the grid.
pub fn d_properties() -> Result<SuiteReport> {
    let grid = probability_grid();
    let step = 0.05;
    let fd_h = 1e-5;
    let mut derivative = Tally::new("derivative");
    let mut monotone = Tally::new("monotonicity");
    let mut positive = Tally::new("positivity");
    let mut convex = Tally::new("convexity");

    for &beta in &grid {
        for (i, &alpha) in grid.iter().enumerate() {
            let fd = (kl_bernoulli(alpha + fd_h, beta)? - kl_bernoulli(alpha - fd_h, beta)?) / (2.0 * fd_h);
            let closed = kl_bernoulli_dalpha(alpha, beta)?;
            derivative.record(DERIVATIVE_TOL - (fd - closed).abs(), || {
                format!("alpha={alpha:.2} beta={beta:.2}")
            });

            let d = kl_bernoulli(alpha, beta)?;
            let margin = if (alpha - beta).abs() < step / 2.0 {
                DIAGONAL_TOL - d.abs()
            } else {
                d
            };
            positive.record(margin, || format!("alpha={alpha:.2} beta={beta:.2}"));

            if let Some(&next) = grid.get(i + 1) {
                let diff = kl_bernoulli(next, beta)? - d;
                // increasing once both points are at or above beta, decreasing below it
                let m = if alpha >= beta - step / 2.0 {
                    diff
                } else if next <= beta + step / 2.0 {
                    -diff
                } else {
                    continue;
                };
                monotone.record(m, || format!("alpha={alpha:.2}->{next:.2} beta={beta:.2}"));
            }
            if i > 0 && i + 1 < grid.len() {
                let second = kl_bernoulli(grid[i - 1], beta)? - 2.0 * d + kl_bernoulli(grid[i + 1], beta)?;
                convex.record(second + CONVEXITY_SLACK, || format!("alpha={alpha:.2} beta={beta:.2}"));
            }
        }
    }
    Ok(SuiteReport {
        suite: "d-properties".into(),
        outcomes: vec![derivative.finish(), monotone.finish(), positive.finish(), convex.finish()],
    })
}

/// Lower bound <= exact tail <= upper bound for every `M` in `10..=60`,
/// `K = round(beta M)` for `beta` in `{0.1, 0.2, 0.3}`, `m <= M` and integer `alpha m` with `alpha > K/M`.
pub fn chernoff_sandwich() -> Result<SuiteReport> {
    let mut lower = Tally::new("lower <= exact");
    let mut upper = Tally::new("exact <= upper");
    for population in 10u64..=60 {
        for beta in [0.1, 0.2, 0.3] {
            let successes = (beta * population as f64).round() as u64;
            if successes == 0 {
                continue;
            }
            let beta = successes as f64 / population as f64;
            for draws in 1..=population {
                for k in 1..draws {
                    let alpha = k as f64 / draws as f64;
                    if alpha <= beta {
                        continue;
                    }
                    let exact = hypergeom_tail_exact(population, successes, draws, k)?;
                    let lo = chernoff_lower(population, draws, alpha, beta)?;
                    let hi = chernoff_upper(draws, alpha, beta)?;
                    let case = || format!("M={population} K={successes} m={draws} k={k}");
                    lower.record(exact - lo, case);
                    upper.record(hi - exact, case);
                }
            }
        }
    }
    Ok(SuiteReport {
        suite: "chernoff".into(),
        outcomes: vec![lower.finish(), upper.finish()],
    })
}

/// Binary search and linear scan for the tolerable Byzantine count agree on
/// every `n` in `10..=60`, `b < n/2`, `n_hat <= n`, `T` in `{10, 100, 1000}`, `p` in `{0.9, 0.99}`.
pub fn solver_consistency() -> Result<SuiteReport> {
    let mut agree = Tally::new("binary == linear");
    for n in 10usize..=60 {
        for b in 0..n.div_ceil(2) {
            for rounds in [10u64, 100, 1000] {
                for p in [0.9, 0.99] {
                    let spec = SamplingSpec::new(n, b, rounds, p)?;
                    for n_hat in 1..=n {
                        let fast = min_tolerable_byz(&spec, n_hat)?;
                        let slow = min_tolerable_byz_linear(&spec, n_hat)?;
                        let margin = if fast == slow { 0.0 } else { -1.0 };
                        agree.record(margin, || {
                            format!("n={n} b={b} T={rounds} p={p} n_hat={n_hat}: {fast:?} vs {slow:?}")
                        });
                    }
                }
            }
        }
    }
    Ok(SuiteReport {
        suite: "solver".into(),
        outcomes: vec![agree.finish()],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_has_nineteen_points() {
        let g = probability_grid();
        assert_eq!(g.len(), 19);
        assert!((g[0] - 0.05).abs() < 1e-15 && (g[18] - 0.95).abs() < 1e-15);
    }

    #[test]
    fn suites_pass() {
        for report in [d_properties().unwrap(), chernoff_sandwich().unwrap()] {
            assert!(report.passed(), "{report:#?}");
            assert!(report.outcomes.iter().all(|o| o.checks > 0));
        }
    }
}
