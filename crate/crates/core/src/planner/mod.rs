//! Subsampling planner.
//!
//! Closed-form quantities that decide how many clients to sample per round
//! (`n_hat`) and how many Byzantine clients the aggregator must tolerate in a
//! sample (`b_hat`) so that, with probability at least `p`, no round ever sees
//! more than `b_hat` Byzantine clients.

mod hypergeom;
mod montecarlo;

pub use hypergeom::{binomial_chernoff_lower, chernoff_lower, chernoff_upper, hypergeom_tail_exact};
pub use montecarlo::{event_probability_mc, MonteCarloEstimate};

use serde::{Deserialize, Serialize};

use crate::error::{domain, FedroError, Result};

/// Population and reliability parameters of a federated run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingSpec {
    pub n: usize,
    pub b: usize,
    pub rounds: u64,
    pub p: f64,
}

impl SamplingSpec {
    pub fn new(n: usize, b: usize, rounds: u64, p: f64) -> Result<Self> {
        let spec = Self { n, b, rounds, p };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(FedroError::InvalidConfig {
                field: "n",
                reason: "client count must be positive".into(),
            });
        }
        if 2 * self.b >= self.n {
            return Err(FedroError::InvalidConfig {
                field: "b",
                reason: format!("need b < n/2, got b = {} with n = {}", self.b, self.n),
            });
        }
        if self.rounds == 0 {
            return Err(FedroError::InvalidConfig {
                field: "T",
                reason: "round count must be at least 1".into(),
            });
        }
        if !(0.0..1.0).contains(&self.p) {
            return Err(FedroError::InvalidConfig {
                field: "p",
                reason: format!("success probability must lie in [0, 1), got {}", self.p),
            });
        }
        Ok(())
    }

    /// Byzantine fraction `b / n`.
    pub fn byz_fraction(&self) -> f64 {
        self.b as f64 / self.n as f64
    }

    /// `ln(T / (1 - p))`, the union-bound budget of the sampling condition.
    pub fn log_budget(&self) -> f64 {
        (self.rounds as f64 / (1.0 - self.p)).ln()
    }

    fn log_budget_4t(&self) -> f64 {
        (4.0 * self.rounds as f64 / (1.0 - self.p)).ln()
    }

    fn check_sample_size(&self, n_hat: usize) -> Result<()> {
        if n_hat == 0 || n_hat > self.n {
            return Err(FedroError::InvalidConfig {
                field: "n_hat",
                reason: format!("need 1 <= n_hat <= n = {}, got {n_hat}", self.n),
            });
        }
        Ok(())
    }
}

/// Planner output for a chosen sample size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingPlan {
    pub n_hat: usize,
    pub b_hat: Option<usize>,
    pub n_th: usize,
    pub n_opt: usize,
    /// Sample sizes strictly below this value are flagged unsafe; `None` when `p < 1/2`.
    pub impossibility_bound: Option<f64>,
    pub unsafe_sample: bool,
    pub feasible: bool,
}

impl SamplingPlan {
    /// Plans around `n_hat`, defaulting to the convergence threshold.
    pub fn build(spec: &SamplingSpec, n_hat: Option<usize>) -> Result<Self> {
        spec.validate()?;
        let n_th = sampling_threshold(spec)?;
        let n_opt = optimal_threshold(spec)?;
        let n_hat = n_hat.unwrap_or(n_th);
        let b_hat = min_tolerable_byz(spec, n_hat)?;
        let impossibility = if spec.p >= 0.5 {
            Some(impossibility_bound(spec)?)
        } else {
            None
        };
        let feasible = match b_hat {
            Some(bh) => check_sampling_condition(spec, n_hat, bh)? == ConditionOutcome::Holds,
            None => false,
        };
        Ok(Self {
            n_hat,
            b_hat,
            n_th,
            n_opt,
            impossibility_bound: impossibility,
            unsafe_sample: impossibility.is_some_and(|bound| (n_hat as f64) < bound),
            feasible,
        })
    }
}

/// Bernoulli KL divergence `D(alpha || beta)` in nats.
pub fn kl_bernoulli(alpha: f64, beta: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(domain("alpha", alpha, "must lie in the open interval (0, 1)"));
    }
    if !(beta > 0.0 && beta < 1.0) {
        return Err(domain("beta", beta, "must lie in the open interval (0, 1)"));
    }
    let d = alpha * (alpha / beta).ln() + (1.0 - alpha) * ((1.0 - alpha) / (1.0 - beta)).ln();
    Ok(d.max(0.0))
}

/// Closed-form first-argument derivative of [`kl_bernoulli`].
pub fn kl_bernoulli_dalpha(alpha: f64, beta: f64) -> Result<f64> {
    kl_bernoulli(alpha, beta)?;
    Ok((alpha / beta).ln() - ((1.0 - alpha) / (1.0 - beta)).ln())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionOutcome {
    Holds,
    Fails,
    /// `b/n < b_hat/n_hat < 1/2` does not hold, so the condition is not applicable.
    InfeasibleRatio,
}

fn ratio_is_feasible(spec: &SamplingSpec, n_hat: usize, b_hat: usize) -> bool {
    // b/n < b_hat/n_hat  <=>  b * n_hat < b_hat * n
    let above = (spec.b as u128) * (n_hat as u128) < (b_hat as u128) * (spec.n as u128);
    let below = 2 * b_hat < n_hat;
    (above || spec.b == 0) && below
}

fn condition_holds(spec: &SamplingSpec, n_hat: usize, b_hat: usize) -> Result<bool> {
    if n_hat == spec.n || spec.b == 0 {
        return Ok(true);
    }
    let d = kl_bernoulli(b_hat as f64 / n_hat as f64, spec.byz_fraction())?;
    Ok(n_hat as f64 * d >= spec.log_budget())
}

/// Evaluates the per-round sampling condition for a candidate `(n_hat, b_hat)`.
///
/// With `b = 0` any `b_hat < n_hat/2` is accepted: there is nobody to sample.
pub fn check_sampling_condition(
    spec: &SamplingSpec,
    n_hat: usize,
    b_hat: usize,
) -> Result<ConditionOutcome> {
    spec.validate()?;
    spec.check_sample_size(n_hat)?;
    if !ratio_is_feasible(spec, n_hat, b_hat) {
        return Ok(ConditionOutcome::InfeasibleRatio);
    }
    Ok(if condition_holds(spec, n_hat, b_hat)? {
        ConditionOutcome::Holds
    } else {
        ConditionOutcome::Fails
    })
}

/// Integer search interval for `b_hat`: smallest value strictly above
/// `b * n_hat / n` up to the largest value strictly below `n_hat / 2`.
pub fn feasible_byz_range(spec: &SamplingSpec, n_hat: usize) -> Option<(usize, usize)> {
    let lo = spec.b * n_hat / spec.n + 1;
    let hi = (n_hat - 1) / 2;
    (lo <= hi).then_some((lo, hi))
}

/// Smallest `b_hat` satisfying the sampling condition at this `n_hat`, found
/// by binary search. `None` means no admissible `b_hat` exists.
pub fn min_tolerable_byz(spec: &SamplingSpec, n_hat: usize) -> Result<Option<usize>> {
    spec.validate()?;
    spec.check_sample_size(n_hat)?;
    if spec.b == 0 {
        return Ok(Some(0));
    }
    let Some((lo, hi)) = feasible_byz_range(spec, n_hat) else {
        return Ok(None);
    };
    if !condition_holds(spec, n_hat, hi)? {
        return Ok(None);
    }
    // invariant: condition holds at `right`, and fails below `left`
    let (mut left, mut right) = (lo, hi);
    while left < right {
        let mid = left + (right - left) / 2;
        if condition_holds(spec, n_hat, mid)? {
            right = mid;
        } else {
            left = mid + 1;
        }
    }
    Ok(Some(right))
}

/// Exhaustive counterpart of [`min_tolerable_byz`].
pub fn min_tolerable_byz_linear(spec: &SamplingSpec, n_hat: usize) -> Result<Option<usize>> {
    spec.validate()?;
    spec.check_sample_size(n_hat)?;
    if spec.b == 0 {
        return Ok(Some(0));
    }
    let Some((lo, hi)) = feasible_byz_range(spec, n_hat) else {
        return Ok(None);
    };
    for b_hat in lo..=hi {
        if condition_holds(spec, n_hat, b_hat)? {
            return Ok(Some(b_hat));
        }
    }
    Ok(None)
}

/// Convergence threshold before clamping to `n`.
pub fn sampling_threshold_unclamped(spec: &SamplingSpec) -> Result<u64> {
    spec.validate()?;
    if spec.b == 0 {
        return Ok(1);
    }
    let d = kl_bernoulli(0.5, spec.byz_fraction())?;
    Ok((spec.log_budget_4t() / d).ceil() as u64 + 2)
}

/// Smallest sample size for which an admissible `b_hat` is guaranteed to exist.
pub fn sampling_threshold(spec: &SamplingSpec) -> Result<usize> {
    Ok(clamp_to_population(sampling_threshold_unclamped(spec)?, spec.n))
}

/// Order-optimality threshold before clamping to `n`.
pub fn optimal_threshold_unclamped(spec: &SamplingSpec) -> Result<u64> {
    spec.validate()?;
    if spec.b == 0 {
        return Ok(1);
    }
    let beta = spec.byz_fraction();
    let gap = 0.5 - beta;
    let factor = (1.0 / (gap * gap)).max(3.0 / beta);
    Ok((factor * spec.log_budget_4t()).ceil() as u64 + 2)
}

/// Sample size beyond which `b_hat*/n_hat` stays within a constant factor of `b/n`.
pub fn optimal_threshold(spec: &SamplingSpec) -> Result<usize> {
    Ok(clamp_to_population(optimal_threshold_unclamped(spec)?, spec.n))
}

fn clamp_to_population(value: u64, n: usize) -> usize {
    value.min(n as u64) as usize
}

/// Sample sizes strictly below the returned value cannot keep every round
/// within `b_hat` Byzantine clients with probability `p` (asymptotically in `n`).
pub fn impossibility_bound(spec: &SamplingSpec) -> Result<f64> {
    spec.validate()?;
    if spec.p < 0.5 {
        return Err(domain("p", spec.p, "impossibility bound needs p >= 1/2"));
    }
    if spec.b == 0 {
        return Ok(-1.0);
    }
    let d = kl_bernoulli(0.5, spec.byz_fraction())?;
    let budget = (spec.rounds as f64 / (3.0 * (1.0 - spec.p))).ln();
    Ok(budget / (d + 2.0) - 1.0)
}

/// Whether `n_hat` falls below [`impossibility_bound`].
pub fn is_unsafe_sample(spec: &SamplingSpec, n_hat: usize) -> Result<bool> {
    Ok((n_hat as f64) < impossibility_bound(spec)?)
}
