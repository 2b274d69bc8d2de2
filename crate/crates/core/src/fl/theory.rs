//! Step-size planning and the convergence bound for constant step sizes.

use serde::{Deserialize, Serialize};

use crate::error::{domain, FedroError, Result};
use crate::tasks::TaskConstants;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSizePlan {
    pub gamma_s: f64,
    pub gamma_c: f64,
    /// The three candidates whose minimum is `gamma_c`; infinite when a denominator vanishes.
    pub candidates: [f64; 3],
}

/// `1 - (n_hat - b_hat) / (n - b)`: fraction of honest clients left out of a round.
fn unsampled_fraction(n: usize, b: usize, n_hat: usize, b_hat: usize) -> f64 {
    1.0 - (n_hat as f64 - b_hat as f64) / (n as f64 - b as f64)
}

fn positive_or_inf(numer: f64, denom: f64) -> f64 {
    if denom > 0.0 {
        numer / denom
    } else {
        f64::INFINITY
    }
}

/// Server step 1 and the client step minimising the bound for `T` rounds.
pub fn plan_step_sizes(
    constants: &TaskConstants,
    local_steps: usize,
    rounds: usize,
    n_hat: usize,
    b_hat: usize,
    n: usize,
    b: usize,
) -> Result<StepSizePlan> {
    let l = constants.l;
    if !(l > 0.0 && l.is_finite()) {
        return Err(domain("L", l, "smoothness must be positive"));
    }
    if constants.delta0 < 0.0 {
        return Err(domain("delta0", constants.delta0, "initial gap must be non-negative"));
    }
    if local_steps == 0 || rounds == 0 {
        return Err(FedroError::InvalidConfig {
            field: "local_steps",
            reason: "K and T must be positive".into(),
        });
    }
    let k = local_steps as f64;
    let t = rounds as f64;
    let (s2, z2) = (constants.sigma.powi(2), constants.zeta.powi(2));
    let first = 1.0 / (36.0 * l * k);
    if constants.delta0 == 0.0 {
        return Ok(StepSizePlan {
            gamma_s: 1.0,
            gamma_c: first,
            candidates: [first, f64::INFINITY, f64::INFINITY],
        });
    }
    let r = unsampled_fraction(n, b, n_hat, b_hat);
    let noise = s2 / k + 6.0 * r * z2;
    let second = positive_or_inf(n_hat as f64 * constants.delta0, l * t * noise).sqrt() / (2.0 * k);
    let third = positive_or_inf(
        3.0 * constants.delta0,
        2.0 * k * (k - 1.0) * t * l * l * (s2 + 4.0 * k * z2),
    )
    .cbrt();
    Ok(StepSizePlan {
        gamma_s: 1.0,
        gamma_c: first.min(second).min(third),
        candidates: [first, second, third],
    })
}

/// Per-term breakdown of the bound on the average squared gradient norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorBound {
    pub optimization: f64,
    pub sampling_noise: f64,
    pub drift_noise: f64,
    pub drift_heterogeneity: f64,
    pub robustness: f64,
    pub total: f64,
}

#[allow(clippy::too_many_arguments)]
pub fn theoretical_error_bound(
    constants: &TaskConstants,
    local_steps: usize,
    rounds: usize,
    n_hat: usize,
    b_hat: usize,
    n: usize,
    b: usize,
    kappa: f64,
    gamma_c: f64,
    gamma_s: f64,
) -> Result<ErrorBound> {
    let l = constants.l;
    let k = local_steps as f64;
    let t = rounds as f64;
    if l.is_nan() || l <= 0.0 || local_steps == 0 || rounds == 0 {
        return Err(domain("L", l, "need L > 0, K >= 1 and T >= 1"));
    }
    if kappa.is_nan() || kappa < 0.0 {
        return Err(domain("kappa", kappa, "must be non-negative"));
    }
    let slack = 1.0 + 1e-12;
    if !(gamma_c > 0.0 && gamma_s > 0.0)
        || gamma_c > slack / (16.0 * l * k)
        || gamma_c * gamma_s > slack / (36.0 * l * k)
    {
        return Err(FedroError::StepSizePrecondition(format!(
            "gamma_c = {gamma_c}, gamma_s = {gamma_s}, L = {l}, K = {local_steps}"
        )));
    }
    let (s2, z2) = (constants.sigma.powi(2), constants.zeta.powi(2));
    let r = unsampled_fraction(n, b, n_hat, b_hat);
    let gamma = gamma_c * gamma_s;
    let optimization = 5.0 * constants.delta0 / (t * k * gamma);
    let sampling_noise = 20.0 * l * k * gamma / n_hat as f64 * (s2 / k + 6.0 * r * z2);
    let drift_noise = 10.0 / 3.0 * gamma_c.powi(2) * l * l * (k - 1.0) * s2;
    let drift_heterogeneity = 40.0 / 3.0 * gamma_c.powi(2) * l * l * k * (k - 1.0) * z2;
    let robustness = 165.0 * kappa * (s2 / k + 6.0 * z2);
    Ok(ErrorBound {
        optimization,
        sampling_noise,
        drift_noise,
        drift_heterogeneity,
        robustness,
        total: optimization + sampling_noise + drift_noise + drift_heterogeneity + robustness,
    })
}

/// Expected spread of the honest local models after `K` steps: `3K sigma^2 gamma_c^2 + 18 K^2 gamma_c^2 zeta^2`.
pub fn update_spread_bound(local_steps: usize, sigma: f64, zeta: f64, gamma_c: f64) -> f64 {
    let k = local_steps as f64;
    3.0 * k * sigma * sigma * gamma_c * gamma_c + 18.0 * k * k * gamma_c * gamma_c * zeta * zeta
}

/// Expected squared aggregation error of a kappa-robust rule: kappa times [`update_spread_bound`].
pub fn deviation_bound(local_steps: usize, sigma: f64, zeta: f64, gamma_c: f64, kappa: f64) -> f64 {
    kappa * update_spread_bound(local_steps, sigma, zeta, gamma_c)
}
