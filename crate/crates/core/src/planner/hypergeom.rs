//! Exact hypergeometric tails and the Chernoff sandwich around them.

use crate::error::{domain, Result};

use super::kl_bernoulli;

/// Neumaier-compensated running sum.
#[derive(Default)]
struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// `P[X >= k]` for `X ~ HG(population, successes, draws)`.
///
/// Probabilities are built as ratios to the mode via the pmf recurrence and
/// normalised by their own compensated total, which keeps the result within
/// 1e-12 of the exact value at desk-scale populations.
pub fn hypergeom_tail_exact(population: u64, successes: u64, draws: u64, k: u64) -> Result<f64> {
    if successes > population {
        return Err(domain("K", successes as f64, "must not exceed the population M"));
    }
    if draws > population {
        return Err(domain("m", draws as f64, "must not exceed the population M"));
    }
    if k > draws {
        return Err(domain("k", k as f64, "must not exceed the draw count m"));
    }
    let failures = population - successes;
    let lo = draws.saturating_sub(failures);
    let hi = draws.min(successes);
    if k <= lo {
        return Ok(1.0);
    }
    if k > hi {
        return Ok(0.0);
    }

    let (big_m, big_k, m) = (population as f64, successes as f64, draws as f64);
    let mode = (((draws + 1) as u128 * (successes + 1) as u128) / (population + 2) as u128) as u64;
    let mode = mode.clamp(lo, hi);

    let len = (hi - lo + 1) as usize;
    let mut weights = vec![0.0f64; len];
    weights[(mode - lo) as usize] = 1.0;
    let mut w = 1.0;
    for j in mode..hi {
        let jf = j as f64;
        w *= (big_k - jf) * (m - jf) / ((jf + 1.0) * (big_m - big_k - m + jf + 1.0));
        weights[(j + 1 - lo) as usize] = w;
    }
    w = 1.0;
    for j in (lo + 1..=mode).rev() {
        let jf = j as f64;
        w *= jf * (big_m - big_k - m + jf) / ((big_k - jf + 1.0) * (m - jf + 1.0));
        weights[(j - 1 - lo) as usize] = w;
    }

    let mut tail = CompensatedSum::default();
    let mut head = CompensatedSum::default();
    for (offset, &wt) in weights.iter().enumerate() {
        if lo + offset as u64 >= k {
            tail.add(wt);
        } else {
            head.add(wt);
        }
    }
    let (t, h) = (tail.value(), head.value());
    Ok((t / (t + h)).clamp(0.0, 1.0))
}

fn check_chernoff_args(alpha: f64, beta: f64) -> Result<()> {
    if !(beta > 0.0 && beta < alpha && alpha < 1.0) {
        return Err(domain("alpha", alpha, "need 1 > alpha > beta > 0"));
    }
    Ok(())
}

/// Upper bound `exp(-m D(alpha || beta))` on `P[X >= alpha m]`.
pub fn chernoff_upper(draws: u64, alpha: f64, beta: f64) -> Result<f64> {
    check_chernoff_args(alpha, beta)?;
    Ok((-(draws as f64) * kl_bernoulli(alpha, beta)?).exp())
}

/// Binomial lower bound `exp(-m D) / sqrt(8 m alpha (1 - alpha))`, i.e. the
/// hypergeometric lower bound as the population grows without limit.
pub fn binomial_chernoff_lower(draws: u64, alpha: f64, beta: f64) -> Result<f64> {
    check_chernoff_args(alpha, beta)?;
    check_integral(draws, alpha)?;
    let m = draws as f64;
    Ok((-m * kl_bernoulli(alpha, beta)?).exp() / (8.0 * m * alpha * (1.0 - alpha)).sqrt())
}

/// Lower bound on `P[X >= alpha m]` for `X ~ HG(M, K, m)` with `beta = K/M`;
/// requires `alpha m` to be an integer.
pub fn chernoff_lower(population: u64, draws: u64, alpha: f64, beta: f64) -> Result<f64> {
    if draws > population {
        return Err(domain("m", draws as f64, "must not exceed the population M"));
    }
    if population < 2 {
        return Err(domain("M", population as f64, "population must be at least 2"));
    }
    let lead = binomial_chernoff_lower(draws, alpha, beta)?;
    Ok(lead - (draws as f64 - 1.0) / (population as f64 - 1.0))
}

fn check_integral(draws: u64, alpha: f64) -> Result<()> {
    if draws == 0 {
        return Err(domain("m", 0.0, "draw count must be positive"));
    }
    let target = alpha * draws as f64;
    if (target - target.round()).abs() > 1e-9 * (draws as f64).max(1.0) {
        return Err(domain("alpha", alpha, "alpha * m must be an integer"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn tail_examples() {
        assert_abs_diff_eq!(hypergeom_tail_exact(10, 5, 4, 2).unwrap(), 31.0 / 42.0, epsilon = 1e-14);
        assert_abs_diff_eq!(hypergeom_tail_exact(10, 5, 4, 3).unwrap(), 11.0 / 42.0, epsilon = 1e-14);
        assert_eq!(hypergeom_tail_exact(10, 5, 4, 0).unwrap(), 1.0);
    }

    #[test]
    fn tail_edges() {
        // fewer failures than draws forces at least two successes
        assert_eq!(hypergeom_tail_exact(10, 8, 4, 2).unwrap(), 1.0);
        assert_eq!(hypergeom_tail_exact(10, 2, 4, 3).unwrap(), 0.0);
        assert_eq!(hypergeom_tail_exact(10, 0, 4, 1).unwrap(), 0.0);
        assert_eq!(hypergeom_tail_exact(10, 10, 10, 10).unwrap(), 1.0);
        assert!(hypergeom_tail_exact(10, 11, 4, 1).is_err());
        assert!(hypergeom_tail_exact(10, 5, 11, 1).is_err());
        assert!(hypergeom_tail_exact(10, 5, 4, 5).is_err());
    }

    #[test]
    fn chernoff_examples() {
        assert_abs_diff_eq!(chernoff_upper(4, 0.75, 0.5).unwrap(), 0.5925926, epsilon = 1e-6);
        assert_abs_diff_eq!(chernoff_upper(26, 12.0 / 26.0, 0.1).unwrap(), 1.42146e-5, epsilon = 1e-9);
        assert_abs_diff_eq!(chernoff_upper(40, 0.5 + 1e-12, 0.5).unwrap(), 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(chernoff_lower(10, 4, 0.75, 0.5).unwrap(), -0.0914084, epsilon = 1e-6);
        assert_abs_diff_eq!(binomial_chernoff_lower(4, 0.75, 0.5).unwrap(), 0.2419249, epsilon = 1e-6);
    }

    #[test]
    fn chernoff_domain() {
        assert!(chernoff_upper(4, 0.4, 0.5).is_err());
        assert!(chernoff_upper(4, 1.0, 0.5).is_err());
        assert!(chernoff_lower(10, 4, 0.7, 0.5).is_err());
        assert!(chernoff_lower(3, 4, 0.75, 0.5).is_err());
    }
}
