use serde::{Deserialize, Serialize};

use crate::error::{FedroError, Result};
use crate::fl::draw_subset;
use crate::par;
use crate::rng::{self, Purpose};

use super::SamplingSpec;

/// Monte Carlo estimate of the probability that no round samples more than
/// `b_hat` Byzantine clients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloEstimate {
    pub estimate: f64,
    /// 95% normal-approximation half-width.
    pub half_width: f64,
    pub successes: u64,
    pub trials: u64,
}

/// Simulates `trials` independent runs of `T` rounds. Byzantine clients are
/// the indices `0..b`. Trial `i` draws from its own stream, so the result only
/// depends on `seed`.
pub fn event_probability_mc(
    spec: &SamplingSpec,
    n_hat: usize,
    b_hat: usize,
    trials: u64,
    seed: u64,
) -> Result<MonteCarloEstimate> {
    spec.validate()?;
    if trials == 0 {
        return Err(FedroError::InvalidConfig {
            field: "trials",
            reason: "need at least one trial".into(),
        });
    }
    if n_hat == 0 || n_hat > spec.n {
        return Err(FedroError::InvalidConfig {
            field: "n_hat",
            reason: format!("need 1 <= n_hat <= n = {}, got {n_hat}", spec.n),
        });
    }

    let outcomes = par::map_indexed(trials as usize, |trial| {
        if spec.b <= b_hat {
            return true;
        }
        let mut stream = rng::stream(seed, Purpose::MonteCarlo, &[trial as u64]);
        let mut pool: Vec<usize> = (0..spec.n).collect();
        (0..spec.rounds).all(|_| {
            let byz = draw_subset(&mut pool, n_hat, &mut stream)
                .iter()
                .filter(|&&c| c < spec.b)
                .count();
            byz <= b_hat
        })
    });
    let successes = outcomes.iter().filter(|&&ok| ok).count() as u64;
    let estimate = successes as f64 / trials as f64;
    let half_width = 1.96 * (estimate * (1.0 - estimate) / trials as f64).sqrt();
    Ok(MonteCarloEstimate {
        estimate,
        half_width,
        successes,
        trials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_byzantine_clients_always_succeeds() {
        let spec = SamplingSpec::new(20, 0, 50, 0.9).unwrap();
        let est = event_probability_mc(&spec, 3, 0, 100, 1).unwrap();
        assert_eq!(est.estimate, 1.0);
        assert_eq!(est.half_width, 0.0);
    }

    #[test]
    fn single_client_sampling_decays() {
        let spec = SamplingSpec::new(150, 30, 500, 0.99).unwrap();
        let est = event_probability_mc(&spec, 1, 0, 500, 3).unwrap();
        // (1 - 0.2)^500 is about 1e-49
        assert_eq!(est.successes, 0);
    }

    #[test]
    fn short_horizon_matches_closed_form() {
        // one round with a single draw: P[honest] = 1 - b/n
        let spec = SamplingSpec::new(10, 3, 1, 0.5).unwrap();
        let est = event_probability_mc(&spec, 1, 0, 20_000, 9).unwrap();
        assert!((est.estimate - 0.7).abs() < 4.0 * (0.21f64 / 20_000.0).sqrt());
    }

    #[test]
    fn deterministic_in_seed() {
        let spec = SamplingSpec::new(50, 10, 20, 0.9).unwrap();
        let a = event_probability_mc(&spec, 10, 4, 300, 11).unwrap();
        let b = event_probability_mc(&spec, 10, 4, 300, 11).unwrap();
        assert_eq!(a, b);
        assert!(event_probability_mc(&spec, 10, 4, 0, 11).is_err());
    }
}
