use rand::seq::SliceRandom;

use crate::error::{FedroError, Result};
use crate::rng::Stream;

/// Uniform without-replacement subset of `0..n` of size `n_hat`, ascending.
pub fn sample_clients(n: usize, n_hat: usize, stream: &mut Stream) -> Result<Vec<usize>> {
    if n_hat == 0 || n_hat > n {
        return Err(FedroError::InvalidConfig {
            field: "n_hat",
            reason: format!("need 1 <= n_hat <= n = {n}, got {n_hat}"),
        });
    }
    let mut pool: Vec<usize> = (0..n).collect();
    let mut chosen = draw_subset(&mut pool, n_hat, stream).to_vec();
    chosen.sort_unstable();
    Ok(chosen)
}

/// Partial Fisher-Yates shuffle of `pool`; returns the `n_hat` selected items.
/// `pool` may be reused across draws: any arrangement yields a uniform subset.
pub fn draw_subset<'a>(pool: &'a mut [usize], n_hat: usize, stream: &mut Stream) -> &'a [usize] {
    pool.partial_shuffle(stream, n_hat).0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{self, Purpose};
    use std::collections::HashMap;

    #[test]
    fn full_sample_is_everyone() {
        let mut s = rng::stream(1, Purpose::Sampling, &[]);
        assert_eq!(sample_clients(6, 6, &mut s).unwrap(), vec![0, 1, 2, 3, 4, 5]);
        assert!(sample_clients(6, 7, &mut s).is_err());
        assert!(sample_clients(6, 0, &mut s).is_err());
    }

    #[test]
    fn pairs_are_uniform() {
        // chi-square over the C(5,2) = 10 subsets; 27.88 is the 0.999 quantile at 9 dof
        let draws = 100_000;
        let mut s = rng::stream(2, Purpose::Sampling, &[]);
        let mut counts: HashMap<Vec<usize>, usize> = HashMap::new();
        for _ in 0..draws {
            *counts.entry(sample_clients(5, 2, &mut s).unwrap()).or_default() += 1;
        }
        assert_eq!(counts.len(), 10);
        let expected = draws as f64 / 10.0;
        let chi2: f64 = counts
            .values()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        assert!(chi2 < 27.88, "chi2 = {chi2}");
    }

    #[test]
    fn singletons_have_uniform_frequency() {
        let (n, draws) = (8usize, 40_000usize);
        let mut s = rng::stream(3, Purpose::Sampling, &[]);
        let mut freq = vec![0usize; n];
        for _ in 0..draws {
            freq[sample_clients(n, 1, &mut s).unwrap()[0]] += 1;
        }
        let p = 1.0 / n as f64;
        let sd = (p * (1.0 - p) / draws as f64).sqrt();
        for f in freq {
            assert!((f as f64 / draws as f64 - p).abs() <= 3.0 * sd + 1e-12);
        }
    }
}
