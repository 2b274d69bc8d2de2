//! Brute-force (n_hat, b_hat, kappa)-robustness measurement.
//!
//! For inputs `w_1..w_n` and every subset `S` of size `n - b_hat`, the ratio
//! `|S| * ||A(w) - mean_S||^2 / sum_{i in S} ||w_i - mean_S||^2` is computed;
//! the largest ratio is the smallest kappa consistent with the instance.

use itertools::Itertools;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{FedroError, Result};
use crate::par;
use crate::rng::{self, Purpose};
use crate::vector::{common_dim, ParameterVector};

use super::{aggregate, average, AggregatorConfig};

pub const ENUMERATION_CAP: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaReport {
    pub kappa_hat: f64,
    /// Indices of the maximising subset, ascending.
    pub witness_subset: Vec<usize>,
    pub instances_tested: usize,
}

/// The robustness ratio of one subset; `0/0` counts as zero.
pub fn subset_ratio(output: &ParameterVector, inputs: &[ParameterVector], subset: &[usize]) -> f64 {
    let members: Vec<ParameterVector> = subset.iter().map(|&i| inputs[i].clone()).collect();
    let mean = average(&members).expect("non-empty subset");
    let numer = output.dist_sq(&mean);
    let spread: f64 = subset.iter().map(|&i| inputs[i].dist_sq(&mean)).sum();
    if numer == 0.0 {
        0.0
    } else if spread == 0.0 {
        f64::INFINITY
    } else {
        numer * subset.len() as f64 / spread
    }
}

/// Maximum robustness ratio over all subsets of size `n_hat - b_hat`.
/// Ties go to the lexicographically smallest subset.
pub fn kappa_empirical(
    inputs: &[ParameterVector],
    b_hat: usize,
    config: &AggregatorConfig,
) -> Result<KappaReport> {
    common_dim(inputs)?;
    let n = inputs.len();
    if n > ENUMERATION_CAP {
        return Err(FedroError::EnumerationCap {
            n_hat: n,
            cap: ENUMERATION_CAP,
        });
    }
    if n <= b_hat {
        return Err(FedroError::InsufficientInputs { n_hat: n, b_hat });
    }
    let output = aggregate(inputs, b_hat, config)?;
    let subsets: Vec<Vec<usize>> = (0..n).combinations(n - b_hat).collect();
    let ratios = par::map_slice(&subsets, |s| subset_ratio(&output, inputs, s));
    let (best, kappa_hat) = ratios
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &r)| {
            if r > bv {
                (i, r)
            } else {
                (bi, bv)
            }
        });
    Ok(KappaReport {
        kappa_hat,
        witness_subset: subsets[best].clone(),
        instances_tested: subsets.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificationReport {
    pub holds: bool,
    pub max_ratio: f64,
    pub worst_instance: Vec<ParameterVector>,
    pub witness_subset: Vec<usize>,
    pub instances_tested: usize,
}

const CERT_DIM: usize = 3;

/// Random instance `index`: i.i.d. Gaussian, a Gaussian cloud with one far
/// outlier, or two tight clusters, cycling through the three patterns.
fn certification_instance(n_hat: usize, seed: u64, index: usize) -> Vec<ParameterVector> {
    let mut stream = rng::stream(seed, Purpose::Certify, &[index as u64]);
    let mut gaussian = |scale: f64, shift: f64| -> ParameterVector {
        ParameterVector::new(
            (0..CERT_DIM)
                .map(|_| shift + scale * stream.sample::<f64, _>(StandardNormal))
                .collect(),
        )
    };
    match index % 3 {
        0 => (0..n_hat).map(|_| gaussian(1.0, 0.0)).collect(),
        1 => (0..n_hat)
            .map(|i| if i == 0 { gaussian(1.0, 1e3) } else { gaussian(1.0, 0.0) })
            .collect(),
        _ => (0..n_hat)
            .map(|i| if i < n_hat / 2 { gaussian(0.1, 5.0) } else { gaussian(0.1, -5.0) })
            .collect(),
    }
}

/// Checks a claimed kappa against `trials` generated instances.
pub fn certify_robustness(
    config: &AggregatorConfig,
    n_hat: usize,
    b_hat: usize,
    kappa_claim: f64,
    trials: usize,
    seed: u64,
) -> Result<CertificationReport> {
    if n_hat > ENUMERATION_CAP {
        return Err(FedroError::EnumerationCap {
            n_hat,
            cap: ENUMERATION_CAP,
        });
    }
    if trials == 0 {
        return Err(FedroError::InvalidConfig {
            field: "trials",
            reason: "need at least one instance".into(),
        });
    }
    let reports = par::map_indexed(trials, |t| {
        let inst = certification_instance(n_hat, seed, t);
        kappa_empirical(&inst, b_hat, config).map(|r| (inst, r))
    });
    let mut worst: Option<(Vec<ParameterVector>, KappaReport)> = None;
    for report in reports {
        let (inst, r) = report?;
        if worst.as_ref().is_none_or(|(_, w)| r.kappa_hat > w.kappa_hat) {
            worst = Some((inst, r));
        }
    }
    let (worst_instance, report) = worst.expect("trials >= 1");
    Ok(CertificationReport {
        holds: report.kappa_hat <= kappa_claim,
        max_ratio: report.kappa_hat,
        worst_instance,
        witness_subset: report.witness_subset,
        instances_tested: trials,
    })
}
