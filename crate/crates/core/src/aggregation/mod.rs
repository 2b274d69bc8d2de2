//! Robust aggregation rules and their (n_hat, b_hat, kappa)-robustness certifier.

mod robustness;

pub use robustness::{certify_robustness, kappa_empirical, subset_ratio, CertificationReport, KappaReport};

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{FedroError, Result};
use crate::vector::{anchored_mean, common_dim, ParameterVector};

/// Aggregation rule selector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    Average,
    CwTrimmedMean,
    CwMedian,
    GeometricMedian,
    /// Nearest-neighbour mixing followed by the inner rule.
    NnmThen(Box<Rule>),
}

impl Rule {
    pub fn name(&self) -> String {
        match self {
            Rule::Average => "average".into(),
            Rule::CwTrimmedMean => "cw_trimmed_mean".into(),
            Rule::CwMedian => "cw_median".into(),
            Rule::GeometricMedian => "geometric_median".into(),
            Rule::NnmThen(inner) => format!("nnm_then_{}", inner.name()),
        }
    }

    fn trims(&self) -> bool {
        match self {
            Rule::CwTrimmedMean => true,
            Rule::NnmThen(inner) => inner.trims(),
            _ => false,
        }
    }
}

fn default_tol() -> f64 {
    1e-8
}

fn default_max_iter() -> usize {
    200
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AggregatorConfig {
    pub rule: Rule,
    /// Relative step tolerance of the geometric-median iteration.
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

impl AggregatorConfig {
    pub fn new(rule: Rule) -> Self {
        Self {
            rule,
            tol: default_tol(),
            max_iter: default_max_iter(),
        }
    }
}

/// Applies the configured rule. `b_hat` is the number of Byzantine inputs the
/// rule must tolerate; it is ignored by `average`, `cw_median` and
/// `geometric_median`.
pub fn aggregate(
    inputs: &[ParameterVector],
    b_hat: usize,
    config: &AggregatorConfig,
) -> Result<ParameterVector> {
    if config.rule.trims() && inputs.len() <= 2 * b_hat {
        return Err(FedroError::InsufficientInputs {
            n_hat: inputs.len(),
            b_hat,
        });
    }
    apply(&config.rule, inputs, b_hat, config)
}

fn apply(
    rule: &Rule,
    inputs: &[ParameterVector],
    b_hat: usize,
    config: &AggregatorConfig,
) -> Result<ParameterVector> {
    match rule {
        Rule::Average => average(inputs),
        Rule::CwTrimmedMean => cw_trimmed_mean(inputs, b_hat),
        Rule::CwMedian => cw_median(inputs),
        Rule::GeometricMedian => geometric_median(inputs, config.tol, config.max_iter),
        Rule::NnmThen(inner) => {
            let mixed = nnm_transform(inputs, b_hat)?;
            apply(inner, &mixed, b_hat, config)
        }
    }
}

fn lexicographic(a: &ParameterVector, b: &ParameterVector) -> Ordering {
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Inputs in a canonical order, so results do not depend on arrival order.
fn canonical(inputs: &[ParameterVector]) -> Vec<&ParameterVector> {
    let mut sorted: Vec<&ParameterVector> = inputs.iter().collect();
    sorted.sort_by(|a, b| lexicographic(a, b));
    sorted
}

/// Coordinate-wise arithmetic mean.
pub fn average(inputs: &[ParameterVector]) -> Result<ParameterVector> {
    let dim = common_dim(inputs)?;
    Ok(anchored_mean(canonical(inputs), dim).expect("non-empty"))
}

fn scalar_anchored_mean(values: &[f64]) -> f64 {
    let anchor = values[0];
    let shift: f64 = values[1..].iter().map(|v| v - anchor).sum();
    anchor + shift / values.len() as f64
}

fn per_coordinate(
    inputs: &[ParameterVector],
    dim: usize,
    reduce: impl Fn(&[f64]) -> f64,
) -> ParameterVector {
    let mut column = vec![0.0; inputs.len()];
    let out = (0..dim)
        .map(|j| {
            for (slot, v) in column.iter_mut().zip(inputs) {
                *slot = v[j];
            }
            column.sort_by(f64::total_cmp);
            reduce(&column)
        })
        .collect();
    ParameterVector::new(out)
}

/// Drops the `b_hat` largest and smallest values of each coordinate and
/// averages the rest.
pub fn cw_trimmed_mean(inputs: &[ParameterVector], b_hat: usize) -> Result<ParameterVector> {
    let dim = common_dim(inputs)?;
    let n = inputs.len();
    if n <= 2 * b_hat {
        return Err(FedroError::InsufficientInputs { n_hat: n, b_hat });
    }
    Ok(per_coordinate(inputs, dim, |sorted| {
        scalar_anchored_mean(&sorted[b_hat..n - b_hat])
    }))
}

/// Coordinate-wise median; an even count takes the midpoint of the two central values.
pub fn cw_median(inputs: &[ParameterVector]) -> Result<ParameterVector> {
    let dim = common_dim(inputs)?;
    let n = inputs.len();
    Ok(per_coordinate(inputs, dim, |sorted| {
        if n % 2 == 1 {
            sorted[n / 2]
        } else {
            let (lo, hi) = (sorted[n / 2 - 1], sorted[n / 2]);
            if lo == hi {
                lo
            } else {
                lo + (hi - lo) / 2.0
            }
        }
    }))
}

/// Weiszfeld iteration for the minimiser of the summed Euclidean distances.
///
/// When the iterate lands on an input point it is returned if it satisfies the
/// optimality condition there; otherwise it is pushed by `tol` along the
/// descent direction and the iteration continues.
pub fn geometric_median(
    inputs: &[ParameterVector],
    tol: f64,
    max_iter: usize,
) -> Result<ParameterVector> {
    let dim = common_dim(inputs)?;
    let points = canonical(inputs);
    let mut z = anchored_mean(points.iter().copied(), dim).expect("non-empty");
    if points.iter().all(|p| *p == points[0]) {
        return Ok(points[0].clone());
    }
    let scale = points
        .iter()
        .map(|p| p.dist_sq(&z).sqrt())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let coincide = scale * 1e-14;

    for _ in 0..max_iter {
        let mut numer = vec![0.0; dim];
        let mut denom = 0.0;
        let mut pull = vec![0.0; dim];
        let mut multiplicity = 0usize;
        for p in &points {
            let dist = p.dist_sq(&z).sqrt();
            if dist <= coincide {
                multiplicity += 1;
                continue;
            }
            let w = 1.0 / dist;
            denom += w;
            for j in 0..dim {
                numer[j] += w * p[j];
                pull[j] += w * (p[j] - z[j]);
            }
        }
        if denom == 0.0 {
            return Ok(z);
        }

        let next = if multiplicity > 0 {
            let pull_norm = pull.iter().map(|v| v * v).sum::<f64>().sqrt();
            if pull_norm <= multiplicity as f64 {
                return Ok(z);
            }
            let step = tol * scale.max(1.0) / pull_norm;
            ParameterVector::new((0..dim).map(|j| z[j] + step * pull[j]).collect())
        } else {
            ParameterVector::new(numer.iter().map(|v| v / denom).collect())
        };

        let moved = next.dist_sq(&z).sqrt();
        let reference = next.norm().max(scale);
        z = next;
        if moved <= tol * reference {
            break;
        }
    }
    Ok(z)
}

/// Nearest-neighbour mixing: each input is replaced by the mean of its
/// `n_hat - b_hat` nearest inputs (itself included, ties to the lower index).
pub fn nnm_transform(inputs: &[ParameterVector], b_hat: usize) -> Result<Vec<ParameterVector>> {
    let dim = common_dim(inputs)?;
    let n = inputs.len();
    if n <= b_hat {
        return Err(FedroError::InsufficientInputs { n_hat: n, b_hat });
    }
    let keep = n - b_hat;
    Ok(inputs
        .iter()
        .map(|x| {
            let mut order: Vec<(f64, usize)> =
                inputs.iter().enumerate().map(|(j, y)| (x.dist_sq(y), j)).collect();
            order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let neighbours: Vec<ParameterVector> =
                order[..keep].iter().map(|&(_, j)| inputs[j].clone()).collect();
            anchored_mean(canonical(&neighbours), dim).expect("keep >= 1")
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn pv(v: &[f64]) -> ParameterVector {
        ParameterVector::new(v.to_vec())
    }

    fn scalars(v: &[f64]) -> Vec<ParameterVector> {
        v.iter().map(|&x| pv(&[x])).collect()
    }

    #[test]
    fn average_examples() {
        assert_eq!(average(&scalars(&[1.0, 3.0])).unwrap(), pv(&[2.0]));
        assert_eq!(average(&[pv(&[0.3, -7.0])]).unwrap(), pv(&[0.3, -7.0]));
        assert_eq!(average(&[pv(&[1.0, 0.0]), pv(&[0.0, 1.0])]).unwrap(), pv(&[0.5, 0.5]));
        assert_eq!(average(&[]), Err(FedroError::EmptyInput));
    }

    #[test]
    fn trimmed_mean_examples() {
        assert_eq!(cw_trimmed_mean(&scalars(&[1.0, 2.0, 3.0, 100.0]), 1).unwrap(), pv(&[2.5]));
        let inputs = vec![pv(&[1.0, 100.0]), pv(&[2.0, 1.0]), pv(&[3.0, 2.0]), pv(&[100.0, 3.0])];
        assert_eq!(cw_trimmed_mean(&inputs, 1).unwrap(), pv(&[2.5, 2.5]));
        let same = vec![pv(&[0.1, 0.7]); 5];
        assert_eq!(cw_trimmed_mean(&same, 2).unwrap(), pv(&[0.1, 0.7]));
        assert_eq!(
            cw_trimmed_mean(&scalars(&[1.0, 2.0]), 1),
            Err(FedroError::InsufficientInputs { n_hat: 2, b_hat: 1 })
        );
    }

    #[test]
    fn median_examples() {
        let inputs = vec![pv(&[0.0, 0.0]), pv(&[1.0, 2.0]), pv(&[2.0, 1.0])];
        assert_eq!(cw_median(&inputs).unwrap(), pv(&[1.0, 1.0]));
        assert_eq!(cw_median(&[pv(&[4.0])]).unwrap(), pv(&[4.0]));
        assert_eq!(cw_median(&scalars(&[0.0, 10.0])).unwrap(), pv(&[5.0]));
    }

    #[test]
    fn geometric_median_examples() {
        let v = pv(&[0.25, -1.5]);
        assert_eq!(geometric_median(&vec![v.clone(); 3], 1e-8, 200).unwrap(), v);
        let gm = geometric_median(&scalars(&[0.0, 1.0, 10.0]), 1e-8, 200).unwrap();
        assert_abs_diff_eq!(gm[0], 1.0, epsilon = 1e-8);
    }

    #[test]
    fn geometric_median_on_majority_point() {
        // three copies at the origin dominate two far points
        let inputs = vec![pv(&[0.0, 0.0]), pv(&[0.0, 0.0]), pv(&[0.0, 0.0]), pv(&[5.0, 1.0]), pv(&[-2.0, 7.0])];
        let gm = geometric_median(&inputs, 1e-10, 500).unwrap();
        assert!(gm.norm() < 1e-6, "{gm:?}");
    }

    #[test]
    fn nnm_examples() {
        let out = nnm_transform(&scalars(&[0.0, 1.0, 10.0]), 1).unwrap();
        assert_eq!(out, scalars(&[0.5, 0.5, 5.5]));
        let full = nnm_transform(&scalars(&[0.0, 1.0, 10.0]), 0).unwrap();
        for v in full {
            assert_abs_diff_eq!(v[0], 11.0 / 3.0, epsilon = 1e-15);
        }
        let same = vec![pv(&[2.0, 3.0]); 4];
        assert_eq!(nnm_transform(&same, 1).unwrap(), same);
    }

    #[test]
    fn nnm_then_trimmed_mean_requires_quorum() {
        let cfg = AggregatorConfig::new(Rule::NnmThen(Box::new(Rule::CwTrimmedMean)));
        assert!(aggregate(&scalars(&[0.0, 1.0]), 1, &cfg).is_err());
        let out = aggregate(&scalars(&[0.0, 1.0, 2.0, 50.0]), 1, &cfg).unwrap();
        assert!(out[0] < 3.0);
    }
}
