use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{FedroError, Result};

/// A dense model or update vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParameterVector(Vec<f64>);

impl ParameterVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn filled(dim: usize, value: f64) -> Self {
        Self(vec![value; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn norm_sq(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn dist_sq(&self, other: &Self) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn add(&self, other: &Self) -> Self {
        Self(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self(self.0.iter().map(|a| a * factor).collect())
    }

    /// `self + factor * other`, in place.
    pub fn axpy(&mut self, factor: f64, other: &Self) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += factor * b;
        }
    }
}

impl From<Vec<f64>> for ParameterVector {
    fn from(values: Vec<f64>) -> Self {
        Self(values)
    }
}

impl Index<usize> for ParameterVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for ParameterVector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

/// Checks that `inputs` is non-empty with a common dimension; returns it.
pub fn common_dim(inputs: &[ParameterVector]) -> Result<usize> {
    let first = inputs.first().ok_or(FedroError::EmptyInput)?;
    let dim = first.dim();
    for v in &inputs[1..] {
        if v.dim() != dim {
            return Err(FedroError::DimensionMismatch {
                expected: dim,
                actual: v.dim(),
            });
        }
    }
    Ok(dim)
}

/// Coordinate-wise mean anchored at the first vector: `w_0 + sum(w_i - w_0) / n`.
///
/// Equal inputs give back the common vector exactly.
pub fn anchored_mean<'a, I>(inputs: I, dim: usize) -> Option<ParameterVector>
where
    I: IntoIterator<Item = &'a ParameterVector>,
{
    let mut iter = inputs.into_iter();
    let anchor = iter.next()?;
    let mut acc = vec![0.0; dim];
    let mut count = 1usize;
    for v in iter {
        for (a, (x, x0)) in acc.iter_mut().zip(v.0.iter().zip(&anchor.0)) {
            *a += x - x0;
        }
        count += 1;
    }
    let n = count as f64;
    Some(ParameterVector(
        anchor.0.iter().zip(&acc).map(|(x0, a)| x0 + a / n).collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn anchored_mean_is_exact_on_equal_inputs() {
        let v = ParameterVector::new(vec![0.1, -3.7, 1e-300]);
        let inputs = vec![v.clone(); 7];
        assert_eq!(anchored_mean(&inputs, 3).unwrap(), v);
    }

    #[test]
    fn dimension_checks() {
        let a = ParameterVector::zeros(2);
        let b = ParameterVector::zeros(3);
        assert_eq!(
            common_dim(&[a, b]),
            Err(FedroError::DimensionMismatch {
                expected: 2,
                actual: 3
            })
        );
        assert_eq!(common_dim(&[]), Err(FedroError::EmptyInput));
    }
}
