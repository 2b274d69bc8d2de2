//! Byzantine update generators.
//!
//! The adversary is omniscient: it sees the honest updates sampled in the
//! current round before choosing what the Byzantine clients send.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{FedroError, Result};
use crate::vector::{anchored_mean, common_dim, ParameterVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    /// Send `-lambda` times the honest mean.
    SignFlipping,
    /// Fall of empires: `-epsilon` times the honest mean.
    Foe,
    /// A little is enough: honest mean shifted by `z` per-coordinate standard deviations.
    Alie,
    /// Copy one honest client's update.
    Mimic,
    /// Seize the server model and reset it to zero once the sample is controlled.
    TakeoverZero,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSpec {
    pub kind: AttackKind,
    /// lambda for sign flipping, epsilon for FOE, z for ALIE; defaults when absent.
    #[serde(default)]
    pub scale: Option<f64>,
    /// Position of the mimicked client among the sampled honest clients.
    #[serde(default)]
    pub target: Option<usize>,
}

impl AttackSpec {
    pub fn new(kind: AttackKind) -> Self {
        Self {
            kind,
            scale: None,
            target: None,
        }
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = Some(scale);
        self
    }

    pub fn with_target(mut self, target: usize) -> Self {
        self.target = Some(target);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(s) = self.scale {
            if !s.is_finite() {
                return Err(FedroError::InvalidConfig {
                    field: "attack.scale",
                    reason: format!("must be finite, got {s}"),
                });
            }
        }
        Ok(())
    }

    /// Scale actually used for a sample of `n_hat` clients tolerating `b_hat`.
    pub fn effective_scale(&self, n_hat: usize, b_hat: usize) -> f64 {
        self.scale.unwrap_or(match self.kind {
            AttackKind::SignFlipping => 1.0,
            AttackKind::Foe => 3.0,
            AttackKind::Alie => alie_default_z(n_hat, b_hat),
            AttackKind::Mimic | AttackKind::TakeoverZero => 0.0,
        })
    }
}

/// Shape of the current round as seen by the adversary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RoundShape {
    pub round: usize,
    pub n_hat: usize,
    pub b_hat: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ByzantinePayload {
    Updates(Vec<ParameterVector>),
    /// The server model is to be replaced by zeros if the adversary controls the round.
    TakeoverZero,
}

/// `z = Phi^{-1}((n_hat - b_hat - s) / (n_hat - b_hat))` with
/// `s = floor(n_hat/2) + 1 - b_hat`, floored at zero.
pub fn alie_default_z(n_hat: usize, b_hat: usize) -> f64 {
    let honest = n_hat.saturating_sub(b_hat);
    if honest == 0 {
        return 0.0;
    }
    let s = (n_hat / 2 + 1).saturating_sub(b_hat);
    let q = (honest as f64 - s as f64) / honest as f64;
    if q <= 0.5 {
        return 0.0;
    }
    if q >= 1.0 {
        return 0.0;
    }
    Normal::standard().inverse_cdf(q).max(0.0)
}

/// Per-coordinate sample standard deviation (zero for a single update).
fn coordinate_std(updates: &[ParameterVector], mean: &ParameterVector) -> ParameterVector {
    let m = updates.len();
    if m < 2 {
        return ParameterVector::zeros(mean.dim());
    }
    let var = (0..mean.dim()).map(|j| {
        updates.iter().map(|u| (u[j] - mean[j]).powi(2)).sum::<f64>() / (m - 1) as f64
    });
    ParameterVector::new(var.map(f64::sqrt).collect())
}

pub fn craft_byzantine_updates(
    honest_updates: &[ParameterVector],
    byz_count: usize,
    spec: &AttackSpec,
    shape: RoundShape,
) -> Result<ByzantinePayload> {
    spec.validate()?;
    if spec.kind == AttackKind::TakeoverZero {
        return Ok(ByzantinePayload::TakeoverZero);
    }
    if byz_count == 0 {
        return Ok(ByzantinePayload::Updates(Vec::new()));
    }
    let dim = common_dim(honest_updates)?;
    let scale = spec.effective_scale(shape.n_hat, shape.b_hat);
    let crafted = match spec.kind {
        AttackKind::SignFlipping | AttackKind::Foe => {
            let mean = anchored_mean(honest_updates, dim).expect("non-empty");
            mean.scale(-scale)
        }
        AttackKind::Alie => {
            let mean = anchored_mean(honest_updates, dim).expect("non-empty");
            let std = coordinate_std(honest_updates, &mean);
            let mut out = mean;
            out.axpy(scale, &std);
            out
        }
        AttackKind::Mimic => {
            let target = spec.target.unwrap_or(0);
            honest_updates
                .get(target)
                .ok_or(FedroError::InvalidConfig {
                    field: "attack.target",
                    reason: format!(
                        "target {target} out of range for {} honest updates",
                        honest_updates.len()
                    ),
                })?
                .clone()
        }
        AttackKind::TakeoverZero => unreachable!(),
    };
    Ok(ByzantinePayload::Updates(vec![crafted; byz_count]))
}
