use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{FedroError, Result};
use crate::rng::{self, Purpose, Stream};
use crate::vector::{anchored_mean, ParameterVector};

use super::{Task, TaskConstants};

fn zero() -> f64 {
    0.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadraticTaskSpec {
    pub n: usize,
    pub b: usize,
    pub d: usize,
    #[serde(rename = "L")]
    pub l: f64,
    /// Per-coordinate standard deviation of the honest centres.
    pub spread: f64,
    /// Noise scale: `E||noise||^2 = sigma^2`.
    #[serde(default = "zero")]
    pub sigma: f64,
    /// Common shift added to every honest centre coordinate.
    #[serde(default = "zero")]
    pub offset: f64,
    pub seed: u64,
}

impl QuadraticTaskSpec {
    pub fn new(n: usize, b: usize, d: usize, l: f64, spread: f64, seed: u64) -> Self {
        Self {
            n,
            b,
            d,
            l,
            spread,
            sigma: 0.0,
            offset: 0.0,
            seed,
        }
    }

    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.sigma = sigma;
        self
    }

    pub fn with_offset(mut self, offset: f64) -> Self {
        self.offset = offset;
        self
    }
}

/// Clients with losses `f_i(x) = (L/2) ||x - c_i||^2` and isotropic Gaussian
/// gradient noise. Byzantine clients are `0..b`.
#[derive(Debug, Clone)]
pub struct QuadraticTask {
    l: f64,
    centers: Vec<ParameterVector>,
    honest: Vec<usize>,
    noise_sigma: f64,
    honest_mean: ParameterVector,
    constants: TaskConstants,
}

impl QuadraticTask {
    /// Builds a task from explicit centres; the first `b` clients are Byzantine
    /// and their centres are ignored.
    pub fn from_centers(
        l: f64,
        centers: Vec<ParameterVector>,
        b: usize,
        noise_sigma: f64,
    ) -> Result<Self> {
        let n = centers.len();
        if !(l > 0.0 && l.is_finite()) {
            return Err(FedroError::InvalidConfig {
                field: "task.L",
                reason: format!("smoothness must be positive, got {l}"),
            });
        }
        if n == 0 || 2 * b >= n {
            return Err(FedroError::InvalidConfig {
                field: "task.b",
                reason: format!("need b < n/2, got b = {b} with n = {n}"),
            });
        }
        if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
            return Err(FedroError::InvalidConfig {
                field: "task.sigma",
                reason: format!("noise scale must be non-negative, got {noise_sigma}"),
            });
        }
        let dim = crate::vector::common_dim(&centers)?;
        if dim == 0 {
            return Err(FedroError::InvalidConfig {
                field: "task.d",
                reason: "dimension must be at least 1".into(),
            });
        }
        let honest: Vec<usize> = (b..n).collect();
        let honest_mean =
            anchored_mean(honest.iter().map(|&i| &centers[i]), dim).expect("h >= 1");
        let h = honest.len();
        let dispersion: f64 = honest
            .iter()
            .map(|&i| centers[i].dist_sq(&honest_mean))
            .sum::<f64>()
            / h as f64;
        let constants = TaskConstants {
            l,
            sigma: noise_sigma,
            zeta: l * dispersion.sqrt(),
            delta0: 0.5 * l * honest_mean.norm_sq(),
            x_star: honest_mean.clone(),
            h,
            estimated: false,
        };
        Ok(Self {
            l,
            centers,
            honest,
            noise_sigma,
            honest_mean,
            constants,
        })
    }

    pub fn center(&self, client: usize) -> &ParameterVector {
        &self.centers[client]
    }

    /// Honest centre mean, the global minimiser.
    pub fn honest_mean(&self) -> &ParameterVector {
        &self.honest_mean
    }

    /// `F(x0) - F*` in closed form.
    pub fn delta_at(&self, x0: &ParameterVector) -> f64 {
        0.5 * self.l * x0.dist_sq(&self.honest_mean)
    }

    /// Global loss through the closed form around the honest mean.
    pub fn global_loss_closed_form(&self, x: &ParameterVector) -> f64 {
        let floor = self.constants.zeta * self.constants.zeta / (2.0 * self.l);
        0.5 * self.l * x.dist_sq(&self.honest_mean) + floor
    }

    /// Global gradient as the mean of the per-client gradients.
    pub fn mean_client_gradient(&self, x: &ParameterVector) -> ParameterVector {
        let grads: Vec<ParameterVector> = self
            .honest
            .iter()
            .map(|&c| x.sub(&self.centers[c]).scale(self.l))
            .collect();
        anchored_mean(&grads, x.dim()).expect("h >= 1")
    }

    fn check_honest(&self, client: usize) -> Result<()> {
        if client >= self.centers.len() || !self.is_honest(client) {
            return Err(FedroError::ByzantineClient(client));
        }
        Ok(())
    }
}

/// Draws honest centres `offset + spread * N(0, I)` from `seed`, Byzantine
/// clients are `0..b`, and returns the task with its exact constants at `x0 = 0`.
pub fn make_quadratic_task(spec: &QuadraticTaskSpec) -> Result<(QuadraticTask, TaskConstants)> {
    if spec.d == 0 {
        return Err(FedroError::InvalidConfig {
            field: "task.d",
            reason: "dimension must be at least 1".into(),
        });
    }
    if !(spec.spread >= 0.0 && spec.spread.is_finite()) {
        return Err(FedroError::InvalidConfig {
            field: "task.spread",
            reason: format!("must be non-negative, got {}", spec.spread),
        });
    }
    let mut stream = rng::stream(spec.seed, Purpose::TaskGen, &[0]);
    let centers = (0..spec.n)
        .map(|i| {
            if i < spec.b {
                ParameterVector::zeros(spec.d)
            } else {
                ParameterVector::new(
                    (0..spec.d)
                        .map(|_| spec.offset + spec.spread * stream.sample::<f64, _>(StandardNormal))
                        .collect(),
                )
            }
        })
        .collect();
    let task = QuadraticTask::from_centers(spec.l, centers, spec.b, spec.sigma)?;
    let constants = task.constants.clone();
    Ok((task, constants))
}

impl Task for QuadraticTask {
    fn dim(&self) -> usize {
        self.honest_mean.dim()
    }

    fn n_clients(&self) -> usize {
        self.centers.len()
    }

    fn honest_clients(&self) -> &[usize] {
        &self.honest
    }

    fn is_honest(&self, client: usize) -> bool {
        client >= self.centers.len() - self.honest.len() && client < self.centers.len()
    }

    fn client_gradient(&self, client: usize, x: &ParameterVector) -> Result<ParameterVector> {
        self.check_honest(client)?;
        Ok(x.sub(&self.centers[client]).scale(self.l))
    }

    fn stochastic_gradient(
        &self,
        client: usize,
        x: &ParameterVector,
        stream: &mut Stream,
    ) -> Result<ParameterVector> {
        let mut g = self.client_gradient(client, x)?;
        if self.noise_sigma > 0.0 {
            let per_coord = self.noise_sigma / (x.dim() as f64).sqrt();
            for v in g.as_mut_slice() {
                *v += per_coord * stream.sample::<f64, _>(StandardNormal);
            }
        }
        Ok(g)
    }

    fn global_loss(&self, x: &ParameterVector) -> f64 {
        let total: f64 = self
            .honest
            .iter()
            .map(|&c| 0.5 * self.l * x.dist_sq(&self.centers[c]))
            .sum();
        total / self.honest.len() as f64
    }

    fn true_global_gradient(&self, x: &ParameterVector) -> ParameterVector {
        x.sub(&self.honest_mean).scale(self.l)
    }

    fn constants(&self) -> &TaskConstants {
        &self.constants
    }
}
