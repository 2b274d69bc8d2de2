//! Synthetic learning problems with known (or estimated) smoothness, noise
//! and heterogeneity constants.

mod logistic;
mod quadratic;

pub use logistic::{LogisticTask, LogisticTaskSpec};
pub use quadratic::{make_quadratic_task, QuadraticTask, QuadraticTaskSpec};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::rng::{self, Purpose, Stream};
use crate::vector::ParameterVector;

/// Constants of the smoothness, noise and heterogeneity assumptions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskConstants {
    pub l: f64,
    pub sigma: f64,
    pub zeta: f64,
    /// `F(x0) - F*`.
    pub delta0: f64,
    pub x_star: ParameterVector,
    /// Number of honest clients.
    pub h: usize,
    /// True when the constants are grid or sample estimates rather than exact values.
    pub estimated: bool,
}

/// A federated objective over `n` clients, of which a fixed subset is honest.
pub trait Task: Send + Sync {
    fn dim(&self) -> usize;
    fn n_clients(&self) -> usize;
    fn honest_clients(&self) -> &[usize];
    fn is_honest(&self, client: usize) -> bool;

    /// Exact gradient of an honest client's local loss.
    fn client_gradient(&self, client: usize, x: &ParameterVector) -> Result<ParameterVector>;

    /// Unbiased stochastic gradient of an honest client's local loss.
    fn stochastic_gradient(
        &self,
        client: usize,
        x: &ParameterVector,
        stream: &mut Stream,
    ) -> Result<ParameterVector>;

    /// Global loss: average of the honest clients' losses.
    fn global_loss(&self, x: &ParameterVector) -> f64;

    /// Exact gradient of the global loss.
    fn true_global_gradient(&self, x: &ParameterVector) -> ParameterVector;

    fn constants(&self) -> &TaskConstants;

    /// Largest client smoothness constant; equals `constants().l` for exact tasks.
    fn smoothness(&self) -> f64 {
        self.constants().l
    }
}

/// Task description as it appears in a run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TaskSpec {
    Quadratic(QuadraticTaskSpec),
    Logistic(LogisticTaskSpec),
}

impl TaskSpec {
    pub fn n(&self) -> usize {
        match self {
            TaskSpec::Quadratic(q) => q.n,
            TaskSpec::Logistic(l) => l.n,
        }
    }

    pub fn b(&self) -> usize {
        match self {
            TaskSpec::Quadratic(q) => q.b,
            TaskSpec::Logistic(l) => l.b,
        }
    }

    pub fn d(&self) -> usize {
        match self {
            TaskSpec::Quadratic(q) => q.d,
            TaskSpec::Logistic(l) => l.d,
        }
    }

    pub fn build(&self) -> Result<Box<dyn Task>> {
        Ok(match self {
            TaskSpec::Quadratic(q) => Box::new(make_quadratic_task(q)?.0),
            TaskSpec::Logistic(l) => Box::new(LogisticTask::new(l)?),
        })
    }
}

/// Empirical check of the three assumptions on a task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub lipschitz_hat: f64,
    pub sigma_sq_hat: f64,
    pub zeta_sq_hat: f64,
    pub lipschitz_ok: bool,
    pub sigma_ok: bool,
    pub zeta_ok: bool,
    /// Set for tasks whose constants are themselves estimates.
    pub estimate_only: bool,
}

impl AssumptionReport {
    pub fn passed(&self) -> bool {
        self.lipschitz_ok && self.sigma_ok && self.zeta_ok
    }
}

/// Relative tolerance for the noise second moment.
pub const SIGMA_REL_TOL: f64 = 0.03;

/// Estimates L (gradient Lipschitz ratio over point pairs), sigma^2 (noise
/// second moment from `sample_count` draws per point) and zeta^2 (honest
/// gradient dispersion), each maximised over `grid` random points around the
/// minimiser.
pub fn verify_assumptions(
    task: &dyn Task,
    sample_count: usize,
    grid: usize,
    seed: u64,
) -> Result<AssumptionReport> {
    let consts = task.constants();
    let dim = task.dim();
    let honest = task.honest_clients();
    let mut stream = rng::stream(seed, Purpose::Verify, &[0]);
    let point = |stream: &mut Stream| -> ParameterVector {
        let mut x = consts.x_star.clone();
        for j in 0..dim {
            x[j] += stream.random_range(-2.0..2.0);
        }
        x
    };
    let points: Vec<ParameterVector> = (0..grid.max(2)).map(|_| point(&mut stream)).collect();

    let mut lipschitz_hat: f64 = 0.0;
    for pair in points.windows(2) {
        let gap = pair[0].dist_sq(&pair[1]).sqrt();
        if gap == 0.0 {
            continue;
        }
        for &c in honest {
            let g0 = task.client_gradient(c, &pair[0])?;
            let g1 = task.client_gradient(c, &pair[1])?;
            lipschitz_hat = lipschitz_hat.max(g0.dist_sq(&g1).sqrt() / gap);
        }
    }

    let mut sigma_sq_hat: f64 = 0.0;
    let mut zeta_sq_hat: f64 = 0.0;
    for (k, x) in points.iter().enumerate() {
        let client = honest[k % honest.len()];
        let exact = task.client_gradient(client, x)?;
        let mut noise = rng::stream(seed, Purpose::Verify, &[1, k as u64]);
        let mut second_moment = 0.0;
        for _ in 0..sample_count {
            second_moment += task.stochastic_gradient(client, x, &mut noise)?.dist_sq(&exact);
        }
        sigma_sq_hat = sigma_sq_hat.max(second_moment / sample_count.max(1) as f64);

        let global = task.true_global_gradient(x);
        let mut dispersion = 0.0;
        for &c in honest {
            dispersion += task.client_gradient(c, x)?.dist_sq(&global);
        }
        zeta_sq_hat = zeta_sq_hat.max(dispersion / honest.len() as f64);
    }

    let sigma_sq = consts.sigma * consts.sigma;
    let zeta_sq = consts.zeta * consts.zeta;
    let l = task.smoothness();
    Ok(AssumptionReport {
        lipschitz_hat,
        sigma_sq_hat,
        zeta_sq_hat,
        lipschitz_ok: lipschitz_hat <= l * (1.0 + 1e-9),
        sigma_ok: if consts.estimated {
            sigma_sq_hat <= sigma_sq * (1.0 + SIGMA_REL_TOL) + 1e-12
        } else if sigma_sq == 0.0 {
            sigma_sq_hat <= 1e-12
        } else {
            (sigma_sq_hat - sigma_sq).abs() <= SIGMA_REL_TOL * sigma_sq
        },
        zeta_ok: zeta_sq_hat <= zeta_sq * (1.0 + 1e-9) + 1e-12,
        estimate_only: consts.estimated,
    })
}
