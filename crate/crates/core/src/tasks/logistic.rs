//! Regularised logistic regression on per-client Gaussian mixtures.
//!
//! Unlike the quadratic task its constants are estimates: `L` is the trace
//! bound on each client's Hessian, while sigma and zeta are maximised over a
//! grid of points around the minimiser.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{FedroError, Result};
use crate::rng::{self, Purpose, Stream};
use crate::vector::{anchored_mean, ParameterVector};

use super::{Task, TaskConstants};

fn default_samples() -> usize {
    40
}

fn default_separation() -> f64 {
    1.0
}

fn default_reg() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogisticTaskSpec {
    pub n: usize,
    pub b: usize,
    pub d: usize,
    /// Standard deviation of the per-client feature shift.
    pub spread: f64,
    #[serde(default = "default_samples")]
    pub samples_per_client: usize,
    #[serde(default = "default_separation")]
    pub separation: f64,
    #[serde(default = "default_reg")]
    pub reg: f64,
    pub seed: u64,
}

struct ClientData {
    features: Vec<ParameterVector>,
    labels: Vec<f64>,
}

pub struct LogisticTask {
    dim: usize,
    n: usize,
    honest: Vec<usize>,
    data: Vec<ClientData>,
    reg: f64,
    constants: TaskConstants,
}

const GRID_POINTS: usize = 32;

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

impl LogisticTask {
    pub fn new(spec: &LogisticTaskSpec) -> Result<Self> {
        if spec.d == 0 || spec.samples_per_client == 0 {
            return Err(FedroError::InvalidConfig {
                field: "task.d",
                reason: "dimension and samples_per_client must be positive".into(),
            });
        }
        if spec.n == 0 || 2 * spec.b >= spec.n {
            return Err(FedroError::InvalidConfig {
                field: "task.b",
                reason: format!("need b < n/2, got b = {} with n = {}", spec.b, spec.n),
            });
        }
        if spec.reg.is_nan() || spec.reg <= 0.0 {
            return Err(FedroError::InvalidConfig {
                field: "task.reg",
                reason: "regularisation must be positive".into(),
            });
        }
        let mut stream = rng::stream(spec.seed, Purpose::TaskGen, &[1]);
        let normal = |s: &mut Stream| s.sample::<f64, _>(StandardNormal);
        let data = (0..spec.n)
            .map(|i| {
                if i < spec.b {
                    return ClientData {
                        features: Vec::new(),
                        labels: Vec::new(),
                    };
                }
                let shift: Vec<f64> = (0..spec.d).map(|_| spec.spread * normal(&mut stream)).collect();
                let mut features = Vec::with_capacity(spec.samples_per_client);
                let mut labels = Vec::with_capacity(spec.samples_per_client);
                for _ in 0..spec.samples_per_client {
                    let y = if stream.random::<bool>() { 1.0 } else { -1.0 };
                    let a: Vec<f64> = (0..spec.d)
                        .map(|j| {
                            let signal = if j == 0 { y * spec.separation } else { 0.0 };
                            signal + shift[j] + normal(&mut stream)
                        })
                        .collect();
                    features.push(ParameterVector::new(a));
                    labels.push(y);
                }
                ClientData { features, labels }
            })
            .collect();

        let mut task = Self {
            dim: spec.d,
            n: spec.n,
            honest: (spec.b..spec.n).collect(),
            data,
            reg: spec.reg,
            constants: TaskConstants {
                l: 0.0,
                sigma: 0.0,
                zeta: 0.0,
                delta0: 0.0,
                x_star: ParameterVector::zeros(spec.d),
                h: spec.n - spec.b,
                estimated: true,
            },
        };
        task.estimate_constants(spec.seed);
        Ok(task)
    }

    fn client_loss(&self, client: usize, x: &ParameterVector) -> f64 {
        let d = &self.data[client];
        let total: f64 = d
            .features
            .iter()
            .zip(&d.labels)
            .map(|(a, y)| softplus(-y * a.dot(x)))
            .sum();
        total / d.labels.len() as f64 + 0.5 * self.reg * x.norm_sq()
    }

    fn sample_gradient(&self, client: usize, sample: usize, x: &ParameterVector) -> ParameterVector {
        let d = &self.data[client];
        let (a, y) = (&d.features[sample], d.labels[sample]);
        let weight = -y * sigmoid(-y * a.dot(x));
        let mut g = x.scale(self.reg);
        g.axpy(weight, a);
        g
    }

    fn exact_client_gradient(&self, client: usize, x: &ParameterVector) -> ParameterVector {
        let m = self.data[client].labels.len();
        let grads: Vec<ParameterVector> = (0..m).map(|s| self.sample_gradient(client, s, x)).collect();
        anchored_mean(&grads, self.dim).expect("m >= 1")
    }

    fn estimate_constants(&mut self, seed: u64) {
        let l = self
            .honest
            .iter()
            .map(|&c| {
                let d = &self.data[c];
                d.features.iter().map(|a| a.norm_sq()).sum::<f64>() / (4.0 * d.labels.len() as f64)
            })
            .fold(0.0, f64::max)
            + self.reg;

        // gradient descent to the minimiser; F is reg-strongly convex
        let mut x = ParameterVector::zeros(self.dim);
        for _ in 0..20_000 {
            let g = self.true_global_gradient(&x);
            if g.norm_sq() < 1e-24 {
                break;
            }
            x.axpy(-1.0 / l, &g);
        }
        let f_star = self.global_loss(&x);
        let delta0 = self.global_loss(&ParameterVector::zeros(self.dim)) - f_star;

        let mut stream = rng::stream(seed, Purpose::TaskGen, &[2]);
        let mut sigma_sq: f64 = 0.0;
        let mut zeta_sq: f64 = 0.0;
        for _ in 0..GRID_POINTS {
            let mut p = x.clone();
            for j in 0..self.dim {
                p[j] += stream.random_range(-2.0..2.0);
            }
            let global = self.true_global_gradient(&p);
            let mut disp = 0.0;
            for &c in &self.honest {
                let exact = self.exact_client_gradient(c, &p);
                disp += exact.dist_sq(&global);
                let m = self.data[c].labels.len();
                let var = (0..m)
                    .map(|s| self.sample_gradient(c, s, &p).dist_sq(&exact))
                    .sum::<f64>()
                    / m as f64;
                sigma_sq = sigma_sq.max(var);
            }
            zeta_sq = zeta_sq.max(disp / self.honest.len() as f64);
        }
        self.constants = TaskConstants {
            l,
            sigma: sigma_sq.sqrt(),
            zeta: zeta_sq.sqrt(),
            delta0: delta0.max(0.0),
            x_star: x,
            h: self.honest.len(),
            estimated: true,
        };
    }
}

impl Task for LogisticTask {
    fn dim(&self) -> usize {
        self.dim
    }

    fn n_clients(&self) -> usize {
        self.n
    }

    fn honest_clients(&self) -> &[usize] {
        &self.honest
    }

    fn is_honest(&self, client: usize) -> bool {
        client < self.n && client >= self.n - self.honest.len()
    }

    fn client_gradient(&self, client: usize, x: &ParameterVector) -> Result<ParameterVector> {
        if !self.is_honest(client) {
            return Err(FedroError::ByzantineClient(client));
        }
        Ok(self.exact_client_gradient(client, x))
    }

    fn stochastic_gradient(
        &self,
        client: usize,
        x: &ParameterVector,
        stream: &mut Stream,
    ) -> Result<ParameterVector> {
        if !self.is_honest(client) {
            return Err(FedroError::ByzantineClient(client));
        }
        let sample = stream.random_range(0..self.data[client].labels.len());
        Ok(self.sample_gradient(client, sample, x))
    }

    fn global_loss(&self, x: &ParameterVector) -> f64 {
        self.honest.iter().map(|&c| self.client_loss(c, x)).sum::<f64>() / self.honest.len() as f64
    }

    fn true_global_gradient(&self, x: &ParameterVector) -> ParameterVector {
        let grads: Vec<ParameterVector> = self
            .honest
            .iter()
            .map(|&c| self.exact_client_gradient(c, x))
            .collect();
        anchored_mean(&grads, self.dim).expect("h >= 1")
    }

    fn constants(&self) -> &TaskConstants {
        &self.constants
    }
}
