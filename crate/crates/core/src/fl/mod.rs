//! The robust federated averaging protocol: per round, sample `n_hat`
//! clients, let each sampled honest client run `K` local SGD steps, fill the
//! Byzantine slots with attack vectors, aggregate the updates robustly and
//! take a server step.

mod sampling;
mod theory;

pub use sampling::{draw_subset, sample_clients};
pub use theory::{
    deviation_bound, plan_step_sizes, theoretical_error_bound, update_spread_bound, ErrorBound,
    StepSizePlan,
};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::aggregation::{aggregate, average, AggregatorConfig};
use crate::attacks::{craft_byzantine_updates, AttackKind, AttackSpec, ByzantinePayload, RoundShape};
use crate::error::{FedroError, Result};
use crate::par;
use crate::rng::{self, Purpose, Stream};
use crate::tasks::{Task, TaskSpec};
use crate::vector::ParameterVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationMode {
    /// Record rounds with more than `b_hat` sampled Byzantine clients and carry on.
    #[default]
    ContinueAndFlag,
    /// Such a round hands the model to the adversary, which resets it to zero.
    TakeoverZero,
}

/// Full description of a simulated run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub task: TaskSpec,
    pub n_hat: usize,
    pub b_hat: usize,
    /// T.
    pub rounds: usize,
    /// K.
    pub local_steps: usize,
    pub gamma_c: f64,
    pub gamma_s: f64,
    pub aggregator: AggregatorConfig,
    pub attack: AttackSpec,
    pub master_seed: u64,
    /// Initial model; zero when absent.
    #[serde(default)]
    pub x0: Option<ParameterVector>,
    #[serde(default)]
    pub violation_mode: ViolationMode,
}

fn invalid(field: &'static str, reason: String) -> FedroError {
    FedroError::InvalidConfig { field, reason }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let (n, b, d) = (self.task.n(), self.task.b(), self.task.d());
        if n == 0 || 2 * b >= n {
            return Err(invalid("task.b", format!("need b < n/2, got b = {b} with n = {n}")));
        }
        if self.n_hat == 0 || self.n_hat > n {
            return Err(invalid("n_hat", format!("need 1 <= n_hat <= n = {n}, got {}", self.n_hat)));
        }
        if 2 * self.b_hat >= self.n_hat {
            return Err(invalid(
                "b_hat",
                format!("need b_hat < n_hat/2, got b_hat = {} with n_hat = {}", self.b_hat, self.n_hat),
            ));
        }
        if self.rounds == 0 {
            return Err(invalid("rounds", "need at least one round".into()));
        }
        if self.local_steps == 0 {
            return Err(invalid("local_steps", "need at least one local step".into()));
        }
        if !(self.gamma_c > 0.0 && self.gamma_c.is_finite()) {
            return Err(invalid("gamma_c", format!("must be positive, got {}", self.gamma_c)));
        }
        if !(self.gamma_s > 0.0 && self.gamma_s.is_finite()) {
            return Err(invalid("gamma_s", format!("must be positive, got {}", self.gamma_s)));
        }
        if let Some(x0) = &self.x0 {
            if x0.dim() != d {
                return Err(invalid("x0", format!("expected dimension {d}, got {}", x0.dim())));
            }
            if !x0.is_finite() {
                return Err(invalid("x0", "entries must be finite".into()));
            }
        }
        self.attack.validate()
    }

    pub fn initial_model(&self) -> ParameterVector {
        self.x0
            .clone()
            .unwrap_or_else(|| ParameterVector::zeros(self.task.d()))
    }
}

/// Diagnostics for one round, evaluated at the model the round started from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundTrace {
    pub round: usize,
    pub grad_norm_sq: f64,
    pub loss: f64,
    pub byz_sampled: usize,
    pub event_violated: bool,
    /// `||A(updates) - mean of honest sampled updates||^2`; NaN without honest samples.
    pub dev_norm_sq: f64,
    /// Mean squared distance of the honest local models to their average.
    pub honest_spread: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub traces: Vec<RoundTrace>,
    pub avg_grad_norm_sq: f64,
    /// Average over rounds without a violation; `None` if every round was violated.
    pub conditional_avg_grad_norm_sq: Option<f64>,
    pub output_round: usize,
    pub output_model: ParameterVector,
    pub final_model: ParameterVector,
    pub final_grad_norm_sq: f64,
    pub event_held: bool,
    pub violated_rounds: usize,
}

/// Per-step gradient streams of one round.
#[derive(Debug, Clone, Copy)]
pub struct GradientStreams {
    pub master_seed: u64,
    pub round: usize,
}

impl GradientStreams {
    pub fn for_step(&self, client: usize, step: usize) -> Stream {
        rng::stream(
            self.master_seed,
            Purpose::Gradient,
            &[self.round as u64, client as u64, step as u64],
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalOutcome {
    pub update: ParameterVector,
    pub local_model: ParameterVector,
}

/// `K` local SGD steps from `x_t`; the update is `x^(K) - x_t`.
pub fn local_sgd(
    task: &dyn Task,
    client: usize,
    x_t: &ParameterVector,
    local_steps: usize,
    gamma_c: f64,
    streams: &GradientStreams,
) -> Result<LocalOutcome> {
    let mut x = x_t.clone();
    for step in 0..local_steps {
        let g = task.stochastic_gradient(client, &x, &mut streams.for_step(client, step))?;
        x.axpy(-gamma_c, &g);
    }
    Ok(LocalOutcome {
        update: x.sub(x_t),
        local_model: x,
    })
}

pub struct Simulator<'a> {
    config: &'a RunConfig,
    task: Box<dyn Task>,
}

impl<'a> Simulator<'a> {
    pub fn new(config: &'a RunConfig) -> Result<Self> {
        config.validate()?;
        let task = config.task.build()?;
        Ok(Self { config, task })
    }

    pub fn task(&self) -> &dyn Task {
        self.task.as_ref()
    }

    /// Runs round `round` from `model`; returns the next model and the trace.
    pub fn run_round(&self, model: &ParameterVector, round: usize) -> Result<(ParameterVector, RoundTrace)> {
        let cfg = self.config;
        let task = self.task.as_ref();
        let mut sampling = rng::stream(cfg.master_seed, Purpose::Sampling, &[round as u64]);
        let sampled = sample_clients(task.n_clients(), cfg.n_hat, &mut sampling)?;
        let honest_ids: Vec<usize> = sampled.iter().copied().filter(|&c| task.is_honest(c)).collect();
        let byz_sampled = sampled.len() - honest_ids.len();
        let event_violated = byz_sampled > cfg.b_hat;

        let streams = GradientStreams {
            master_seed: cfg.master_seed,
            round,
        };
        let honest_updates: Vec<ParameterVector> = par::map_slice(&honest_ids, |&c| {
            local_sgd(task, c, model, cfg.local_steps, cfg.gamma_c, &streams).map(|o| o.update)
        })
        .into_iter()
        .collect::<Result<_>>()?;

        let shape = RoundShape {
            round,
            n_hat: cfg.n_hat,
            b_hat: cfg.b_hat,
        };
        let (byz_updates, takeover) = if honest_updates.is_empty() {
            // nothing to imitate: Byzantine slots stall
            let takeover = cfg.attack.kind == AttackKind::TakeoverZero;
            (vec![ParameterVector::zeros(model.dim()); byz_sampled], takeover)
        } else {
            match craft_byzantine_updates(&honest_updates, byz_sampled, &cfg.attack, shape)? {
                ByzantinePayload::Updates(u) => (u, false),
                ByzantinePayload::TakeoverZero => {
                    (vec![ParameterVector::zeros(model.dim()); byz_sampled], true)
                }
            }
        };

        let mut byz_iter = byz_updates.into_iter();
        let mut honest_iter = honest_updates.iter();
        let inputs: Vec<ParameterVector> = sampled
            .iter()
            .map(|&c| {
                if task.is_honest(c) {
                    honest_iter.next().expect("one update per honest client").clone()
                } else {
                    byz_iter.next().expect("one update per Byzantine slot")
                }
            })
            .collect();
        let aggregated = aggregate(&inputs, cfg.b_hat, &cfg.aggregator)?;

        let (dev_norm_sq, honest_spread) = if honest_updates.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            let honest_mean = average(&honest_updates)?;
            let spread = honest_updates
                .iter()
                .map(|u| u.dist_sq(&honest_mean))
                .sum::<f64>()
                / honest_updates.len() as f64;
            (aggregated.dist_sq(&honest_mean), spread)
        };

        let seized = event_violated
            && (takeover || cfg.violation_mode == ViolationMode::TakeoverZero);
        let next = if seized {
            ParameterVector::zeros(model.dim())
        } else {
            let mut next = model.clone();
            next.axpy(cfg.gamma_s, &aggregated);
            next
        };

        let trace = RoundTrace {
            round,
            grad_norm_sq: task.true_global_gradient(model).norm_sq(),
            loss: task.global_loss(model),
            byz_sampled,
            event_violated,
            dev_norm_sq,
            honest_spread,
        };
        Ok((next, trace))
    }

    pub fn run(&self) -> Result<RunMetrics> {
        let cfg = self.config;
        let output_round = rng::stream(cfg.master_seed, Purpose::Output, &[]).random_range(0..cfg.rounds);
        let mut model = cfg.initial_model();
        let mut output_model = model.clone();
        let mut traces = Vec::with_capacity(cfg.rounds);
        for round in 0..cfg.rounds {
            if round == output_round {
                output_model = model.clone();
            }
            let (next, trace) = self.run_round(&model, round)?;
            traces.push(trace);
            model = next;
        }

        let total: f64 = traces.iter().map(|t| t.grad_norm_sq).sum();
        let clean: Vec<f64> = traces
            .iter()
            .filter(|t| !t.event_violated)
            .map(|t| t.grad_norm_sq)
            .collect();
        let violated_rounds = traces.len() - clean.len();
        Ok(RunMetrics {
            avg_grad_norm_sq: total / cfg.rounds as f64,
            conditional_avg_grad_norm_sq: (!clean.is_empty())
                .then(|| clean.iter().sum::<f64>() / clean.len() as f64),
            output_round,
            output_model,
            final_grad_norm_sq: self.task.true_global_gradient(&model).norm_sq(),
            final_model: model,
            event_held: violated_rounds == 0,
            violated_rounds,
            traces,
        })
    }
}

/// Runs the configured protocol end to end.
pub fn run_fedro(config: &RunConfig) -> Result<RunMetrics> {
    Simulator::new(config)?.run()
}
