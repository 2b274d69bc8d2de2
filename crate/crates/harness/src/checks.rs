//! Verification suites behind `fedro check`.

use clap::ValueEnum;
use fedro_core::aggregation::{certify_robustness, AggregatorConfig, Rule};
use fedro_core::tasks::{verify_assumptions, LogisticTaskSpec, QuadraticTaskSpec, TaskSpec, SIGMA_REL_TOL};
use fedro_core::verify::{self, CheckOutcome, SuiteReport};

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    DProperties,
    Chernoff,
    Kappa,
    Assumptions,
    Solver,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RuleArg {
    Average,
    CwTrimmedMean,
    CwMedian,
    GeometricMedian,
    NnmThenCwTrimmedMean,
    NnmThenCwMedian,
}

impl RuleArg {
    pub fn rule(self) -> Rule {
        match self {
            RuleArg::Average => Rule::Average,
            RuleArg::CwTrimmedMean => Rule::CwTrimmedMean,
            RuleArg::CwMedian => Rule::CwMedian,
            RuleArg::GeometricMedian => Rule::GeometricMedian,
            RuleArg::NnmThenCwTrimmedMean => Rule::NnmThen(Box::new(Rule::CwTrimmedMean)),
            RuleArg::NnmThenCwMedian => Rule::NnmThen(Box::new(Rule::CwMedian)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TaskArg {
    Quadratic,
    Logistic,
}

/// Knobs of the kappa and assumption suites.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckOptions {
    pub rule: RuleArg,
    pub n_hat: usize,
    pub b_hat: usize,
    /// Claimed kappa; when absent the claim is calibrated on one batch of
    /// instances and checked on a fresh batch with [`HOLDOUT_SLACK`].
    pub kappa_claim: Option<f64>,
    pub trials: usize,
    pub seed: u64,
    pub task: TaskArg,
    pub samples: usize,
}

impl Default for CheckOptions {
    fn default() -> Self {
        Self {
            rule: RuleArg::CwTrimmedMean,
            n_hat: 8,
            b_hat: 2,
            kappa_claim: None,
            trials: 200,
            seed: 0,
            task: TaskArg::Quadratic,
            samples: 100_000,
        }
    }
}

pub const HOLDOUT_SLACK: f64 = 1.5;

fn kappa_suite(opts: &CheckOptions) -> Result<SuiteReport> {
    let cfg = AggregatorConfig::new(opts.rule.rule());
    let claim = match opts.kappa_claim {
        Some(k) => k,
        None => {
            let calibration = certify_robustness(&cfg, opts.n_hat, opts.b_hat, f64::INFINITY, opts.trials, opts.seed)?;
            calibration.max_ratio * HOLDOUT_SLACK
        }
    };
    let holdout_seed = if opts.kappa_claim.is_some() { opts.seed } else { opts.seed.wrapping_add(1) };
    let report = certify_robustness(&cfg, opts.n_hat, opts.b_hat, claim, opts.trials, holdout_seed)?;
    Ok(SuiteReport {
        suite: "kappa".into(),
        outcomes: vec![CheckOutcome {
            name: format!(
                "{} n_hat={} b_hat={} kappa_hat={:.6e} claim={:.6e}",
                cfg.rule.name(),
                opts.n_hat,
                opts.b_hat,
                report.max_ratio,
                claim
            ),
            passed: report.holds,
            checks: report.instances_tested,
            violations: usize::from(!report.holds),
            worst_margin: claim - report.max_ratio,
            worst_case: format!("witness subset {:?}", report.witness_subset),
        }],
    })
}

fn assumptions_suite(opts: &CheckOptions) -> Result<SuiteReport> {
    let spec = match opts.task {
        TaskArg::Quadratic => TaskSpec::Quadratic(QuadraticTaskSpec::new(20, 4, 5, 2.0, 1.0, opts.seed).with_sigma(1.0)),
        TaskArg::Logistic => TaskSpec::Logistic(LogisticTaskSpec {
            n: 20,
            b: 4,
            d: 5,
            spread: 0.5,
            samples_per_client: 32,
            separation: 1.0,
            reg: 0.05,
            seed: opts.seed,
        }),
    };
    let task = spec.build()?;
    let consts = task.constants();
    let r = verify_assumptions(task.as_ref(), opts.samples, 8, opts.seed)?;
    let sigma_sq = consts.sigma * consts.sigma;
    let zeta_sq = consts.zeta * consts.zeta;
    let estimate = if r.estimate_only { " (estimated constants)" } else { "" };
    let outcome = |name: String, passed: bool, margin: f64, case: String| CheckOutcome {
        name,
        passed,
        checks: 1,
        violations: usize::from(!passed),
        worst_margin: margin,
        worst_case: case,
    };
    Ok(SuiteReport {
        suite: "assumptions".into(),
        outcomes: vec![
            outcome(
                format!("smoothness{estimate}"),
                r.lipschitz_ok,
                task.smoothness() * (1.0 + 1e-9) - r.lipschitz_hat,
                format!("L_hat={:.6e} L={:.6e}", r.lipschitz_hat, task.smoothness()),
            ),
            outcome(
                format!("noise{estimate}"),
                r.sigma_ok,
                if r.estimate_only {
                    sigma_sq * (1.0 + SIGMA_REL_TOL) - r.sigma_sq_hat
                } else {
                    SIGMA_REL_TOL * sigma_sq - (r.sigma_sq_hat - sigma_sq).abs()
                },
                format!("sigma_sq_hat={:.6e} sigma_sq={:.6e}", r.sigma_sq_hat, sigma_sq),
            ),
            outcome(
                if r.estimate_only {
                    "heterogeneity (grid estimate, not enforced)".to_string()
                } else {
                    "heterogeneity".to_string()
                },
                r.zeta_ok || r.estimate_only,
                zeta_sq - r.zeta_sq_hat,
                format!("zeta_sq_hat={:.6e} zeta_sq={:.6e}", r.zeta_sq_hat, zeta_sq),
            ),
        ],
    })
}

pub fn run_suite(suite: Suite, opts: &CheckOptions) -> Result<SuiteReport> {
    Ok(match suite {
        Suite::DProperties => verify::d_properties()?,
        Suite::Chernoff => verify::chernoff_sandwich()?,
        Suite::Solver => verify::solver_consistency()?,
        Suite::Kappa => kappa_suite(opts)?,
        Suite::Assumptions => assumptions_suite(opts)?,
    })
}

/// One line per check: status, name, count and worst margin.
pub fn render(report: &SuiteReport) -> String {
    let mut out = String::new();
    for o in &report.outcomes {
        out.push_str(&format!(
            "{} [{}] {}: {} checks, {} violations, worst margin {:.6e} at {}\n",
            if o.passed { "PASS" } else { "FAIL" },
            report.suite,
            o.name,
            o.checks,
            o.violations,
            o.worst_margin,
            o.worst_case
        ));
    }
    out
}
