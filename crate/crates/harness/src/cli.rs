use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use fedro_core::fl::run_fedro;
use fedro_core::planner::{check_sampling_condition, ConditionOutcome, SamplingPlan, SamplingSpec};
use serde::Serialize;

use crate::checks::{self, CheckOptions, RuleArg, Suite, TaskArg};
use crate::config::load_run_config;
use crate::error::{HarnessError, Result};
use crate::presets::{run_preset, PresetName, PresetOptions};
use crate::report::{trace_to_string, write_file, RunSummary};

#[derive(Debug, Parser)]
#[command(name = "fedro", version, about = "Byzantine-robust federated averaging with client subsampling")]
pub struct Cli {
    /// Maximum number of worker threads.
    #[arg(long, global = true, env = "FEDRO_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample-size planning for a population with Byzantine clients.
    Plan(PlanArgs),
    /// Simulate one run from a JSON configuration.
    Run(RunArgs),
    /// Run an experiment preset.
    Preset(PresetArgs),
    /// Run verification suites.
    Check(CheckArgs),
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub b: usize,
    /// Number of rounds.
    #[arg(long = "T")]
    pub rounds: u64,
    /// Target probability that no round is controlled by the adversary.
    #[arg(long)]
    pub p: f64,
    #[arg(long)]
    pub n_hat: Option<usize>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    pub config: PathBuf,
    /// Output directory for `trace.csv` and `summary.json`.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PresetArgs {
    #[arg(value_enum)]
    pub name: PresetName,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Replicates per cell; the preset's default when absent.
    #[arg(long)]
    pub seeds: Option<usize>,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    #[arg(long, value_enum, required = true, num_args = 1..)]
    pub suite: Vec<Suite>,
    #[arg(long, value_enum, default_value = "cw-trimmed-mean")]
    pub rule: RuleArg,
    #[arg(long, default_value_t = 8)]
    pub n_hat: usize,
    #[arg(long, default_value_t = 2)]
    pub b_hat: usize,
    #[arg(long)]
    pub kappa_claim: Option<f64>,
    #[arg(long, default_value_t = 200)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "quadratic")]
    pub task: TaskArg,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanReport {
    pub n: usize,
    pub b: usize,
    #[serde(rename = "T")]
    pub rounds: u64,
    pub p: f64,
    pub n_th: usize,
    pub n_opt: usize,
    pub impossibility_bound: Option<f64>,
    pub n_hat: Option<usize>,
    pub b_hat: Option<usize>,
    pub condition: Option<ConditionOutcome>,
    pub unsafe_sample: Option<bool>,
}

/// Builds the planner report; fails with exit status 3 when `n_hat` is given
/// and no tolerable count exists.
pub fn plan_report(args: &PlanArgs) -> Result<PlanReport> {
    let spec = SamplingSpec::new(args.n, args.b, args.rounds, args.p)?;
    let plan = SamplingPlan::build(&spec, args.n_hat)?;
    let mut report = PlanReport {
        n: args.n,
        b: args.b,
        rounds: args.rounds,
        p: args.p,
        n_th: plan.n_th,
        n_opt: plan.n_opt,
        impossibility_bound: plan.impossibility_bound,
        n_hat: None,
        b_hat: None,
        condition: None,
        unsafe_sample: None,
    };
    if let Some(n_hat) = args.n_hat {
        let b_hat = plan.b_hat.ok_or(HarnessError::Infeasible {
            n: args.n,
            b: args.b,
            rounds: args.rounds,
            p: args.p,
            n_hat,
        })?;
        report.n_hat = Some(n_hat);
        report.b_hat = Some(b_hat);
        report.condition = Some(check_sampling_condition(&spec, n_hat, b_hat)?);
        report.unsafe_sample = Some(plan.unsafe_sample);
    }
    Ok(report)
}

fn render_plan(r: &PlanReport) -> String {
    let mut out = format!(
        "n = {}, b = {}, T = {}, p = {}\nn_th = {}\nn_opt = {}\n",
        r.n, r.b, r.rounds, r.p, r.n_th, r.n_opt
    );
    match r.impossibility_bound {
        Some(bound) => out.push_str(&format!("impossibility_bound = {bound:.6}\n")),
        None => out.push_str("impossibility_bound = none (p < 1/2)\n"),
    }
    if let (Some(n_hat), Some(b_hat), Some(cond)) = (r.n_hat, r.b_hat, r.condition) {
        out.push_str(&format!("n_hat = {n_hat}\nb_hat = {b_hat}\ncondition = {cond:?}\n"));
        if r.unsafe_sample == Some(true) {
            out.push_str("warning: n_hat is below the impossibility bound\n");
        }
    }
    out
}

fn configure_threads(threads: Option<usize>) -> Result<()> {
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| HarnessError::ThreadPool(e.to_string()))?;
    }
    Ok(())
}

/// Executes a parsed command line, writing human output to `out`.
pub fn execute(cli: Cli, out: &mut dyn Write) -> Result<()> {
    configure_threads(cli.threads)?;
    let emit = |out: &mut dyn Write, text: &str| {
        out.write_all(text.as_bytes()).map_err(|source| HarnessError::Output {
            path: PathBuf::from("<stdout>"),
            source,
        })
    };
    match cli.command {
        Command::Plan(args) => {
            let report = plan_report(&args)?;
            let text = if args.json {
                serde_json::to_string_pretty(&report).expect("report serializes") + "\n"
            } else {
                render_plan(&report)
            };
            emit(out, &text)?;
            if report.condition.is_some_and(|c| c != ConditionOutcome::Holds) {
                return Err(HarnessError::CheckFailed(format!("sampling condition {:?}", report.condition)));
            }
        }
        Command::Run(args) => {
            let config = load_run_config(&args.config)?;
            let metrics = run_fedro(&config)?;
            let summary = RunSummary::new(&config, &metrics);
            write_file(&args.out.join("trace.csv"), trace_to_string(&metrics.traces).as_bytes())?;
            write_file(&args.out.join("summary.json"), summary.to_json().as_bytes())?;
            emit(
                out,
                &format!(
                    "rounds = {}\navg_grad_norm_sq = {:e}\nfinal_grad_norm_sq = {:e}\nviolated_rounds = {}\n",
                    config.rounds, metrics.avg_grad_norm_sq, metrics.final_grad_norm_sq, metrics.violated_rounds
                ),
            )?;
        }
        Command::Preset(args) => {
            let mut opts = PresetOptions::new(args.name, args.seed);
            if let Some(s) = args.seeds {
                opts.seeds_per_cell = s;
            }
            let outcome = run_preset(args.name, &args.out, &opts)?;
            emit(
                out,
                &format!(
                    "{} cells written, aggregate at {}\n{}",
                    outcome.cell_files.len(),
                    outcome.aggregate_file.display(),
                    outcome.aggregate
                ),
            )?;
        }
        Command::Check(args) => {
            let opts = CheckOptions {
                rule: args.rule,
                n_hat: args.n_hat,
                b_hat: args.b_hat,
                kappa_claim: args.kappa_claim,
                trials: args.trials,
                seed: args.seed,
                task: args.task,
                ..CheckOptions::default()
            };
            let mut failed = Vec::new();
            let mut reports = Vec::new();
            for suite in &args.suite {
                let report = checks::run_suite(*suite, &opts)?;
                if !report.passed() {
                    failed.push(report.suite.clone());
                }
                if !args.json {
                    emit(out, &checks::render(&report))?;
                }
                reports.push(report);
            }
            if args.json {
                emit(out, &(serde_json::to_string_pretty(&reports).expect("reports serialize") + "\n"))?;
            }
            if !failed.is_empty() {
                return Err(HarnessError::CheckFailed(failed.join(", ")));
            }
        }
    }
    Ok(())
}
