//! Experiment presets.
//!
//! A preset expands into a grid of cells. Every cell writes its own CSV named
//! after its coordinates, and the aggregate table is computed from those files
//! alone, so it can be rebuilt offline with [`aggregate_directory`].

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use fedro_core::aggregation::{AggregatorConfig, Rule};
use fedro_core::attacks::{AttackKind, AttackSpec};
use fedro_core::fl::{run_fedro, RunConfig, ViolationMode};
use fedro_core::planner::{event_probability_mc, min_tolerable_byz, SamplingPlan, SamplingSpec};
use fedro_core::rng::{label_digest, mix};
use fedro_core::tasks::{QuadraticTaskSpec, TaskSpec};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{HarnessError, Result};
use crate::report::{format_f64, read_trace, trace_to_string, write_file};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum PresetName {
    /// Thresholds n_th and n_opt across Byzantine fractions.
    PlanSweep,
    /// Violation frequency below the sampling threshold with model takeover.
    ThresholdBreak,
    /// Every attack against every aggregation rule.
    AttackGrid,
    /// Error against the number of local steps under ALIE.
    LocalStepsSweep,
    /// Error against the sample size, from n_th up to n.
    SubsampleSweep,
}

impl PresetName {
    pub fn label(self) -> &'static str {
        match self {
            PresetName::PlanSweep => "plan_sweep",
            PresetName::ThresholdBreak => "threshold_break",
            PresetName::AttackGrid => "attack_grid",
            PresetName::LocalStepsSweep => "local_steps_sweep",
            PresetName::SubsampleSweep => "subsample_sweep",
        }
    }

    pub fn default_seeds(self) -> usize {
        match self {
            PresetName::PlanSweep => 1,
            PresetName::ThresholdBreak => 100,
            PresetName::AttackGrid => 5,
            PresetName::LocalStepsSweep | PresetName::SubsampleSweep => 20,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PresetOptions {
    pub master_seed: u64,
    pub seeds_per_cell: usize,
}

impl PresetOptions {
    pub fn new(preset: PresetName, master_seed: u64) -> Self {
        Self {
            master_seed,
            seeds_per_cell: preset.default_seeds(),
        }
    }
}

/// Grid coordinates, in the preset's key order.
pub type Coords = Vec<(String, String)>;

#[derive(Debug, Clone, PartialEq)]
pub enum CellJob {
    Plan(SamplingSpec),
    Run(Box<RunConfig>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub coords: Coords,
    pub replicate: usize,
    pub job: CellJob,
}

impl Cell {
    pub fn file_name(&self) -> String {
        cell_file_name(&self.coords, self.replicate)
    }
}

fn cell_file_name(coords: &Coords, replicate: usize) -> String {
    let mut parts: Vec<String> = coords.iter().map(|(k, v)| format!("{k}={v}")).collect();
    parts.push(format!("rep={replicate:03}"));
    format!("{}.csv", parts.join("__"))
}

fn coords(pairs: &[(&str, String)]) -> Coords {
    pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
}

/// Seed of one replicate of one cell.
pub fn cell_seed(preset: PresetName, master_seed: u64, coords: &Coords, replicate: usize) -> u64 {
    let key: String = coords.iter().map(|(k, v)| format!("{k}={v};")).collect();
    mix(
        master_seed,
        &[label_digest(preset.label()), label_digest(&key), replicate as u64],
    )
}

/// Noisy heterogeneous quadratic used by the simulation presets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepTask {
    pub n: usize,
    pub b: usize,
    pub d: usize,
    pub l: f64,
    pub spread: f64,
    pub sigma: f64,
    pub rounds: usize,
}

pub const LOCAL_STEPS_TASK: SweepTask = SweepTask {
    n: 100,
    b: 10,
    d: 10,
    l: 1.0,
    spread: 0.1,
    sigma: 1.0,
    rounds: 300,
};

pub const SUBSAMPLE_TASK: SweepTask = SweepTask {
    n: 400,
    b: 40,
    ..LOCAL_STEPS_TASK
};

pub const LOCAL_STEPS_GRID: [usize; 3] = [1, 4, 16];
pub const LOCAL_STEPS_SAMPLE: (usize, usize) = (20, 4);
pub const SUBSAMPLE_LOCAL_STEPS: usize = 4;
pub const SUBSAMPLE_P: f64 = 0.99;

pub const THRESHOLD_BREAK: (usize, usize, u64, f64) = (150, 15, 500, 0.99);

/// Client step size `1/(36 L K)`.
pub fn client_step(l: f64, local_steps: usize) -> f64 {
    1.0 / (36.0 * l * local_steps as f64)
}

struct RunShape {
    n_hat: usize,
    b_hat: usize,
    local_steps: usize,
    rule: Rule,
    attack: AttackKind,
    violation_mode: ViolationMode,
}

fn run_config(task: &SweepTask, shape: RunShape, seed: u64) -> RunConfig {
    let spec = QuadraticTaskSpec::new(task.n, task.b, task.d, task.l, task.spread, mix(seed, &[1]))
        .with_sigma(task.sigma);
    RunConfig {
        task: TaskSpec::Quadratic(spec),
        n_hat: shape.n_hat,
        b_hat: shape.b_hat,
        rounds: task.rounds,
        local_steps: shape.local_steps,
        gamma_c: client_step(task.l, shape.local_steps),
        gamma_s: 1.0,
        aggregator: AggregatorConfig::new(shape.rule),
        attack: AttackSpec::new(shape.attack),
        master_seed: mix(seed, &[2]),
        x0: None,
        violation_mode: shape.violation_mode,
    }
}

/// Tolerated count for a sample: the planner's minimum, or the largest
/// admissible value when the sampling condition cannot be met.
pub fn tolerated_count(spec: &SamplingSpec, n_hat: usize) -> Result<usize> {
    Ok(min_tolerable_byz(spec, n_hat)?.unwrap_or((n_hat - 1) / 2))
}

/// The sample sizes of the subsample sweep, in ascending order.
pub fn subsample_sizes() -> Result<Vec<usize>> {
    let t = SUBSAMPLE_TASK;
    let spec = SamplingSpec::new(t.n, t.b, t.rounds as u64, SUBSAMPLE_P)?;
    let plan = SamplingPlan::build(&spec, None)?;
    let mut sizes = vec![plan.n_th, 100, 200, plan.n_opt, t.n];
    sizes.sort_unstable();
    sizes.dedup();
    Ok(sizes)
}

fn attack_label(kind: AttackKind) -> &'static str {
    match kind {
        AttackKind::SignFlipping => "sign_flipping",
        AttackKind::Foe => "foe",
        AttackKind::Alie => "alie",
        AttackKind::Mimic => "mimic",
        AttackKind::TakeoverZero => "takeover_zero",
    }
}

/// Expands a preset into its cells.
pub fn cells(preset: PresetName, opts: &PresetOptions) -> Result<Vec<Cell>> {
    if opts.seeds_per_cell == 0 {
        return Err(HarnessError::Schema {
            path: "seeds".into(),
            message: "need at least one seed per cell".into(),
        });
    }
    let mut out = Vec::new();
    let mut push_runs = |c: Coords, make: &dyn Fn(u64) -> RunConfig| {
        for replicate in 0..opts.seeds_per_cell {
            let seed = cell_seed(preset, opts.master_seed, &c, replicate);
            out.push(Cell {
                coords: c.clone(),
                replicate,
                job: CellJob::Run(Box::new(make(seed))),
            });
        }
    };
    match preset {
        PresetName::PlanSweep => {
            for step in 1..=9 {
                let b = 50 * step;
                let spec = SamplingSpec::new(1000, b, 500, 0.99)?;
                let c = coords(&[("b_over_n", format!("{:.2}", b as f64 / 1000.0))]);
                out.push(Cell {
                    coords: c,
                    replicate: 0,
                    job: CellJob::Plan(spec),
                });
            }
        }
        PresetName::ThresholdBreak => {
            let (n, b, rounds, p) = THRESHOLD_BREAK;
            let spec = SamplingSpec::new(n, b, rounds, p)?;
            let n_th = SamplingPlan::build(&spec, None)?.n_th;
            let task = SweepTask {
                n,
                b,
                d: 2,
                l: 1.0,
                spread: 0.5,
                sigma: 0.0,
                rounds: rounds as usize,
            };
            for n_hat in 1..=n_th {
                let b_hat = tolerated_count(&spec, n_hat)?;
                let c = coords(&[("n_hat", n_hat.to_string()), ("b_hat", b_hat.to_string())]);
                push_runs(c, &|seed| {
                    let shape = RunShape {
                        n_hat,
                        b_hat,
                        local_steps: 1,
                        rule: Rule::CwTrimmedMean,
                        attack: AttackKind::TakeoverZero,
                        violation_mode: ViolationMode::TakeoverZero,
                    };
                    run_config(&task, shape, seed)
                });
            }
        }
        PresetName::AttackGrid => {
            let task = SweepTask {
                rounds: 200,
                ..LOCAL_STEPS_TASK
            };
            let (n_hat, b_hat) = LOCAL_STEPS_SAMPLE;
            let rules = [
                Rule::Average,
                Rule::CwTrimmedMean,
                Rule::CwMedian,
                Rule::GeometricMedian,
                Rule::NnmThen(Box::new(Rule::CwTrimmedMean)),
            ];
            for attack in [AttackKind::SignFlipping, AttackKind::Foe, AttackKind::Alie, AttackKind::Mimic] {
                for rule in &rules {
                    let c = coords(&[("attack", attack_label(attack).into()), ("rule", rule.name())]);
                    push_runs(c, &|seed| {
                        let shape = RunShape {
                            n_hat,
                            b_hat,
                            local_steps: 4,
                            rule: rule.clone(),
                            attack,
                            violation_mode: ViolationMode::ContinueAndFlag,
                        };
                        run_config(&task, shape, seed)
                    });
                }
            }
        }
        PresetName::LocalStepsSweep => {
            let (n_hat, b_hat) = LOCAL_STEPS_SAMPLE;
            for local_steps in LOCAL_STEPS_GRID {
                let c = coords(&[("local_steps", local_steps.to_string())]);
                push_runs(c, &|seed| {
                    let shape = RunShape {
                        n_hat,
                        b_hat,
                        local_steps,
                        rule: Rule::CwTrimmedMean,
                        attack: AttackKind::Alie,
                        violation_mode: ViolationMode::ContinueAndFlag,
                    };
                    run_config(&LOCAL_STEPS_TASK, shape, seed)
                });
            }
        }
        PresetName::SubsampleSweep => {
            let t = SUBSAMPLE_TASK;
            let spec = SamplingSpec::new(t.n, t.b, t.rounds as u64, SUBSAMPLE_P)?;
            for n_hat in subsample_sizes()? {
                let b_hat = tolerated_count(&spec, n_hat)?;
                let c = coords(&[("n_hat", n_hat.to_string()), ("b_hat", b_hat.to_string())]);
                push_runs(c, &|seed| {
                    let shape = RunShape {
                        n_hat,
                        b_hat,
                        local_steps: SUBSAMPLE_LOCAL_STEPS,
                        rule: Rule::CwTrimmedMean,
                        attack: AttackKind::Alie,
                        violation_mode: ViolationMode::ContinueAndFlag,
                    };
                    run_config(&t, shape, seed)
                });
            }
        }
    }
    Ok(out)
}

const PLAN_COLUMNS: [&str; 8] = ["n", "b", "T", "p", "n_th", "n_opt", "impossibility_bound", "b_hat_at_n_th"];

fn plan_csv(spec: &SamplingSpec) -> Result<String> {
    let plan = SamplingPlan::build(spec, None)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let row = [
        spec.n.to_string(),
        spec.b.to_string(),
        spec.rounds.to_string(),
        format_f64(spec.p),
        plan.n_th.to_string(),
        plan.n_opt.to_string(),
        plan.impossibility_bound.map_or_else(String::new, format_f64),
        plan.b_hat.map_or_else(String::new, |b| b.to_string()),
    ];
    w.write_record(PLAN_COLUMNS).and_then(|_| w.write_record(&row)).expect("in-memory csv");
    Ok(String::from_utf8(w.into_inner().expect("in-memory csv")).expect("ascii"))
}

/// Runs one cell and returns its CSV text.
pub fn run_cell(cell: &Cell) -> Result<String> {
    match &cell.job {
        CellJob::Plan(spec) => plan_csv(spec),
        CellJob::Run(config) => Ok(trace_to_string(&run_fedro(config)?.traces)),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PresetOutcome {
    pub cell_files: Vec<PathBuf>,
    pub aggregate_file: PathBuf,
    pub aggregate: String,
}

pub const AGGREGATE_FILE: &str = "aggregate.csv";
pub const REFERENCE_FILE: &str = "reference.csv";

/// Runs every cell (in parallel), writes the cell CSVs under `out_dir/cells`
/// and the aggregate table under `out_dir`.
pub fn run_preset(preset: PresetName, out_dir: &Path, opts: &PresetOptions) -> Result<PresetOutcome> {
    let cells = cells(preset, opts)?;
    let cell_dir = out_dir.join("cells");
    let cell_files = cells
        .par_iter()
        .map(|cell| {
            let path = cell_dir.join(cell.file_name());
            write_file(&path, run_cell(cell)?.as_bytes())?;
            Ok(path)
        })
        .collect::<Result<Vec<_>>>()?;
    if preset == PresetName::ThresholdBreak {
        write_file(&out_dir.join(REFERENCE_FILE), threshold_reference(opts)?.as_bytes())?;
    }
    let aggregate = aggregate_directory(preset, &cell_dir)?;
    let aggregate_file = out_dir.join(AGGREGATE_FILE);
    write_file(&aggregate_file, aggregate.as_bytes())?;
    Ok(PresetOutcome {
        cell_files,
        aggregate_file,
        aggregate,
    })
}

pub const REFERENCE_TRIALS: u64 = 2000;

/// Monte Carlo probability of a violation for every threshold_break cell.
pub fn threshold_reference(opts: &PresetOptions) -> Result<String> {
    let (n, b, rounds, p) = THRESHOLD_BREAK;
    let spec = SamplingSpec::new(n, b, rounds, p)?;
    let n_th = SamplingPlan::build(&spec, None)?.n_th;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["n_hat", "b_hat", "trials", "violation_probability", "half_width"])
        .expect("in-memory csv");
    for n_hat in 1..=n_th {
        let b_hat = tolerated_count(&spec, n_hat)?;
        let seed = mix(opts.master_seed, &[label_digest("threshold_reference"), n_hat as u64]);
        let est = event_probability_mc(&spec, n_hat, b_hat, REFERENCE_TRIALS, seed)?;
        w.write_record([
            n_hat.to_string(),
            b_hat.to_string(),
            est.trials.to_string(),
            format_f64(1.0 - est.estimate),
            format_f64(est.half_width),
        ])
        .expect("in-memory csv");
    }
    Ok(String::from_utf8(w.into_inner().expect("in-memory csv")).expect("ascii"))
}

fn parse_cell_name(name: &str) -> Option<(Coords, usize)> {
    let stem = name.strip_suffix(".csv")?;
    let mut coords = Coords::new();
    let mut replicate = None;
    for part in stem.split("__") {
        let (k, v) = part.split_once('=')?;
        if k == "rep" {
            replicate = Some(v.parse().ok()?);
        } else {
            coords.push((k.to_string(), v.to_string()));
        }
    }
    Some((coords, replicate?))
}

fn compare_values(a: &str, b: &str) -> Ordering {
    match (a.parse::<f64>(), b.parse::<f64>()) {
        (Ok(x), Ok(y)) => x.total_cmp(&y),
        _ => a.cmp(b),
    }
}

fn compare_coords(a: &Coords, b: &Coords) -> Ordering {
    a.iter()
        .zip(b)
        .map(|((ka, va), (kb, vb))| ka.cmp(kb).then_with(|| compare_values(va, vb)))
        .find(|o| o.is_ne())
        .unwrap_or_else(|| a.len().cmp(&b.len()))
}

/// Median of a nonempty sample; the mean of the two middle values for even sizes.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Per-replicate statistics computed from one trace file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceStats {
    pub avg_grad_norm_sq: f64,
    pub last_grad_norm_sq: f64,
    pub violated: bool,
    /// Means over rounds with at least one honest sampled client; NaN if none.
    pub mean_dev_norm_sq: f64,
    pub mean_honest_spread: f64,
}

pub fn trace_stats(traces: &[fedro_core::fl::RoundTrace]) -> TraceStats {
    let grads: Vec<f64> = traces.iter().map(|t| t.grad_norm_sq).collect();
    let with_honest: Vec<_> = traces.iter().filter(|t| t.dev_norm_sq.is_finite()).collect();
    let dev: Vec<f64> = with_honest.iter().map(|t| t.dev_norm_sq).collect();
    let spread: Vec<f64> = with_honest.iter().map(|t| t.honest_spread).collect();
    TraceStats {
        avg_grad_norm_sq: mean(&grads),
        last_grad_norm_sq: grads.last().copied().unwrap_or(f64::NAN),
        violated: traces.iter().any(|t| t.event_violated),
        mean_dev_norm_sq: mean(&dev),
        mean_honest_spread: mean(&spread),
    }
}

const RUN_AGGREGATE_COLUMNS: [&str; 7] = [
    "replicates",
    "median_avg_grad_norm_sq",
    "mean_avg_grad_norm_sq",
    "median_last_grad_norm_sq",
    "violation_frequency",
    "median_mean_dev_norm_sq",
    "median_mean_honest_spread",
];

/// Rebuilds the aggregate table of a preset from the cell CSVs in `cell_dir`.
pub fn aggregate_directory(preset: PresetName, cell_dir: &Path) -> Result<String> {
    let entries = std::fs::read_dir(cell_dir).map_err(|source| HarnessError::Input {
        path: cell_dir.to_path_buf(),
        source,
    })?;
    let mut files: Vec<(Coords, usize, PathBuf)> = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|source| HarnessError::Input {
            path: cell_dir.to_path_buf(),
            source,
        })?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some((c, rep)) = parse_cell_name(&name) {
            files.push((c, rep, entry.path()));
        }
    }
    files.sort_by(|a, b| compare_coords(&a.0, &b.0).then(a.1.cmp(&b.1)));
    let key_names: Vec<String> = files
        .first()
        .map(|(c, _, _)| c.iter().map(|(k, _)| k.clone()).collect())
        .unwrap_or_default();

    let mut w = csv::Writer::from_writer(Vec::new());
    if preset == PresetName::PlanSweep {
        let header: Vec<&str> = key_names.iter().map(String::as_str).chain(PLAN_COLUMNS).collect();
        w.write_record(&header).expect("in-memory csv");
        for (c, _, path) in &files {
            let mut reader = csv::Reader::from_path(path).map_err(|e| HarnessError::Trace {
                path: path.clone(),
                message: e.to_string(),
            })?;
            for record in reader.records() {
                let record = record.map_err(|e| HarnessError::Trace {
                    path: path.clone(),
                    message: e.to_string(),
                })?;
                let row: Vec<&str> = c.iter().map(|(_, v)| v.as_str()).chain(record.iter()).collect();
                w.write_record(&row).expect("in-memory csv");
            }
        }
    } else {
        let header: Vec<&str> = key_names.iter().map(String::as_str).chain(RUN_AGGREGATE_COLUMNS).collect();
        w.write_record(&header).expect("in-memory csv");
        for group in files.chunk_by(|a, b| a.0 == b.0) {
            let c = &group[0].0;
            let stats = group
                .iter()
                .map(|(_, _, path)| read_trace(path).map(|t| trace_stats(&t)))
                .collect::<Result<Vec<_>>>()?;
            let pick = |f: fn(&TraceStats) -> f64| stats.iter().map(f).collect::<Vec<_>>();
            let violated = stats.iter().filter(|s| s.violated).count() as f64 / stats.len() as f64;
            let mut row: Vec<String> = c.iter().map(|(_, v)| v.clone()).collect();
            row.extend([
                stats.len().to_string(),
                format_f64(median(&pick(|s| s.avg_grad_norm_sq))),
                format_f64(mean(&pick(|s| s.avg_grad_norm_sq))),
                format_f64(median(&pick(|s| s.last_grad_norm_sq))),
                format_f64(violated),
                format_f64(median(&pick(|s| s.mean_dev_norm_sq))),
                format_f64(median(&pick(|s| s.mean_honest_spread))),
            ]);
            w.write_record(&row).expect("in-memory csv");
        }
    }
    Ok(String::from_utf8(w.into_inner().expect("in-memory csv")).expect("ascii"))
}

/// Reads a CSV table into rows keyed by column name.
pub fn read_table(text: &str) -> Vec<BTreeMap<String, String>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header = reader.headers().cloned().unwrap_or_default();
    reader
        .records()
        .filter_map(|r| r.ok())
        .map(|r| {
            header
                .iter()
                .zip(r.iter())
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect()
        })
        .collect()
}
