//! Per-round CSV traces and run summaries.
//!
//! Floating-point fields are written in scientific notation with 17
//! significant digits, which round-trips every `f64` exactly.

use std::io::Write;
use std::path::Path;

use fedro_core::fl::{RoundTrace, RunConfig, RunMetrics};
use fedro_core::ParameterVector;
use serde::Serialize;

use crate::error::{HarnessError, Result};

pub const TRACE_COLUMNS: [&str; 7] = [
    "round",
    "grad_norm_sq",
    "loss",
    "byz_sampled",
    "event_violated",
    "dev_norm_sq",
    "honest_spread",
];

/// Formats a float with 17 significant digits, independent of locale.
pub fn format_f64(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.16e}")
    }
}

pub fn write_trace<W: Write>(out: W, traces: &[RoundTrace]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_COLUMNS)?;
    for t in traces {
        w.write_record([
            t.round.to_string(),
            format_f64(t.grad_norm_sq),
            format_f64(t.loss),
            t.byz_sampled.to_string(),
            u8::from(t.event_violated).to_string(),
            format_f64(t.dev_norm_sq),
            format_f64(t.honest_spread),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn trace_to_string(traces: &[RoundTrace]) -> String {
    let mut buf = Vec::new();
    write_trace(&mut buf, traces).expect("writing to memory");
    String::from_utf8(buf).expect("ascii output")
}

fn parse_field<T: std::str::FromStr>(field: &str, column: &str, line: u64) -> std::result::Result<T, String> {
    field
        .parse()
        .map_err(|_| format!("line {line}: bad `{column}` value {field:?}"))
}

/// Reads a trace written by [`write_trace`], checking the header.
pub fn read_trace(path: &Path) -> Result<Vec<RoundTrace>> {
    let malformed = |message: String| HarnessError::Trace {
        path: path.to_path_buf(),
        message,
    };
    let mut reader = csv::Reader::from_path(path).map_err(|e| malformed(e.to_string()))?;
    let header = reader.headers().map_err(|e| malformed(e.to_string()))?.clone();
    if header.iter().ne(TRACE_COLUMNS) {
        return Err(malformed(format!("unexpected header {:?}", header.iter().collect::<Vec<_>>())));
    }
    let mut traces = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| malformed(e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        let get = |i: usize| record.get(i).unwrap_or("");
        let trace = (|| -> std::result::Result<RoundTrace, String> {
            Ok(RoundTrace {
                round: parse_field(get(0), TRACE_COLUMNS[0], line)?,
                grad_norm_sq: parse_field(get(1), TRACE_COLUMNS[1], line)?,
                loss: parse_field(get(2), TRACE_COLUMNS[2], line)?,
                byz_sampled: parse_field(get(3), TRACE_COLUMNS[3], line)?,
                event_violated: parse_field::<u8>(get(4), TRACE_COLUMNS[4], line)? != 0,
                dev_norm_sq: parse_field(get(5), TRACE_COLUMNS[5], line)?,
                honest_spread: parse_field(get(6), TRACE_COLUMNS[6], line)?,
            })
        })()
        .map_err(malformed)?;
        traces.push(trace);
    }
    Ok(traces)
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|source| HarnessError::Output {
            path: parent.to_path_buf(),
            source,
        })?;
    }
    std::fs::write(path, bytes).map_err(|source| HarnessError::Output {
        path: path.to_path_buf(),
        source,
    })
}

/// Everything in [`RunMetrics`] except the per-round traces.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub config: RunConfig,
    pub avg_grad_norm_sq: f64,
    pub conditional_avg_grad_norm_sq: Option<f64>,
    pub final_grad_norm_sq: f64,
    pub event_held: bool,
    pub violated_rounds: usize,
    pub output_round: usize,
    pub output_model: ParameterVector,
    pub final_model: ParameterVector,
}

impl RunSummary {
    pub fn new(config: &RunConfig, metrics: &RunMetrics) -> Self {
        Self {
            config: config.clone(),
            avg_grad_norm_sq: metrics.avg_grad_norm_sq,
            conditional_avg_grad_norm_sq: metrics.conditional_avg_grad_norm_sq,
            final_grad_norm_sq: metrics.final_grad_norm_sq,
            event_held: metrics.event_held,
            violated_rounds: metrics.violated_rounds,
            output_round: metrics.output_round,
            output_model: metrics.output_model.clone(),
            final_model: metrics.final_model.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }
}
