//! Line-delimited JSON run logs: one `generation` record per generation,
//! then a closing `run` record, or an `error` record for a failed run.
//! Field reference: `docs/runlog-schema.md`.

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{GenerationStats, RunRecord, StopReason};
use crate::fitness::FitnessValue;

pub const RUNLOG_SCHEMA: &str = "crashrepro.runlog/1";

/// The closing record of a failed run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub case_id: String,
    pub seed: u64,
    pub message: String,
    /// Unparsed runtime output kept for triage, when there was any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_output: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RunSummary {
    case_id: String,
    seed: u64,
    reproduced: bool,
    stop_reason: StopReason,
    best_fitness: FitnessValue,
    evaluations_used: u64,
    population_sizes_visited: Vec<usize>,
    witness: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum Body {
    Generation(GenerationStats),
    Run(RunSummary),
    Error(RunFailure),
}

#[derive(Serialize, Deserialize)]
struct Line {
    schema: String,
    #[serde(flatten)]
    body: Body,
}

/// What a run log describes.
#[derive(Debug, Clone, PartialEq)]
pub enum LoggedRun {
    Completed(RunRecord),
    Failed(RunFailure),
}

#[derive(Debug, Error)]
pub enum RunlogError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("run log line {line}: {reason}")]
    Malformed { line: usize, reason: String },
}

fn write_line<W: Write>(out: &mut W, body: Body) -> io::Result<()> {
    let line = Line { schema: RUNLOG_SCHEMA.to_string(), body };
    serde_json::to_writer(&mut *out, &line)?;
    out.write_all(b"\n")
}

pub fn write_runlog<W: Write>(out: &mut W, record: &RunRecord) -> io::Result<()> {
    for g in &record.generation_log {
        write_line(out, Body::Generation(g.clone()))?;
    }
    write_line(
        out,
        Body::Run(RunSummary {
            case_id: record.case_id.clone(),
            seed: record.seed,
            reproduced: record.reproduced,
            stop_reason: record.stop_reason,
            best_fitness: record.best_fitness,
            evaluations_used: record.evaluations_used,
            population_sizes_visited: record.population_sizes_visited.clone(),
            witness: record.witness.clone(),
        }),
    )
}

pub fn write_failure<W: Write>(out: &mut W, failure: &RunFailure) -> io::Result<()> {
    write_line(out, Body::Error(failure.clone()))
}

pub fn runlog_bytes(record: &RunRecord) -> Vec<u8> {
    let mut buf = Vec::new();
    write_runlog(&mut buf, record).expect("writing to memory");
    buf
}

/// Reads a log back. The closing record must be the last line.
pub fn read_runlog<R: BufRead>(input: R) -> Result<LoggedRun, RunlogError> {
    let mut generations = Vec::new();
    let mut end: Option<(usize, LoggedRun)> = None;
    let mut count = 0;
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let no = i + 1;
        count = no;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |reason: String| RunlogError::Malformed { line: no, reason };
        if end.is_some() {
            return Err(malformed("record after the closing record".into()));
        }
        let parsed: Line = serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
        if parsed.schema != RUNLOG_SCHEMA {
            return Err(malformed(format!("unsupported schema `{}`", parsed.schema)));
        }
        match parsed.body {
            Body::Generation(g) => generations.push(g),
            Body::Error(f) => end = Some((no, LoggedRun::Failed(f))),
            Body::Run(s) => {
                let record = RunRecord {
                    case_id: s.case_id,
                    seed: s.seed,
                    reproduced: s.reproduced,
                    stop_reason: s.stop_reason,
                    best_fitness: s.best_fitness,
                    evaluations_used: s.evaluations_used,
                    population_sizes_visited: s.population_sizes_visited,
                    witness: s.witness,
                    generation_log: std::mem::take(&mut generations),
                };
                end = Some((no, LoggedRun::Completed(record)));
            }
        }
    }
    end.map(|(_, run)| run)
        .ok_or(RunlogError::Malformed { line: count, reason: "missing closing record".into() })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record() -> RunRecord {
        RunRecord {
            case_id: "X-1".into(),
            seed: 9,
            reproduced: false,
            stop_reason: StopReason::BudgetExhausted,
            best_fitness: FitnessValue::from_components(0.625, 1.0, 1.0),
            evaluations_used: 120,
            population_sizes_visited: vec![50, 75],
            witness: None,
            generation_log: vec![GenerationStats {
                population_size: 50,
                generation: 0,
                best: 4.875,
                mean: 5.5,
                evaluations: 50,
            }],
        }
    }

    #[test]
    fn lines_are_tagged_and_fixed_point() {
        let text = String::from_utf8(runlog_bytes(&record())).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[0].starts_with(r#"{"schema":"crashrepro.runlog/1","record":"generation""#), "{}", lines[0]);
        assert!(lines[0].contains(r#""best":4.875000"#));
        assert!(lines[1].contains(r#""total":4.875000"#));
    }

    #[test]
    fn round_trip() {
        let bytes = runlog_bytes(&record());
        assert_eq!(read_runlog(&bytes[..]).unwrap(), LoggedRun::Completed(record()));
        let mut buf = Vec::new();
        let failure = RunFailure { case_id: "X-1".into(), seed: 3, message: "boom".into(), raw_output: None };
        write_failure(&mut buf, &failure).unwrap();
        assert_eq!(read_runlog(&buf[..]).unwrap(), LoggedRun::Failed(failure));
        assert!(read_runlog(&bytes[..bytes.len() / 2]).is_err());
    }
}
