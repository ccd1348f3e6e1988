//! Repeated seeded runs over a suite of crash cases, aggregated into Crash
//! Coverage: a case is covered when at least one run reproduces it.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::backend::ScenarioBackend;
use crate::engine::{run_search, SearchConfig, SearchError};
use crate::io::atomic_write;
use crate::runlog::{runlog_bytes, write_failure, LoggedRun, RunFailure};
use crate::scenario::{load_scenario, Scenario, ScenarioError};
use crate::trace::{parse_trace, CrashCase, TraceError, TraceGrammar};

#[derive(Debug, Error)]
pub enum SuiteError {
    #[error("cannot read suite directory {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Scenario(#[from] ScenarioError),
    #[error("trace {path}: {source}")]
    Trace { path: PathBuf, source: TraceError },
    #[error("scenario {0} has no sibling .trace file")]
    MissingTrace(PathBuf),
    #[error("no scenarios found in {0}")]
    Empty(PathBuf),
    #[error("crash id `{0}` appears more than once")]
    DuplicateCase(String),
}

#[derive(Debug, Clone)]
pub struct SuiteEntry {
    pub scenario: Scenario,
    pub case: CrashCase,
}

impl SuiteEntry {
    /// Loads a scenario and its reference trace (canonical grammar). The
    /// case id and target frame come from the scenario's crash section.
    pub fn load(scenario_path: &Path, trace_path: &Path) -> Result<SuiteEntry, SuiteError> {
        let scenario = load_scenario(scenario_path)?;
        let case = load_case(&scenario, trace_path, None)?;
        Ok(SuiteEntry { scenario, case })
    }
}

/// Reads a canonical trace and builds the crash case for `scenario`.
/// `target_frame` overrides the scenario's documented target frame.
pub fn load_case(scenario: &Scenario, trace_path: &Path, target_frame: Option<usize>) -> Result<CrashCase, SuiteError> {
    let trace_err = |source| SuiteError::Trace { path: trace_path.to_path_buf(), source };
    let text = std::fs::read_to_string(trace_path)
        .map_err(|source| SuiteError::Io { path: trace_path.to_path_buf(), source })?;
    let trace = parse_trace(&text, TraceGrammar::Canonical).map_err(trace_err)?;
    CrashCase::new(&scenario.crash.id, trace, target_frame.unwrap_or(scenario.crash.target_frame)).map_err(trace_err)
}

#[derive(Debug, Clone, Default)]
pub struct Suite {
    pub entries: Vec<SuiteEntry>,
}

impl Suite {
    /// Every `<name>.scn` in `dir` paired with `<name>.trace`, ordered by
    /// case id.
    pub fn load(dir: &Path) -> Result<Suite, SuiteError> {
        let io_err = |source| SuiteError::Io { path: dir.to_path_buf(), source };
        let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(io_err)?
            .map(|e| e.map(|e| e.path()))
            .collect::<Result<_, _>>()
            .map_err(io_err)?;
        paths.retain(|p| p.extension().is_some_and(|e| e == "scn"));
        paths.sort();
        if paths.is_empty() {
            return Err(SuiteError::Empty(dir.to_path_buf()));
        }
        let entries = paths
            .iter()
            .map(|scn| {
                let trace = scn.with_extension("trace");
                if !trace.is_file() {
                    return Err(SuiteError::MissingTrace(scn.clone()));
                }
                SuiteEntry::load(scn, &trace)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Suite::new(entries)
    }

    pub fn new(mut entries: Vec<SuiteEntry>) -> Result<Suite, SuiteError> {
        entries.sort_by(|a, b| a.case.id().cmp(b.case.id()));
        if let Some(w) = entries.windows(2).find(|w| w[0].case.id() == w[1].case.id()) {
            return Err(SuiteError::DuplicateCase(w[0].case.id().to_string()));
        }
        Ok(Suite { entries })
    }
}

/// Persists run logs as `<root>/<case>/<seed>.runlog`.
#[derive(Debug, Clone)]
pub struct RunArchive {
    root: PathBuf,
}

impl RunArchive {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        RunArchive { root: root.into() }
    }

    pub fn path_for(&self, case_id: &str, seed: u64) -> PathBuf {
        let dir: String =
            case_id.chars().map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' }).collect();
        self.root.join(dir).join(format!("{seed}.runlog"))
    }

    pub fn store(&self, run: &LoggedRun) -> std::io::Result<PathBuf> {
        let (case_id, seed, bytes) = match run {
            LoggedRun::Completed(r) => (&r.case_id, r.seed, runlog_bytes(r)),
            LoggedRun::Failed(f) => {
                let mut buf = Vec::new();
                write_failure(&mut buf, f)?;
                (&f.case_id, f.seed, buf)
            }
        };
        let path = self.path_for(case_id, seed);
        atomic_write(&path, &bytes)?;
        Ok(path)
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentSettings {
    pub repetitions: usize,
    /// Run `i` of every case uses seed `base_seed + i`.
    pub base_seed: u64,
    pub workers: usize,
    /// Search parameters; the seed field is overwritten per run.
    pub search: SearchConfig,
}

impl Default for ExperimentSettings {
    fn default() -> Self {
        ExperimentSettings { repetitions: 50, base_seed: 0, workers: 1, search: SearchConfig::default() }
    }
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid experiment settings: {0}")]
    Settings(String),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error("cannot start worker pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
    #[error("cannot archive run log: {0}")]
    Archive(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CaseCoverage {
    /// Scenario name, shown in the project column.
    pub project: String,
    pub case_id: String,
    pub runs: usize,
    pub successes: usize,
    pub failures: usize,
    /// Runs that ended in an error; counted as not reproduced.
    pub errors: usize,
}

impl CaseCoverage {
    pub fn covered(&self) -> bool {
        self.successes >= 1
    }

    pub fn percentage_exact(&self) -> f64 {
        if self.runs == 0 {
            0.0
        } else {
            100.0 * self.successes as f64 / self.runs as f64
        }
    }

    /// Nearest integer percent, never rounded to 0 for a covered case nor to
    /// 100 for a case with a non-reproducing run.
    pub fn percentage(&self) -> u32 {
        let p = self.percentage_exact().round() as u32;
        if self.successes == self.runs {
            p
        } else if self.successes == 0 {
            0
        } else {
            p.clamp(1, 99)
        }
    }

    /// `Y`, `Y (p%)` or `N (0%)`; a full success rate is left implicit.
    pub fn result_text(&self) -> String {
        let mut text = if !self.covered() {
            "N (0%)".to_string()
        } else if self.successes == self.runs {
            "Y".to_string()
        } else {
            format!("Y ({}%)", self.percentage())
        };
        if self.errors > 0 {
            let _ = write!(text, " [{} failed]", self.errors);
        }
        text
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct CoverageReport {
    pub cases: Vec<CaseCoverage>,
}

impl CoverageReport {
    pub fn covered_count(&self) -> usize {
        self.cases.iter().filter(|c| c.covered()).count()
    }

    /// Aggregates logged runs. `project_of` maps a case id to its project.
    pub fn from_runs<'a>(runs: impl IntoIterator<Item = &'a LoggedRun>, project_of: impl Fn(&str) -> String) -> Self {
        let mut cases: Vec<CaseCoverage> = Vec::new();
        for run in runs {
            let case_id = match run {
                LoggedRun::Completed(r) => &r.case_id,
                LoggedRun::Failed(f) => &f.case_id,
            };
            let row = match cases.iter_mut().position(|c| &c.case_id == case_id) {
                Some(i) => &mut cases[i],
                None => {
                    cases.push(CaseCoverage {
                        project: project_of(case_id),
                        case_id: case_id.clone(),
                        runs: 0,
                        successes: 0,
                        failures: 0,
                        errors: 0,
                    });
                    cases.last_mut().expect("just pushed")
                }
            };
            row.runs += 1;
            match run {
                LoggedRun::Completed(r) if r.reproduced => row.successes += 1,
                LoggedRun::Completed(_) => row.failures += 1,
                LoggedRun::Failed(_) => row.errors += 1,
            }
        }
        cases.sort_by(|a, b| a.case_id.cmp(&b.case_id));
        CoverageReport { cases }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    TableText,
    Csv,
}

pub fn render_report(report: &CoverageReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::TableText => render_table(report),
        ReportFormat::Csv => render_csv(report),
    }
}

fn render_table(report: &CoverageReport) -> String {
    let header = ["Project", "Bug ID", "Result"];
    let rows: Vec<[String; 3]> =
        report.cases.iter().map(|c| [c.project.clone(), c.case_id.clone(), c.result_text()]).collect();
    let width = |k: usize| rows.iter().map(|r| r[k].chars().count()).chain([header[k].len()]).max().unwrap_or(0);
    let (w0, w1) = (width(0), width(1));
    let mut out = String::new();
    let _ = writeln!(out, "{:<w0$}  {:<w1$}  {}", header[0], header[1], header[2]);
    for r in &rows {
        let _ = writeln!(out, "{:<w0$}  {:<w1$}  {}", r[0], r[1], r[2]);
    }
    out
}

fn render_csv(report: &CoverageReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let header = ["case_id", "runs", "successes", "failures", "errors", "covered", "percentage_exact"];
    w.write_record(header).expect("in-memory csv");
    for c in &report.cases {
        w.write_record([
            c.case_id.clone(),
            c.runs.to_string(),
            c.successes.to_string(),
            c.failures.to_string(),
            c.errors.to_string(),
            if c.covered() { "Y" } else { "N" }.to_string(),
            c.percentage_exact().to_string(),
        ])
        .expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("csv of utf-8 fields")
}

/// Runs every case `repetitions` times and aggregates the outcomes.
///
/// Runs execute on `workers` threads. Each run is archived (when an archive
/// is given) as soon as it finishes; results are sorted by (case id, seed)
/// before aggregation, so the worker count never changes the report.
pub fn run_experiment(
    suite: &Suite,
    settings: &ExperimentSettings,
    archive: Option<&RunArchive>,
) -> Result<(CoverageReport, Vec<LoggedRun>), ExperimentError> {
    if settings.repetitions == 0 {
        return Err(ExperimentError::Settings("repetitions must be at least 1".into()));
    }
    if settings.workers == 0 {
        return Err(ExperimentError::Settings("workers must be at least 1".into()));
    }
    settings.search.validate()?;
    let jobs: Vec<(usize, u64)> = (0..suite.entries.len())
        .flat_map(|e| (0..settings.repetitions).map(move |i| (e, settings.base_seed.wrapping_add(i as u64))))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(settings.workers).build()?;
    let results: Vec<Result<LoggedRun, std::io::Error>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(e, seed)| {
                let entry = &suite.entries[e];
                let backend = ScenarioBackend::new(&entry.scenario, &entry.case);
                let config = SearchConfig { seed, ..settings.search.clone() };
                let run = match run_search(&backend, &entry.case, &config) {
                    Ok(record) => LoggedRun::Completed(record),
                    Err(err) => LoggedRun::Failed(RunFailure {
                        case_id: entry.case.id().to_string(),
                        seed,
                        message: err.to_string(),
                        raw_output: None,
                    }),
                };
                if let Some(a) = archive {
                    a.store(&run)?;
                }
                Ok(run)
            })
            .collect()
    });
    let mut runs = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    let key = |r: &LoggedRun| match r {
        LoggedRun::Completed(r) => (r.case_id.clone(), r.seed),
        LoggedRun::Failed(f) => (f.case_id.clone(), f.seed),
    };
    runs.sort_by_key(key);
    let project_of = |id: &str| {
        suite.entries.iter().find(|e| e.case.id() == id).map(|e| e.scenario.name.clone()).unwrap_or_default()
    };
    let mut report = CoverageReport::from_runs(&runs, project_of);
    // cases whose every run was lost still get a row
    for entry in &suite.entries {
        if !report.cases.iter().any(|c| c.case_id == entry.case.id()) {
            report.cases.push(CaseCoverage {
                project: entry.scenario.name.clone(),
                case_id: entry.case.id().to_string(),
                runs: 0,
                successes: 0,
                failures: 0,
                errors: 0,
            });
        }
    }
    report.cases.sort_by(|a, b| a.case_id.cmp(&b.case_id));
    Ok((report, runs))
}
