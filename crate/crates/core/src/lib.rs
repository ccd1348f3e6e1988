//! Search-based crash reproduction.
//!
//! Given a crash stack trace and the API of the program that crashed, a guided
//! genetic algorithm evolves call sequences until one throws the same
//! exception from the same frames. Programs run either in the bundled
//! scenario interpreter, where an exhaustive oracle gives ground truth, or as
//! scripts in an external runtime.

pub mod api;
pub mod backend;
pub mod engine;
pub mod experiment;
pub mod fitness;
pub mod genome;
pub mod io;
pub mod operators;
pub mod runlog;
pub mod scenario;
pub mod script;
pub mod trace;

pub use api::{Api, Value};
pub use backend::{Backend, BackendError, ScenarioBackend};
pub use engine::{best_so_far, run_search, RunRecord, SearchConfig, SearchError, StopReason};
pub use experiment::{render_report, run_experiment, CoverageReport, ExperimentSettings, ReportFormat, Suite};
pub use fitness::{evaluate, is_reproduced, ApproachData, FitnessValue};
pub use genome::{repair, validate, Genome, GenomeLimits, Statement};
pub use scenario::{execute, load_scenario, oracle_enumerate, ExecutionOutcome, OracleVerdict, OutcomeKind, Scenario};
pub use script::{ScriptBackend, ScriptTarget};
pub use trace::{format_trace, parse_trace, CrashCase, StackFrame, StackTrace, TraceGrammar};
