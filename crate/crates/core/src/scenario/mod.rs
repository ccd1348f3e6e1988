//! Crash scenarios: small declarative programs with guarded throw sites.
//!
//! A scenario gives every crash a ground truth. Its value domains are finite,
//! so reachability of a throw site can be settled by exhaustive enumeration
//! ([`oracle_enumerate`]), independently of the genetic search.

mod format;
mod interp;
mod oracle;

use std::collections::BTreeSet;
use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::api::{Api, RoutineId, Value};
use crate::fitness::ApproachData;
use crate::trace::StackTrace;

pub use format::{load_scenario, FORMAT_VERSION};
pub use interp::{execute, ApproachTarget, DEFAULT_STEP_BUDGET};
pub use oracle::{estimate_enumeration, oracle_enumerate, OracleVerdict, MAX_ENUMERATION};

/// Upper bound on statements in one routine body.
pub const MAX_BODY_STATEMENTS: usize = 32;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("scenario parse error at {location}: {reason}")]
    Parse { location: String, reason: String },
    #[error("invalid scenario: {0}")]
    Semantic(String),
    #[error("genome cannot execute: {0}")]
    MalformedGenome(String),
}

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("enumeration too large: about {estimated} candidate genomes (limit {limit})")]
    EnumerationTooLarge { estimated: u128, limit: u128 },
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
}

/// A guard operand.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Operand {
    /// Parameter of the executing routine, by position.
    Param(usize),
    /// Field of the receiver object, by position in its type declaration.
    Field(usize),
    Const(Value),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
}

impl fmt::Display for CmpOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Comparison {
    pub lhs: Operand,
    pub op: CmpOp,
    pub rhs: Operand,
}

/// A conjunction of comparisons.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Guard {
    pub atoms: Vec<Comparison>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action {
    Throw { exception: String, message: Option<String> },
    /// Calls a free routine, or a method of the caller's own type on `self`.
    Call { routine: RoutineId, args: Vec<Operand> },
    SetField { field: usize, value: Operand },
    Return,
}

/// One body statement. The action runs only when the guard holds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BodyStatement {
    pub line: u32,
    pub guard: Option<Guard>,
    pub action: Action,
}

/// Metadata about the crash a scenario is built around.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CrashSpec {
    pub id: String,
    pub target_frame: usize,
    pub oracle_max_calls: usize,
    /// Number of calls in the shortest triggering sequence, when documented.
    pub minimal_calls: Option<usize>,
    /// Documented reachability, when the scenario is built to be (un)reachable.
    pub expect_reachable: Option<bool>,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub description: String,
    pub package: String,
    pub module: String,
    pub module_file: String,
    pub api: Api,
    /// Bodies aligned with `api.routines`.
    pub bodies: Vec<Vec<BodyStatement>>,
    pub crash: CrashSpec,
    unit_paths: Vec<String>,
}

impl Scenario {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn assemble(
        name: String,
        description: String,
        package: String,
        module: String,
        module_file: String,
        api: Api,
        bodies: Vec<Vec<BodyStatement>>,
        crash: CrashSpec,
    ) -> Self {
        let unit_paths = api
            .routines
            .iter()
            .map(|sig| match sig.owner.and_then(|o| api.ty(o)) {
                Some(t) => format!("{package}.{}", t.name),
                None => format!("{package}.{module}"),
            })
            .collect();
        Scenario { name, description, package, module, module_file, api, bodies, crash, unit_paths }
    }

    pub fn body(&self, routine: RoutineId) -> &[BodyStatement] {
        &self.bodies[routine.0]
    }

    /// Unit path reported in stack frames for `routine`.
    pub fn unit_path(&self, routine: RoutineId) -> &str {
        &self.unit_paths[routine.0]
    }

    pub fn file(&self, routine: RoutineId) -> &str {
        match self.api.routines[routine.0].owner.and_then(|o| self.api.ty(o)) {
            Some(t) => &t.file,
            None => &self.module_file,
        }
    }

    pub fn routine_name(&self, routine: RoutineId) -> &str {
        &self.api.routines[routine.0].name
    }
}

/// How an execution ended.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "trace", rename_all = "snake_case")]
pub enum OutcomeKind {
    Crashed(StackTrace),
    Completed,
    BudgetExceeded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionOutcome {
    pub kind: OutcomeKind,
    pub steps_executed: u64,
    /// `(routine, line)` of every statement whose action ran.
    pub covered_lines: BTreeSet<(String, u32)>,
    /// Closest approach to the crash case's throw site, when a target was given.
    pub closest_approach: Option<ApproachData>,
}

impl ExecutionOutcome {
    pub fn crash_trace(&self) -> Option<&StackTrace> {
        match &self.kind {
            OutcomeKind::Crashed(t) => Some(t),
            _ => None,
        }
    }
}
