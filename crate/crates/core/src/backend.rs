//! Execution backends: where a genome actually runs.

use thiserror::Error;

use crate::api::Api;
use crate::genome::Genome;
use crate::scenario::{execute, ApproachTarget, ExecutionOutcome, Scenario, ScenarioError, DEFAULT_STEP_BUDGET};
use crate::script::ScriptError;
use crate::trace::CrashCase;

#[derive(Debug, Error)]
pub enum BackendError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Script(#[from] ScriptError),
}

/// Runs genomes against one program under test.
///
/// Implementations must allow concurrent `execute` calls with no shared
/// mutable state between them.
pub trait Backend: Sync {
    fn api(&self) -> &Api;
    fn execute(&self, genome: &Genome) -> Result<ExecutionOutcome, BackendError>;
}

/// Executes genomes with the scenario interpreter, tracking approach data
/// toward one crash case.
#[derive(Debug, Clone)]
pub struct ScenarioBackend<'a> {
    scenario: &'a Scenario,
    target: ApproachTarget,
    step_budget: u64,
}

impl<'a> ScenarioBackend<'a> {
    pub fn new(scenario: &'a Scenario, case: &CrashCase) -> Self {
        ScenarioBackend { scenario, target: ApproachTarget::for_case(scenario, case), step_budget: DEFAULT_STEP_BUDGET }
    }

    pub fn with_step_budget(mut self, step_budget: u64) -> Self {
        self.step_budget = step_budget;
        self
    }

    pub fn scenario(&self) -> &Scenario {
        self.scenario
    }
}

impl Backend for ScenarioBackend<'_> {
    fn api(&self) -> &Api {
        &self.scenario.api
    }

    fn execute(&self, genome: &Genome) -> Result<ExecutionOutcome, BackendError> {
        Ok(execute(self.scenario, genome, self.step_budget, Some(&self.target))?)
    }
}
