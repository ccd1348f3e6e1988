use super::{execute, ApproachTarget, OracleError, Scenario, ScenarioError, DEFAULT_STEP_BUDGET};
use crate::api::{RoutineId, TypeId};
use crate::fitness::{evaluate, is_reproduced};
use crate::genome::{Genome, Statement};
use crate::trace::CrashCase;

/// Largest number of candidate genomes the oracle will enumerate.
pub const MAX_ENUMERATION: u128 = 10_000_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OracleVerdict {
    Reachable(Genome),
    Unreachable,
}

/// One call in an enumerated sequence.
#[derive(Debug, Clone, Copy)]
struct Call {
    routine: RoutineId,
    /// Index of an earlier-created object of the owner type, or `None` for a
    /// fresh one.
    receiver: Option<usize>,
    /// Mixed-radix index into the argument tuple space.
    args: u64,
}

fn arg_tuples(scenario: &Scenario, routine: RoutineId) -> u64 {
    scenario.api.routines[routine.0]
        .params
        .iter()
        .map(|p| scenario.api.domains[p.domain.0].size())
        .fold(1u64, u64::saturating_mul)
}

/// Upper bound on the number of call sequences of length `1..=max_calls`.
pub fn estimate_enumeration(scenario: &Scenario, max_calls: usize) -> u128 {
    let n = scenario.api.routines.len();
    let mut total: u128 = 0;
    for len in 1..=max_calls {
        let mut count: u128 = 1;
        for position in 0..len {
            let choices: u128 = (0..n)
                .map(|r| {
                    let routine = RoutineId(r);
                    let receivers = if scenario.api.routines[r].owner.is_some() { position as u128 + 1 } else { 1 };
                    receivers.saturating_mul(u128::from(arg_tuples(scenario, routine)))
                })
                .fold(0u128, u128::saturating_add);
            count = count.saturating_mul(choices);
        }
        total = total.saturating_add(count);
    }
    total
}

/// Exhaustively searches call sequences of up to `max_calls` calls, shortest
/// first, for one that reproduces `case` at fitness zero.
///
/// Within a length, sequences are ordered lexicographically by routine index,
/// then receiver choice (existing objects in creation order, then a fresh
/// one), then argument tuple. Only sequences that invoke the target routine
/// directly are candidates.
pub fn oracle_enumerate(scenario: &Scenario, case: &CrashCase, max_calls: usize) -> Result<OracleVerdict, OracleError> {
    let estimated = estimate_enumeration(scenario, max_calls);
    if estimated > MAX_ENUMERATION {
        return Err(OracleError::EnumerationTooLarge { estimated, limit: MAX_ENUMERATION });
    }
    let target = scenario.api.routine_id(case.target_routine()).ok_or_else(|| {
        ScenarioError::Semantic(format!("target routine `{}` is not declared", case.target_routine()))
    })?;
    let approach = ApproachTarget::for_case(scenario, case);
    let mut search = Search { scenario, case, target, approach: &approach, calls: Vec::new(), objects: Vec::new() };
    for len in 1..=max_calls {
        if let Some(witness) = search.extend(len)? {
            return Ok(OracleVerdict::Reachable(witness));
        }
    }
    Ok(OracleVerdict::Unreachable)
}

struct Search<'a> {
    scenario: &'a Scenario,
    case: &'a CrashCase,
    target: RoutineId,
    approach: &'a ApproachTarget,
    calls: Vec<Call>,
    /// Type of every object created so far, in creation order.
    objects: Vec<TypeId>,
}

impl Search<'_> {
    fn extend(&mut self, len: usize) -> Result<Option<Genome>, ScenarioError> {
        if self.calls.len() == len {
            if !self.calls.iter().any(|c| c.routine == self.target) {
                return Ok(None);
            }
            let genome = self.genome();
            let outcome = execute(self.scenario, &genome, DEFAULT_STEP_BUDGET, Some(self.approach))?;
            return Ok(is_reproduced(&evaluate(self.case, &outcome)).then_some(genome));
        }
        for r in 0..self.scenario.api.routines.len() {
            let routine = RoutineId(r);
            let owner = self.scenario.api.routines[r].owner;
            let mut receivers: Vec<Option<usize>> = Vec::new();
            if let Some(ty) = owner {
                receivers.extend(self.objects.iter().enumerate().filter(|(_, t)| **t == ty).map(|(i, _)| Some(i)));
                receivers.push(None);
            } else {
                receivers.push(None);
            }
            for receiver in receivers {
                let fresh = owner.filter(|_| receiver.is_none());
                if let Some(ty) = fresh {
                    self.objects.push(ty);
                }
                for args in 0..arg_tuples(self.scenario, routine) {
                    self.calls.push(Call { routine, receiver, args });
                    let found = self.extend(len)?;
                    self.calls.pop();
                    if found.is_some() {
                        return Ok(found);
                    }
                }
                if fresh.is_some() {
                    self.objects.pop();
                }
            }
        }
        Ok(None)
    }

    fn genome(&self) -> Genome {
        let api = &self.scenario.api;
        let mut statements = Vec::new();
        let mut object_slots: Vec<usize> = Vec::new();
        for call in &self.calls {
            let sig = &api.routines[call.routine.0];
            let receiver = sig.owner.map(|ty| match call.receiver {
                Some(existing) => object_slots[existing],
                None => {
                    statements.push(Statement::Construct { ty });
                    object_slots.push(statements.len() - 1);
                    statements.len() - 1
                }
            });
            let mut rest = call.args;
            let mut args = Vec::with_capacity(sig.params.len());
            for p in &sig.params {
                let domain = &api.domains[p.domain.0];
                let value = domain.value_at(rest % domain.size()).expect("index reduced modulo size");
                rest /= domain.size();
                statements.push(Statement::SetValue { domain: p.domain, value });
                args.push(statements.len() - 1);
            }
            statements.push(Statement::Invoke { routine: call.routine, receiver, args });
        }
        Genome::new(statements, self.target)
    }
}
