use std::collections::BTreeSet;

use super::{Action, CmpOp, Comparison, ExecutionOutcome, Guard, Operand, OutcomeKind, Scenario, ScenarioError};
use crate::api::{RoutineId, TypeId, Value};
use crate::fitness::ApproachData;
use crate::genome::{Genome, Statement};
use crate::trace::{CrashCase, StackFrame, StackTrace};

/// Interpreter steps allowed per execution unless configured otherwise.
pub const DEFAULT_STEP_BUDGET: u64 = 10_000;

/// Branch distance of an entered link whose target statement was not reached.
const ENTRY_DISTANCE: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Dependency {
    stmt: usize,
    /// Outcome of the statement's guard that keeps the target reachable.
    want: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Link {
    routine: RoutineId,
    /// Statement on the crash path: a call into the next link, or the throw.
    stmt: usize,
    deps: Vec<Dependency>,
    /// Dependencies of this link and every inner link.
    deps_through: u32,
}

/// The crash path of a case mapped onto scenario statements, used to compute
/// approach level and branch distance during execution.
///
/// Links run from the target frame (outermost compared frame) down to the
/// throw site. The control dependencies of a link are its own guard and the
/// guards of every earlier `throw`/`return` statement, which must stay false.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApproachTarget {
    links: Vec<Link>,
}

impl ApproachTarget {
    pub fn for_case(scenario: &Scenario, case: &CrashCase) -> ApproachTarget {
        let mut inner_to_outer: Vec<(RoutineId, usize)> = Vec::new();
        for (level, frame) in case.trace().frames()[..case.target_frame_level()].iter().enumerate() {
            let Some(routine) = scenario.api.routine_id(frame.routine()) else { break };
            if scenario.unit_path(routine) != frame.unit_path() {
                break;
            }
            let body = scenario.body(routine);
            let Some(stmt) = body.iter().position(|s| s.line == frame.line()) else { break };
            let fits = match (&body[stmt].action, inner_to_outer.last()) {
                (Action::Throw { .. }, None) => level == 0,
                (Action::Call { routine: callee, .. }, Some((inner, _))) => callee == inner,
                _ => false,
            };
            if !fits {
                break;
            }
            inner_to_outer.push((routine, stmt));
        }
        if inner_to_outer.len() < case.target_frame_level() {
            return ApproachTarget { links: Vec::new() };
        }
        let mut links = Vec::new();
        let mut deps_through = 0u32;
        for (routine, stmt) in inner_to_outer {
            let body = scenario.body(routine);
            let mut deps: Vec<Dependency> = body[..stmt]
                .iter()
                .enumerate()
                .filter(|(_, s)| matches!(s.action, Action::Throw { .. } | Action::Return))
                .map(|(i, _)| Dependency { stmt: i, want: false })
                .collect();
            if body[stmt].guard.is_some() {
                deps.push(Dependency { stmt, want: true });
            }
            deps_through += deps.len() as u32;
            links.push(Link { routine, stmt, deps, deps_through });
        }
        links.reverse();
        ApproachTarget { links }
    }

    /// True when the crash path could be mapped onto the scenario.
    pub fn is_mapped(&self) -> bool {
        !self.links.is_empty()
    }

    fn baseline(&self) -> ApproachData {
        match self.links.first() {
            Some(l) => ApproachData { approach_level: l.deps_through + 1, branch_distance: 0.0 },
            None => ApproachData { approach_level: 1, branch_distance: 1.0 },
        }
    }
}

struct Frame {
    routine: RoutineId,
    pc: usize,
    receiver: Option<usize>,
    args: Vec<Value>,
    /// Position in the approach chain this activation stands for.
    link: Option<usize>,
}

enum Slot {
    Object(usize, TypeId),
    Value(Value),
    Nothing,
}

struct Machine<'a> {
    scenario: &'a Scenario,
    target: Option<&'a ApproachTarget>,
    budget: u64,
    steps: u64,
    objects: Vec<Vec<Value>>,
    covered: BTreeSet<(String, u32)>,
    best: Option<ApproachData>,
}

enum Stop {
    Crashed(StackTrace),
    Budget,
}

/// Runs `genome` against the scenario. Deterministic in all inputs.
///
/// Every genome statement and every evaluated body statement costs one step;
/// running out of steps ends the execution with `BudgetExceeded`.
pub fn execute(
    scenario: &Scenario,
    genome: &Genome,
    step_budget: u64,
    target: Option<&ApproachTarget>,
) -> Result<ExecutionOutcome, ScenarioError> {
    let mut m = Machine {
        scenario,
        target,
        budget: step_budget,
        steps: 0,
        objects: Vec::new(),
        covered: BTreeSet::new(),
        best: target.map(ApproachTarget::baseline),
    };
    let mut kind = OutcomeKind::Completed;
    match m.run_genome(genome)? {
        None => {}
        Some(Stop::Crashed(t)) => kind = OutcomeKind::Crashed(t),
        Some(Stop::Budget) => kind = OutcomeKind::BudgetExceeded,
    }
    Ok(ExecutionOutcome { kind, steps_executed: m.steps, covered_lines: m.covered, closest_approach: m.best })
}

fn observe(best: &mut Option<ApproachData>, a: ApproachData) {
    if best.is_none_or(|b| a.closer_than(&b)) {
        *best = Some(a);
    }
}

fn malformed(index: usize, what: &str) -> ScenarioError {
    ScenarioError::MalformedGenome(format!("statement {index}: {what}"))
}

impl Machine<'_> {
    fn tick(&mut self) -> bool {
        if self.steps >= self.budget {
            return false;
        }
        self.steps += 1;
        true
    }

    fn run_genome(&mut self, genome: &Genome) -> Result<Option<Stop>, ScenarioError> {
        let api = &self.scenario.api;
        let mut slots: Vec<Slot> = Vec::with_capacity(genome.len());
        for (i, st) in genome.statements.iter().enumerate() {
            if !self.tick() {
                return Ok(Some(Stop::Budget));
            }
            match st {
                Statement::Construct { ty } => {
                    let decl = api.ty(*ty).ok_or_else(|| malformed(i, "unknown type"))?;
                    self.objects.push(decl.fields.iter().map(|f| f.initial.clone()).collect());
                    slots.push(Slot::Object(self.objects.len() - 1, *ty));
                }
                Statement::SetValue { value, .. } => slots.push(Slot::Value(value.clone())),
                Statement::Invoke { routine, receiver, args } => {
                    let sig = api.routine(*routine).ok_or_else(|| malformed(i, "unknown routine"))?;
                    let receiver = match (sig.owner, receiver) {
                        (None, None) => None,
                        (Some(owner), Some(r)) => match slots.get(*r) {
                            Some(Slot::Object(o, ty)) if *ty == owner => Some(*o),
                            _ => return Err(malformed(i, "receiver is not an object slot")),
                        },
                        _ => return Err(malformed(i, "receiver does not match signature")),
                    };
                    if args.len() != sig.params.len() {
                        return Err(malformed(i, "wrong number of arguments"));
                    }
                    let values = args
                        .iter()
                        .map(|a| match slots.get(*a) {
                            Some(Slot::Value(v)) => Ok(v.clone()),
                            _ => Err(malformed(i, "argument is not a value slot")),
                        })
                        .collect::<Result<Vec<_>, _>>()?;
                    slots.push(Slot::Nothing);
                    if let Some(stop) = self.call(*routine, receiver, values) {
                        return Ok(Some(stop));
                    }
                }
            }
        }
        Ok(None)
    }

    /// `caller` is the calling activation's link position and call statement.
    fn link_for_entry(&self, routine: RoutineId, caller: Option<(Option<usize>, usize)>) -> Option<usize> {
        let links = &self.target?.links;
        if let Some((Some(pos), stmt)) = caller {
            if links[pos].stmt == stmt && pos + 1 < links.len() && links[pos + 1].routine == routine {
                return Some(pos + 1);
            }
        }
        (links.first()?.routine == routine).then_some(0)
    }

    fn enter(&mut self, routine: RoutineId, caller: Option<(Option<usize>, usize)>, receiver: Option<usize>, args: Vec<Value>) -> Frame {
        let link = self.link_for_entry(routine, caller);
        if let (Some(pos), Some(t)) = (link, self.target) {
            let level = t.links[pos].deps_through;
            observe(&mut self.best, ApproachData { approach_level: level, branch_distance: ENTRY_DISTANCE });
        }
        Frame { routine, pc: 0, receiver, args, link }
    }

    fn call(&mut self, routine: RoutineId, receiver: Option<usize>, args: Vec<Value>) -> Option<Stop> {
        let scenario = self.scenario;
        let first = self.enter(routine, None, receiver, args);
        let mut stack = vec![first];
        while let Some(frame) = stack.last_mut() {
            let body = scenario.body(frame.routine);
            if frame.pc >= body.len() {
                stack.pop();
                continue;
            }
            if !self.tick() {
                return Some(Stop::Budget);
            }
            let index = frame.pc;
            let st = &body[index];
            frame.pc += 1;
            let frame = &stack[stack.len() - 1];
            let objects = &self.objects;
            let resolve = |op: &Operand| -> Value {
                match op {
                    Operand::Param(p) => frame.args[*p].clone(),
                    Operand::Field(f) => objects[frame.receiver.expect("fields only in methods")][*f].clone(),
                    Operand::Const(v) => v.clone(),
                }
            };
            let taken = st.guard.as_ref().is_none_or(|g| g.atoms.iter().all(|a| holds(a, &resolve)));

            if let (Some(pos), Some(t)) = (frame.link, self.target) {
                let link = &t.links[pos];
                if let Some(d) = link.deps.iter().position(|d| d.stmt == index) {
                    let want = link.deps[d].want;
                    if taken != want {
                        let remaining = link.deps_through - d as u32 - 1;
                        let distance = guard_distance(st.guard.as_ref(), want, &resolve);
                        observe(&mut self.best, ApproachData { approach_level: remaining, branch_distance: distance });
                    }
                }
                if taken && index == link.stmt && pos + 1 == t.links.len() {
                    observe(&mut self.best, ApproachData::REACHED);
                }
            }
            if !taken {
                continue;
            }
            self.covered.insert((scenario.routine_name(frame.routine).to_string(), st.line));
            match &st.action {
                Action::Throw { exception, message } => {
                    let (last, outer) = stack.split_last().expect("non-empty stack");
                    let mut frames = vec![self.frame_at(last.routine, st.line)];
                    for f in outer.iter().rev() {
                        let line = scenario.body(f.routine)[f.pc - 1].line;
                        frames.push(self.frame_at(f.routine, line));
                    }
                    let trace = StackTrace::new(exception.clone(), message.clone(), frames)
                        .expect("exception names and frames are validated at load time");
                    return Some(Stop::Crashed(trace));
                }
                Action::Call { routine: callee, args } => {
                    let values: Vec<Value> = args.iter().map(&resolve).collect();
                    let callee_receiver =
                        scenario.api.routines[callee.0].owner.and(frame.receiver);
                    let caller = Some((frame.link, index));
                    let next = self.enter(*callee, caller, callee_receiver, values);
                    stack.push(next);
                }
                Action::SetField { field, value } => {
                    let v = resolve(value);
                    let obj = frame.receiver.expect("set only in methods");
                    self.objects[obj][*field] = v;
                }
                Action::Return => {
                    stack.pop();
                }
            }
        }
        None
    }

    fn frame_at(&self, routine: RoutineId, line: u32) -> StackFrame {
        let s = self.scenario;
        StackFrame::new(s.unit_path(routine), s.routine_name(routine), s.file(routine), line)
            .expect("names are validated at load time")
    }
}

fn holds(c: &Comparison, resolve: &impl Fn(&Operand) -> Value) -> bool {
    let (a, b) = (resolve(&c.lhs), resolve(&c.rhs));
    match c.op {
        CmpOp::Eq => a == b,
        CmpOp::Ne => a != b,
        CmpOp::Lt => a < b,
        CmpOp::Le => a <= b,
    }
}

/// Distance of one comparison from evaluating to `want`; zero when it does.
pub(crate) fn atom_distance(op: CmpOp, a: &Value, b: &Value, want: bool) -> f64 {
    let flag = |x: bool| if x { 0.0 } else { 1.0 };
    match (a, b) {
        (Value::Int(x), Value::Int(y)) => {
            let (x, y) = (*x as f64, *y as f64);
            match (op, want) {
                (CmpOp::Eq, true) | (CmpOp::Ne, false) => (x - y).abs(),
                (CmpOp::Eq, false) | (CmpOp::Ne, true) => flag(x != y),
                (CmpOp::Lt, true) => (x - y + 1.0).max(0.0),
                (CmpOp::Lt, false) => (y - x).max(0.0),
                (CmpOp::Le, true) => (x - y).max(0.0),
                (CmpOp::Le, false) => (y - x + 1.0).max(0.0),
            }
        }
        _ => {
            let eq = a == b;
            match (op, want) {
                (CmpOp::Eq, true) | (CmpOp::Ne, false) => flag(eq),
                (CmpOp::Eq, false) | (CmpOp::Ne, true) => flag(!eq),
                (CmpOp::Lt, w) => flag((a < b) == w),
                (CmpOp::Le, w) => flag((a <= b) == w),
            }
        }
    }
}

/// Distance of a guard from evaluating to `want`. A missing guard is always
/// true, so wanting it false costs a constant 1.
fn guard_distance(guard: Option<&Guard>, want: bool, resolve: &impl Fn(&Operand) -> Value) -> f64 {
    let Some(g) = guard else { return if want { 0.0 } else { 1.0 } };
    let dists = g.atoms.iter().map(|c| atom_distance(c.op, &resolve(&c.lhs), &resolve(&c.rhs), want));
    if want {
        dists.sum()
    } else {
        dists.fold(f64::INFINITY, f64::min)
    }
}
