//! Candidate test cases: ordered construct / set-value / invoke statements.
//!
//! Slots are identified by the index of the statement that defines them, so
//! a genome has exactly one canonical form and structural equality needs no
//! renaming.

mod repair;
mod text;

use std::fmt;

use thiserror::Error;

use crate::api::{Api, DomainId, RoutineId, TypeId, Value};

pub(crate) use repair::fresh_definition;
pub use repair::repair;
pub use text::GenomeTextError;

/// Placeholder for a reference that has no defining statement yet. Repair
/// binds it.
pub const UNBOUND: usize = usize::MAX;

/// Default upper bound on statements per genome.
pub const DEFAULT_MAX_LENGTH: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Statement {
    /// Creates an object of the given type.
    Construct { ty: TypeId },
    /// Defines a primitive slot holding a member of `domain`.
    SetValue { domain: DomainId, value: Value },
    /// Calls a routine. `receiver` is `Some` exactly for methods.
    Invoke { routine: RoutineId, receiver: Option<usize>, args: Vec<usize> },
}

/// What a slot holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlotKind {
    Object(TypeId),
    Value(DomainId),
}

impl Statement {
    pub fn defines(&self) -> Option<SlotKind> {
        match self {
            Statement::Construct { ty } => Some(SlotKind::Object(*ty)),
            Statement::SetValue { domain, .. } => Some(SlotKind::Value(*domain)),
            Statement::Invoke { .. } => None,
        }
    }

    pub fn references(&self) -> impl Iterator<Item = usize> + '_ {
        let (receiver, args): (Option<usize>, &[usize]) = match self {
            Statement::Invoke { receiver, args, .. } => (*receiver, args),
            _ => (None, &[]),
        };
        receiver.into_iter().chain(args.iter().copied())
    }

    pub(crate) fn references_mut(&mut self) -> impl Iterator<Item = &mut usize> + '_ {
        let (receiver, args): (Option<&mut usize>, &mut [usize]) = match self {
            Statement::Invoke { receiver, args, .. } => (receiver.as_mut(), args.as_mut_slice()),
            _ => (None, &mut []),
        };
        receiver.into_iter().chain(args.iter_mut())
    }

    pub fn invokes(&self, routine: RoutineId) -> bool {
        matches!(self, Statement::Invoke { routine: r, .. } if *r == routine)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Genome {
    pub statements: Vec<Statement>,
    pub target: RoutineId,
}

impl Genome {
    pub fn new(statements: Vec<Statement>, target: RoutineId) -> Self {
        Genome { statements, target }
    }

    pub fn len(&self) -> usize {
        self.statements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.statements.is_empty()
    }

    pub fn target_calls(&self) -> usize {
        self.statements.iter().filter(|s| s.invokes(self.target)).count()
    }

    pub fn invoke_count(&self) -> usize {
        self.statements.iter().filter(|s| matches!(s, Statement::Invoke { .. })).count()
    }

    /// Removes statement `index`, shifting later references down. References
    /// to the removed statement become [`UNBOUND`].
    pub fn remove(&mut self, index: usize) -> Statement {
        let removed = self.statements.remove(index);
        for st in &mut self.statements[index..] {
            for r in st.references_mut() {
                if *r == index {
                    *r = UNBOUND;
                } else if *r != UNBOUND && *r > index {
                    *r -= 1;
                }
            }
        }
        removed
    }

    /// Inserts a statement at `index`, shifting later references up.
    pub fn insert(&mut self, index: usize, statement: Statement) {
        for st in &mut self.statements[index..] {
            for r in st.references_mut() {
                if *r != UNBOUND && *r >= index {
                    *r += 1;
                }
            }
        }
        self.statements.insert(index, statement);
    }

    pub fn is_referenced(&self, index: usize) -> bool {
        self.statements[index + 1..].iter().any(|s| s.references().any(|r| r == index))
    }
}

/// Size limits applied by validation and repair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GenomeLimits {
    pub max_length: usize,
}

impl Default for GenomeLimits {
    fn default() -> Self {
        GenomeLimits { max_length: DEFAULT_MAX_LENGTH }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GenomeError {
    #[error("cannot fit a call to `{routine}` ({needed} statements) within the length bound {max_length}")]
    RepairImpossible { routine: String, needed: usize, max_length: usize },
    #[error("target routine is not part of the API")]
    UnknownTarget,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    Empty,
    TooLong { length: usize, max: usize },
    TargetCallMissing,
    UnknownTarget,
    UnknownRoutine { statement: usize },
    UnknownType { statement: usize },
    UnknownDomain { statement: usize },
    ValueOutsideDomain { statement: usize },
    ForwardReference { statement: usize, slot: usize },
    DanglingReference { statement: usize },
    TypeMismatch { statement: usize, slot: usize },
    ArityMismatch { statement: usize, expected: usize, found: usize },
    ReceiverMismatch { statement: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Empty => write!(f, "genome is empty"),
            Violation::TooLong { length, max } => write!(f, "length {length} exceeds bound {max}"),
            Violation::TargetCallMissing => write!(f, "target call missing"),
            Violation::UnknownTarget => write!(f, "target routine unknown"),
            Violation::UnknownRoutine { statement } => write!(f, "statement {statement}: unknown routine"),
            Violation::UnknownType { statement } => write!(f, "statement {statement}: unknown type"),
            Violation::UnknownDomain { statement } => write!(f, "statement {statement}: unknown domain"),
            Violation::ValueOutsideDomain { statement } => {
                write!(f, "statement {statement}: value outside its domain")
            }
            Violation::ForwardReference { statement, slot } => {
                write!(f, "statement {statement}: forward reference to slot {slot}")
            }
            Violation::DanglingReference { statement } => write!(f, "statement {statement}: dangling reference"),
            Violation::TypeMismatch { statement, slot } => {
                write!(f, "statement {statement}: slot {slot} has the wrong type")
            }
            Violation::ArityMismatch { statement, expected, found } => {
                write!(f, "statement {statement}: expected {expected} arguments, found {found}")
            }
            Violation::ReceiverMismatch { statement } => {
                write!(f, "statement {statement}: receiver does not match the routine kind")
            }
        }
    }
}

/// All invariant violations of a genome; empty when the genome is valid.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidityReport {
    pub violations: Vec<Violation>,
}

impl ValidityReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

fn check_ref(
    statements: &[Statement],
    at: usize,
    slot: usize,
    expected: SlotKind,
    out: &mut Vec<Violation>,
) {
    if slot == UNBOUND || slot >= statements.len() {
        out.push(Violation::DanglingReference { statement: at });
    } else if slot >= at {
        out.push(Violation::ForwardReference { statement: at, slot });
    } else {
        match statements[slot].defines() {
            None => out.push(Violation::DanglingReference { statement: at }),
            Some(kind) if kind != expected => out.push(Violation::TypeMismatch { statement: at, slot }),
            Some(_) => {}
        }
    }
}

pub fn validate(genome: &Genome, api: &Api, limits: &GenomeLimits) -> ValidityReport {
    let mut v = Vec::new();
    let statements = &genome.statements;
    if statements.is_empty() {
        v.push(Violation::Empty);
    }
    if statements.len() > limits.max_length {
        v.push(Violation::TooLong { length: statements.len(), max: limits.max_length });
    }
    if api.routine(genome.target).is_none() {
        v.push(Violation::UnknownTarget);
    } else if genome.target_calls() == 0 {
        v.push(Violation::TargetCallMissing);
    }
    for (i, st) in statements.iter().enumerate() {
        match st {
            Statement::Construct { ty } => {
                if api.ty(*ty).is_none() {
                    v.push(Violation::UnknownType { statement: i });
                }
            }
            Statement::SetValue { domain, value } => match api.domain(*domain) {
                None => v.push(Violation::UnknownDomain { statement: i }),
                Some(d) if !d.contains(value) => v.push(Violation::ValueOutsideDomain { statement: i }),
                Some(_) => {}
            },
            Statement::Invoke { routine, receiver, args } => {
                let Some(sig) = api.routine(*routine) else {
                    v.push(Violation::UnknownRoutine { statement: i });
                    continue;
                };
                match (sig.owner, receiver) {
                    (Some(owner), Some(slot)) => check_ref(statements, i, *slot, SlotKind::Object(owner), &mut v),
                    (None, None) => {}
                    _ => v.push(Violation::ReceiverMismatch { statement: i }),
                }
                if args.len() != sig.params.len() {
                    v.push(Violation::ArityMismatch { statement: i, expected: sig.params.len(), found: args.len() });
                }
                for (slot, p) in args.iter().zip(&sig.params) {
                    check_ref(statements, i, *slot, SlotKind::Value(p.domain), &mut v);
                }
            }
        }
    }
    ValidityReport { violations: v }
}
