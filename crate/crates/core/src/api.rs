//! The invokable surface of a program under test: object types, routine
//! signatures and the finite value domains their parameters draw from.
//!
//! Both execution backends describe their targets with an [`Api`]; the genome
//! and operator modules only ever see this view.

use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

/// A primitive value passed as a routine argument or stored in a field.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Bool(bool),
    Int(i64),
    Str(String),
}

impl Value {
    pub fn kind(&self) -> ValueKind {
        match self {
            Value::Bool(_) => ValueKind::Bool,
            Value::Int(_) => ValueKind::Int,
            Value::Str(_) => ValueKind::Str,
        }
    }

    /// Parses the literal syntax used by scenario files and genome text:
    /// `true`/`false`, decimal integers, and double-quoted strings.
    pub fn parse_literal(text: &str) -> Option<Value> {
        let text = text.trim();
        match text {
            "true" => return Some(Value::Bool(true)),
            "false" => return Some(Value::Bool(false)),
            _ => {}
        }
        if text.starts_with('"') {
            return serde_json::from_str::<String>(text).ok().map(Value::Str);
        }
        text.parse::<i64>().ok().map(Value::Int)
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Bool(b) => write!(f, "{b}"),
            Value::Int(i) => write!(f, "{i}"),
            Value::Str(s) => write!(f, "{}", serde_json::to_string(s).map_err(|_| fmt::Error)?),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueKind {
    Bool,
    Int,
    #[serde(rename = "string")]
    Str,
}

impl fmt::Display for ValueKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ValueKind::Bool => "bool",
            ValueKind::Int => "int",
            ValueKind::Str => "string",
        })
    }
}

/// The members of a finite domain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DomainValues {
    Bool,
    IntRange { min: i64, max: i64 },
    IntSet(Vec<i64>),
    StrSet(Vec<String>),
}

/// A named, finite set of values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Domain {
    pub name: String,
    pub values: DomainValues,
}

impl Domain {
    pub fn kind(&self) -> ValueKind {
        match self.values {
            DomainValues::Bool => ValueKind::Bool,
            DomainValues::IntRange { .. } | DomainValues::IntSet(_) => ValueKind::Int,
            DomainValues::StrSet(_) => ValueKind::Str,
        }
    }

    pub fn size(&self) -> u64 {
        match &self.values {
            DomainValues::Bool => 2,
            DomainValues::IntRange { min, max } => (*max as i128 - *min as i128 + 1).max(0) as u64,
            DomainValues::IntSet(v) => v.len() as u64,
            DomainValues::StrSet(v) => v.len() as u64,
        }
    }

    /// The `index`-th member in enumeration order.
    pub fn value_at(&self, index: u64) -> Option<Value> {
        if index >= self.size() {
            return None;
        }
        Some(match &self.values {
            DomainValues::Bool => Value::Bool(index == 1),
            DomainValues::IntRange { min, .. } => Value::Int(min + index as i64),
            DomainValues::IntSet(v) => Value::Int(v[index as usize]),
            DomainValues::StrSet(v) => Value::Str(v[index as usize].clone()),
        })
    }

    pub fn contains(&self, value: &Value) -> bool {
        match (&self.values, value) {
            (DomainValues::Bool, Value::Bool(_)) => true,
            (DomainValues::IntRange { min, max }, Value::Int(i)) => min <= i && i <= max,
            (DomainValues::IntSet(v), Value::Int(i)) => v.contains(i),
            (DomainValues::StrSet(v), Value::Str(s)) => v.iter().any(|x| x == s),
            _ => false,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Value {
        let index = rng.gen_range(0..self.size());
        self.value_at(index).expect("index drawn within domain size")
    }

    /// Samples a member different from `current` when the domain allows it.
    pub fn sample_other<R: Rng + ?Sized>(&self, current: &Value, rng: &mut R) -> Value {
        if self.size() < 2 {
            return self.sample(rng);
        }
        loop {
            let v = self.sample(rng);
            if &v != current {
                return v;
            }
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = Value> + '_ {
        (0..self.size()).map(move |i| self.value_at(i).expect("in range"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldDecl {
    pub name: String,
    pub domain: DomainId,
    pub initial: Value,
}

/// An object type. Instances are created by a no-argument constructor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TypeDecl {
    pub name: String,
    pub file: String,
    pub fields: Vec<FieldDecl>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Param {
    pub name: String,
    pub domain: DomainId,
}

/// A routine signature. Methods have an owner type and take a receiver.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Signature {
    pub name: String,
    pub owner: Option<TypeId>,
    pub params: Vec<Param>,
}

macro_rules! id_newtype {
    ($name:ident) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $name(pub usize);
    };
}

id_newtype!(TypeId);
id_newtype!(RoutineId);
id_newtype!(DomainId);

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Api {
    pub types: Vec<TypeDecl>,
    pub routines: Vec<Signature>,
    pub domains: Vec<Domain>,
    type_index: BTreeMap<String, TypeId>,
    routine_index: BTreeMap<String, RoutineId>,
    domain_index: BTreeMap<String, DomainId>,
}

impl Api {
    /// Builds the lookup tables. Names are assumed unique; the loaders check that.
    pub fn new(types: Vec<TypeDecl>, routines: Vec<Signature>, domains: Vec<Domain>) -> Self {
        let type_index = types.iter().enumerate().map(|(i, t)| (t.name.clone(), TypeId(i))).collect();
        let routine_index =
            routines.iter().enumerate().map(|(i, r)| (r.name.clone(), RoutineId(i))).collect();
        let domain_index =
            domains.iter().enumerate().map(|(i, d)| (d.name.clone(), DomainId(i))).collect();
        Api { types, routines, domains, type_index, routine_index, domain_index }
    }

    pub fn type_id(&self, name: &str) -> Option<TypeId> {
        self.type_index.get(name).copied()
    }

    pub fn routine_id(&self, name: &str) -> Option<RoutineId> {
        self.routine_index.get(name).copied()
    }

    pub fn domain_id(&self, name: &str) -> Option<DomainId> {
        self.domain_index.get(name).copied()
    }

    pub fn ty(&self, id: TypeId) -> Option<&TypeDecl> {
        self.types.get(id.0)
    }

    pub fn routine(&self, id: RoutineId) -> Option<&Signature> {
        self.routines.get(id.0)
    }

    pub fn domain(&self, id: DomainId) -> Option<&Domain> {
        self.domains.get(id.0)
    }

    /// Statements needed to host one call of `routine` with fresh dependencies.
    pub fn call_footprint(&self, routine: RoutineId) -> usize {
        self.routine(routine)
            .map(|sig| 1 + usize::from(sig.owner.is_some()) + sig.params.len())
            .unwrap_or(1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn literal_parsing() {
        assert_eq!(Value::parse_literal("true"), Some(Value::Bool(true)));
        assert_eq!(Value::parse_literal("-12"), Some(Value::Int(-12)));
        assert_eq!(Value::parse_literal("\"a b\""), Some(Value::Str("a b".into())));
        assert_eq!(Value::parse_literal("abc"), None);
        let v = Value::Str("q\"uote".into());
        assert_eq!(Value::parse_literal(&v.to_string()), Some(v));
    }

    #[test]
    fn range_domain_enumeration() {
        let d = Domain { name: "r".into(), values: DomainValues::IntRange { min: -2, max: 1 } };
        assert_eq!(d.size(), 4);
        let all: Vec<_> = d.iter().collect();
        assert_eq!(all, vec![Value::Int(-2), Value::Int(-1), Value::Int(0), Value::Int(1)]);
        assert!(d.contains(&Value::Int(1)));
        assert!(!d.contains(&Value::Int(2)));
        assert!(!d.contains(&Value::Bool(true)));
    }
}
