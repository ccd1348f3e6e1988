//! Line-oriented genome text, one statement per line:
//!
//! ```text
//! target drain
//! v0 = new Buffer
//! v1: small = 3
//! v0.push(v1)
//! v0.drain()
//! ```
//!
//! Slots print as `v<index of defining statement>`; an unbound reference
//! prints as `?`. Blank lines and lines starting with `#` are ignored.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use super::{Genome, Statement, UNBOUND};
use crate::api::{Api, Value};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("genome text line {line}: {reason}")]
pub struct GenomeTextError {
    pub line: usize,
    pub reason: String,
}

fn slot_name(slot: usize) -> String {
    if slot == UNBOUND {
        "?".to_string()
    } else {
        format!("v{slot}")
    }
}

impl Genome {
    pub fn to_text(&self, api: &Api) -> String {
        let name = |opt: Option<&str>| opt.unwrap_or("<unknown>").to_string();
        let mut out = String::new();
        let _ = writeln!(out, "target {}", name(api.routine(self.target).map(|r| r.name.as_str())));
        for (i, st) in self.statements.iter().enumerate() {
            match st {
                Statement::Construct { ty } => {
                    let _ = writeln!(out, "v{i} = new {}", name(api.ty(*ty).map(|t| t.name.as_str())));
                }
                Statement::SetValue { domain, value } => {
                    let d = name(api.domain(*domain).map(|d| d.name.as_str()));
                    let _ = writeln!(out, "v{i}: {d} = {value}");
                }
                Statement::Invoke { routine, receiver, args } => {
                    if let Some(r) = receiver {
                        let _ = write!(out, "{}.", slot_name(*r));
                    }
                    let args: Vec<String> = args.iter().map(|a| slot_name(*a)).collect();
                    let r = name(api.routine(*routine).map(|r| r.name.as_str()));
                    let _ = writeln!(out, "{r}({})", args.join(", "));
                }
            }
        }
        out
    }

    pub fn parse(text: &str, api: &Api) -> Result<Genome, GenomeTextError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let err = |line: usize, reason: String| GenomeTextError { line, reason };

        let (no, header) = lines.next().ok_or_else(|| err(1, "missing `target <routine>` line".into()))?;
        let target_name = header
            .strip_prefix("target ")
            .ok_or_else(|| err(no, "expected `target <routine>`".into()))?
            .trim();
        let target = api
            .routine_id(target_name)
            .ok_or_else(|| err(no, format!("unknown routine `{target_name}`")))?;

        let mut slots: BTreeMap<String, usize> = BTreeMap::new();
        let mut statements = Vec::new();
        for (no, line) in lines {
            let resolve = |name: &str| -> Result<usize, GenomeTextError> {
                let name = name.trim();
                if name == "?" {
                    return Ok(UNBOUND);
                }
                slots.get(name).copied().ok_or_else(|| err(no, format!("unknown slot `{name}`")))
            };
            let index = statements.len();
            if let Some((lhs, rhs)) = line.split_once(" = ") {
                if let Some((slot, domain)) = lhs.split_once(':') {
                    let domain_name = domain.trim();
                    let domain = api
                        .domain_id(domain_name)
                        .ok_or_else(|| err(no, format!("unknown domain `{domain_name}`")))?;
                    let value = Value::parse_literal(rhs)
                        .ok_or_else(|| err(no, format!("invalid literal `{}`", rhs.trim())))?;
                    slots.insert(slot.trim().to_string(), index);
                    statements.push(Statement::SetValue { domain, value });
                } else {
                    let ty_name = rhs
                        .trim()
                        .strip_prefix("new ")
                        .ok_or_else(|| err(no, "expected `<slot> = new <Type>` or `<slot>: <domain> = <value>`".into()))?
                        .trim();
                    let ty = api.type_id(ty_name).ok_or_else(|| err(no, format!("unknown type `{ty_name}`")))?;
                    slots.insert(lhs.trim().to_string(), index);
                    statements.push(Statement::Construct { ty });
                }
            } else {
                let call = line.strip_suffix(')').ok_or_else(|| err(no, "expected a call `f(...)`".into()))?;
                let (callee, arg_text) = call.split_once('(').ok_or_else(|| err(no, "expected `(`".into()))?;
                let (receiver, routine_name) = match callee.split_once('.') {
                    Some((recv, r)) => (Some(resolve(recv)?), r.trim()),
                    None => (None, callee.trim()),
                };
                let routine = api
                    .routine_id(routine_name)
                    .ok_or_else(|| err(no, format!("unknown routine `{routine_name}`")))?;
                let args = if arg_text.trim().is_empty() {
                    Vec::new()
                } else {
                    arg_text.split(',').map(resolve).collect::<Result<_, _>>()?
                };
                statements.push(Statement::Invoke { routine, receiver, args });
            }
        }
        Ok(Genome::new(statements, target))
    }
}
