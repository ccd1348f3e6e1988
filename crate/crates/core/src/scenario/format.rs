//! TOML scenario files (`format_version = 1`). The schema is described in
//! `docs/scenario-format.md`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::Deserialize;

use super::{
    Action, BodyStatement, CmpOp, Comparison, CrashSpec, Guard, Operand, Scenario, ScenarioError,
    MAX_BODY_STATEMENTS,
};
use crate::api::{Api, Domain, DomainId, DomainValues, FieldDecl, Param, Signature, TypeDecl, TypeId, Value, ValueKind};
use crate::trace::{StackFrame, StackTrace};

pub const FORMAT_VERSION: u32 = 1;

/// Largest integer range accepted as a finite domain.
const MAX_RANGE: i128 = 1_000_000;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    format_version: u32,
    name: String,
    #[serde(default)]
    description: String,
    package: String,
    #[serde(default)]
    module: Option<String>,
    #[serde(default)]
    module_file: Option<String>,
    crash: RawCrash,
    #[serde(default)]
    domains: BTreeMap<String, RawDomain>,
    #[serde(default)]
    types: Vec<RawType>,
    routines: Vec<RawRoutine>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCrash {
    id: String,
    #[serde(default = "one")]
    target_frame: usize,
    #[serde(default = "three")]
    oracle_max_calls: usize,
    #[serde(default)]
    minimal_calls: Option<usize>,
    #[serde(default)]
    expect: Option<String>,
}

fn one() -> usize {
    1
}

fn three() -> usize {
    3
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDomain {
    kind: ValueKind,
    #[serde(default)]
    values: Option<Vec<Value>>,
    #[serde(default)]
    min: Option<i64>,
    #[serde(default)]
    max: Option<i64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawType {
    name: String,
    #[serde(default)]
    file: Option<String>,
    #[serde(default)]
    fields: Vec<RawField>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawField {
    name: String,
    domain: String,
    initial: Value,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRoutine {
    name: String,
    #[serde(default)]
    owner: Option<String>,
    #[serde(default)]
    params: Vec<RawParam>,
    body: Vec<RawStatement>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParam {
    name: String,
    domain: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStatement {
    line: u32,
    #[serde(default)]
    when: Option<String>,
    #[serde(default)]
    throw: Option<String>,
    #[serde(default)]
    message: Option<String>,
    #[serde(default)]
    call: Option<String>,
    #[serde(default)]
    args: Vec<Value>,
    #[serde(default)]
    set: Option<String>,
    #[serde(default)]
    value: Option<Value>,
    #[serde(default, rename = "return")]
    ret: Option<bool>,
}

/// Reads and fully validates a scenario file.
pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| ScenarioError::Io { path: path.to_path_buf(), source })?;
    Scenario::from_toml_str(&text, &path.display().to_string())
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    (line, col)
}

fn semantic(msg: impl Into<String>) -> ScenarioError {
    ScenarioError::Semantic(msg.into())
}

impl Scenario {
    /// Parses scenario TOML; `origin` names the source in error locations.
    pub fn from_toml_str(text: &str, origin: &str) -> Result<Scenario, ScenarioError> {
        let raw: RawScenario = toml::from_str(text).map_err(|e| {
            let location = match e.span() {
                Some(span) => {
                    let (l, c) = line_col(text, span.start);
                    format!("{origin}:{l}:{c}")
                }
                None => origin.to_string(),
            };
            ScenarioError::Parse { location, reason: e.message().to_string() }
        })?;
        build(raw)
    }
}

fn build(raw: RawScenario) -> Result<Scenario, ScenarioError> {
    if raw.format_version != FORMAT_VERSION {
        return Err(semantic(format!(
            "unsupported format_version {} (expected {FORMAT_VERSION})",
            raw.format_version
        )));
    }
    let module = raw.module.unwrap_or_else(|| "Module".to_string());
    let module_file = raw.module_file.unwrap_or_else(|| format!("{module}.java"));
    StackFrame::new(format!("{}.{module}", raw.package), "f", module_file.clone(), 1)
        .map_err(|e| semantic(format!("package/module: {e}")))?;

    let domains = raw
        .domains
        .into_iter()
        .map(|(name, d)| build_domain(name, d))
        .collect::<Result<Vec<_>, _>>()?;
    let domain_ids: BTreeMap<&str, DomainId> =
        domains.iter().enumerate().map(|(i, d)| (d.name.as_str(), DomainId(i))).collect();
    let find_domain = |name: &str, ctx: &str| {
        domain_ids.get(name).copied().ok_or_else(|| semantic(format!("{ctx}: unknown domain `{name}`")))
    };

    let mut types = Vec::new();
    let mut seen = BTreeSet::new();
    for t in raw.types {
        if !seen.insert(t.name.clone()) {
            return Err(semantic(format!("duplicate type `{}`", t.name)));
        }
        let file = t.file.unwrap_or_else(|| format!("{}.java", t.name));
        StackFrame::new(format!("{}.{}", raw.package, t.name), "f", file.clone(), 1)
            .map_err(|e| semantic(format!("type `{}`: {e}", t.name)))?;
        let mut fields = Vec::new();
        let mut field_names = BTreeSet::new();
        for f in t.fields {
            if !field_names.insert(f.name.clone()) {
                return Err(semantic(format!("type `{}`: duplicate field `{}`", t.name, f.name)));
            }
            let ctx = format!("field `{}.{}`", t.name, f.name);
            let domain = find_domain(&f.domain, &ctx)?;
            if !domains[domain.0].contains(&f.initial) {
                return Err(semantic(format!("{ctx}: initial value {} outside its domain", f.initial)));
            }
            fields.push(FieldDecl { name: f.name, domain, initial: f.initial });
        }
        types.push(TypeDecl { name: t.name, file, fields });
    }
    let type_id = |name: &str| types.iter().position(|t| t.name == name).map(TypeId);

    let mut signatures = Vec::new();
    let mut routine_names = BTreeSet::new();
    for r in &raw.routines {
        if !routine_names.insert(r.name.clone()) {
            return Err(semantic(format!("duplicate routine `{}`", r.name)));
        }
        StackFrame::new("u", r.name.clone(), "f", 1).map_err(|e| semantic(format!("routine name: {e}")))?;
        let owner = match &r.owner {
            Some(o) => Some(type_id(o).ok_or_else(|| semantic(format!("routine `{}`: unknown owner `{o}`", r.name)))?),
            None => None,
        };
        let mut params = Vec::new();
        let mut param_names = BTreeSet::new();
        for p in &r.params {
            if !param_names.insert(p.name.as_str()) || p.name == "self" {
                return Err(semantic(format!("routine `{}`: bad or duplicate parameter `{}`", r.name, p.name)));
            }
            let domain = find_domain(&p.domain, &format!("routine `{}`", r.name))?;
            params.push(Param { name: p.name.clone(), domain });
        }
        signatures.push(Signature { name: r.name.clone(), owner, params });
    }
    let api = Api::new(types, signatures, domains);

    let mut bodies = Vec::new();
    for (idx, r) in raw.routines.iter().enumerate() {
        bodies.push(build_body(&api, idx, r)?);
    }

    let expect_reachable = match raw.crash.expect.as_deref() {
        None => None,
        Some("reachable") => Some(true),
        Some("unreachable") => Some(false),
        Some(other) => return Err(semantic(format!("crash.expect must be reachable|unreachable, got `{other}`"))),
    };
    if raw.crash.target_frame == 0 {
        return Err(semantic("crash.target_frame must be >= 1"));
    }
    let crash = CrashSpec {
        id: raw.crash.id,
        target_frame: raw.crash.target_frame,
        oracle_max_calls: raw.crash.oracle_max_calls,
        minimal_calls: raw.crash.minimal_calls,
        expect_reachable,
    };
    Ok(Scenario::assemble(raw.name, raw.description, raw.package, module, module_file, api, bodies, crash))
}

fn build_domain(name: String, d: RawDomain) -> Result<Domain, ScenarioError> {
    let ctx = format!("domain `{name}`");
    let values = match (d.kind, d.values, d.min, d.max) {
        (ValueKind::Bool, None, None, None) => DomainValues::Bool,
        (ValueKind::Int, None, Some(min), Some(max)) => {
            if min > max || i128::from(max) - i128::from(min) + 1 > MAX_RANGE {
                return Err(semantic(format!("{ctx}: unbounded or empty range {min}..={max}")));
            }
            DomainValues::IntRange { min, max }
        }
        (ValueKind::Int, Some(vals), None, None) => {
            let ints = vals
                .into_iter()
                .map(|v| match v {
                    Value::Int(i) => Ok(i),
                    other => Err(semantic(format!("{ctx}: non-integer member {other}"))),
                })
                .collect::<Result<Vec<_>, _>>()?;
            DomainValues::IntSet(ints)
        }
        (ValueKind::Str, Some(vals), None, None) => {
            let strs = vals
                .into_iter()
                .map(|v| match v {
                    Value::Str(s) => Ok(s),
                    other => Err(semantic(format!("{ctx}: non-string member {other}"))),
                })
                .collect::<Result<Vec<_>, _>>()?;
            DomainValues::StrSet(strs)
        }
        (ValueKind::Int, None, _, _) => {
            return Err(semantic(format!("{ctx}: unbounded domain (give `values` or both `min` and `max`)")))
        }
        _ => return Err(semantic(format!("{ctx}: fields do not match kind `{}`", d.kind))),
    };
    let domain = Domain { name, values };
    if domain.size() == 0 {
        return Err(semantic(format!("{ctx}: empty domain")));
    }
    let distinct: BTreeSet<Value> = domain.iter().collect();
    if distinct.len() as u64 != domain.size() {
        return Err(semantic(format!("{ctx}: duplicate members")));
    }
    Ok(domain)
}

struct BodyContext<'a> {
    api: &'a Api,
    sig: &'a Signature,
    ctx: String,
}

impl BodyContext<'_> {
    fn err(&self, line: u32, msg: impl fmt::Display) -> ScenarioError {
        semantic(format!("{} line {line}: {msg}", self.ctx))
    }

    fn field(&self, name: &str, line: u32) -> Result<(usize, &FieldDecl), ScenarioError> {
        let owner = self
            .sig
            .owner
            .and_then(|o| self.api.ty(o))
            .ok_or_else(|| self.err(line, format!("`self.{name}` used outside a method")))?;
        owner
            .fields
            .iter()
            .enumerate()
            .find(|(_, f)| f.name == name)
            .ok_or_else(|| self.err(line, format!("unknown field `{name}`")))
    }

    /// Resolves an operand and its value kind.
    fn operand(&self, raw: &Value, line: u32) -> Result<(Operand, ValueKind), ScenarioError> {
        let text = match raw {
            Value::Str(s) => s.trim(),
            other => return Ok((Operand::Const(other.clone()), other.kind())),
        };
        if let Some(v) = Value::parse_literal(text) {
            let kind = v.kind();
            return Ok((Operand::Const(v), kind));
        }
        if let Some(field) = text.strip_prefix("self.") {
            let (idx, decl) = self.field(field, line)?;
            return Ok((Operand::Field(idx), self.api.domains[decl.domain.0].kind()));
        }
        let (idx, p) = self
            .sig
            .params
            .iter()
            .enumerate()
            .find(|(_, p)| p.name == text)
            .ok_or_else(|| self.err(line, format!("unknown parameter `{text}`")))?;
        Ok((Operand::Param(idx), self.api.domains[p.domain.0].kind()))
    }

    fn guard(&self, text: &str, line: u32) -> Result<Guard, ScenarioError> {
        let mut atoms = Vec::new();
        for atom in text.split("&&") {
            let atom = atom.trim();
            let (pos, op_text) = ["==", "!=", "<=", ">=", "<", ">"]
                .iter()
                .find_map(|op| atom.find(op).map(|p| (p, *op)))
                .ok_or_else(|| self.err(line, format!("`{atom}` is not a comparison")))?;
            let lhs_text = Value::Str(atom[..pos].to_string());
            let rhs_text = Value::Str(atom[pos + op_text.len()..].to_string());
            let (lhs, lk) = self.operand(&lhs_text, line)?;
            let (rhs, rk) = self.operand(&rhs_text, line)?;
            if lk != rk {
                return Err(self.err(line, format!("`{atom}` compares {lk} with {rk}")));
            }
            let (lhs, op, rhs) = match op_text {
                "==" => (lhs, CmpOp::Eq, rhs),
                "!=" => (lhs, CmpOp::Ne, rhs),
                "<" => (lhs, CmpOp::Lt, rhs),
                "<=" => (lhs, CmpOp::Le, rhs),
                ">" => (rhs, CmpOp::Lt, lhs),
                _ => (rhs, CmpOp::Le, lhs),
            };
            if matches!(op, CmpOp::Lt | CmpOp::Le) && lk != ValueKind::Int {
                return Err(self.err(line, format!("ordering comparison on {lk} in `{atom}`")));
            }
            atoms.push(Comparison { lhs, op, rhs });
        }
        Ok(Guard { atoms })
    }
}

fn build_body(api: &Api, idx: usize, r: &RawRoutine) -> Result<Vec<BodyStatement>, ScenarioError> {
    let sig = &api.routines[idx];
    let cx = BodyContext { api, sig, ctx: format!("routine `{}`", r.name) };
    if r.body.len() > MAX_BODY_STATEMENTS {
        return Err(semantic(format!("{}: more than {MAX_BODY_STATEMENTS} statements", cx.ctx)));
    }
    let mut out = Vec::with_capacity(r.body.len());
    let mut last_line = 0u32;
    for st in &r.body {
        let line = st.line;
        if line <= last_line {
            return Err(cx.err(line, "source lines must be positive and strictly increasing"));
        }
        last_line = line;
        let kinds = [st.throw.is_some(), st.call.is_some(), st.set.is_some(), st.ret.is_some()];
        if kinds.iter().filter(|k| **k).count() != 1 {
            return Err(cx.err(line, "statement needs exactly one of throw/call/set/return"));
        }
        let guard = st.when.as_deref().map(|w| cx.guard(w, line)).transpose()?;
        let action = if let Some(exception) = &st.throw {
            StackTrace::new(exception.clone(), st.message.clone(), vec![StackFrame::new("u", "r", "f", 1).expect("static")])
                .map_err(|e| cx.err(line, e))?;
            Action::Throw { exception: exception.clone(), message: st.message.clone() }
        } else if let Some(callee_name) = &st.call {
            let callee = api
                .routine_id(callee_name)
                .ok_or_else(|| cx.err(line, format!("call to undeclared routine `{callee_name}`")))?;
            let callee_sig = &api.routines[callee.0];
            if callee_sig.owner.is_some() && callee_sig.owner != sig.owner {
                return Err(cx.err(line, format!("`{callee_name}` is a method of another type")));
            }
            if st.args.len() != callee_sig.params.len() {
                return Err(cx.err(line, format!("`{callee_name}` takes {} arguments", callee_sig.params.len())));
            }
            let mut args = Vec::new();
            for (a, p) in st.args.iter().zip(&callee_sig.params) {
                let (operand, kind) = cx.operand(a, line)?;
                if kind != api.domains[p.domain.0].kind() {
                    return Err(cx.err(line, format!("argument for `{}` has kind {kind}", p.name)));
                }
                args.push(operand);
            }
            Action::Call { routine: callee, args }
        } else if let Some(field) = &st.set {
            let (fidx, decl) = cx.field(field, line)?;
            let raw_value = st.value.as_ref().ok_or_else(|| cx.err(line, "`set` needs a `value`"))?;
            let (value, kind) = cx.operand(raw_value, line)?;
            if kind != api.domains[decl.domain.0].kind() {
                return Err(cx.err(line, format!("value of kind {kind} for field `{field}`")));
            }
            Action::SetField { field: fidx, value }
        } else {
            Action::Return
        };
        if !matches!(action, Action::Throw { .. }) && st.message.is_some() {
            return Err(cx.err(line, "`message` only applies to throw"));
        }
        out.push(BodyStatement { line, guard, action });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
format_version = 1
name = "minimal"
package = "org.example"

[crash]
id = "EX-1"

[[routines]]
name = "fail"
body = [{ line = 3, throw = "java.lang.IllegalStateException" }]
"#;

    #[test]
    fn minimal_scenario_loads() {
        let s = Scenario::from_toml_str(MINIMAL, "minimal.scn").unwrap();
        assert_eq!(s.api.routines.len(), 1);
        assert_eq!(s.unit_path(crate::api::RoutineId(0)), "org.example.Module");
        assert_eq!(s.crash.target_frame, 1);
    }

    #[test]
    fn undeclared_call_is_semantic_error() {
        let text = MINIMAL.replace(
            "body = [{ line = 3, throw = \"java.lang.IllegalStateException\" }]",
            "body = [{ line = 3, call = \"ghost\" }]",
        );
        let err = Scenario::from_toml_str(&text, "x").unwrap_err();
        assert!(matches!(err, ScenarioError::Semantic(ref m) if m.contains("undeclared")), "{err}");
    }

    #[test]
    fn non_increasing_lines_rejected() {
        let text = MINIMAL.replace(
            "body = [{ line = 3, throw = \"java.lang.IllegalStateException\" }]",
            "body = [{ line = 3, return = true }, { line = 3, return = true }]",
        );
        assert!(matches!(Scenario::from_toml_str(&text, "x"), Err(ScenarioError::Semantic(_))));
    }

    #[test]
    fn unbounded_domain_rejected() {
        let text = format!("{MINIMAL}\n[domains.big]\nkind = \"int\"\nmin = 0\n");
        let err = Scenario::from_toml_str(&text, "x").unwrap_err();
        assert!(matches!(err, ScenarioError::Semantic(ref m) if m.contains("unbounded")), "{err}");
        let text = format!("{MINIMAL}\n[domains.big]\nkind = \"int\"\nmin = 0\nmax = 100000000\n");
        assert!(Scenario::from_toml_str(&text, "x").is_err());
    }

    #[test]
    fn syntax_error_has_location() {
        let err = Scenario::from_toml_str("format_version = 1\nname = \n", "bad.scn").unwrap_err();
        match err {
            ScenarioError::Parse { location, .. } => assert!(location.starts_with("bad.scn:2:"), "{location}"),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn guards_resolve_and_swap_greater_than() {
        let text = r#"
format_version = 1
name = "g"
package = "p"
[crash]
id = "G-1"
[domains.small]
kind = "int"
min = 0
max = 9
[[types]]
name = "T"
fields = [{ name = "f", domain = "small", initial = 0 }]
[[routines]]
name = "m"
owner = "T"
params = [{ name = "x", domain = "small" }]
body = [
  { line = 5, set = "f", value = "x" },
  { line = 6, when = "x > 3 && self.f != 2", throw = "E", message = "boom" },
]
"#;
        let s = Scenario::from_toml_str(text, "g").unwrap();
        let body = s.body(crate::api::RoutineId(0));
        let guard = body[1].guard.as_ref().unwrap();
        assert_eq!(guard.atoms[0], Comparison { lhs: Operand::Const(Value::Int(3)), op: CmpOp::Lt, rhs: Operand::Param(0) });
        assert_eq!(guard.atoms[1].lhs, Operand::Field(0));
    }

    #[test]
    fn kind_mismatch_in_guard() {
        let text = r#"
format_version = 1
name = "g"
package = "p"
[crash]
id = "G-1"
[domains.flag]
kind = "bool"
[[routines]]
name = "m"
params = [{ name = "b", domain = "flag" }]
body = [{ line = 1, when = "b < 3", throw = "E" }]
"#;
        assert!(matches!(Scenario::from_toml_str(text, "g"), Err(ScenarioError::Semantic(_))));
    }
}
