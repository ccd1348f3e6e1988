//! Backend for programs in an external scripting runtime (a Python
//! interpreter by default).
//!
//! A genome is rendered as a standalone script, run in a fresh subprocess
//! under a timeout, and its traceback parsed back into a [`StackTrace`]. The
//! runtime is not instrumented, so approach data is coarse: only whether the
//! crash line and the target routine show up in the traceback.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::LazyLock;
use std::time::Duration;

use regex::Regex;
use serde::Deserialize;
use thiserror::Error;
use wait_timeout::ChildExt;

use crate::api::{Api, Domain, DomainValues, Param, Signature, TypeDecl, Value, ValueKind};
use crate::backend::{Backend, BackendError};
use crate::fitness::ApproachData;
use crate::genome::{Genome, Statement};
use crate::scenario::{ExecutionOutcome, OutcomeKind};
use crate::trace::{CrashCase, RawTrace, StackFrame, StackTrace, TraceGrammar};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(5);

/// Name of the rendered script inside its temporary directory.
const SCRIPT_NAME: &str = "crash_test.py";

#[derive(Debug, Error)]
pub enum ScriptError {
    #[error("target manifest {path}: {reason}")]
    Manifest { path: PathBuf, reason: String },
    #[error("interpreter `{0}` not found")]
    InterpreterMissing(String),
    #[error("statement {index} cannot be rendered: {reason}")]
    UnrenderableStatement { index: usize, reason: String },
    #[error("unparsable traceback: {reason}")]
    UnparsableTraceback {
        reason: String,
        /// Everything the script wrote to its error stream.
        raw: String,
        script: String,
    },
    #[error("script execution failed: {0}")]
    Io(#[from] io::Error),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawManifest {
    format_version: u32,
    #[serde(default = "default_interpreter")]
    interpreter: Vec<String>,
    module: String,
    #[serde(default)]
    module_dir: Option<PathBuf>,
    #[serde(default)]
    timeout_secs: Option<f64>,
    #[serde(default)]
    grammar: Option<String>,
    #[serde(default)]
    domains: BTreeMap<String, RawDomain>,
    #[serde(default)]
    types: Vec<RawType>,
    routines: Vec<RawRoutine>,
}

fn default_interpreter() -> Vec<String> {
    vec!["python3".to_string()]
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
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRoutine {
    name: String,
    #[serde(default)]
    owner: Option<String>,
    #[serde(default)]
    params: Vec<RawParam>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParam {
    name: String,
    domain: String,
}

static IDENT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^[A-Za-z_][A-Za-z0-9_]*$").expect("static regex"));

const KEYWORDS: &[&str] = &[
    "False", "None", "True", "and", "as", "assert", "async", "await", "break", "class", "continue", "def", "del",
    "elif", "else", "except", "finally", "for", "from", "global", "if", "import", "in", "is", "lambda", "nonlocal",
    "not", "or", "pass", "raise", "return", "try", "while", "with", "yield",
];

fn is_identifier(name: &str) -> bool {
    IDENT.is_match(name) && !KEYWORDS.contains(&name)
}

/// A module under test and the surface the search may call.
#[derive(Debug, Clone)]
pub struct ScriptTarget {
    pub interpreter: Vec<String>,
    /// Import name of the module under test.
    pub module: String,
    /// Directory put on the module search path.
    pub module_dir: PathBuf,
    pub api: Api,
    pub grammar: TraceGrammar,
    pub timeout: Duration,
}

impl ScriptTarget {
    /// Loads a TOML target manifest. A relative `module_dir` is resolved
    /// against the manifest's directory.
    pub fn load(path: &Path) -> Result<ScriptTarget, ScriptError> {
        let err = |reason: String| ScriptError::Manifest { path: path.to_path_buf(), reason };
        let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        let raw: RawManifest = toml::from_str(&text).map_err(|e| err(e.message().to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_manifest(raw, base).map_err(err)
    }

    fn from_manifest(raw: RawManifest, base: &Path) -> Result<ScriptTarget, String> {
        if raw.format_version != 1 {
            return Err(format!("unsupported format_version {}", raw.format_version));
        }
        if raw.interpreter.is_empty() {
            return Err("interpreter command is empty".into());
        }
        if !raw.module.split('.').all(is_identifier) {
            return Err(format!("`{}` is not a module name", raw.module));
        }
        let grammar: TraceGrammar = match raw.grammar.as_deref() {
            None => TraceGrammar::ScriptRuntime,
            Some(g) => g.parse().map_err(|e| format!("{e}"))?,
        };
        let timeout = match raw.timeout_secs {
            None => DEFAULT_TIMEOUT,
            Some(s) if s > 0.0 && s.is_finite() => Duration::from_secs_f64(s),
            Some(s) => return Err(format!("timeout_secs must be positive, got {s}")),
        };

        let mut domains = Vec::new();
        for (name, d) in raw.domains {
            let values = match (d.kind, d.values, d.min, d.max) {
                (ValueKind::Bool, None, None, None) => DomainValues::Bool,
                (ValueKind::Int, None, Some(min), Some(max)) if min <= max && max - min < 1_000_000 => {
                    DomainValues::IntRange { min, max }
                }
                (ValueKind::Int, Some(v), None, None) => DomainValues::IntSet(
                    v.into_iter()
                        .map(|x| match x {
                            Value::Int(i) => Ok(i),
                            other => Err(format!("domain `{name}`: non-integer {other}")),
                        })
                        .collect::<Result<_, _>>()?,
                ),
                (ValueKind::Str, Some(v), None, None) => DomainValues::StrSet(
                    v.into_iter()
                        .map(|x| match x {
                            Value::Str(s) => Ok(s),
                            other => Err(format!("domain `{name}`: non-string {other}")),
                        })
                        .collect::<Result<_, _>>()?,
                ),
                _ => return Err(format!("domain `{name}`: unbounded or inconsistent definition")),
            };
            let domain = Domain { name, values };
            if domain.size() == 0 {
                return Err(format!("domain `{}` is empty", domain.name));
            }
            domains.push(domain);
        }
        let domain_of = |name: &str| {
            domains.iter().position(|d| d.name == name).map(crate::api::DomainId).ok_or(format!("unknown domain `{name}`"))
        };

        let mut names = BTreeSet::new();
        let mut types = Vec::new();
        for t in raw.types {
            if !is_identifier(&t.name) || !names.insert(t.name.clone()) {
                return Err(format!("bad or duplicate type name `{}`", t.name));
            }
            types.push(TypeDecl { name: t.name, file: format!("{}.py", raw.module), fields: Vec::new() });
        }
        let mut routines = Vec::new();
        let mut routine_names = BTreeSet::new();
        for r in raw.routines {
            if !is_identifier(&r.name) || !routine_names.insert(r.name.clone()) {
                return Err(format!("bad or duplicate routine name `{}`", r.name));
            }
            let owner = match r.owner {
                None => None,
                Some(o) => Some(
                    types
                        .iter()
                        .position(|t| t.name == o)
                        .map(crate::api::TypeId)
                        .ok_or(format!("routine `{}`: unknown owner `{o}`", r.name))?,
                ),
            };
            let params = r
                .params
                .into_iter()
                .map(|p| Ok(Param { domain: domain_of(&p.domain)?, name: p.name }))
                .collect::<Result<Vec<_>, String>>()?;
            routines.push(Signature { name: r.name, owner, params });
        }
        if routines.is_empty() {
            return Err("no routines declared".into());
        }
        let module_dir = match raw.module_dir {
            Some(d) if d.is_absolute() => d,
            Some(d) => base.join(d),
            None => base.to_path_buf(),
        };
        Ok(ScriptTarget {
            interpreter: raw.interpreter,
            module: raw.module,
            module_dir,
            api: Api::new(types, routines, domains),
            grammar,
            timeout,
        })
    }

    fn module_base(&self) -> &str {
        self.module.rsplit('.').next().unwrap_or(&self.module)
    }

    /// Parses runtime output into a trace of frames inside the module under
    /// test only. Frames are rewritten to unit `<module>[.<Class>]` and the
    /// file's base name.
    pub fn parse_traceback(&self, text: &str) -> Result<StackTrace, String> {
        let raw = RawTrace::parse(text).map_err(|e| e.to_string())?;
        let mut frames = Vec::new();
        for f in raw.frames.iter().rev() {
            if f.module_name() != self.module_base() {
                continue;
            }
            let (unit, routine) = match f.routine.rsplit_once('.') {
                Some((class, name)) => (format!("{}.{class}", self.module), name),
                None => (self.module.clone(), f.routine.as_str()),
            };
            let file = f.file.rsplit(['/', '\\']).next().unwrap_or(&f.file);
            frames.push(StackFrame::new(unit, routine, file, f.line).map_err(|e| e.to_string())?);
        }
        if frames.is_empty() {
            return Err(format!("no frame inside module `{}`", self.module));
        }
        StackTrace::new(raw.exception_type, raw.message, frames).map_err(|e| e.to_string())
    }

    /// Reads a reference trace in the target's grammar.
    pub fn read_trace(&self, text: &str) -> Result<StackTrace, String> {
        match self.grammar {
            TraceGrammar::ScriptRuntime => self.parse_traceback(text),
            g => crate::trace::parse_trace(text, g).map_err(|e| e.to_string()),
        }
    }
}

fn literal(v: &Value) -> String {
    match v {
        Value::Bool(true) => "True".into(),
        Value::Bool(false) => "False".into(),
        Value::Int(i) => i.to_string(),
        // JSON string escapes are valid Python string escapes
        Value::Str(s) => serde_json::to_string(s).expect("string serialization"),
    }
}

/// Renders the genome as a self-contained script. The module under test is
/// imported as `m`; exceptions propagate to the runtime's default handler.
pub fn render_script(genome: &Genome, target: &ScriptTarget) -> Result<String, ScriptError> {
    let api = &target.api;
    let mut out = format!("import {} as m\n", target.module);
    let slot = |index: usize, r: usize| {
        if r < index {
            Ok(format!("v{r}"))
        } else {
            Err(ScriptError::UnrenderableStatement { index, reason: "unbound or forward reference".into() })
        }
    };
    for (i, st) in genome.statements.iter().enumerate() {
        let unrenderable = |reason: &str| ScriptError::UnrenderableStatement { index: i, reason: reason.into() };
        match st {
            Statement::Construct { ty } => {
                let t = api.ty(*ty).ok_or_else(|| unrenderable("unknown type"))?;
                out.push_str(&format!("v{i} = m.{}()\n", t.name));
            }
            Statement::SetValue { value, .. } => out.push_str(&format!("v{i} = {}\n", literal(value))),
            Statement::Invoke { routine, receiver, args } => {
                let sig = api.routine(*routine).ok_or_else(|| unrenderable("unknown routine"))?;
                let callee = match receiver {
                    Some(r) => format!("{}.{}", slot(i, *r)?, sig.name),
                    None => format!("m.{}", sig.name),
                };
                let args = args.iter().map(|a| slot(i, *a)).collect::<Result<Vec<_>, _>>()?;
                out.push_str(&format!("{callee}({})\n", args.join(", ")));
            }
        }
    }
    Ok(out)
}

/// Runs a rendered script in a fresh temporary directory.
///
/// A clean exit is `Completed`, a timeout `BudgetExceeded`, and a non-zero
/// exit with a parsable traceback `Crashed`. `covered_lines` holds the
/// frames of the crash trace; approach data is left to the caller.
pub fn execute_script(script: &str, target: &ScriptTarget) -> Result<ExecutionOutcome, ScriptError> {
    let dir = tempfile::tempdir()?;
    let script_path = dir.path().join(SCRIPT_NAME);
    std::fs::write(&script_path, script)?;
    let stderr_path = dir.path().join("stderr.txt");
    let stderr = File::create(&stderr_path)?;

    let mut cmd = Command::new(&target.interpreter[0]);
    cmd.args(&target.interpreter[1..])
        .arg(&script_path)
        .current_dir(dir.path())
        .env("PYTHONPATH", &target.module_dir)
        .env("PYTHONDONTWRITEBYTECODE", "1")
        .env("PYTHONHASHSEED", "0")
        .stdin(Stdio::null())
        .stdout(Stdio::null())
        .stderr(stderr);
    let mut child = cmd.spawn().map_err(|e| match e.kind() {
        io::ErrorKind::NotFound => ScriptError::InterpreterMissing(target.interpreter[0].clone()),
        _ => ScriptError::Io(e),
    })?;
    let status = match child.wait_timeout(target.timeout)? {
        Some(status) => status,
        None => {
            child.kill()?;
            child.wait()?;
            return Ok(ExecutionOutcome {
                kind: OutcomeKind::BudgetExceeded,
                steps_executed: 0,
                covered_lines: BTreeSet::new(),
                closest_approach: None,
            });
        }
    };
    if status.success() {
        return Ok(ExecutionOutcome {
            kind: OutcomeKind::Completed,
            steps_executed: 0,
            covered_lines: BTreeSet::new(),
            closest_approach: None,
        });
    }
    let raw = std::fs::read_to_string(&stderr_path)?;
    let trace = target.parse_traceback(&raw).map_err(|reason| ScriptError::UnparsableTraceback {
        reason,
        raw: raw.clone(),
        script: script.to_string(),
    })?;
    let covered_lines = trace.frames().iter().map(|f| (f.routine().to_string(), f.line())).collect();
    Ok(ExecutionOutcome { kind: OutcomeKind::Crashed(trace), steps_executed: 0, covered_lines, closest_approach: None })
}

/// Coarse approach data: reached when the crash line appears in the trace,
/// one level away when only the target routine does, two otherwise.
pub fn coarse_approach(case: &CrashCase, outcome: &ExecutionOutcome) -> ApproachData {
    let line = case.trace().innermost();
    let Some(trace) = outcome.crash_trace() else {
        return ApproachData { approach_level: 2, branch_distance: 1.0 };
    };
    let frames = trace.frames();
    let hit = frames.iter().any(|f| f.routine() == line.routine() && f.line() == line.line());
    if hit {
        ApproachData::REACHED
    } else if frames.iter().any(|f| f.routine() == case.target_routine()) {
        ApproachData { approach_level: 1, branch_distance: 1.0 }
    } else {
        ApproachData { approach_level: 2, branch_distance: 1.0 }
    }
}

/// Executes genomes as scripts; failed scripts are kept in
/// `failed_scripts` when that is set.
#[derive(Debug, Clone)]
pub struct ScriptBackend {
    target: ScriptTarget,
    case: CrashCase,
    failed_scripts: Option<PathBuf>,
}

impl ScriptBackend {
    pub fn new(target: ScriptTarget, case: CrashCase) -> Self {
        ScriptBackend { target, case, failed_scripts: None }
    }

    pub fn keep_failed_scripts(mut self, dir: impl Into<PathBuf>) -> Self {
        self.failed_scripts = Some(dir.into());
        self
    }

    pub fn target(&self) -> &ScriptTarget {
        &self.target
    }

    fn retain(&self, script: &str, raw: &str) {
        let Some(dir) = &self.failed_scripts else { return };
        let n = std::fs::read_dir(dir).map(|d| d.count()).unwrap_or(0);
        let path = dir.join(format!("failed-{n:04}.py"));
        let note: String = raw.lines().map(|l| format!("# {l}\n")).collect();
        let _ = std::fs::create_dir_all(dir).and_then(|_| {
            let mut f = File::create(path)?;
            f.write_all(script.as_bytes())?;
            f.write_all(note.as_bytes())
        });
    }
}

impl Backend for ScriptBackend {
    fn api(&self) -> &Api {
        &self.target.api
    }

    fn execute(&self, genome: &Genome) -> Result<ExecutionOutcome, BackendError> {
        let script = render_script(genome, &self.target)?;
        match execute_script(&script, &self.target) {
            Ok(mut outcome) => {
                outcome.closest_approach = Some(coarse_approach(&self.case, &outcome));
                Ok(outcome)
            }
            Err(e) => {
                if let ScriptError::UnparsableTraceback { raw, script, .. } = &e {
                    self.retain(script, raw);
                }
                Err(e.into())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn target() -> ScriptTarget {
        let manifest = r#"
format_version = 1
module = "shapes"
[domains.n]
kind = "int"
min = 0
max = 3
[domains.label]
kind = "string"
values = ["a", "b\"q"]
[[types]]
name = "Box"
[[routines]]
name = "put"
owner = "Box"
params = [{ name = "x", domain = "n" }, { name = "s", domain = "label" }]
[[routines]]
name = "ratio"
params = [{ name = "x", domain = "n" }]
"#;
        ScriptTarget::from_manifest(toml::from_str(manifest).unwrap(), Path::new("/tmp/t")).unwrap()
    }

    #[test]
    fn renders_statements_in_order() {
        let t = target();
        let g = Genome::parse("target put\nb = new Box\nx: n = 2\ns: label = \"b\\\"q\"\nb.put(x, s)\n", &t.api).unwrap();
        let script = render_script(&g, &t).unwrap();
        assert_eq!(script, "import shapes as m\nv0 = m.Box()\nv1 = 2\nv2 = \"b\\\"q\"\nv0.put(v1, v2)\n");
        assert_eq!(render_script(&g, &t).unwrap(), script);
    }

    #[test]
    fn traceback_is_filtered_to_module() {
        let t = target();
        let text = "Traceback (most recent call last):\n  File \"/tmp/x/crash_test.py\", line 3, in <module>\n    m.ratio(v0)\n  File \"/tmp/t/shapes.py\", line 7, in ratio\n    return 1 // x\nZeroDivisionError: integer division or modulo by zero\n";
        let trace = t.parse_traceback(text).unwrap();
        assert_eq!(trace.frames().len(), 1);
        assert_eq!(trace.innermost().to_string(), "shapes.ratio(shapes.py:7)");
        assert_eq!(trace.exception_type(), "ZeroDivisionError");
    }

    #[test]
    fn foreign_crash_is_unparsable() {
        let t = target();
        let text = "Traceback (most recent call last):\n  File \"/tmp/x/crash_test.py\", line 1, in <module>\n    import shapes as m\nModuleNotFoundError: No module named 'shapes'\n";
        assert!(t.parse_traceback(text).is_err());
    }

    #[test]
    fn missing_interpreter() {
        let mut t = target();
        t.interpreter = vec!["definitely-not-an-interpreter-xyz".into()];
        assert!(matches!(execute_script("pass\n", &t), Err(ScriptError::InterpreterMissing(_))));
    }
}
