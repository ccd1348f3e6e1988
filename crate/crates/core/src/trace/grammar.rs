use std::fmt::Write as _;
use std::str::FromStr;
use std::sync::LazyLock;

use regex::Regex;

use super::{StackFrame, StackTrace, TraceError};

/// Selects the header and frame productions used to read and write traces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TraceGrammar {
    /// `Type: message` followed by tab-indented `at unit.routine(File:line)` lines.
    Canonical,
    /// Interpreter tracebacks: `Traceback (most recent call last):`, outermost
    /// frame first, exception line last.
    ScriptRuntime,
}

impl TraceGrammar {
    pub fn name(self) -> &'static str {
        match self {
            TraceGrammar::Canonical => "canonical",
            TraceGrammar::ScriptRuntime => "script-runtime",
        }
    }
}

impl FromStr for TraceGrammar {
    type Err = TraceError;
    fn from_str(s: &str) -> Result<Self, TraceError> {
        match s {
            "canonical" => Ok(TraceGrammar::Canonical),
            "script-runtime" => Ok(TraceGrammar::ScriptRuntime),
            other => Err(TraceError::UnknownGrammar(other.to_string())),
        }
    }
}

static HEADER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^([^\s:]+)(?:: (.*))?$").expect("header regex"));
static CANONICAL_FRAME: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^\tat ([^\s()]+)\.([^\s.()]+)\(([^\s:()]+):([0-9]+)\)$").expect("frame regex")
});
static SCRIPT_HEADER: &str = "Traceback (most recent call last):";
static SCRIPT_FRAME: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r#"^  File "([^"]+)", line ([0-9]+), in (\S+)$"#).expect("script frame regex")
});

fn malformed(line: usize, reason: impl Into<String>) -> TraceError {
    TraceError::MalformedTrace { line, reason: reason.into() }
}

fn parse_line_number(text: &str, line: usize) -> Result<u32, TraceError> {
    match text.parse::<u32>() {
        Ok(n) if n >= 1 => Ok(n),
        _ => Err(malformed(line, format!("invalid source line {text:?}"))),
    }
}

/// Content lines paired with their 1-based line numbers; trailing blank lines
/// and carriage returns are dropped.
fn numbered_lines(text: &str) -> Vec<(usize, &str)> {
    let mut lines: Vec<(usize, &str)> =
        text.lines().enumerate().map(|(i, l)| (i + 1, l.strip_suffix('\r').unwrap_or(l))).collect();
    while lines.last().is_some_and(|(_, l)| l.trim().is_empty()) {
        lines.pop();
    }
    lines
}

fn parse_header(text: &str, line: usize) -> Result<(String, Option<String>), TraceError> {
    let caps = HEADER
        .captures(text)
        .ok_or_else(|| malformed(line, "expected `<exception type>` or `<exception type>: <message>`"))?;
    Ok((caps[1].to_string(), caps.get(2).map(|m| m.as_str().to_string())))
}

/// Parses trace text in the given grammar.
pub fn parse_trace(text: &str, grammar: TraceGrammar) -> Result<StackTrace, TraceError> {
    match grammar {
        TraceGrammar::Canonical => parse_canonical(text),
        TraceGrammar::ScriptRuntime => {
            let raw = RawTrace::parse(text)?;
            let frames = raw
                .frames
                .iter()
                .rev()
                .map(|f| f.to_frame().map_err(|e| malformed(f.source_line, e.to_string())))
                .collect::<Result<Vec<_>, _>>()?;
            StackTrace::new(raw.exception_type, raw.message, frames)
                .map_err(|e| malformed(raw.exception_line, e.to_string()))
        }
    }
}

fn parse_canonical(text: &str) -> Result<StackTrace, TraceError> {
    let lines = numbered_lines(text);
    let Some(&(header_no, header)) = lines.first() else {
        return Err(TraceError::EmptyTrace);
    };
    let (exception_type, message) = parse_header(header, header_no)?;
    let mut frames = Vec::with_capacity(lines.len() - 1);
    for &(no, line) in &lines[1..] {
        let caps = CANONICAL_FRAME
            .captures(line)
            .ok_or_else(|| malformed(no, "expected `\\tat <unit>.<routine>(<file>:<line>)`"))?;
        let line_no = parse_line_number(&caps[4], no)?;
        let frame = StackFrame::new(&caps[1], &caps[2], &caps[3], line_no)
            .map_err(|e| malformed(no, e.to_string()))?;
        frames.push(frame);
    }
    if frames.is_empty() {
        return Err(TraceError::EmptyTrace);
    }
    StackTrace::new(exception_type, message, frames).map_err(|e| malformed(header_no, e.to_string()))
}

/// Emits the trace in the given grammar, one line per header/frame, each
/// terminated by `\n`.
pub fn format_trace(trace: &StackTrace, grammar: TraceGrammar) -> String {
    let mut out = String::new();
    let header = match trace.message() {
        Some(m) => format!("{}: {m}", trace.exception_type()),
        None => trace.exception_type().to_string(),
    };
    match grammar {
        TraceGrammar::Canonical => {
            out.push_str(&header);
            out.push('\n');
            for f in trace.frames() {
                let _ = writeln!(out, "\tat {f}");
            }
        }
        TraceGrammar::ScriptRuntime => {
            out.push_str(SCRIPT_HEADER);
            out.push('\n');
            for f in trace.frames().iter().rev() {
                let _ = writeln!(out, "  File \"{}\", line {}, in {}", f.file(), f.line(), f.routine());
            }
            out.push_str(&header);
            out.push('\n');
        }
    }
    out
}

/// A script-runtime frame as printed, before mapping onto [`StackFrame`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawFrame {
    pub file: String,
    pub line: u32,
    pub routine: String,
    pub source_line: usize,
}

impl RawFrame {
    /// `pkg/mod.py` becomes unit `pkg.mod`; a qualified routine `Cls.fn`
    /// moves `Cls` onto the unit path.
    pub fn to_frame(&self) -> Result<StackFrame, TraceError> {
        let stem = self.file.strip_suffix(".py").unwrap_or(&self.file);
        let mut unit: Vec<&str> = stem.split(['/', '\\']).filter(|c| !c.is_empty() && *c != ".").collect();
        let routine = match self.routine.rsplit_once('.') {
            Some((qual, name)) => {
                unit.extend(qual.split('.'));
                name
            }
            None => self.routine.as_str(),
        };
        StackFrame::new(unit.join("."), routine, self.file.clone(), self.line)
    }

    /// Final path component of the file, without extension.
    pub fn module_name(&self) -> &str {
        let base = self.file.rsplit(['/', '\\']).next().unwrap_or(&self.file);
        base.strip_suffix(".py").unwrap_or(base)
    }
}

/// A script-runtime traceback with frames in printed (outermost-first) order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawTrace {
    pub exception_type: String,
    pub message: Option<String>,
    pub frames: Vec<RawFrame>,
    pub exception_line: usize,
}

impl RawTrace {
    /// Reads the last traceback in `text`. Source-context lines (indented by
    /// four or more spaces) are skipped; anything before the header, such as
    /// program output, is ignored.
    pub fn parse(text: &str) -> Result<RawTrace, TraceError> {
        let lines = numbered_lines(text);
        let start = lines
            .iter()
            .rposition(|(_, l)| *l == SCRIPT_HEADER)
            .ok_or_else(|| malformed(1, format!("missing `{SCRIPT_HEADER}` header")))?;
        let mut frames = Vec::new();
        let mut rest = lines[start + 1..].iter().peekable();
        while let Some(&&(no, line)) = rest.peek() {
            if let Some(caps) = SCRIPT_FRAME.captures(line) {
                frames.push(RawFrame {
                    file: caps[1].to_string(),
                    line: parse_line_number(&caps[2], no)?,
                    routine: caps[3].to_string(),
                    source_line: no,
                });
            } else if line.starts_with("    ") && !frames.is_empty() {
                // source context or caret markers
            } else {
                break;
            }
            rest.next();
        }
        let &(no, last) = rest.next().ok_or_else(|| {
            malformed(lines.last().map_or(1, |l| l.0), "missing final exception line")
        })?;
        if let Some(&(extra, _)) = rest.next() {
            return Err(malformed(extra, "unexpected text after the exception line"));
        }
        if frames.is_empty() {
            return Err(TraceError::EmptyTrace);
        }
        let (exception_type, message) = parse_header(last, no)?;
        Ok(RawTrace { exception_type, message, frames, exception_line: no })
    }
}
