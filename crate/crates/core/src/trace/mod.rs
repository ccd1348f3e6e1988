//! Stack traces: data model, text grammars and the distance metrics used by
//! the fitness function.

mod distance;
mod grammar;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use distance::{frame_distance, normalize, trace_distance};
pub use grammar::{format_trace, parse_trace, RawFrame, RawTrace, TraceGrammar};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TraceError {
    #[error("malformed trace at line {line}: {reason}")]
    MalformedTrace { line: usize, reason: String },
    #[error("trace contains no frames")]
    EmptyTrace,
    #[error("invalid stack frame: {0}")]
    InvalidFrame(String),
    #[error("invalid exception type {0:?}")]
    InvalidExceptionType(String),
    #[error("unknown trace grammar {0:?} (expected `canonical` or `script-runtime`)")]
    UnknownGrammar(String),
    #[error("target frame level {level} outside 1..={frames}")]
    TargetLevelOutOfRange { level: usize, frames: usize },
}

fn has_space(s: &str) -> bool {
    s.chars().any(char::is_whitespace)
}

/// One frame of a stack trace.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "FrameRepr", into = "FrameRepr")]
pub struct StackFrame {
    unit_path: String,
    routine: String,
    file: String,
    line: u32,
}

#[derive(Serialize, Deserialize)]
struct FrameRepr {
    unit_path: String,
    routine: String,
    file: String,
    line: u32,
}

impl TryFrom<FrameRepr> for StackFrame {
    type Error = TraceError;
    fn try_from(r: FrameRepr) -> Result<Self, TraceError> {
        StackFrame::new(r.unit_path, r.routine, r.file, r.line)
    }
}

impl From<StackFrame> for FrameRepr {
    fn from(f: StackFrame) -> Self {
        FrameRepr { unit_path: f.unit_path, routine: f.routine, file: f.file, line: f.line }
    }
}

impl StackFrame {
    /// Validates the frame fields. Besides the no-whitespace rule, the
    /// characters the canonical grammar uses as delimiters are rejected so
    /// every frame has exactly one textual form.
    pub fn new(
        unit_path: impl Into<String>,
        routine: impl Into<String>,
        file: impl Into<String>,
        line: u32,
    ) -> Result<Self, TraceError> {
        let (unit_path, routine, file) = (unit_path.into(), routine.into(), file.into());
        let bad = |what: &str, v: &str| Err(TraceError::InvalidFrame(format!("{what} {v:?}")));
        if unit_path.is_empty()
            || has_space(&unit_path)
            || unit_path.contains(['(', ')'])
            || unit_path.starts_with('.')
            || unit_path.ends_with('.')
        {
            return bad("unit path", &unit_path);
        }
        if routine.is_empty() || has_space(&routine) || routine.contains(['.', '(', ')']) {
            return bad("routine", &routine);
        }
        if file.is_empty() || has_space(&file) || file.contains([':', '(', ')', '"']) {
            return bad("file", &file);
        }
        if line == 0 {
            return Err(TraceError::InvalidFrame("line must be >= 1".into()));
        }
        Ok(StackFrame { unit_path, routine, file, line })
    }

    pub fn unit_path(&self) -> &str {
        &self.unit_path
    }

    pub fn routine(&self) -> &str {
        &self.routine
    }

    pub fn file(&self) -> &str {
        &self.file
    }

    pub fn line(&self) -> u32 {
        self.line
    }
}

impl fmt::Display for StackFrame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}({}:{})", self.unit_path, self.routine, self.file, self.line)
    }
}

/// A single-chain stack trace, innermost (throw site) frame first.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StackTrace {
    exception_type: String,
    message: Option<String>,
    frames: Vec<StackFrame>,
}

impl StackTrace {
    pub fn new(
        exception_type: impl Into<String>,
        message: Option<String>,
        frames: Vec<StackFrame>,
    ) -> Result<Self, TraceError> {
        let exception_type = exception_type.into();
        if exception_type.is_empty()
            || has_space(&exception_type)
            || exception_type.contains(':')
            || exception_type.starts_with('.')
            || exception_type.ends_with('.')
        {
            return Err(TraceError::InvalidExceptionType(exception_type));
        }
        if let Some(m) = &message {
            if m.contains(['\n', '\r']) {
                return Err(TraceError::InvalidExceptionType(format!(
                    "{exception_type} (message spans lines)"
                )));
            }
        }
        if frames.is_empty() {
            return Err(TraceError::EmptyTrace);
        }
        Ok(StackTrace { exception_type, message, frames })
    }

    pub fn exception_type(&self) -> &str {
        &self.exception_type
    }

    pub fn message(&self) -> Option<&str> {
        self.message.as_deref()
    }

    pub fn frames(&self) -> &[StackFrame] {
        &self.frames
    }

    /// The throw site.
    pub fn innermost(&self) -> &StackFrame {
        &self.frames[0]
    }
}

/// A crash to reproduce: the observed trace plus the frame the search targets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrashCase {
    id: String,
    trace: StackTrace,
    target_frame_level: usize,
}

impl CrashCase {
    /// `target_frame_level` counts from 1 at the innermost frame.
    pub fn new(
        id: impl Into<String>,
        trace: StackTrace,
        target_frame_level: usize,
    ) -> Result<Self, TraceError> {
        let frames = trace.frames().len();
        if target_frame_level == 0 || target_frame_level > frames {
            return Err(TraceError::TargetLevelOutOfRange { level: target_frame_level, frames });
        }
        Ok(CrashCase { id: id.into(), trace, target_frame_level })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn trace(&self) -> &StackTrace {
        &self.trace
    }

    pub fn target_frame_level(&self) -> usize {
        self.target_frame_level
    }

    pub fn target_frame(&self) -> &StackFrame {
        &self.trace.frames()[self.target_frame_level - 1]
    }

    /// The routine every candidate test must invoke.
    pub fn target_routine(&self) -> &str {
        self.target_frame().routine()
    }
}
