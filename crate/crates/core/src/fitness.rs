//! Piecewise crash-reproduction fitness.
//!
//! Three gated components are combined into one error value in `[0, 6]`:
//! whether the throw-site line was reached, whether the thrown exception has
//! the expected type, and how far the produced trace is from the target
//! trace. Each component is only measured once the previous one is zero,
//! otherwise it is clamped to 1.

use serde::{Deserialize, Serialize};

use crate::scenario::{ExecutionOutcome, OutcomeKind};
use crate::trace::{normalize, trace_distance, CrashCase};

pub const LINE_WEIGHT: f64 = 3.0;
pub const EXCEPTION_WEIGHT: f64 = 2.0;
pub const TRACE_WEIGHT: f64 = 1.0;
pub const MAX_TOTAL: f64 = LINE_WEIGHT + EXCEPTION_WEIGHT + TRACE_WEIGHT;

/// How close an execution came to the target line.
///
/// `approach_level` counts the control-dependency guards that were still
/// left to satisfy after the point where execution diverged;
/// `branch_distance` measures how far the diverging guard was from taking
/// the needed outcome. Both are zero exactly when the target line executed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApproachData {
    pub approach_level: u32,
    pub branch_distance: f64,
}

impl ApproachData {
    pub const REACHED: ApproachData = ApproachData { approach_level: 0, branch_distance: 0.0 };

    pub fn is_reached(&self) -> bool {
        self.approach_level == 0 && self.branch_distance == 0.0
    }

    /// Lexicographic "closer than": smaller level first, then smaller distance.
    pub fn closer_than(&self, other: &ApproachData) -> bool {
        (self.approach_level, self.branch_distance) < (other.approach_level, other.branch_distance)
    }

    /// `ν(approach_level + ν(branch_distance))`.
    pub fn line_distance(&self) -> f64 {
        normalize(f64::from(self.approach_level) + normalize(self.branch_distance))
    }
}

/// Fitness components and their weighted total. Lower is better; zero means
/// the crash was reproduced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitnessValue {
    #[serde(with = "fixed6")]
    pub d_line: f64,
    #[serde(with = "fixed6")]
    pub d_exception: f64,
    #[serde(with = "fixed6")]
    pub d_trace: f64,
    #[serde(with = "fixed6")]
    pub total: f64,
}

impl FitnessValue {
    pub const WORST: FitnessValue =
        FitnessValue { d_line: 1.0, d_exception: 1.0, d_trace: 1.0, total: MAX_TOTAL };

    pub fn from_components(d_line: f64, d_exception: f64, d_trace: f64) -> Self {
        let total = LINE_WEIGHT * d_line + EXCEPTION_WEIGHT * d_exception + TRACE_WEIGHT * d_trace;
        FitnessValue { d_line, d_exception, d_trace, total }
    }
}

/// Scores an execution outcome against the crash case. Pure.
pub fn evaluate(case: &CrashCase, outcome: &ExecutionOutcome) -> FitnessValue {
    let target = case.trace().innermost();
    let d_line = match &outcome.closest_approach {
        Some(a) => a.line_distance(),
        None => {
            let key = (target.routine().to_string(), target.line());
            if outcome.covered_lines.contains(&key) {
                0.0
            } else {
                ApproachData { approach_level: 1, branch_distance: 1.0 }.line_distance()
            }
        }
    };
    if d_line > 0.0 {
        return FitnessValue::from_components(d_line, 1.0, 1.0);
    }
    let thrown = match &outcome.kind {
        OutcomeKind::Crashed(t) if t.exception_type() == case.trace().exception_type() => t,
        _ => return FitnessValue::from_components(0.0, 1.0, 1.0),
    };
    let d_trace = trace_distance(case.trace(), case.target_frame_level(), thrown);
    FitnessValue::from_components(0.0, 0.0, d_trace)
}

/// A crash counts as reproduced only at a total of exactly zero.
pub fn is_reproduced(f: &FitnessValue) -> bool {
    f.total == 0.0
}

/// Serializes reals as JSON numbers with exactly six fractional digits.
pub(crate) mod fixed6 {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};
    use serde_json::value::RawValue;

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        let raw = RawValue::from_string(format!("{x:.6}")).map_err(serde::ser::Error::custom)?;
        raw.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        f64::deserialize(d)
    }
}
