use super::{StackFrame, StackTrace};

/// Bounded normalization `x / (x + 1)`: 0 at 0, strictly increasing, below 1.
pub fn normalize(x: f64) -> f64 {
    debug_assert!(x >= 0.0, "distance must be non-negative, got {x}");
    x / (x + 1.0)
}

/// Distance between an expected and an observed frame. The file name is not
/// compared.
pub fn frame_distance(expected: &StackFrame, actual: &StackFrame) -> f64 {
    if expected.unit_path() != actual.unit_path() || expected.routine() != actual.routine() {
        return 1.0;
    }
    let d = (i64::from(expected.line()) - i64::from(actual.line())).unsigned_abs();
    normalize(d as f64)
}

/// Normalized sum of frame distances over the innermost `target_frame_level`
/// frames. Frames missing from `actual` count 1; deeper frames are ignored.
pub fn trace_distance(expected: &StackTrace, target_frame_level: usize, actual: &StackTrace) -> f64 {
    let level = target_frame_level.min(expected.frames().len());
    let sum: f64 = (0..level)
        .map(|i| match actual.frames().get(i) {
            Some(a) => frame_distance(&expected.frames()[i], a),
            None => 1.0,
        })
        .sum();
    normalize(sum)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(routine: &str, line: u32) -> StackFrame {
        StackFrame::new("a.B", routine, "B.java", line).unwrap()
    }

    fn trace(frames: Vec<StackFrame>) -> StackTrace {
        StackTrace::new("x.E", None, frames).unwrap()
    }

    #[test]
    fn frame_distance_cases() {
        assert_eq!(frame_distance(&frame("m", 12), &frame("m", 12)), 0.0);
        assert_eq!(frame_distance(&frame("m", 12), &frame("m", 13)), 0.5);
        assert_eq!(frame_distance(&frame("m", 12), &frame("n", 12)), 1.0);
        let other_file = StackFrame::new("a.B", "m", "Other.java", 12).unwrap();
        assert_eq!(frame_distance(&frame("m", 12), &other_file), 0.0);
    }

    #[test]
    fn trace_distance_cases() {
        let t = trace(vec![frame("m", 12)]);
        assert_eq!(trace_distance(&t, 1, &t), 0.0);
        let off = trace(vec![frame("m", 13)]);
        assert!((trace_distance(&t, 1, &off) - 1.0 / 3.0).abs() < 1e-15);
        let two = trace(vec![frame("m", 12), frame("n", 4)]);
        let short = trace(vec![frame("z", 1)]);
        // one mismatching frame plus one missing frame
        assert!((trace_distance(&two, 2, &short) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn deeper_frames_are_free() {
        let expected = trace(vec![frame("m", 1), frame("n", 2)]);
        let actual = trace(vec![frame("m", 1), frame("q", 9)]);
        assert_eq!(trace_distance(&expected, 1, &actual), 0.0);
        assert!(trace_distance(&expected, 2, &actual) > 0.0);
    }
}
