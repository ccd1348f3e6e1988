use crashrepro::trace::{frame_distance, normalize, trace_distance};
use crashrepro::{format_trace, parse_trace, StackFrame, StackTrace, TraceGrammar};
use proptest::prelude::*;

const IDENT: &str = "[A-Za-z_][A-Za-z0-9_$]{0,8}";

fn message() -> impl Strategy<Value = Option<String>> {
    prop::option::of("[ -~]{0,30}")
}

fn exception_type() -> impl Strategy<Value = String> {
    prop::collection::vec(IDENT, 1..4).prop_map(|p| p.join("."))
}

fn canonical_frame() -> impl Strategy<Value = StackFrame> {
    (prop::collection::vec(IDENT, 1..5), IDENT, "[A-Za-z0-9_.$-]{1,12}", 1u32..100_000)
        .prop_map(|(unit, routine, file, line)| StackFrame::new(unit.join("."), routine, file, line).unwrap())
}

/// Script frames carry the unit path in the file name, so generate the two together.
fn script_frame() -> impl Strategy<Value = StackFrame> {
    (prop::collection::vec("[a-z_][a-z0-9_]{0,6}", 1..4), IDENT, 1u32..100_000).prop_map(|(unit, routine, line)| {
        StackFrame::new(unit.join("."), routine, format!("{}.py", unit.join("/")), line).unwrap()
    })
}

fn trace_with(frame: impl Strategy<Value = StackFrame>) -> impl Strategy<Value = StackTrace> {
    (exception_type(), message(), prop::collection::vec(frame, 1..8))
        .prop_map(|(ty, msg, frames)| StackTrace::new(ty, msg, frames).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn canonical_round_trip(t in trace_with(canonical_frame())) {
        let text = format_trace(&t, TraceGrammar::Canonical);
        prop_assert_eq!(parse_trace(&text, TraceGrammar::Canonical).unwrap(), t);
    }

    #[test]
    fn script_runtime_round_trip(t in trace_with(script_frame())) {
        let text = format_trace(&t, TraceGrammar::ScriptRuntime);
        prop_assert_eq!(parse_trace(&text, TraceGrammar::ScriptRuntime).unwrap(), t);
    }

    #[test]
    fn frame_distance_bounds(a in canonical_frame(), b in canonical_frame(), line in 1u32..100_000) {
        let d = frame_distance(&a, &b);
        prop_assert!((0.0..=1.0).contains(&d));
        prop_assert_eq!(d, frame_distance(&b, &a));
        prop_assert_eq!(frame_distance(&a, &a), 0.0);
        let moved = StackFrame::new(a.unit_path(), a.routine(), "Elsewhere.x", line).unwrap();
        let gap = (i64::from(a.line()) - i64::from(line)).abs() as f64;
        prop_assert_eq!(frame_distance(&a, &moved), gap / (gap + 1.0));
    }

    #[test]
    fn trace_distance_only_sees_target_prefix(
        t in trace_with(canonical_frame()),
        other in trace_with(canonical_frame()),
        level in 1usize..8,
    ) {
        let level = level.min(t.frames().len());
        prop_assert_eq!(trace_distance(&t, level, &t), 0.0);
        let d = trace_distance(&t, level, &other);
        prop_assert!((0.0..1.0).contains(&d));

        let mut expected = 0.0;
        for i in 0..level {
            expected += match other.frames().get(i) {
                None => 1.0,
                Some(f) if f.unit_path() == t.frames()[i].unit_path() && f.routine() == t.frames()[i].routine() => {
                    let gap = (f.line() as f64 - t.frames()[i].line() as f64).abs();
                    gap / (gap + 1.0)
                }
                Some(_) => 1.0,
            };
        }
        prop_assert!((d - expected / (expected + 1.0)).abs() < 1e-12);

        // Frames beyond the target level never matter.
        let mut frames = t.frames()[..level].to_vec();
        frames.extend(other.frames().iter().cloned());
        let padded = StackTrace::new(t.exception_type(), None, frames).unwrap();
        prop_assert_eq!(trace_distance(&t, level, &padded), 0.0);
    }

    #[test]
    fn normalize_is_monotone(a in 0.0f64..1e6, b in 0.0f64..1e6) {
        prop_assert!(normalize(a) < 1.0);
        if a < b {
            prop_assert!(normalize(a) < normalize(b));
        }
    }
}

#[test]
fn script_traceback_with_context_lines() {
    let text = "noise\nTraceback (most recent call last):\n  File \"run.py\", line 4, in <module>\n    m.ratio(v0)\n  File \"pkg/calc.py\", line 9, in Box.ratio\n    return a / b\n           ~~^~~\nZeroDivisionError: division by zero\n";
    let t = parse_trace(text, TraceGrammar::ScriptRuntime).unwrap();
    assert_eq!(t.frames().len(), 2);
    assert_eq!(t.frames()[1].unit_path(), "run");
    assert_eq!(t.frames()[1].routine(), "<module>");
    assert_eq!(t.innermost().unit_path(), "pkg.calc.Box");
    assert_eq!(t.innermost().routine(), "ratio");
    assert_eq!(t.message(), Some("division by zero"));
}

#[test]
fn malformed_traces_are_rejected() {
    for text in ["", "E: x\n", "E\n  at a.B.m(B.java:1)\n", "E\n\tat a.B.m(B.java:0)\n", "two words\n\tat a.B.m(B.java:1)\n"] {
        assert!(parse_trace(text, TraceGrammar::Canonical).is_err(), "{text:?}");
    }
}
