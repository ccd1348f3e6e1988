use std::path::PathBuf;

use crashrepro::experiment::Suite;
use crashrepro::fitness::{evaluate, is_reproduced};
use crashrepro::scenario::{execute, oracle_enumerate, ApproachTarget, OracleVerdict, DEFAULT_STEP_BUDGET};

fn corpus_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus/scenarios")
}

#[test]
fn corpus_has_twelve_cases_with_traces() {
    let suite = Suite::load(&corpus_dir()).unwrap();
    assert_eq!(suite.entries.len(), 12);
    let acc = suite.entries.iter().find(|e| e.scenario.name == "acc104-analog").unwrap();
    assert!(acc.scenario.api.routines.len() >= 2);
}

#[test]
fn oracle_verdicts_match_documented_reachability() {
    let suite = Suite::load(&corpus_dir()).unwrap();
    let mut reachable = 0;
    for entry in &suite.entries {
        let s = &entry.scenario;
        let verdict = oracle_enumerate(s, &entry.case, s.crash.oracle_max_calls).unwrap();
        match (&verdict, s.crash.expect_reachable) {
            (OracleVerdict::Reachable(witness), Some(true)) => {
                reachable += 1;
                if let Some(minimal) = s.crash.minimal_calls {
                    assert_eq!(witness.invoke_count(), minimal, "{}", s.name);
                }
                let target = ApproachTarget::for_case(s, &entry.case);
                let out = execute(s, witness, DEFAULT_STEP_BUDGET, Some(&target)).unwrap();
                assert!(is_reproduced(&evaluate(&entry.case, &out)), "{}", s.name);
                let produced = out.crash_trace().unwrap();
                let k = entry.case.target_frame_level();
                assert_eq!(produced.exception_type(), entry.case.trace().exception_type());
                assert_eq!(produced.frames()[..k], entry.case.trace().frames()[..k], "{}", s.name);
            }
            (OracleVerdict::Unreachable, Some(false)) => {}
            (v, expected) => panic!("{}: oracle says {v:?}, scenario documents {expected:?}", s.name),
        }
    }
    assert_eq!(reachable, 10);
}

#[test]
fn acc104_witness_follows_required_order() {
    let suite = Suite::load(&corpus_dir()).unwrap();
    let entry = suite.entries.iter().find(|e| e.case.id() == "ACC-104").unwrap();
    let OracleVerdict::Reachable(w) = oracle_enumerate(&entry.scenario, &entry.case, 4).unwrap() else {
        panic!("expected reachable")
    };
    let out = execute(&entry.scenario, &w, DEFAULT_STEP_BUDGET, None).unwrap();
    assert_eq!(out.crash_trace(), Some(entry.case.trace()));
    let text = w.to_text(&entry.scenario.api);
    let calls: Vec<&str> = text.lines().filter(|l| l.contains('(')).collect();
    assert_eq!(calls, vec!["v0.init()", "v0.push(v2)", "v0.drain()"]);
}
