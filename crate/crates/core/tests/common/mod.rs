#![allow(dead_code)]

use std::path::PathBuf;

use crashrepro::experiment::{Suite, SuiteEntry};

pub fn corpus_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus/scenarios")
}

pub fn entry(name: &str) -> SuiteEntry {
    let dir = corpus_dir();
    SuiteEntry::load(&dir.join(format!("{name}.scn")), &dir.join(format!("{name}.trace"))).unwrap()
}

pub fn suite() -> Suite {
    Suite::load(&corpus_dir()).unwrap()
}

pub const NAMES: [&str; 12] = [
    "unconditional-throw",
    "guarded-throw",
    "null-key",
    "index-out-of-bounds",
    "acc104-analog",
    "date-format",
    "state-machine",
    "recursion-distractor",
    "free-chain",
    "config-return",
    "unsatisfiable-guard",
    "config-unreachable",
];
