//! Fixtures shared by the benchmarks.

use std::path::PathBuf;

use crashrepro::experiment::SuiteEntry;

pub fn corpus_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus/scenarios")
}

/// Loads `<name>.scn` and `<name>.trace` from the bundled corpus.
pub fn entry(name: &str) -> SuiteEntry {
    let dir = corpus_dir();
    SuiteEntry::load(&dir.join(format!("{name}.scn")), &dir.join(format!("{name}.trace")))
        .unwrap_or_else(|e| panic!("corpus entry {name}: {e}"))
}
