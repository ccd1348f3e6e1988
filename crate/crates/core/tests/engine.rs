mod common;

use std::time::Duration;

use crashrepro::experiment::{RunArchive, Suite};
use crashrepro::runlog::{read_runlog, runlog_bytes, LoggedRun};
use crashrepro::{
    best_so_far, run_experiment, run_search, ExperimentSettings, ReportFormat, ScenarioBackend, SearchConfig,
    StopReason,
};

fn config(seed: u64, budget: u64) -> SearchConfig {
    SearchConfig { seed, evaluation_budget: budget, wall_clock_budget: None, ..SearchConfig::default() }
}

#[test]
fn unconditional_throw_is_found_in_the_first_population() {
    let e = common::entry("unconditional-throw");
    let backend = ScenarioBackend::new(&e.scenario, &e.case);
    for seed in 0..10 {
        let r = run_search(&backend, &e.case, &config(seed, 50_000)).unwrap();
        assert!(r.reproduced);
        assert_eq!(r.stop_reason, StopReason::Reproduced);
        assert_eq!(r.population_sizes_visited, vec![50]);
        assert!(r.evaluations_used <= 50);
        assert_eq!(r.best_fitness.total, 0.0);
    }
}

#[test]
fn unreachable_case_walks_the_whole_schedule() {
    let e = common::entry("unsatisfiable-guard");
    let backend = ScenarioBackend::new(&e.scenario, &e.case);
    let c = config(4, 5_500);
    let r = run_search(&backend, &e.case, &c).unwrap();
    assert!(!r.reproduced);
    assert_eq!(r.stop_reason, StopReason::BudgetExhausted);
    assert_eq!(r.population_sizes_visited, (0..11).map(|i| 50 + 25 * i).collect::<Vec<_>>());
    assert_eq!(r.evaluations_used, 5_500);
    assert!(r.witness.is_none());

    // each size gets its slice: the last generation entry of a size reports
    // the running evaluation count at the end of that slice
    let slices = c.budget_slices();
    let mut spent = 0;
    for (size, slice) in c.schedule().iter().zip(&slices) {
        spent += slice;
        let last = r.generation_log.iter().rfind(|g| g.population_size == *size).unwrap();
        assert_eq!(last.evaluations, spent);
    }
}

#[test]
fn best_so_far_ends_at_the_best_fitness() {
    for name in ["guarded-throw", "state-machine", "unsatisfiable-guard"] {
        let e = common::entry(name);
        let backend = ScenarioBackend::new(&e.scenario, &e.case);
        let r = run_search(&backend, &e.case, &config(7, 3_000)).unwrap();
        let curve = best_so_far(&r.generation_log);
        assert!(curve.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(*curve.last().unwrap(), r.best_fitness.total, "{name}");
    }
}

#[test]
fn same_seed_same_bytes() {
    let e = common::entry("acc104-analog");
    let backend = ScenarioBackend::new(&e.scenario, &e.case);
    let a = runlog_bytes(&run_search(&backend, &e.case, &config(21, 20_000)).unwrap());
    let b = runlog_bytes(&run_search(&backend, &e.case, &config(21, 20_000)).unwrap());
    assert_eq!(a, b);
    let c = runlog_bytes(&run_search(&backend, &e.case, &config(22, 20_000)).unwrap());
    assert_ne!(a, c);
}

#[test]
fn wall_clock_cap_is_reported() {
    let e = common::entry("config-unreachable");
    let backend = ScenarioBackend::new(&e.scenario, &e.case);
    let c = SearchConfig { wall_clock_budget: Some(Duration::from_nanos(1)), ..config(0, 50_000) };
    let r = run_search(&backend, &e.case, &c).unwrap();
    assert_eq!(r.stop_reason, StopReason::WallClock);
    assert!(r.evaluations_used < 50_000);
}

#[test]
fn invalid_configs_are_rejected() {
    let e = common::entry("guarded-throw");
    let backend = ScenarioBackend::new(&e.scenario, &e.case);
    let bad = [
        SearchConfig { initial_population: 1, ..config(0, 1000) },
        SearchConfig { population_step: 0, ..config(0, 1000) },
        SearchConfig { initial_population: 400, ..config(0, 1000) },
        config(0, 5),
        SearchConfig { max_length: 0, ..config(0, 1000) },
        SearchConfig { wall_clock_budget: Some(Duration::ZERO), ..config(0, 1000) },
    ];
    for c in bad {
        assert!(run_search(&backend, &e.case, &c).is_err(), "{c:?}");
    }
}

fn small_suite() -> Suite {
    Suite::new(vec![common::entry("guarded-throw"), common::entry("state-machine"), common::entry("unsatisfiable-guard")])
        .unwrap()
}

#[test]
fn worker_count_does_not_change_results() {
    let suite = small_suite();
    let settings = |workers| ExperimentSettings { repetitions: 6, base_seed: 100, workers, search: config(0, 4_000) };
    let (r1, runs1) = run_experiment(&suite, &settings(1), None).unwrap();
    let (r4, runs4) = run_experiment(&suite, &settings(4), None).unwrap();
    assert_eq!(r1, r4);
    assert_eq!(runs1, runs4);
    assert_eq!(crashrepro::render_report(&r1, ReportFormat::Csv), crashrepro::render_report(&r4, ReportFormat::Csv));
    let seeds: Vec<u64> = runs1
        .iter()
        .filter_map(|r| match r {
            LoggedRun::Completed(r) if r.case_id == "GT-7" => Some(r.seed),
            _ => None,
        })
        .collect();
    assert_eq!(seeds, (100..106).collect::<Vec<_>>());
}

#[test]
fn archive_holds_one_readable_log_per_run() {
    let dir = tempfile::tempdir().unwrap();
    let archive = RunArchive::new(dir.path().join("runs"));
    let suite = small_suite();
    let settings = ExperimentSettings { repetitions: 2, base_seed: 0, workers: 2, search: config(0, 2_000) };
    let (report, runs) = run_experiment(&suite, &settings, Some(&archive)).unwrap();
    assert_eq!(report.cases.len(), 3);
    assert_eq!(runs.len(), 6);
    for run in &runs {
        let LoggedRun::Completed(r) = run else { panic!("unexpected failure {run:?}") };
        let file = std::fs::File::open(archive.path_for(&r.case_id, r.seed)).unwrap();
        // reals are stored to six digits, so compare the serialized form
        let LoggedRun::Completed(back) = read_runlog(std::io::BufReader::new(file)).unwrap() else { panic!() };
        assert_eq!(runlog_bytes(&back), runlog_bytes(r));
    }
    let ug = report.cases.iter().find(|c| c.case_id == "UG-1").unwrap();
    assert_eq!(ug.result_text(), "N (0%)");
}
