use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use crashrepro::engine::search_rng;
use crashrepro::operators::{guided_crossover, guided_mutate, random_genome};
use crashrepro::scenario::{ApproachTarget, DEFAULT_STEP_BUDGET};
use crashrepro::{evaluate, execute, format_trace, parse_trace, run_search, GenomeLimits, ScenarioBackend, SearchConfig, TraceGrammar};
use crashrepro_bench::entry;

fn interpreter(c: &mut Criterion) {
    let e = entry("acc104-analog");
    let api = &e.scenario.api;
    let target = api.routine_id(e.case.target_routine()).unwrap();
    let approach = ApproachTarget::for_case(&e.scenario, &e.case);
    let mut rng = search_rng(1);
    let genomes: Vec<_> =
        (0..64).map(|_| random_genome(api, target, &GenomeLimits::default(), &mut rng).unwrap()).collect();
    let outcomes: Vec<_> =
        genomes.iter().map(|g| execute(&e.scenario, g, DEFAULT_STEP_BUDGET, Some(&approach)).unwrap()).collect();

    c.bench_function("execute/acc104 x64", |b| {
        b.iter(|| {
            for g in &genomes {
                black_box(execute(&e.scenario, g, DEFAULT_STEP_BUDGET, Some(&approach)).unwrap());
            }
        })
    });
    c.bench_function("evaluate/acc104 x64", |b| {
        b.iter(|| {
            for o in &outcomes {
                black_box(evaluate(&e.case, o));
            }
        })
    });
}

fn operators(c: &mut Criterion) {
    let e = entry("state-machine");
    let api = &e.scenario.api;
    let target = api.routine_id(e.case.target_routine()).unwrap();
    let limits = GenomeLimits::default();
    let mut rng = search_rng(2);
    let a = random_genome(api, target, &limits, &mut rng).unwrap();
    let b = random_genome(api, target, &limits, &mut rng).unwrap();

    c.bench_function("operators/random_genome", |bench| {
        bench.iter(|| black_box(random_genome(api, target, &limits, &mut rng).unwrap()))
    });
    c.bench_function("operators/crossover", |bench| {
        bench.iter(|| black_box(guided_crossover(&a, &b, api, &limits, &mut rng).unwrap()))
    });
    c.bench_function("operators/mutate", |bench| {
        bench.iter(|| black_box(guided_mutate(&a, api, &limits, &mut rng).unwrap()))
    });
}

fn traces(c: &mut Criterion) {
    let e = entry("free-chain");
    let text = format_trace(e.case.trace(), TraceGrammar::Canonical);
    c.bench_function("trace/parse canonical", |b| {
        b.iter(|| black_box(parse_trace(black_box(&text), TraceGrammar::Canonical).unwrap()))
    });
}

fn search(c: &mut Criterion) {
    let mut group = c.benchmark_group("search");
    group.sample_size(10);
    for name in ["acc104-analog", "state-machine"] {
        let e = entry(name);
        let backend = ScenarioBackend::new(&e.scenario, &e.case);
        group.bench_function(name, |b| {
            let mut seed = 0;
            b.iter(|| {
                seed += 1;
                let config =
                    SearchConfig { seed, evaluation_budget: 50_000, wall_clock_budget: None, ..SearchConfig::default() };
                black_box(run_search(&backend, &e.case, &config).unwrap())
            })
        });
    }
    let e = entry("unsatisfiable-guard");
    let backend = ScenarioBackend::new(&e.scenario, &e.case);
    group.bench_function("unreachable 5k evaluations", |b| {
        let config = SearchConfig { evaluation_budget: 5_000, wall_clock_budget: None, ..SearchConfig::default() };
        b.iter(|| black_box(run_search(&backend, &e.case, &config).unwrap()))
    });
    group.finish();
}

criterion_group!(benches, interpreter, operators, traces, search);
criterion_main!(benches);
