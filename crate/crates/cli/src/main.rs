use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use crashrepro::engine::{run_search, RunRecord, SearchConfig};
use crashrepro::experiment::{load_case, render_report, run_experiment, ExperimentSettings, ReportFormat, RunArchive, Suite};
use crashrepro::io::atomic_write;
use crashrepro::operators::OperatorConfig;
use crashrepro::runlog::runlog_bytes;
use crashrepro::scenario::{load_scenario, oracle_enumerate, OracleError, OracleVerdict};
use crashrepro::script::{ScriptBackend, ScriptTarget};
use crashrepro::trace::{format_trace, parse_trace, CrashCase, TraceGrammar};
use crashrepro::{Backend, Genome, ScenarioBackend};

#[derive(Parser)]
#[command(name = "crashrepro", version, about = "Reproduce crashes from stack traces with a guided genetic algorithm")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Search for a test that reproduces one crash.
    Reproduce(ReproduceArgs),
    /// Run every case of a suite repeatedly and report crash coverage.
    Bench(BenchArgs),
    /// Decide reachability of a scenario crash by exhaustive enumeration.
    Oracle(OracleArgs),
    /// Parse a trace and print it in canonical form.
    ParseTrace(ParseTraceArgs),
}

#[derive(Args)]
struct BudgetArgs {
    /// Fitness evaluations per run, across all population sizes.
    #[arg(long, env = "CRASHREPRO_EVALUATION_BUDGET", default_value_t = 50_000)]
    evaluation_budget: u64,
    /// Wall-clock cap per run in seconds; 0 disables it.
    #[arg(long, env = "CRASHREPRO_WALL_CLOCK_SECS", default_value_t = 1800)]
    wall_clock_secs: u64,
    #[arg(long, default_value_t = 50)]
    initial_population: usize,
    #[arg(long, default_value_t = 25)]
    population_step: usize,
    #[arg(long, default_value_t = 300)]
    population_max: usize,
    #[arg(long, default_value_t = 0.75)]
    crossover_probability: f64,
    /// Longest allowed test, in statements.
    #[arg(long, default_value_t = 20)]
    max_length: usize,
}

impl BudgetArgs {
    fn config(&self, seed: u64) -> SearchConfig {
        SearchConfig {
            initial_population: self.initial_population,
            population_step: self.population_step,
            population_max: self.population_max,
            operators: OperatorConfig { crossover_probability: self.crossover_probability, ..OperatorConfig::default() },
            evaluation_budget: self.evaluation_budget,
            wall_clock_budget: (self.wall_clock_secs > 0).then(|| Duration::from_secs(self.wall_clock_secs)),
            max_length: self.max_length,
            seed,
        }
    }
}

#[derive(Args)]
struct ReproduceArgs {
    /// Scenario file describing the program under test.
    #[arg(long, conflicts_with = "script_target", required_unless_present = "script_target")]
    scenario: Option<PathBuf>,
    /// Script target manifest describing a module in an external runtime.
    #[arg(long)]
    script_target: Option<PathBuf>,
    /// Crash trace to reproduce.
    #[arg(long)]
    trace: PathBuf,
    /// Frame to reproduce, counted from 1 at the throw site. Defaults to the
    /// scenario's documented frame, or 1.
    #[arg(long)]
    target_frame: Option<usize>,
    /// Random seed; required so every run can be repeated.
    #[arg(long)]
    seed: u64,
    /// Directory for the witness, reproduced trace and run log.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print the witness test to standard output when found.
    #[arg(long)]
    dump_witness: bool,
    #[command(flatten)]
    budget: BudgetArgs,
}

#[derive(Args)]
struct BenchArgs {
    /// Directory of `<name>.scn` scenarios, each with a `<name>.trace`.
    #[arg(long)]
    suite: PathBuf,
    #[arg(long, default_value_t = 50)]
    repetitions: usize,
    /// Run `i` of each case uses seed `base-seed + i`.
    #[arg(long, default_value_t = 0)]
    base_seed: u64,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Output directory for report.txt, report.csv and runs/.
    #[arg(long, default_value = "bench-out")]
    out: PathBuf,
    #[command(flatten)]
    budget: BudgetArgs,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    trace: PathBuf,
    #[arg(long)]
    target_frame: Option<usize>,
    /// Longest call sequence to enumerate. Defaults to the scenario's own bound.
    #[arg(long)]
    max_calls: Option<usize>,
}

#[derive(Args)]
struct ParseTraceArgs {
    trace: PathBuf,
    /// `canonical` or `script-runtime`.
    #[arg(long, default_value = "canonical")]
    grammar: TraceGrammar,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Reproduce(a) => reproduce(a),
        Command::Bench(a) => bench(a),
        Command::Oracle(a) => oracle(a),
        Command::ParseTrace(a) => parse_trace_cmd(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn reproduce(args: ReproduceArgs) -> Result<u8> {
    let config = args.budget.config(args.seed);
    config.validate()?;
    match (&args.scenario, &args.script_target) {
        (Some(path), _) => {
            let scenario = load_scenario(path)?;
            let case = load_case(&scenario, &args.trace, args.target_frame)?;
            let backend = ScenarioBackend::new(&scenario, &case);
            let record = run_search(&backend, &case, &config)?;
            report_run(&record, &backend, &args)
        }
        (None, Some(path)) => {
            let target = ScriptTarget::load(path)?;
            let trace = target
                .read_trace(&read(&args.trace)?)
                .map_err(|e| anyhow!("{}: {e}", args.trace.display()))?;
            let case = CrashCase::new(stem(&args.trace), trace, args.target_frame.unwrap_or(1))?;
            let mut backend = ScriptBackend::new(target, case.clone());
            if let Some(out) = &args.out {
                backend = backend.keep_failed_scripts(out.join("failed-scripts"));
            }
            let record = run_search(&backend, &case, &config)?;
            report_run(&record, &backend, &args)
        }
        (None, None) => bail!("either --scenario or --script-target is required"),
    }
}

fn report_run(record: &RunRecord, backend: &dyn Backend, args: &ReproduceArgs) -> Result<u8> {
    if let Some(out) = &args.out {
        atomic_write(&out.join("run.runlog"), &runlog_bytes(record))?;
    }
    let Some(witness) = &record.witness else {
        println!(
            "not reproduced: best fitness {:.6} after {} evaluations ({})",
            record.best_fitness.total,
            record.evaluations_used,
            record.stop_reason.name()
        );
        return Ok(1);
    };
    println!("reproduced after {} evaluations", record.evaluations_used);
    if args.dump_witness {
        print!("{witness}");
    }
    if let Some(out) = &args.out {
        atomic_write(&out.join("witness.genome"), witness.as_bytes())?;
        let genome = Genome::parse(witness, backend.api())?;
        if let Some(trace) = backend.execute(&genome)?.crash_trace() {
            atomic_write(&out.join("reproduced.trace"), format_trace(trace, TraceGrammar::Canonical).as_bytes())?;
        }
    }
    Ok(0)
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "case".into())
}

fn bench(args: BenchArgs) -> Result<u8> {
    let suite = Suite::load(&args.suite)?;
    let settings = ExperimentSettings {
        repetitions: args.repetitions,
        base_seed: args.base_seed,
        workers: args.workers,
        search: args.budget.config(args.base_seed),
    };
    let archive = RunArchive::new(args.out.join("runs"));
    let (report, _) = run_experiment(&suite, &settings, Some(&archive))?;
    let table = render_report(&report, ReportFormat::TableText);
    atomic_write(&args.out.join("report.txt"), table.as_bytes())?;
    atomic_write(&args.out.join("report.csv"), render_report(&report, ReportFormat::Csv).as_bytes())?;
    print!("{table}");
    Ok(0)
}

fn oracle(args: OracleArgs) -> Result<u8> {
    let scenario = load_scenario(&args.scenario)?;
    let case = load_case(&scenario, &args.trace, args.target_frame)?;
    let max_calls = args.max_calls.unwrap_or(scenario.crash.oracle_max_calls);
    match oracle_enumerate(&scenario, &case, max_calls) {
        Ok(OracleVerdict::Reachable(witness)) => {
            println!("reachable");
            print!("{}", witness.to_text(&scenario.api));
            Ok(0)
        }
        Ok(OracleVerdict::Unreachable) => {
            println!("unreachable within {max_calls} calls");
            Ok(1)
        }
        Err(e @ OracleError::EnumerationTooLarge { .. }) => {
            eprintln!("error: {e}");
            Ok(3)
        }
        Err(e) => Err(e.into()),
    }
}

fn parse_trace_cmd(args: ParseTraceArgs) -> Result<u8> {
    let text = read(&args.trace)?;
    let trace = parse_trace(&text, args.grammar).with_context(|| format!("{}", args.trace.display()))?;
    print!("{}", format_trace(&trace, TraceGrammar::Canonical));
    Ok(0)
}
