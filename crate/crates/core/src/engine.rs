//! The guided genetic algorithm.
//!
//! A run starts at `initial_population` and, whenever its share of the
//! evaluation budget is spent without reproducing the crash, restarts from a
//! fresh population `population_step` larger, up to `population_max`.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::api::Api;
use crate::backend::{Backend, BackendError};
use crate::fitness::{evaluate, fixed6, is_reproduced, FitnessValue};
use crate::genome::{Genome, GenomeError, GenomeLimits, GenomeTextError};
use crate::operators::{guided_crossover, guided_initialize, guided_mutate, select, OperatorConfig};
use crate::trace::CrashCase;

/// The pseudo-random generator behind every run: ChaCha with 8 rounds,
/// seeded from a `u64`. Its output stream is fixed across platforms.
pub type SearchRng = ChaCha8Rng;

pub fn search_rng(seed: u64) -> SearchRng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    pub initial_population: usize,
    pub population_step: usize,
    pub population_max: usize,
    pub operators: OperatorConfig,
    /// Fitness evaluations allowed over the whole run, all escalations
    /// included.
    pub evaluation_budget: u64,
    /// Optional wall-clock cap on top of the evaluation budget. Runs stopped
    /// by it are not reproducible bit for bit.
    #[serde(with = "opt_secs")]
    pub wall_clock_budget: Option<Duration>,
    pub max_length: usize,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            initial_population: 50,
            population_step: 25,
            population_max: 300,
            operators: OperatorConfig::default(),
            evaluation_budget: 50_000,
            wall_clock_budget: Some(Duration::from_secs(30 * 60)),
            max_length: GenomeLimits::default().max_length,
            seed: 0,
        }
    }
}

mod opt_secs {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Option<Duration>, s: S) -> Result<S::Ok, S::Error> {
        match d {
            Some(d) => s.serialize_some(&d.as_secs_f64()),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Duration>, D::Error> {
        let secs = Option::<f64>::deserialize(d)?;
        secs.map(|s| Duration::try_from_secs_f64(s).map_err(serde::de::Error::custom)).transpose()
    }
}

impl SearchConfig {
    /// Population sizes in escalation order.
    pub fn schedule(&self) -> Vec<usize> {
        let mut sizes = Vec::new();
        let mut size = self.initial_population;
        while size <= self.population_max {
            sizes.push(size);
            match size.checked_add(self.population_step) {
                Some(next) if self.population_step > 0 => size = next,
                _ => break,
            }
        }
        sizes
    }

    /// Evaluations granted to each population size; the remainder of the
    /// even split goes to the last one.
    pub fn budget_slices(&self) -> Vec<u64> {
        let steps = self.schedule().len() as u64;
        if steps == 0 {
            return Vec::new();
        }
        let share = self.evaluation_budget / steps;
        let mut slices = vec![share; steps as usize];
        *slices.last_mut().expect("non-empty") += self.evaluation_budget % steps;
        slices
    }

    pub fn limits(&self) -> GenomeLimits {
        GenomeLimits { max_length: self.max_length }
    }

    pub fn validate(&self) -> Result<(), SearchError> {
        let bad = |msg: String| Err(SearchError::Config(msg));
        if self.initial_population < 2 {
            return bad(format!("initial population {} is below 2", self.initial_population));
        }
        if self.population_step == 0 {
            return bad("population step must be positive".into());
        }
        if self.initial_population > self.population_max {
            return bad(format!(
                "initial population {} exceeds maximum {}",
                self.initial_population, self.population_max
            ));
        }
        let steps = self.schedule().len() as u64;
        if self.evaluation_budget < steps {
            return bad(format!(
                "evaluation budget {} is smaller than the {steps} population sizes it must cover",
                self.evaluation_budget
            ));
        }
        let p = self.operators.crossover_probability;
        if !(0.0..=1.0).contains(&p) {
            return bad(format!("crossover probability {p} outside [0, 1]"));
        }
        if self.operators.tournament_size == 0 {
            return bad("tournament size must be positive".into());
        }
        if self.operators.elite_count >= self.initial_population {
            return bad("elite count must be smaller than the initial population".into());
        }
        if self.max_length == 0 {
            return bad("maximum genome length must be positive".into());
        }
        if self.wall_clock_budget.is_some_and(|d| d.is_zero()) {
            return bad("wall-clock budget must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("invalid search configuration: {0}")]
    Config(String),
    #[error("target routine `{0}` is not part of the API under test")]
    UnknownTarget(String),
    #[error(transparent)]
    Genome(#[from] GenomeError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("witness did not reproduce on re-execution (total {total:.6})")]
    WitnessNotConfirmed { total: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Reproduced,
    BudgetExhausted,
    WallClock,
}

impl StopReason {
    pub fn name(self) -> &'static str {
        match self {
            StopReason::Reproduced => "reproduced",
            StopReason::BudgetExhausted => "budget-exhausted",
            StopReason::WallClock => "wall-clock",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub population_size: usize,
    /// Generation number within the current population size, from 0.
    pub generation: u32,
    #[serde(with = "fixed6")]
    pub best: f64,
    #[serde(with = "fixed6")]
    pub mean: f64,
    /// Evaluations used by the run so far.
    pub evaluations: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub case_id: String,
    pub seed: u64,
    pub reproduced: bool,
    pub stop_reason: StopReason,
    pub best_fitness: FitnessValue,
    pub evaluations_used: u64,
    pub population_sizes_visited: Vec<usize>,
    /// Reproducing genome in text form.
    pub witness: Option<String>,
    pub generation_log: Vec<GenerationStats>,
}

impl RunRecord {
    pub fn witness_genome(&self, api: &Api) -> Option<Result<Genome, GenomeTextError>> {
        self.witness.as_deref().map(|t| Genome::parse(t, api))
    }
}

/// Running minimum of the per-generation best totals.
pub fn best_so_far(log: &[GenerationStats]) -> Vec<f64> {
    log.iter()
        .scan(f64::INFINITY, |best, g| {
            *best = best.min(g.best);
            Some(*best)
        })
        .collect()
}

struct Individual {
    genome: Genome,
    fitness: FitnessValue,
}

struct Run<'a, B: Backend + ?Sized> {
    backend: &'a B,
    case: &'a CrashCase,
    config: &'a SearchConfig,
    limits: GenomeLimits,
    started: Instant,
    evaluations: u64,
    best: Option<(FitnessValue, Genome)>,
    log: Vec<GenerationStats>,
    stop: Option<StopReason>,
}

impl<B: Backend + ?Sized> Run<'_, B> {
    fn out_of_time(&mut self) -> bool {
        // at least one evaluation always runs so there is a best individual
        if self.evaluations > 0 && self.config.wall_clock_budget.is_some_and(|d| self.started.elapsed() >= d) {
            self.stop = Some(StopReason::WallClock);
        }
        self.stop.is_some()
    }

    fn evaluate(&mut self, genome: Genome) -> Result<Individual, SearchError> {
        let outcome = self.backend.execute(&genome)?;
        let fitness = evaluate(self.case, &outcome);
        self.evaluations += 1;
        let better = match &self.best {
            None => true,
            Some((f, g)) => (fitness.total, genome.len()) < (f.total, g.len()),
        };
        if better {
            self.best = Some((fitness, genome.clone()));
        }
        if is_reproduced(&fitness) {
            self.stop = Some(StopReason::Reproduced);
        }
        Ok(Individual { genome, fitness })
    }

    fn record_generation(&mut self, population: &[Individual], size: usize, generation: u32) {
        if population.is_empty() {
            return;
        }
        let best = population.iter().map(|i| i.fitness.total).fold(f64::INFINITY, f64::min);
        let mean = population.iter().map(|i| i.fitness.total).sum::<f64>() / population.len() as f64;
        self.log.push(GenerationStats { population_size: size, generation, best, mean, evaluations: self.evaluations });
    }

    /// One population size: evolve until the slice is spent or the run stops.
    fn phase(&mut self, size: usize, slice: u64, rng: &mut SearchRng) -> Result<(), SearchError> {
        let api = self.backend.api();
        let target = api
            .routine_id(self.case.target_routine())
            .ok_or_else(|| SearchError::UnknownTarget(self.case.target_routine().to_string()))?;
        let ops = self.config.operators;
        let mut left = slice;

        let mut population = Vec::with_capacity(size);
        for genome in guided_initialize(api, target, size, &self.limits, rng)? {
            if left == 0 || self.out_of_time() {
                break;
            }
            population.push(self.evaluate(genome)?);
            left -= 1;
        }
        self.record_generation(&population, size, 0);

        let mut generation = 0;
        while left > 0 && !self.out_of_time() {
            generation += 1;
            let genomes: Vec<Genome> = population.iter().map(|i| i.genome.clone()).collect();
            let fitnesses: Vec<FitnessValue> = population.iter().map(|i| i.fitness).collect();

            let mut order: Vec<usize> = (0..population.len()).collect();
            order.sort_by(|&a, &b| {
                let key = |i: usize| (fitnesses[i].total, genomes[i].len(), i);
                key(a).partial_cmp(&key(b)).expect("finite totals")
            });
            let mut next: Vec<Individual> = order
                .iter()
                .take(ops.elite_count)
                .map(|&i| Individual { genome: genomes[i].clone(), fitness: fitnesses[i] })
                .collect();

            'fill: while next.len() < size {
                let a = &genomes[select(&genomes, &fitnesses, &ops, rng)];
                let b = &genomes[select(&genomes, &fitnesses, &ops, rng)];
                let (x, y) = if rng.gen_bool(ops.crossover_probability) {
                    guided_crossover(a, b, api, &self.limits, rng)?
                } else {
                    (a.clone(), b.clone())
                };
                for child in [x, y] {
                    if next.len() >= size || left == 0 || self.out_of_time() {
                        break 'fill;
                    }
                    let child = guided_mutate(&child, api, &self.limits, rng)?;
                    next.push(self.evaluate(child)?);
                    left -= 1;
                }
            }
            population = next;
            self.record_generation(&population, size, generation);
        }
        Ok(())
    }
}

/// Runs the guided GA against `backend` until the crash is reproduced or the
/// budget runs out. Deterministic for a given seed unless the wall-clock cap
/// fires.
pub fn run_search<B: Backend + ?Sized>(
    backend: &B,
    case: &CrashCase,
    config: &SearchConfig,
) -> Result<RunRecord, SearchError> {
    config.validate()?;
    if backend.api().routine_id(case.target_routine()).is_none() {
        return Err(SearchError::UnknownTarget(case.target_routine().to_string()));
    }
    let mut rng = search_rng(config.seed);
    let mut run = Run {
        backend,
        case,
        config,
        limits: config.limits(),
        started: Instant::now(),
        evaluations: 0,
        best: None,
        log: Vec::new(),
        stop: None,
    };
    let mut visited = Vec::new();
    for (size, slice) in config.schedule().into_iter().zip(config.budget_slices()) {
        if run.stop.is_some() {
            break;
        }
        visited.push(size);
        run.phase(size, slice, &mut rng)?;
    }

    let (best_fitness, best_genome) = run.best.take().expect("budget covers at least one evaluation");
    let reproduced = is_reproduced(&best_fitness);
    let witness = if reproduced {
        // confirm by re-execution; not counted against the budget
        let outcome = backend.execute(&best_genome)?;
        let check = evaluate(case, &outcome);
        if !is_reproduced(&check) {
            return Err(SearchError::WitnessNotConfirmed { total: check.total });
        }
        Some(best_genome.to_text(backend.api()))
    } else {
        None
    };
    Ok(RunRecord {
        case_id: case.id().to_string(),
        seed: config.seed,
        reproduced,
        stop_reason: run.stop.unwrap_or(StopReason::BudgetExhausted),
        best_fitness,
        evaluations_used: run.evaluations,
        population_sizes_visited: visited,
        witness,
        generation_log: run.log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stats(best: f64) -> GenerationStats {
        GenerationStats { population_size: 50, generation: 0, best, mean: best, evaluations: 0 }
    }

    #[test]
    fn running_minimum() {
        let log: Vec<_> = [5.0, 4.9, 5.2].into_iter().map(stats).collect();
        assert_eq!(best_so_far(&log), vec![5.0, 4.9, 4.9]);
        assert_eq!(best_so_far(&log[..1]), vec![5.0]);
    }

    #[test]
    fn default_schedule_and_slices() {
        let c = SearchConfig { evaluation_budget: 1_000, ..SearchConfig::default() };
        assert_eq!(c.schedule(), vec![50, 75, 100, 125, 150, 175, 200, 225, 250, 275, 300]);
        let slices = c.budget_slices();
        assert_eq!(slices.len(), 11);
        assert_eq!(slices[0], 90);
        assert_eq!(slices[10], 100);
        assert_eq!(slices.iter().sum::<u64>(), 1_000);
    }

    #[test]
    fn config_rules() {
        assert!(SearchConfig::default().validate().is_ok());
        let bad = [
            SearchConfig { population_step: 0, ..SearchConfig::default() },
            SearchConfig { initial_population: 400, ..SearchConfig::default() },
            SearchConfig { evaluation_budget: 5, ..SearchConfig::default() },
        ];
        for c in bad {
            assert!(matches!(c.validate(), Err(SearchError::Config(_))));
        }
    }
}
