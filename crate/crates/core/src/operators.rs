//! Guided genetic operators. Every genome they return is valid and invokes
//! the target routine at least once; repair restores that after each
//! structural change.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::api::{Api, RoutineId};
use crate::fitness::FitnessValue;
use crate::genome::{fresh_definition, repair, Genome, GenomeError, GenomeLimits, SlotKind, Statement, UNBOUND};

/// How mutation picks the statements it changes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MutationMode {
    /// Each statement mutates independently with probability `1/n`, `n`
    /// being the genome length.
    #[default]
    PerStatement,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OperatorConfig {
    pub crossover_probability: f64,
    pub mutation_mode: MutationMode,
    pub tournament_size: usize,
    pub elite_count: usize,
}

impl Default for OperatorConfig {
    fn default() -> Self {
        OperatorConfig {
            crossover_probability: 0.75,
            mutation_mode: MutationMode::PerStatement,
            tournament_size: 2,
            elite_count: 1,
        }
    }
}

/// Builds `population_size` random genomes, each repaired to validity.
///
/// A length is drawn uniformly from `1..=max_length`; random calls (with
/// their dependencies) are appended until the genome reaches it.
pub fn guided_initialize<R: Rng + ?Sized>(
    api: &Api,
    target: RoutineId,
    population_size: usize,
    limits: &GenomeLimits,
    rng: &mut R,
) -> Result<Vec<Genome>, GenomeError> {
    (0..population_size).map(|_| random_genome(api, target, limits, rng)).collect()
}

pub fn random_genome<R: Rng + ?Sized>(
    api: &Api,
    target: RoutineId,
    limits: &GenomeLimits,
    rng: &mut R,
) -> Result<Genome, GenomeError> {
    if api.routine(target).is_none() {
        return Err(GenomeError::UnknownTarget);
    }
    let length = rng.gen_range(1..=limits.max_length.max(1));
    let mut genome = Genome::new(Vec::new(), target);
    while genome.len() < length {
        let at = genome.len();
        insert_random_call(&mut genome, at, api, rng);
    }
    repair(&genome, api, limits, rng)
}

/// Inserts a call of a uniformly chosen routine at `index`, preceded by any
/// definitions it needs. References reuse an earlier compatible slot half of
/// the time when one exists. Returns the number of statements inserted.
fn insert_random_call<R: Rng + ?Sized>(genome: &mut Genome, index: usize, api: &Api, rng: &mut R) -> usize {
    let routine = RoutineId(rng.gen_range(0..api.routines.len()));
    let sig = &api.routines[routine.0];
    let mut needs: Vec<SlotKind> = Vec::new();
    needs.extend(sig.owner.map(SlotKind::Object));
    needs.extend(sig.params.iter().map(|p| SlotKind::Value(p.domain)));

    let mut at = index;
    let mut refs = Vec::with_capacity(needs.len());
    for kind in needs {
        let existing: Vec<usize> = (0..at).filter(|&i| genome.statements[i].defines() == Some(kind)).collect();
        if !existing.is_empty() && rng.gen_bool(0.5) {
            refs.push(*existing.choose(rng).expect("non-empty"));
        } else {
            genome.insert(at, fresh_definition(kind, api, rng));
            refs.push(at);
            at += 1;
        }
    }
    let receiver = sig.owner.map(|_| refs.remove(0));
    genome.insert(at, Statement::Invoke { routine, receiver, args: refs });
    at + 1 - index
}

/// Single-point crossover at one relative cut position shared by both
/// parents. References from a transplanted suffix into the discarded prefix
/// are left unbound for repair to re-target.
pub fn guided_crossover<R: Rng + ?Sized>(
    a: &Genome,
    b: &Genome,
    api: &Api,
    limits: &GenomeLimits,
    rng: &mut R,
) -> Result<(Genome, Genome), GenomeError> {
    let alpha: f64 = rng.gen();
    let cut_a = (alpha * a.len() as f64).floor() as usize;
    let cut_b = (alpha * b.len() as f64).floor() as usize;
    let first = splice(a, cut_a, b, cut_b);
    let second = splice(b, cut_b, a, cut_a);
    Ok((repair(&first, api, limits, rng)?, repair(&second, api, limits, rng)?))
}

fn splice(head: &Genome, head_cut: usize, tail: &Genome, tail_cut: usize) -> Genome {
    let mut statements = head.statements[..head_cut].to_vec();
    for st in &tail.statements[tail_cut..] {
        let mut st = st.clone();
        for r in st.references_mut() {
            *r = if *r != UNBOUND && *r >= tail_cut { *r - tail_cut + head_cut } else { UNBOUND };
        }
        statements.push(st);
    }
    Genome::new(statements, head.target)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Mutation {
    Delete,
    InsertAfter,
    Replace,
}

/// Mutates each statement with probability `1/n` and repairs the result.
pub fn guided_mutate<R: Rng + ?Sized>(
    g: &Genome,
    api: &Api,
    limits: &GenomeLimits,
    rng: &mut R,
) -> Result<Genome, GenomeError> {
    Ok(mutate_counted(g, api, limits, rng)?.0)
}

/// As [`guided_mutate`], also returning how many statements were mutated.
pub fn mutate_counted<R: Rng + ?Sized>(
    g: &Genome,
    api: &Api,
    limits: &GenomeLimits,
    rng: &mut R,
) -> Result<(Genome, usize), GenomeError> {
    let n = g.len();
    if n == 0 {
        return Ok((repair(g, api, limits, rng)?, 0));
    }
    let p = 1.0 / n as f64;
    let chosen: Vec<usize> = (0..n).filter(|_| rng.gen_bool(p)).collect();
    if chosen.is_empty() {
        return Ok((g.clone(), 0));
    }
    let mut out = g.clone();
    // back to front so earlier indices stay put
    for &i in chosen.iter().rev() {
        let replaceable = replace_applicable(&out, i, api);
        let ops: &[Mutation] = if replaceable {
            &[Mutation::Delete, Mutation::InsertAfter, Mutation::Replace]
        } else {
            &[Mutation::Delete, Mutation::InsertAfter]
        };
        match *ops.choose(rng).expect("non-empty") {
            Mutation::Delete => {
                out.remove(i);
            }
            Mutation::InsertAfter => {
                insert_random_call(&mut out, i + 1, api, rng);
            }
            Mutation::Replace => replace(&mut out, i, api, rng),
        }
    }
    Ok((repair(&out, api, limits, rng)?, chosen.len()))
}

fn replace_applicable(g: &Genome, i: usize, api: &Api) -> bool {
    match &g.statements[i] {
        Statement::Construct { .. } => false,
        Statement::SetValue { domain, .. } => api.domain(*domain).is_some_and(|d| d.size() > 1),
        Statement::Invoke { args, .. } => !args.is_empty(),
    }
}

/// Gives a set-value statement a different constant, or points one argument
/// of an invoke at a freshly defined value.
fn replace<R: Rng + ?Sized>(g: &mut Genome, i: usize, api: &Api, rng: &mut R) {
    match &mut g.statements[i] {
        Statement::SetValue { domain, value } => {
            let d = api.domain(*domain).expect("checked applicable");
            *value = d.sample_other(value, rng);
        }
        Statement::Invoke { routine, args, .. } => {
            let k = rng.gen_range(0..args.len());
            let Some(param) = api.routine(*routine).and_then(|s| s.params.get(k)) else { return };
            let def = fresh_definition(SlotKind::Value(param.domain), api, rng);
            g.insert(i, def);
            if let Statement::Invoke { args, .. } = &mut g.statements[i + 1] {
                args[k] = i;
            }
        }
        Statement::Construct { .. } => {}
    }
}

/// Tournament selection: the lowest total wins; ties go to the shorter
/// genome, then the earlier index. Returns the winner's index.
pub fn select<R: Rng + ?Sized>(
    population: &[Genome],
    fitnesses: &[FitnessValue],
    config: &OperatorConfig,
    rng: &mut R,
) -> usize {
    assert!(!population.is_empty() && population.len() == fitnesses.len());
    let key = |i: usize| (fitnesses[i].total, population[i].len(), i);
    (0..config.tournament_size.max(1))
        .map(|_| rng.gen_range(0..population.len()))
        .min_by(|&x, &y| key(x).partial_cmp(&key(y)).expect("fitness totals are finite"))
        .expect("tournament size >= 1")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genome::tests::{sample_api, valid_genome};
    use crate::genome::validate;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn initial_population_is_valid() {
        let api = sample_api();
        let limits = GenomeLimits::default();
        let pop = guided_initialize(&api, RoutineId(1), 50, &limits, &mut rng(1)).unwrap();
        assert_eq!(pop.len(), 50);
        for g in &pop {
            assert!(validate(g, &api, &limits).is_valid(), "{}", g.to_text(&api));
            assert!(g.target_calls() >= 1);
        }
    }

    #[test]
    fn crossover_of_identical_parents_is_identity() {
        let api = sample_api();
        let g = valid_genome();
        for seed in 0..20 {
            let (x, y) = guided_crossover(&g, &g, &api, &GenomeLimits::default(), &mut rng(seed)).unwrap();
            assert_eq!(x, g);
            assert_eq!(y, g);
        }
    }

    #[test]
    fn single_statement_always_mutates() {
        let api = Api::new(
            vec![],
            vec![crate::api::Signature { name: "go".into(), owner: None, params: vec![] }],
            vec![],
        );
        let g = Genome::new(vec![Statement::Invoke { routine: RoutineId(0), receiver: None, args: vec![] }], RoutineId(0));
        for seed in 0..20 {
            let (m, count) = mutate_counted(&g, &api, &GenomeLimits::default(), &mut rng(seed)).unwrap();
            assert_eq!(count, 1);
            assert!(m.target_calls() >= 1);
        }
    }

    #[test]
    fn selection_prefers_lower_total_then_shorter() {
        let api = sample_api();
        let short = valid_genome();
        let mut long = valid_genome();
        let at = long.len();
        insert_random_call(&mut long, at, &api, &mut rng(3));
        let good = FitnessValue::from_components(0.0, 0.0, 0.0);
        let bad = FitnessValue::from_components(0.625, 1.0, 1.0);
        let config = OperatorConfig { tournament_size: 64, ..OperatorConfig::default() };
        assert_eq!(select(&[short.clone(), long.clone()], &[bad, good], &config, &mut rng(0)), 1);
        assert_eq!(select(&[long, short], &[bad, bad], &config, &mut rng(0)), 1);
        assert_eq!(select(&[valid_genome()], &[bad], &OperatorConfig::default(), &mut rng(0)), 0);
    }
}
