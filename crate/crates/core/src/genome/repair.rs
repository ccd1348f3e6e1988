use rand::Rng;

use super::{Genome, GenomeError, GenomeLimits, SlotKind, Statement, UNBOUND};
use crate::api::Api;

/// Restores every genome invariant with minimal structural change.
///
/// Broken references are re-bound to the closest earlier slot of the right
/// kind, or to a fresh definition inserted just before the use when none
/// exists. A target invoke is appended when missing. Finally the genome is
/// trimmed to the length bound by dropping unused definitions, then
/// non-target invokes. A valid genome is returned unchanged.
pub fn repair<R: Rng + ?Sized>(
    genome: &Genome,
    api: &Api,
    limits: &GenomeLimits,
    rng: &mut R,
) -> Result<Genome, GenomeError> {
    let target_sig = api.routine(genome.target).ok_or(GenomeError::UnknownTarget)?;
    let needed = api.call_footprint(genome.target);
    if needed > limits.max_length {
        return Err(GenomeError::RepairImpossible {
            routine: target_sig.name.clone(),
            needed,
            max_length: limits.max_length,
        });
    }

    let mut out: Vec<Statement> = Vec::with_capacity(genome.len() + 4);
    let mut map: Vec<Option<usize>> = vec![None; genome.len()];
    for (i, st) in genome.statements.iter().enumerate() {
        let lookup = |r: usize| if r != UNBOUND && r < i { map[r] } else { None };
        match st {
            Statement::Construct { ty } => {
                if api.ty(*ty).is_some() {
                    map[i] = Some(out.len());
                    out.push(st.clone());
                }
            }
            Statement::SetValue { domain, value } => {
                if let Some(d) = api.domain(*domain) {
                    let value = if d.contains(value) { value.clone() } else { d.sample(rng) };
                    map[i] = Some(out.len());
                    out.push(Statement::SetValue { domain: *domain, value });
                }
            }
            Statement::Invoke { routine, receiver, args } => {
                let Some(sig) = api.routine(*routine) else { continue };
                let receiver = sig.owner.map(|owner| {
                    let wanted = receiver.and_then(lookup);
                    bind(&mut out, wanted, SlotKind::Object(owner), api, rng)
                });
                let args = sig
                    .params
                    .iter()
                    .enumerate()
                    .map(|(k, p)| {
                        let wanted = args.get(k).copied().and_then(lookup);
                        bind(&mut out, wanted, SlotKind::Value(p.domain), api, rng)
                    })
                    .collect();
                out.push(Statement::Invoke { routine: *routine, receiver, args });
            }
        }
    }

    let mut repaired = Genome::new(out, genome.target);
    if repaired.target_calls() == 0 {
        append_target_call(&mut repaired, api, rng);
    }
    trim(&mut repaired, limits, &target_sig.name)?;
    Ok(repaired)
}

/// Keeps `wanted` when it names an earlier slot of the right kind; otherwise
/// picks the closest earlier such slot, or defines a fresh one.
fn bind<R: Rng + ?Sized>(
    out: &mut Vec<Statement>,
    wanted: Option<usize>,
    kind: SlotKind,
    api: &Api,
    rng: &mut R,
) -> usize {
    if let Some(w) = wanted {
        if out.get(w).and_then(Statement::defines) == Some(kind) {
            return w;
        }
    }
    if let Some(nearest) = out.iter().rposition(|s| s.defines() == Some(kind)) {
        return nearest;
    }
    out.push(fresh_definition(kind, api, rng));
    out.len() - 1
}

pub(crate) fn fresh_definition<R: Rng + ?Sized>(kind: SlotKind, api: &Api, rng: &mut R) -> Statement {
    match kind {
        SlotKind::Object(ty) => Statement::Construct { ty },
        SlotKind::Value(domain) => {
            let d = api.domain(domain).expect("domain id from a validated signature");
            Statement::SetValue { domain, value: d.sample(rng) }
        }
    }
}

/// Appends a target invoke. The receiver reuses the closest existing object
/// of the owner type so accumulated object state is kept; argument values are
/// freshly drawn.
fn append_target_call<R: Rng + ?Sized>(genome: &mut Genome, api: &Api, rng: &mut R) {
    let sig = api.routine(genome.target).expect("checked by caller");
    let out = &mut genome.statements;
    let receiver = sig.owner.map(|owner| bind(out, None, SlotKind::Object(owner), api, rng));
    let args = sig
        .params
        .iter()
        .map(|p| {
            out.push(fresh_definition(SlotKind::Value(p.domain), api, rng));
            out.len() - 1
        })
        .collect();
    out.push(Statement::Invoke { routine: genome.target, receiver, args });
}

fn trim(genome: &mut Genome, limits: &GenomeLimits, target_name: &str) -> Result<(), GenomeError> {
    while genome.len() > limits.max_length {
        let n = genome.len();
        let unused_def =
            (0..n).rev().find(|&i| genome.statements[i].defines().is_some() && !genome.is_referenced(i));
        if let Some(i) = unused_def {
            genome.remove(i);
            continue;
        }
        let target = genome.target;
        let other_call = (0..n)
            .rev()
            .find(|&i| matches!(genome.statements[i], Statement::Invoke { .. }) && !genome.statements[i].invokes(target));
        if let Some(i) = other_call {
            genome.remove(i);
            continue;
        }
        if genome.target_calls() > 1 {
            let first = genome.statements.iter().position(|s| s.invokes(target)).expect("counted");
            genome.remove(first);
            continue;
        }
        return Err(GenomeError::RepairImpossible {
            routine: target_name.to_string(),
            needed: n,
            max_length: limits.max_length,
        });
    }
    Ok(())
}
