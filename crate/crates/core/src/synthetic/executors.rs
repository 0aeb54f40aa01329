//! Stand-ins for the generation, optimization and code/screen tools.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use super::rng::Prng;
use super::target::{draw_features, draw_tag, SyntheticTarget, REFERENCE_TAGS};
use crate::control::{Action, Executor, ExecutorError, PoolRegistry};
use crate::protocol::{jaccard, CandidatePool, MetricField, Molecule, Requirement, NOVELTY_KEY};

const PER_MOLECULE: [MetricField; 4] = [
    MetricField::Docking,
    MetricField::Qed,
    MetricField::Sas,
    MetricField::Lipinski,
];

/// Typical improvement per optimization step, in native units.
fn step_unit(field: &MetricField) -> f64 {
    match field {
        MetricField::Docking => 1.0,
        MetricField::Qed => 0.06,
        MetricField::Sas => 0.25,
        MetricField::Lipinski => 0.25,
        _ => 0.0,
    }
}

/// +1 where larger values are better, -1 where smaller values are.
fn better_direction(field: &MetricField) -> f64 {
    match field {
        MetricField::Docking | MetricField::Sas => -1.0,
        _ => 1.0,
    }
}

fn clamp_property(field: &MetricField, value: f64) -> f64 {
    match field {
        MetricField::Qed => value.clamp(0.01, 0.99),
        MetricField::Sas => value.clamp(1.0, 10.0),
        MetricField::Lipinski => value.clamp(0.0, 4.0),
        MetricField::Docking => value.clamp(-20.0, 5.0),
        _ => value,
    }
}

fn build_molecule(
    id: String,
    docking: f64,
    qed: f64,
    sas: f64,
    lipinski: f64,
    features: BTreeSet<u32>,
    target: &SyntheticTarget,
) -> Result<Molecule, ExecutorError> {
    let novelty = target.novelty_of(&features);
    let properties: BTreeMap<String, f64> = [
        ("docking", docking),
        ("qed", qed),
        ("sas", sas),
        ("lipinski", lipinski),
        (NOVELTY_KEY, novelty),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect();
    Ok(Molecule::new(id, properties, features)?)
}

/// Sample `n` fresh molecules from the target's property model.
pub fn generate_executor(
    n: usize,
    target: &SyntheticTarget,
    rng: &mut Prng,
    pool_id: &str,
    iteration: usize,
) -> Result<CandidatePool, ExecutorError> {
    if n == 0 {
        return Err(ExecutorError::InvalidAction("generate needs n >= 1".into()));
    }
    let m = &target.model;
    let mut molecules = Vec::with_capacity(n);
    for i in 0..n {
        let docking = clamp_property(&MetricField::Docking, rng.normal(m.docking_mean, m.docking_sd));
        let qed = clamp_property(&MetricField::Qed, rng.normal(m.qed_mean, m.qed_sd));
        let sas = clamp_property(&MetricField::Sas, rng.normal(m.sas_mean, m.sas_sd));
        let lipinski = clamp_property(
            &MetricField::Lipinski,
            rng.normal(m.lipinski_mean, m.lipinski_sd),
        );
        let features = draw_features(rng, m.reference_tag_prob);
        molecules.push(build_molecule(
            format!("{pool_id}-{i:03}"),
            docking,
            qed,
            sas,
            lipinski,
            features,
            target,
        )?);
    }
    Ok(CandidatePool::new(pool_id, molecules, iteration)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizeParams {
    pub improve_prob: f64,
    pub step_scale: f64,
    /// Size of the side-effect on one other property, relative to its step unit.
    pub penalty_scale: f64,
    pub max_swaps: u64,
}

impl Default for OptimizeParams {
    fn default() -> Self {
        OptimizeParams {
            improve_prob: 0.8,
            step_scale: 1.0,
            penalty_scale: 0.35,
            max_swaps: 2,
        }
    }
}

/// Perturb every molecule of `source` towards a better `objective`, with a
/// penalty on one other property and up to `max_swaps` feature tag swaps.
pub fn optimize_executor(
    source: &CandidatePool,
    objective: &MetricField,
    target: &SyntheticTarget,
    rng: &mut Prng,
    params: &OptimizeParams,
    pool_id: &str,
    iteration: usize,
) -> Result<CandidatePool, ExecutorError> {
    let mut molecules = Vec::with_capacity(source.len());
    for (i, parent) in source.molecules.iter().enumerate() {
        let mut values: Vec<f64> = PER_MOLECULE
            .iter()
            .map(|f| {
                parent
                    .property(f.property_key().expect("per-molecule field"))
                    .ok_or_else(|| ExecutorError::InvalidAction(format!(
                        "molecule {} lacks {f}",
                        parent.id
                    )))
            })
            .collect::<Result<_, _>>()?;
        let mut features = parent.features.clone();

        let improve = rng.chance(params.improve_prob);
        let step = params.step_scale * rng.range(0.4, 1.0);
        let objective_idx = PER_MOLECULE.iter().position(|f| f == objective);
        if improve {
            match objective_idx {
                Some(j) => {
                    let f = &PER_MOLECULE[j];
                    values[j] = clamp_property(f, values[j] + better_direction(f) * step * step_unit(f));
                }
                None if *objective == MetricField::Novelty => {
                    // trade one reference-region tag for a novel one
                    if let Some(&t) = features.iter().find(|&&t| t < REFERENCE_TAGS) {
                        features.remove(&t);
                        while !features.insert(draw_tag(rng, 0.0)) {}
                    }
                }
                None => {}
            }
        }

        let others: Vec<usize> = (0..PER_MOLECULE.len())
            .filter(|&j| Some(j) != objective_idx)
            .collect();
        let victim = others[rng.below(others.len() as u64) as usize];
        let f = &PER_MOLECULE[victim];
        let penalty = params.penalty_scale * rng.uniform() * step_unit(f);
        values[victim] = clamp_property(f, values[victim] - better_direction(f) * penalty);

        let swaps = rng.below(params.max_swaps + 1);
        for _ in 0..swaps {
            let drop_at = rng.below(features.len() as u64) as usize;
            let dropped = *features.iter().nth(drop_at).expect("index in range");
            features.remove(&dropped);
            loop {
                let t = draw_tag(rng, target.model.reference_tag_prob);
                if t != dropped && features.insert(t) {
                    break;
                }
            }
        }

        molecules.push(build_molecule(
            format!("{pool_id}-{i:03}"),
            values[0],
            values[1],
            values[2],
            values[3],
            features,
            target,
        )?);
    }
    Ok(CandidatePool::new(pool_id, molecules, iteration)?)
}

fn passes_filters(m: &Molecule, filters: &[Requirement]) -> bool {
    filters
        .iter()
        .filter(|r| r.is_per_molecule())
        .all(|r| r.molecule_satisfies(m) == Some(true))
}

/// Farthest-point greedy selection of `n` molecules by Jaccard distance.
/// Starts from the smallest id; ties go to the smaller id.
pub fn diverse_subset(candidates: &[Molecule], n: usize) -> Vec<Molecule> {
    let mut order: Vec<&Molecule> = candidates.iter().collect();
    order.sort_by(|a, b| a.id.cmp(&b.id));
    if order.len() <= n {
        return order.into_iter().cloned().collect();
    }
    let mut chosen = vec![false; order.len()];
    let mut min_dist = vec![f64::INFINITY; order.len()];
    let mut picked = Vec::with_capacity(n);
    let mut next = 0;
    for _ in 0..n {
        chosen[next] = true;
        picked.push(order[next].clone());
        for (j, m) in order.iter().enumerate() {
            if !chosen[j] {
                let d = 1.0 - jaccard(&order[next].features, &m.features);
                min_dist[j] = min_dist[j].min(d);
            }
        }
        let mut best: Option<usize> = None;
        for j in 0..order.len() {
            if chosen[j] {
                continue;
            }
            if best.is_none_or(|b| min_dist[j] > min_dist[b]) {
                best = Some(j);
            }
        }
        match best {
            Some(b) => next = b,
            None => break,
        }
    }
    picked
}

/// Union the pools, keep molecules passing every per-molecule filter and
/// return a diverse subset of `n`, or every survivor if fewer remain.
pub fn screen_executor(
    pools: &[&CandidatePool],
    filters: &[Requirement],
    n: usize,
    pool_id: &str,
    iteration: usize,
) -> Result<CandidatePool, ExecutorError> {
    if n < 2 {
        return Err(ExecutorError::InvalidAction("screen needs n >= 2".into()));
    }
    let mut seen = HashSet::new();
    let survivors: Vec<Molecule> = pools
        .iter()
        .flat_map(|p| p.molecules.iter())
        .filter(|m| seen.insert(m.id.clone()))
        .filter(|m| passes_filters(m, filters))
        .cloned()
        .collect();
    if survivors.is_empty() {
        return Err(ExecutorError::NoSurvivors);
    }
    let subset = diverse_subset(&survivors, n);
    Ok(CandidatePool::new(pool_id, subset, iteration)?)
}

/// Executor contract over a synthetic target. Iteration `k` of an episode
/// draws from PRNG stream `k` of the episode seed.
#[derive(Debug, Clone)]
pub struct SyntheticExecutor {
    pub target: SyntheticTarget,
    pub optimize: OptimizeParams,
}

impl SyntheticExecutor {
    pub fn new(target: SyntheticTarget) -> Self {
        SyntheticExecutor {
            target,
            optimize: OptimizeParams::default(),
        }
    }
}

impl Executor for SyntheticExecutor {
    fn execute(
        &mut self,
        action: &Action,
        registry: &PoolRegistry,
        iteration: usize,
        seed: u64,
    ) -> Result<CandidatePool, ExecutorError> {
        let mut rng = Prng::new(seed, iteration as u64);
        let pool_id = registry.next_pool_id();
        let lookup = |id: &str| {
            registry
                .get(id)
                .ok_or_else(|| ExecutorError::UnknownPool(id.to_string()))
        };
        match action {
            Action::Generate { count } => {
                generate_executor(*count, &self.target, &mut rng, &pool_id, iteration)
            }
            Action::Optimize { pool, objective } => optimize_executor(
                lookup(pool)?,
                objective,
                &self.target,
                &mut rng,
                &self.optimize,
                &pool_id,
                iteration,
            ),
            Action::CodeScreen {
                pools,
                filters,
                subset_size,
            } => {
                if pools.is_empty() {
                    return Err(ExecutorError::InvalidAction(
                        "code/screen needs at least one pool".into(),
                    ));
                }
                let sources = pools
                    .iter()
                    .map(|p| lookup(p))
                    .collect::<Result<Vec<_>, _>>()?;
                screen_executor(&sources, filters, *subset_size, &pool_id, iteration)
            }
        }
    }
}
