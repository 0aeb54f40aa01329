//! Seeded synthetic environment: targets, a property model, three executors
//! and a heuristic planner, enough to run the full loop without chemistry
//! tools or a language model.

mod executors;
mod planner;
mod rng;
mod target;

pub use executors::{
    diverse_subset, generate_executor, optimize_executor, screen_executor, OptimizeParams,
    SyntheticExecutor,
};
pub use planner::{
    parse_corrective_entries, parse_summary_pools, HeuristicPlanner, ParsedEntry,
    DEFAULT_GENERATE_COUNT,
};
pub use rng::Prng;
pub use target::{
    kit_requirements, make_target, Difficulty, PropertyModel, SyntheticTarget, NOVEL_TAGS,
    REFERENCE_LIBRARY_SIZE, REFERENCE_TAGS, TAGS_PER_MOLECULE, UNREACHABLE_DOCKING,
};

use crate::control::{run_episode, EpisodeResult, LoopConfig, LoopError};
use crate::memory::StaticMemory;

/// Run one episode of the heuristic planner against a synthetic target.
pub fn run_synthetic(target: &SyntheticTarget, config: &LoopConfig) -> Result<EpisodeResult, LoopError> {
    let task = StaticMemory::build(
        target.name.clone(),
        target.requirements.clone(),
        target.pocket.clone(),
    )?;
    let mut planner = HeuristicPlanner::new(target.requirements.clone());
    let mut executor = SyntheticExecutor::new(target.clone());
    run_episode(&task, &mut planner, &mut executor, config)
}
