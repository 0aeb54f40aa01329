//! Protocol-aware closed-loop control for set-level candidate search.
//!
//! The crate audits returned candidate pools against a set of hard
//! requirements ([`protocol`]), diagnoses failures into corrective records
//! ([`diagnosis`]), keeps a bounded three-channel planner memory ([`memory`])
//! and drives the plan/execute/audit/write-back loop ([`control`]). A seeded
//! [`synthetic`] environment exercises the loop end to end.

pub mod control;
pub mod diagnosis;
pub mod memory;
pub mod protocol;
pub mod synthetic;
pub mod trajectory;

pub use control::{run_episode, EpisodeResult, LoopConfig, Mode};
pub use memory::Budgets;
pub use protocol::{gate, CandidatePool, Molecule, Requirement, RequirementSet};
