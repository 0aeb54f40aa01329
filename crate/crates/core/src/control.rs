//! Closed-loop episode driver.
//!
//! Each iteration renders the planner input, asks the planner for an action,
//! runs it through the executor, audits the resulting pool and, on failure,
//! diagnoses it and writes the outcome back into memory. The loop stops at the
//! first passing pool or after `max_iterations`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diagnosis::{self, ActionKind, CorrectiveRecord, DiagnosisError};
use crate::memory::{
    self, adapt, char_len, Budgets, CorrectiveMemory, DynamicMemory, MemoryError, PoolSummary,
    StaticMemory,
};
use crate::protocol::{self, AuditReport, CandidatePool, MetricField, ProtocolError, Requirement};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExecutorError {
    #[error("unknown pool `{0}`")]
    UnknownPool(String),
    #[error("no molecule passed the screening filters")]
    NoSurvivors,
    #[error("invalid action: {0}")]
    InvalidAction(String),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LoopError {
    #[error("invalid loop configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Memory(#[from] MemoryError),
}

/// Why an episode stopped early. Carried as data in [`EpisodeResult`].
#[derive(Debug, Clone, PartialEq, Error)]
pub enum EpisodeFailure {
    #[error("executor failed at iteration {iteration}: {source}")]
    Executor {
        iteration: usize,
        source: ExecutorError,
    },
    #[error("executor returned pool `{found}` at iteration {iteration}, expected fresh id `{expected}`")]
    StalePoolId {
        iteration: usize,
        expected: String,
        found: String,
    },
    #[error("audit failed at iteration {iteration}: {source}")]
    Audit {
        iteration: usize,
        source: ProtocolError,
    },
    #[error("diagnosis failed at iteration {iteration}: {source}")]
    Diagnosis {
        iteration: usize,
        source: DiagnosisError,
    },
}

/// An executable step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Action {
    Generate {
        count: usize,
    },
    Optimize {
        pool: String,
        objective: MetricField,
    },
    CodeScreen {
        pools: Vec<String>,
        filters: Vec<Requirement>,
        subset_size: usize,
    },
}

impl Action {
    pub fn kind(&self) -> ActionKind {
        match self {
            Action::Generate { .. } => ActionKind::Generate,
            Action::Optimize { .. } => ActionKind::Optimize,
            Action::CodeScreen { .. } => ActionKind::CodeScreen,
        }
    }

    pub fn referenced_pools(&self) -> Vec<&str> {
        match self {
            Action::Generate { .. } => vec![],
            Action::Optimize { pool, .. } => vec![pool.as_str()],
            Action::CodeScreen { pools, .. } => pools.iter().map(String::as_str).collect(),
        }
    }

    /// Short one-line description for raw history text.
    pub fn describe(&self, output: &str) -> String {
        match self {
            Action::Generate { count } => format!("{} {count} molecules -> {output}", self.kind()),
            Action::Optimize { pool, objective } => {
                format!("{} on {pool} with {objective} objective -> {output}", self.kind())
            }
            Action::CodeScreen {
                pools, subset_size, ..
            } => format!(
                "{} on {} keeping a diverse subset of {subset_size} -> {output}",
                self.kind(),
                pools.join(", ")
            ),
        }
    }
}

/// Planner output: the action and its free-text justification.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub action: Action,
    pub response: String,
}

/// Every pool produced in one episode, in creation order.
#[derive(Debug, Clone, Default)]
pub struct PoolRegistry {
    pools: Vec<CandidatePool>,
}

impl PoolRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn next_pool_id(&self) -> String {
        format!("MOL{:03}", self.pools.len() + 1)
    }

    pub fn get(&self, id: &str) -> Option<&CandidatePool> {
        self.pools.iter().find(|p| p.id == id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.get(id).is_some()
    }

    pub fn insert(&mut self, pool: CandidatePool) {
        self.pools.push(pool);
    }

    pub fn len(&self) -> usize {
        self.pools.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pools.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, CandidatePool> {
        self.pools.iter()
    }
}

pub struct PlannerInput<'a> {
    pub iteration: usize,
    /// Agent state in the structured modes, raw history text otherwise.
    pub text: &'a str,
    pub registry: &'a PoolRegistry,
    pub seed: u64,
}

pub trait Planner {
    fn plan(&mut self, input: &PlannerInput<'_>) -> Decision;
}

pub trait Executor {
    /// Produce the pool for `action`. The returned pool must carry
    /// `registry.next_pool_id()` as its id.
    fn execute(
        &mut self,
        action: &Action,
        registry: &PoolRegistry,
        iteration: usize,
        seed: u64,
    ) -> Result<CandidatePool, ExecutorError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    #[serde(rename = "cacm")]
    Cacm,
    #[serde(rename = "raw")]
    RawBaseline,
    #[serde(rename = "repair-only")]
    RepairSignalOnly,
    #[serde(rename = "no-corr-select")]
    NoCorrectiveSelection,
    #[serde(rename = "no-dyn-compress")]
    NoDynamicCompression,
}

impl Mode {
    pub const ALL: [Mode; 5] = [
        Mode::Cacm,
        Mode::NoDynamicCompression,
        Mode::NoCorrectiveSelection,
        Mode::RepairSignalOnly,
        Mode::RawBaseline,
    ];

    pub fn token(self) -> &'static str {
        match self {
            Mode::Cacm => "cacm",
            Mode::RawBaseline => "raw",
            Mode::RepairSignalOnly => "repair-only",
            Mode::NoCorrectiveSelection => "no-corr-select",
            Mode::NoDynamicCompression => "no-dyn-compress",
        }
    }

    /// Whether the planner sees the appended history stream instead of channels.
    pub fn uses_raw_history(self) -> bool {
        matches!(self, Mode::RawBaseline | Mode::RepairSignalOnly)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Mode::ALL
            .into_iter()
            .find(|m| m.token() == s)
            .ok_or_else(|| format!("unknown mode `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoopConfig {
    pub max_iterations: usize,
    pub budgets: Budgets,
    pub mode: Mode,
    pub seed: u64,
}

impl Default for LoopConfig {
    fn default() -> Self {
        LoopConfig {
            max_iterations: 10,
            budgets: Budgets::default(),
            mode: Mode::Cacm,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelChars {
    #[serde(rename = "static")]
    pub static_chars: usize,
    #[serde(rename = "dynamic")]
    pub dynamic_chars: usize,
    #[serde(rename = "corrective")]
    pub corrective_chars: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub action: Action,
    pub pool_id: String,
    pub pool_size: usize,
    pub quality_score: f64,
    pub report: AuditReport,
    pub corrective: Option<CorrectiveRecord>,
    /// Planner-input length at this iteration.
    pub state_chars: usize,
    pub channel_chars: ChannelChars,
    /// Pool summaries visible in the rendered dynamic channel.
    pub dynamic_pools: usize,
    /// Iterations of the corrective records retained after this iteration's write-back.
    pub corrective_entries: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct EpisodeResult {
    pub success: bool,
    pub returned_pool: Option<CandidatePool>,
    pub iterations_used: usize,
    pub trajectory: Vec<IterationRecord>,
    pub failure: Option<EpisodeFailure>,
}

/// One block of the appended history stream.
pub struct RawHistoryEntry<'a> {
    pub iteration: usize,
    pub response: &'a str,
    pub action: &'a Action,
    pub pool_id: &'a str,
    pub report: &'a AuditReport,
    pub diagnosis: Option<&'a CorrectiveRecord>,
}

pub const RAW_BLOCK_PREFIX: &str = "--- Iteration ";

/// Opening line of the history stream: the task, stated once.
pub fn raw_history_start(task: &StaticMemory) -> String {
    let reqs: Vec<String> = task
        .requirements
        .iter()
        .map(|r| {
            let s = memory::requirement_sentence(r);
            s.trim_end_matches('.').to_string()
        })
        .collect();
    format!(
        "Initial task: design a set of molecules for {}. Requirements: {}. Available actions: GENERATE, OPTIMIZE, CODE.",
        task.target,
        reqs.join("; ")
    )
}

/// Append one iteration block to the history. Never truncates.
pub fn raw_history_append(history: &str, entry: &RawHistoryEntry<'_>) -> String {
    let mut out = String::from(history);
    if !out.is_empty() {
        out.push('\n');
    }
    out.push_str(&format!("{RAW_BLOCK_PREFIX}{} ---\n", entry.iteration));
    out.push_str(&format!("Planner response: {}\n", entry.response));
    out.push_str(&format!(
        "Action: {}.\n",
        entry.action.describe(entry.pool_id)
    ));
    let verdict = if entry.report.passed {
        "requirements satisfied.".to_string()
    } else {
        format!(
            "requirements not satisfied. Failed constraints include {}.",
            entry.report.failed_labels.join(", ")
        )
    };
    out.push_str(&format!(
        "Evaluation after iteration {}: {verdict}",
        entry.iteration
    ));
    let observed: Vec<String> = entry
        .report
        .observations
        .iter()
        .zip(entry.report.residuals.iter())
        .map(|(o, r)| format!("{} {:.3} (residual {:+.3})", o.label, o.value, r.residual))
        .collect();
    if !observed.is_empty() {
        out.push_str(&format!("\nObserved: {}.", observed.join("; ")));
    }
    out.push_str(&format!(
        "\nCurrent conclusion: {} of {} requirements remain unmet after {}.",
        entry.report.failed_labels.len(),
        entry.report.residuals.len(),
        entry.pool_id
    ));
    if let Some(d) = entry.diagnosis {
        for line in d.render_lines() {
            out.push_str("\nDiagnosis: ");
            out.push_str(&line);
        }
    }
    out
}

fn count_rendered_pools(dynamic_text: &str, dynamic: &DynamicMemory) -> usize {
    dynamic
        .pools
        .iter()
        .filter(|p| dynamic_text.lines().any(|l| l == p.render_line()))
        .count()
}

/// Run one episode to first success or exhaustion.
pub fn run_episode(
    task: &StaticMemory,
    planner: &mut dyn Planner,
    executor: &mut dyn Executor,
    config: &LoopConfig,
) -> Result<EpisodeResult, LoopError> {
    if config.max_iterations == 0 {
        return Err(LoopError::Config("max_iterations must be positive".into()));
    }
    config.budgets.validate()?;
    let budgets = &config.budgets;
    let reqs = &task.requirements;
    let mode = config.mode;

    let static_text = task.render(budgets.b_s)?;
    let mut registry = PoolRegistry::new();
    let mut dynamic = DynamicMemory::default();
    let mut corrective = CorrectiveMemory::default();
    let mut history = if mode.uses_raw_history() {
        raw_history_start(task)
    } else {
        String::new()
    };
    let mut summaries: Vec<PoolSummary> = Vec::new();
    let mut trajectory = Vec::new();

    let finish = |trajectory: Vec<IterationRecord>,
                  registry: &PoolRegistry,
                  summaries: &[PoolSummary],
                  failure: Option<EpisodeFailure>| {
        // best by score, later iteration on ties
        let best = summaries
            .iter()
            .min_by(|a, b| memory::pool_rank(a, b))
            .and_then(|s| registry.get(&s.pool_id).cloned());
        EpisodeResult {
            success: false,
            returned_pool: best,
            iterations_used: trajectory.len(),
            trajectory,
            failure,
        }
    };

    for iteration in 1..=config.max_iterations {
        let (input, channel_chars, dynamic_pools) = if mode.uses_raw_history() {
            (history.clone(), ChannelChars::default(), 0)
        } else {
            let dynamic_text = if mode == Mode::NoDynamicCompression {
                dynamic.render(usize::MAX)?
            } else {
                dynamic.render(budgets.b_d)?
            };
            let corrective_text = corrective.render(budgets.b_c)?;
            let dynamic_pools = count_rendered_pools(&dynamic_text, &dynamic);
            let state = adapt(static_text.clone(), dynamic_text, corrective_text);
            let (s, d, c) = state.channel_chars();
            (
                state.text(),
                ChannelChars {
                    static_chars: s,
                    dynamic_chars: d,
                    corrective_chars: c,
                },
                dynamic_pools,
            )
        };
        let state_chars = char_len(&input);

        let decision = planner.plan(&PlannerInput {
            iteration,
            text: &input,
            registry: &registry,
            seed: config.seed,
        });

        let expected_id = registry.next_pool_id();
        let pool = match executor.execute(&decision.action, &registry, iteration, config.seed) {
            Ok(pool) => pool,
            Err(source) => {
                let failure = EpisodeFailure::Executor { iteration, source };
                return Ok(finish(trajectory, &registry, &summaries, Some(failure)));
            }
        };
        if pool.id != expected_id {
            let failure = EpisodeFailure::StalePoolId {
                iteration,
                expected: expected_id,
                found: pool.id,
            };
            return Ok(finish(trajectory, &registry, &summaries, Some(failure)));
        }
        let report = match protocol::gate(&pool, reqs) {
            Ok(r) => r,
            Err(source) => {
                let failure = EpisodeFailure::Audit { iteration, source };
                return Ok(finish(trajectory, &registry, &summaries, Some(failure)));
            }
        };
        let summary = PoolSummary::of(&pool, iteration, reqs);
        let record_base = |corrective_rec: Option<CorrectiveRecord>, entries: Vec<usize>| {
            IterationRecord {
                iteration,
                action: decision.action.clone(),
                pool_id: pool.id.clone(),
                pool_size: pool.len(),
                quality_score: summary.quality_score,
                report: report.clone(),
                corrective: corrective_rec,
                state_chars,
                channel_chars,
                dynamic_pools,
                corrective_entries: entries,
            }
        };

        if report.passed {
            let entries = corrective.records.iter().map(|r| r.iteration).collect();
            trajectory.push(record_base(None, entries));
            return Ok(EpisodeResult {
                success: true,
                returned_pool: Some(pool),
                iterations_used: trajectory.len(),
                trajectory,
                failure: None,
            });
        }

        let diagnosis = match diagnosis::diagnose(reqs, &pool, &report, iteration) {
            Ok(d) => d,
            Err(source) => {
                let failure = EpisodeFailure::Diagnosis { iteration, source };
                return Ok(finish(trajectory, &registry, &summaries, Some(failure)));
            }
        };

        let action_record = memory::ActionRecord {
            iteration,
            action: decision.action.kind(),
            pool_id: pool.id.clone(),
            passed: false,
        };
        match mode {
            Mode::Cacm => {
                corrective = corrective.update(diagnosis.clone(), budgets);
                dynamic = dynamic.update(summary.clone(), action_record, budgets);
            }
            Mode::NoCorrectiveSelection => {
                corrective = corrective.update_unbounded(diagnosis.clone());
                dynamic = dynamic.update(summary.clone(), action_record, budgets);
            }
            Mode::NoDynamicCompression => {
                corrective = corrective.update(diagnosis.clone(), budgets);
                dynamic = dynamic.update_unbounded(summary.clone(), action_record, budgets);
            }
            Mode::RawBaseline | Mode::RepairSignalOnly => {
                let diag = (mode == Mode::RepairSignalOnly).then_some(&diagnosis);
                history = raw_history_append(
                    &history,
                    &RawHistoryEntry {
                        iteration,
                        response: &decision.response,
                        action: &decision.action,
                        pool_id: &pool.id,
                        report: &report,
                        diagnosis: diag,
                    },
                );
            }
        }

        let entries = corrective.records.iter().map(|r| r.iteration).collect();
        trajectory.push(record_base(Some(diagnosis), entries));
        summaries.push(summary);
        registry.insert(pool);
    }

    Ok(finish(trajectory, &registry, &summaries, None))
}
