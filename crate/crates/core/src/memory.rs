//! Three-channel planner memory.
//!
//! * static: task requirements and pocket context, fixed for an episode;
//! * dynamic: summaries of the best pools so far plus a short window of recent actions;
//! * corrective: selected diagnosis records from failed audits.
//!
//! Each channel is selected by count, rendered through a fixed template and cut
//! to a character budget. [`adapt`] joins the three rendered channels into the
//! planner-facing [`AgentState`]. All updates return new values.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diagnosis::{ActionKind, CorrectiveRecord};
use crate::protocol::{
    self, AggregationKind, CandidatePool, Comparison, MetricField, Requirement, RequirementSet,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MemoryError {
    #[error("channel budget {0} is below the minimum of {MIN_CHANNEL_BUDGET} characters")]
    BudgetTooSmall(usize),
    #[error("budget `{0}` must be positive")]
    ZeroBudget(&'static str),
    #[error("static memory needs a target id")]
    MissingTarget,
    #[error("static memory needs at least one requirement")]
    NoRequirements,
    #[error(transparent)]
    Protocol(#[from] protocol::ProtocolError),
}

pub const MIN_CHANNEL_BUDGET: usize = 64;
pub const TRUNCATION_MARKER: &str = "[truncated]";

pub const STATIC_LABEL: &str = "== STATIC ==";
pub const DYNAMIC_LABEL: &str = "== DYNAMIC ==";
pub const CORRECTIVE_LABEL: &str = "== CORRECTIVE ==";

/// Characters the three channel labels and their separators add to a state.
pub fn label_overhead() -> usize {
    char_len(STATIC_LABEL) + char_len(DYNAMIC_LABEL) + char_len(CORRECTIVE_LABEL) + 5
}

/// Length in code points.
pub fn char_len(s: &str) -> usize {
    s.chars().count()
}

/// Selection counts and per-channel character budgets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budgets {
    /// retained pool summaries
    pub k_d: usize,
    /// recent-action window
    pub w_d: usize,
    /// retained corrective records
    pub k_c: usize,
    pub b_s: usize,
    pub b_d: usize,
    pub b_c: usize,
}

impl Default for Budgets {
    fn default() -> Self {
        Budgets {
            k_d: 4,
            w_d: 3,
            k_c: 3,
            b_s: 1400,
            b_d: 1800,
            b_c: 1200,
        }
    }
}

impl Budgets {
    pub fn validate(&self) -> Result<(), MemoryError> {
        for (name, v) in [("k_d", self.k_d), ("w_d", self.w_d), ("k_c", self.k_c)] {
            if v == 0 {
                return Err(MemoryError::ZeroBudget(name));
            }
        }
        for v in [self.b_s, self.b_d, self.b_c] {
            if v < MIN_CHANNEL_BUDGET {
                return Err(MemoryError::BudgetTooSmall(v));
            }
        }
        Ok(())
    }

    /// Upper bound on the planner-facing state length under these budgets.
    pub fn state_bound(&self) -> usize {
        self.b_s + self.b_d + self.b_c + label_overhead()
    }
}

/// Free-form pocket descriptors, rendered one `key: value` line each in order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PocketSummary(pub Vec<(String, String)>);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticMemory {
    pub target: String,
    pub requirements: RequirementSet,
    pub pocket: PocketSummary,
}

impl StaticMemory {
    pub fn build(
        target: impl Into<String>,
        requirements: RequirementSet,
        pocket: PocketSummary,
    ) -> Result<Self, MemoryError> {
        let target = target.into();
        if target.trim().is_empty() {
            return Err(MemoryError::MissingTarget);
        }
        if requirements.is_empty() {
            return Err(MemoryError::NoRequirements);
        }
        Ok(StaticMemory {
            target,
            requirements,
            pocket,
        })
    }

    pub fn lines(&self) -> Vec<String> {
        let mut lines = vec![
            format!("Target: {}", self.target),
            "Task requirements".to_string(),
        ];
        lines.extend(self.requirements.iter().map(requirement_sentence));
        if !self.pocket.0.is_empty() {
            lines.push("Pocket summary".to_string());
            lines.extend(self.pocket.0.iter().map(|(k, v)| format!("{k}: {v}")));
        }
        lines
    }

    pub fn render(&self, budget: usize) -> Result<String, MemoryError> {
        render_channel(&self.lines(), budget)
    }
}

/// Plain-language statement of a requirement, e.g. "Vina score must be lower than -7.77."
pub fn requirement_sentence(r: &Requirement) -> String {
    let b = protocol::fmt_threshold(r.threshold);
    if r.field == MetricField::PoolSize {
        let phrase = match r.comparison {
            Comparison::Ge => "At least",
            Comparison::Gt => "More than",
            Comparison::Le => "At most",
            Comparison::Lt => "Fewer than",
        };
        return format!("{phrase} {b} molecules.");
    }
    // developability scores are phrased by direction of improvement
    let developability = matches!(
        r.field,
        MetricField::Qed | MetricField::Sas | MetricField::Lipinski
    );
    let phrase = match (developability, r.comparison) {
        (true, c) if c.is_strict() => "must be better than",
        (true, c) if c.larger_is_better() => "must be better than or at least",
        (true, _) => "must be better than or at most",
        (false, Comparison::Ge) => "must be at least",
        (false, Comparison::Gt) => "must be greater than",
        (false, Comparison::Le) => "must be at most",
        (false, Comparison::Lt) => "must be lower than",
    };
    format!("{} {phrase} {b}.", r.field.display_name())
}

/// Set-level statistics of one pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolStats {
    pub size: usize,
    pub diversity: f64,
    pub worst_docking: Option<f64>,
    pub min_novelty: Option<f64>,
    pub min_qed: Option<f64>,
    pub max_sas: Option<f64>,
    pub min_lipinski: Option<f64>,
}

impl PoolStats {
    /// Recomputes every statistic through the protocol aggregations.
    pub fn of(pool: &CandidatePool) -> Self {
        // lower-bound comparisons aggregate to the minimum, upper-bound to the maximum
        let worst = |field: MetricField, cmp: Comparison| -> Option<f64> {
            let agg = protocol::expected_aggregation(&field, cmp);
            let req = Requirement::new("stat", field, agg, cmp, 0.0).ok()?;
            protocol::aggregate(pool, &req).ok().map(|o| o.value)
        };
        let diversity = protocol::diversity(pool).unwrap_or(0.0);
        PoolStats {
            size: pool.len(),
            diversity,
            worst_docking: worst(MetricField::Docking, Comparison::Le),
            min_novelty: worst(MetricField::Novelty, Comparison::Ge),
            min_qed: worst(MetricField::Qed, Comparison::Ge),
            max_sas: worst(MetricField::Sas, Comparison::Le),
            min_lipinski: worst(MetricField::Lipinski, Comparison::Ge),
        }
    }

    /// The statistic matching a requirement's field and aggregation, if tracked.
    pub fn observation_for(&self, r: &Requirement) -> Option<f64> {
        use AggregationKind::*;
        match (&r.field, r.aggregation) {
            (MetricField::PoolSize, Cardinality) => Some(self.size as f64),
            (MetricField::Diversity, SetFunctional) => Some(self.diversity),
            (MetricField::Novelty, SetFunctional) => self.min_novelty,
            (MetricField::Docking, WorstCaseMax) => self.worst_docking,
            (MetricField::Qed, WorstCaseMin) => self.min_qed,
            (MetricField::Sas, WorstCaseMax) => self.max_sas,
            (MetricField::Lipinski, WorstCaseMin) => self.min_lipinski,
            _ => None,
        }
    }
}

fn clip01(x: f64) -> f64 {
    if x.is_nan() {
        0.0
    } else {
        x.clamp(0.0, 1.0)
    }
}

/// Satisfaction ratio of one indicator in `[0, 1]`; 1 means the threshold is met.
pub fn indicator_ratio(observation: f64, r: &Requirement) -> f64 {
    let b = r.threshold;
    if r.comparison.larger_is_better() {
        if b > 0.0 {
            clip01(observation / b)
        } else {
            clip01(1.0 + (observation - b) / b.abs().max(1.0))
        }
    } else if b < 0.0 {
        // both negative when satisfied, e.g. docking
        clip01(observation / b)
    } else if b > 0.0 {
        if observation <= 0.0 {
            1.0
        } else {
            clip01(b / observation)
        }
    } else {
        clip01(1.0 + (b - observation))
    }
}

/// Equal-weight mean of the indicator ratios over the standard metrics the
/// requirement set constrains. Custom metrics do not contribute.
pub fn quality_score(stats: &PoolStats, reqs: &RequirementSet) -> f64 {
    let ratios: Vec<f64> = reqs
        .iter()
        .filter_map(|r| stats.observation_for(r).map(|o| indicator_ratio(o, r)))
        .collect();
    if ratios.is_empty() {
        0.0
    } else {
        ratios.iter().sum::<f64>() / ratios.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolSummary {
    pub pool_id: String,
    pub iteration: usize,
    pub stats: PoolStats,
    pub quality_score: f64,
}

impl PoolSummary {
    pub fn of(pool: &CandidatePool, iteration: usize, reqs: &RequirementSet) -> Self {
        let stats = PoolStats::of(pool);
        let quality_score = quality_score(&stats, reqs);
        PoolSummary {
            pool_id: pool.id.clone(),
            iteration,
            stats,
            quality_score,
        }
    }

    pub fn render_line(&self) -> String {
        let s = &self.stats;
        let mut parts = vec![
            format!("score {:.4}", self.quality_score),
            format!("size {}", s.size),
            format!("diversity {:.4}", s.diversity),
        ];
        let opt = |name: &str, v: Option<f64>| v.map(|v| format!("{name} {v:.3}"));
        parts.extend(
            [
                opt("worst Vina", s.worst_docking),
                opt("minimum novelty", s.min_novelty),
                opt("minimum QED", s.min_qed),
                opt("maximum SAS", s.max_sas),
                opt("minimum Lipinski", s.min_lipinski),
            ]
            .into_iter()
            .flatten(),
        );
        format!("{}: {}.", self.pool_id, parts.join("; "))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionRecord {
    pub iteration: usize,
    pub action: ActionKind,
    pub pool_id: String,
    pub passed: bool,
}

impl ActionRecord {
    pub fn render_line(&self) -> String {
        format!(
            "Iteration-history entry {}: {} -> {}; strict protocol pass = {}.",
            self.iteration,
            self.action,
            self.pool_id,
            if self.passed { "True" } else { "False" }
        )
    }
}

/// Ordering for retained pools: higher score first, then the later iteration.
pub fn pool_rank(a: &PoolSummary, b: &PoolSummary) -> Ordering {
    b.quality_score
        .total_cmp(&a.quality_score)
        .then(b.iteration.cmp(&a.iteration))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DynamicMemory {
    pub pools: Vec<PoolSummary>,
    pub actions: Vec<ActionRecord>,
}

impl DynamicMemory {
    /// Append and select: top `k_d` pools by rank and the `w_d` most recent actions.
    pub fn update(&self, summary: PoolSummary, action: ActionRecord, budgets: &Budgets) -> Self {
        let mut next = self.append(summary, action, budgets);
        next.pools.truncate(budgets.k_d);
        next
    }

    /// Append without the pool-count selection; the action window still applies.
    pub fn update_unbounded(
        &self,
        summary: PoolSummary,
        action: ActionRecord,
        budgets: &Budgets,
    ) -> Self {
        self.append(summary, action, budgets)
    }

    fn append(&self, summary: PoolSummary, action: ActionRecord, budgets: &Budgets) -> Self {
        let mut pools = self.pools.clone();
        pools.push(summary);
        pools.sort_by(pool_rank);

        let mut actions = self.actions.clone();
        actions.push(action);
        actions.sort_by_key(|a| a.iteration);
        let skip = actions.len().saturating_sub(budgets.w_d);
        actions.drain(..skip);

        DynamicMemory { pools, actions }
    }

    pub fn lines(&self) -> Vec<String> {
        let mut lines = vec!["Current selected molecule pools".to_string()];
        lines.extend(self.pools.iter().map(PoolSummary::render_line));
        lines.push("Recent actions".to_string());
        lines.extend(self.actions.iter().map(ActionRecord::render_line));
        lines
    }

    pub fn render(&self, budget: usize) -> Result<String, MemoryError> {
        render_channel(&self.lines(), budget)
    }
}

/// Ordering among corrective records: higher severity first, then the later iteration.
pub fn corrective_rank(a: &CorrectiveRecord, b: &CorrectiveRecord) -> Ordering {
    b.severity
        .total_cmp(&a.severity)
        .then(b.iteration.cmp(&a.iteration))
}

fn same_content(a: &CorrectiveRecord, b: &CorrectiveRecord) -> bool {
    a.family == b.family && a.failed_labels == b.failed_labels && a.repair_hint == b.repair_hint
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorrectiveMemory {
    pub records: Vec<CorrectiveRecord>,
}

impl CorrectiveMemory {
    /// Append, deduplicate by content, then keep the newest record plus the
    /// `k_c - 1` best of the rest by [`corrective_rank`].
    pub fn update(&self, record: CorrectiveRecord, budgets: &Budgets) -> Self {
        let mut kept: Vec<CorrectiveRecord> = Vec::with_capacity(self.records.len() + 1);
        for r in self.records.iter().cloned().chain(std::iter::once(record)) {
            match kept.iter_mut().find(|k| same_content(k, &r)) {
                Some(existing) => {
                    if corrective_rank(&r, existing) == Ordering::Less {
                        *existing = r;
                    }
                }
                None => kept.push(r),
            }
        }
        let newest = kept
            .iter()
            .enumerate()
            .max_by_key(|(i, r)| (r.iteration, *i))
            .map(|(i, _)| i)
            .expect("at least the new record");
        let newest = kept.remove(newest);
        kept.sort_by(corrective_rank);
        kept.truncate(budgets.k_c.saturating_sub(1));
        kept.insert(0, newest);
        CorrectiveMemory { records: kept }
    }

    /// Append only: no deduplication and no count limit; newest first, then ranked.
    pub fn update_unbounded(&self, record: CorrectiveRecord) -> Self {
        let mut rest = self.records.clone();
        let newest = record;
        rest.sort_by(corrective_rank);
        rest.insert(0, newest);
        CorrectiveMemory { records: rest }
    }

    pub fn lines(&self) -> Vec<String> {
        let mut lines = vec!["Selected corrective entries".to_string()];
        for r in &self.records {
            lines.extend(r.render_lines());
        }
        lines
    }

    pub fn render(&self, budget: usize) -> Result<String, MemoryError> {
        render_channel(&self.lines(), budget)
    }
}

/// Join lines and cut at the last whole line that fits, appending
/// [`TRUNCATION_MARKER`] when anything was dropped. The result never exceeds
/// `budget` characters.
pub fn render_channel(lines: &[String], budget: usize) -> Result<String, MemoryError> {
    if budget < MIN_CHANNEL_BUDGET {
        return Err(MemoryError::BudgetTooSmall(budget));
    }
    let full = lines.join("\n");
    if char_len(&full) <= budget {
        return Ok(full);
    }
    let marker = char_len(TRUNCATION_MARKER);
    let mut out = String::new();
    let mut used = 0;
    for line in lines {
        let cost = char_len(line) + 1;
        if used + cost + marker > budget {
            break;
        }
        out.push_str(line);
        out.push('\n');
        used += cost;
    }
    out.push_str(TRUNCATION_MARKER);
    Ok(out)
}

/// Planner-facing state assembled from the three rendered channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub static_text: String,
    pub dynamic_text: String,
    pub corrective_text: String,
    pub total_chars: usize,
}

impl AgentState {
    pub fn text(&self) -> String {
        format!(
            "{STATIC_LABEL}\n{}\n{DYNAMIC_LABEL}\n{}\n{CORRECTIVE_LABEL}\n{}",
            self.static_text, self.dynamic_text, self.corrective_text
        )
    }

    pub fn channel_chars(&self) -> (usize, usize, usize) {
        (
            char_len(&self.static_text),
            char_len(&self.dynamic_text),
            char_len(&self.corrective_text),
        )
    }
}

pub fn adapt(
    static_text: impl Into<String>,
    dynamic_text: impl Into<String>,
    corrective_text: impl Into<String>,
) -> AgentState {
    let mut state = AgentState {
        static_text: static_text.into(),
        dynamic_text: dynamic_text.into(),
        corrective_text: corrective_text.into(),
        total_chars: 0,
    };
    state.total_chars = char_len(&state.text());
    state
}
