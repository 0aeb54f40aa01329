//! Line-delimited JSON trajectory logs, one record per iteration.

use serde::{Deserialize, Serialize};

use crate::control::{ChannelChars, IterationRecord};
use crate::diagnosis::{ActionBias, ActionKind, FailureFamily};
use crate::protocol::ResidualVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub iteration: usize,
    pub action_kind: ActionKind,
    pub pool_id: String,
    pub passed: bool,
    pub failed_labels: Vec<String>,
    pub residuals: ResidualVector,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub severity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<FailureFamily>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bias: Option<ActionBias>,
    pub state_chars: usize,
    pub channel_chars: ChannelChars,
    pub pool_size: usize,
    pub quality_score: f64,
    pub dynamic_pools: usize,
    pub corrective_entries: Vec<usize>,
}

impl From<&IterationRecord> for LogRecord {
    fn from(r: &IterationRecord) -> Self {
        LogRecord {
            iteration: r.iteration,
            action_kind: r.action.kind(),
            pool_id: r.pool_id.clone(),
            passed: r.report.passed,
            failed_labels: r.report.failed_labels.clone(),
            residuals: r.report.residuals.clone(),
            severity: r.corrective.as_ref().map(|c| c.severity),
            family: r.corrective.as_ref().map(|c| c.family),
            bias: r.corrective.as_ref().map(|c| c.bias),
            state_chars: r.state_chars,
            channel_chars: r.channel_chars,
            pool_size: r.pool_size,
            quality_score: r.quality_score,
            dynamic_pools: r.dynamic_pools,
            corrective_entries: r.corrective_entries.clone(),
        }
    }
}

pub fn to_records(trajectory: &[IterationRecord]) -> Vec<LogRecord> {
    trajectory.iter().map(LogRecord::from).collect()
}

/// One JSON object per line, each line terminated by `\n`.
pub fn to_jsonl(records: &[LogRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("log records always serialize"));
        out.push('\n');
    }
    out
}

pub fn parse_jsonl(text: &str) -> Result<Vec<LogRecord>, serde_json::Error> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect()
}
