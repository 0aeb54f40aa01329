//! Deterministic text-reading planner.
//!
//! Reads the planner input the way a language model would see it: it looks
//! for corrective entries (`Iteration k; failure family: ...; recommended
//! bias: X.`), follows the bias of the most recent one, and works on the
//! best-scored pool among the rendered pool summaries (the newest pool when
//! no summary is visible). Without any corrective entry it generates a fresh
//! pool.

use crate::control::{Action, Decision, Planner, PlannerInput};
use crate::diagnosis::ActionKind;
use crate::protocol::{MetricField, RequirementSet};

pub const DEFAULT_GENERATE_COUNT: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedEntry {
    pub iteration: usize,
    pub bias: ActionKind,
    pub focus: Option<MetricField>,
}

/// All corrective entries visible in `text`, in order of appearance.
pub fn parse_corrective_entries(text: &str) -> Vec<ParsedEntry> {
    let mut entries: Vec<ParsedEntry> = Vec::new();
    for line in text.lines() {
        if let Some(entry) = parse_header(line) {
            entries.push(entry);
        } else if let Some(rest) = line.split("Rationale: focus ").nth(1) {
            let field = rest
                .split_once('[')
                .and_then(|(_, r)| r.split_once(']'))
                .and_then(|(tok, _)| tok.parse::<MetricField>().ok());
            if let (Some(last), Some(field)) = (entries.last_mut(), field) {
                last.focus.get_or_insert(field);
            }
        }
    }
    entries
}

fn parse_header(line: &str) -> Option<ParsedEntry> {
    let start = line.find("Iteration ")?;
    let rest = &line[start + "Iteration ".len()..];
    let (num, rest) = rest.split_once(';')?;
    let iteration = num.trim().parse().ok()?;
    if !rest.contains("failure family:") {
        return None;
    }
    let bias_tok = rest.split("recommended bias: ").nth(1)?;
    let bias = bias_tok.trim_end_matches('.').trim().parse().ok()?;
    Some(ParsedEntry {
        iteration,
        bias,
        focus: None,
    })
}

/// `(pool id, size)` from `MOLnnn: score ...; size n; ...` summary lines, in
/// rendered order.
pub fn parse_summary_pools(text: &str) -> Vec<(String, Option<usize>)> {
    text.lines()
        .filter_map(|l| {
            let (id, rest) = l.split_once(':')?;
            let is_id = id.len() > 3
                && id.starts_with("MOL")
                && id[3..].chars().all(|c| c.is_ascii_digit());
            if !is_id || !rest.starts_with(" score ") {
                return None;
            }
            let size = rest
                .split("; ")
                .find_map(|part| part.strip_prefix("size "))
                .and_then(|n| n.trim_end_matches('.').parse().ok());
            Some((id.to_string(), size))
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct HeuristicPlanner {
    pub requirements: RequirementSet,
    pub generate_count: usize,
}

impl HeuristicPlanner {
    pub fn new(requirements: RequirementSet) -> Self {
        HeuristicPlanner {
            requirements,
            generate_count: DEFAULT_GENERATE_COUNT,
        }
    }

    fn generate(&self, why: &str) -> Decision {
        Decision {
            action: Action::Generate {
                count: self.generate_count,
            },
            response: format!("{why}; generate {} new molecules.", self.generate_count),
        }
    }
}

impl Planner for HeuristicPlanner {
    fn plan(&mut self, input: &PlannerInput<'_>) -> Decision {
        let latest = parse_corrective_entries(input.text)
            .into_iter()
            .max_by_key(|e| e.iteration);
        let Some(entry) = latest else {
            return self.generate("no corrective guidance is available");
        };
        // Summaries are rendered best first. Pools below the required size
        // cannot be repaired by optimizing or filtering them, so skip those.
        let needed = self.requirements.required_pool_size();
        let working_pool = parse_summary_pools(input.text)
            .into_iter()
            .find(|(id, size)| input.registry.contains(id) && size.is_none_or(|n| n >= needed))
            .map(|(id, _)| id)
            .or_else(|| input.registry.iter().last().map(|p| p.id.clone()));

        match entry.bias {
            ActionKind::Generate => self.generate(&format!(
                "the iteration {} diagnosis recommends fresh candidates",
                entry.iteration
            )),
            ActionKind::Optimize => {
                let Some(pool) = working_pool else {
                    return self.generate("no pool to optimize");
                };
                let objective = entry
                    .focus
                    .filter(MetricField::is_per_molecule)
                    .unwrap_or(MetricField::Docking);
                Decision {
                    response: format!(
                        "the iteration {} diagnosis recommends optimization; improve {objective} on {pool}.",
                        entry.iteration
                    ),
                    action: Action::Optimize { pool, objective },
                }
            }
            ActionKind::CodeScreen => {
                let Some(pool) = working_pool else {
                    return self.generate("no pool to screen");
                };
                let subset_size = self.requirements.required_pool_size().max(2);
                Decision {
                    response: format!(
                        "the iteration {} diagnosis recommends code-based repair; filter {pool} and keep a diverse subset of {subset_size}.",
                        entry.iteration
                    ),
                    action: Action::CodeScreen {
                        pools: vec![pool],
                        filters: self.requirements.per_molecule().cloned().collect(),
                        subset_size,
                    },
                }
            }
        }
    }
}
