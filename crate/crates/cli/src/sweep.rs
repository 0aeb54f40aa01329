//! Running episodes across seeds and modes, and the per-episode views
//! derived from their trajectory logs.

use std::cmp::Ordering;

use protoloop_core::control::{LoopConfig, Mode};
use protoloop_core::memory::Budgets;
use protoloop_core::synthetic::{make_target, run_synthetic, Difficulty};
use protoloop_core::trajectory::{to_records, LogRecord};
use rayon::prelude::*;

use crate::config::BenchmarkConfig;

/// One finished episode: its trajectory log plus the execution error, if the
/// loop aborted early. Everything else is derived from `records`.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog {
    pub mode: Mode,
    pub seed: u64,
    pub records: Vec<LogRecord>,
    pub error: Option<String>,
}

fn rank(a: &LogRecord, b: &LogRecord) -> Ordering {
    b.quality_score
        .total_cmp(&a.quality_score)
        .then(b.iteration.cmp(&a.iteration))
}

impl EpisodeLog {
    /// View of the episode as if it had been stopped after `cap` iterations.
    pub fn capped(&self, cap: usize) -> &[LogRecord] {
        &self.records[..self.records.len().min(cap)]
    }

    pub fn success(&self) -> bool {
        success_of(&self.records)
    }

    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    pub fn pool_size(&self) -> usize {
        returned_size(&self.records)
    }

    pub fn state_chars_mean(&self) -> f64 {
        mean_of(&self.records, |r| r.state_chars as f64)
    }

    pub fn file_name(&self) -> String {
        format!("{}_seed{:03}.jsonl", self.mode.token(), self.seed)
    }
}

pub fn success_of(records: &[LogRecord]) -> bool {
    records.last().is_some_and(|r| r.passed)
}

/// Size of the pool the loop returns: the passing pool, otherwise the best
/// logged pool by (quality score, later iteration).
pub fn returned_size(records: &[LogRecord]) -> usize {
    if let Some(last) = records.last().filter(|r| r.passed) {
        return last.pool_size;
    }
    records.iter().min_by(|a, b| rank(a, b)).map_or(0, |r| r.pool_size)
}

pub fn mean_of(records: &[LogRecord], f: impl Fn(&LogRecord) -> f64) -> f64 {
    if records.is_empty() {
        return 0.0;
    }
    records.iter().map(f).sum::<f64>() / records.len() as f64
}

pub fn run_one(
    seed: u64,
    difficulty: Difficulty,
    mode: Mode,
    budgets: Budgets,
    max_iterations: usize,
    force_fail: bool,
) -> EpisodeLog {
    let mut target = make_target(seed, difficulty);
    if force_fail {
        target = target.with_unreachable_docking();
    }
    let config = LoopConfig {
        max_iterations,
        budgets,
        mode,
        seed,
    };
    match run_synthetic(&target, &config) {
        Ok(result) => EpisodeLog {
            mode,
            seed,
            records: to_records(&result.trajectory),
            error: result.failure.map(|f| f.to_string()),
        },
        Err(e) => EpisodeLog {
            mode,
            seed,
            records: Vec::new(),
            error: Some(e.to_string()),
        },
    }
}

/// Every (mode, seed) pair of the config, mode-major, run on `jobs` threads.
/// Output order is independent of scheduling.
pub fn run_sweep(config: &BenchmarkConfig, modes: &[Mode], budgets: Budgets, jobs: usize) -> Vec<EpisodeLog> {
    let work: Vec<(Mode, u64)> = modes
        .iter()
        .flat_map(|&m| config.seeds.iter().map(move |&s| (m, s)))
        .collect();
    let run = |&(mode, seed): &(Mode, u64)| {
        run_one(
            seed,
            config.difficulty,
            mode,
            budgets,
            config.max_iterations,
            config.force_fail,
        )
    };
    match rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build() {
        Ok(pool) => pool.install(|| work.par_iter().map(run).collect()),
        Err(_) => work.iter().map(run).collect(),
    }
}
