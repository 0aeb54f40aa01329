use std::path::PathBuf;

use protoloop_core::control::Mode;
use protoloop_core::memory::Budgets;
use protoloop_core::synthetic::Difficulty;
use serde::{Deserialize, Serialize};

/// Sweep settings; mirrors the JSON config file accepted by `--config`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub seeds: Vec<u64>,
    pub difficulty: Difficulty,
    pub modes: Vec<Mode>,
    pub budgets: Budgets,
    pub out: PathBuf,
    pub max_iterations: usize,
    /// Replace the docking threshold with an unreachable one so every
    /// episode runs to the iteration cap.
    pub force_fail: bool,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            seeds: (1..=30).collect(),
            difficulty: Difficulty::Hard,
            modes: Mode::ALL.to_vec(),
            budgets: Budgets::default(),
            out: PathBuf::from("out"),
            max_iterations: 10,
            force_fail: false,
        }
    }
}

impl BenchmarkConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.seeds.is_empty() {
            return Err("seed list is empty".into());
        }
        if self.modes.is_empty() {
            return Err("mode list is empty".into());
        }
        if self.max_iterations == 0 {
            return Err("max_iterations must be positive".into());
        }
        self.budgets.validate().map_err(|e| e.to_string())
    }
}

/// Parsed `--seeds` value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeedList(pub Vec<u64>);

/// `a..b` (inclusive) or a single seed.
pub fn parse_seed_list(s: &str) -> Result<SeedList, String> {
    parse_seeds(s).map(SeedList)
}

pub fn parse_seeds(s: &str) -> Result<Vec<u64>, String> {
    let parse = |t: &str| {
        t.trim()
            .parse::<u64>()
            .map_err(|_| format!("invalid seed `{t}`"))
    };
    match s.split_once("..") {
        Some((a, b)) => {
            let (a, b) = (parse(a)?, parse(b.trim_start_matches('='))?);
            if a > b {
                return Err(format!("empty seed range `{s}`"));
            }
            Ok((a..=b).collect())
        }
        None => Ok(vec![parse(s)?]),
    }
}

/// `Kd,Wd,Kc,Bs,Bd,Bc`.
pub fn parse_budgets(s: &str) -> Result<Budgets, String> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|t| t.trim().parse::<usize>().map_err(|_| format!("invalid budget `{t}`")))
        .collect::<Result<_, _>>()?;
    let [k_d, w_d, k_c, b_s, b_d, b_c] = parts[..] else {
        return Err(format!("expected 6 comma-separated budgets, got {}", parts.len()));
    };
    let b = Budgets {
        k_d,
        w_d,
        k_c,
        b_s,
        b_d,
        b_c,
    };
    b.validate().map_err(|e| e.to_string())?;
    Ok(b)
}

/// The five budget settings of the sensitivity study, in table order.
pub fn sensitivity_settings() -> [(&'static str, Budgets); 5] {
    let with = |counts: (usize, usize, usize), chars: (usize, usize, usize)| Budgets {
        k_d: counts.0,
        w_d: counts.1,
        k_c: counts.2,
        b_s: chars.0,
        b_d: chars.1,
        b_c: chars.2,
    };
    [
        ("default", with((4, 3, 3), (1400, 1800, 1200))),
        ("tight_chars", with((4, 3, 3), (900, 1200, 700))),
        ("compact_counts", with((2, 2, 2), (1400, 1800, 1200))),
        ("wide_counts", with((6, 5, 5), (1400, 1800, 1200))),
        ("rebalanced_chars", with((4, 3, 3), (1000, 2200, 1000))),
    ]
}
