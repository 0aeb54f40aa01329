//! Statistics tables. Every cell is computed from trajectory logs only.

use std::fmt::Write as _;

use protoloop_core::control::Mode;

use crate::sweep::{mean_of, returned_size, success_of, EpisodeLog};

pub const CUTOFF_CAPS: [usize; 5] = [2, 4, 6, 8, 10];
pub const BENCH_CSV_HEADER: &str = "mode,seed,success,iterations,pool_size,state_chars_mean";

fn mean(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = xs.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Left-aligned first column, right-aligned others, two-space gutters.
pub fn aligned(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: Vec<&str>| {
        let mut out = String::new();
        for (i, (cell, w)) in cells.iter().zip(&widths).enumerate() {
            if i == 0 {
                let _ = write!(out, "{cell:<w$}");
            } else {
                let _ = write!(out, "  {cell:>w$}");
            }
        }
        out.trim_end().to_string() + "\n"
    };
    let mut out = line(header.to_vec());
    out += &line(widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().iter().map(String::as_str).collect());
    for row in rows {
        out += &line(row.iter().map(String::as_str).collect());
    }
    out
}

pub fn bench_csv(logs: &[EpisodeLog]) -> String {
    let mut out = format!("{BENCH_CSV_HEADER}\n");
    for log in logs {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{:.1}",
            log.mode.token(),
            log.seed,
            log.success(),
            log.iterations(),
            log.pool_size(),
            log.state_chars_mean()
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeSummary {
    pub mode: Mode,
    pub successes: usize,
    pub total: usize,
    pub avg_pool_size: f64,
    pub avg_iterations: f64,
    pub avg_state_chars: f64,
    pub errors: usize,
}

impl ModeSummary {
    pub fn success_rate(&self) -> f64 {
        100.0 * self.successes as f64 / self.total.max(1) as f64
    }
}

fn modes_in_order(logs: &[EpisodeLog]) -> Vec<Mode> {
    let mut modes = Vec::new();
    for l in logs {
        if !modes.contains(&l.mode) {
            modes.push(l.mode);
        }
    }
    modes
}

pub fn mode_summaries(logs: &[EpisodeLog]) -> Vec<ModeSummary> {
    modes_in_order(logs)
        .into_iter()
        .map(|mode| {
            let group: Vec<&EpisodeLog> = logs.iter().filter(|l| l.mode == mode).collect();
            ModeSummary {
                mode,
                successes: group.iter().filter(|l| l.success()).count(),
                total: group.len(),
                avg_pool_size: mean(group.iter().map(|l| l.pool_size() as f64)),
                avg_iterations: mean(group.iter().map(|l| l.iterations() as f64)),
                avg_state_chars: mean(group.iter().map(|l| l.state_chars_mean())),
                errors: group.iter().filter(|l| l.error.is_some()).count(),
            }
        })
        .collect()
}

pub fn bench_text(summaries: &[ModeSummary]) -> String {
    let rows: Vec<Vec<String>> = summaries
        .iter()
        .map(|s| {
            vec![
                s.mode.token().to_string(),
                format!("{:.1} / {}", s.success_rate(), s.successes),
                format!("{:.1}", s.avg_pool_size),
                format!("{:.2}", s.avg_iterations),
                format!("{:.1}", s.avg_state_chars),
                s.errors.to_string(),
            ]
        })
        .collect();
    aligned(
        &["mode", "TSR (% / #)", "avg pool size", "avg term iters", "avg state chars", "errors"],
        &rows,
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct CutoffRow {
    pub mode: Mode,
    pub cap: usize,
    pub successes: usize,
    pub total: usize,
    pub avg_pool_size: f64,
    pub avg_iterations: f64,
}

/// The would-be returned set if each episode had been stopped at `cap`.
pub fn cutoff_rows(logs: &[EpisodeLog]) -> Vec<CutoffRow> {
    let mut rows = Vec::new();
    for mode in modes_in_order(logs) {
        let group: Vec<&EpisodeLog> = logs.iter().filter(|l| l.mode == mode).collect();
        for cap in CUTOFF_CAPS {
            let views: Vec<_> = group.iter().map(|l| l.capped(cap)).collect();
            rows.push(CutoffRow {
                mode,
                cap,
                successes: views.iter().filter(|v| success_of(v)).count(),
                total: views.len(),
                avg_pool_size: mean(views.iter().map(|v| returned_size(v) as f64)),
                avg_iterations: mean(views.iter().map(|v| v.len() as f64)),
            });
        }
    }
    rows
}

pub fn cutoff_csv(rows: &[CutoffRow]) -> String {
    let mut out = "mode,cap,successes,total,avg_pool_size,avg_iterations\n".to_string();
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{:.2},{:.2}",
            r.mode.token(),
            r.cap,
            r.successes,
            r.total,
            r.avg_pool_size,
            r.avg_iterations
        );
    }
    out
}

pub fn cutoff_text(rows: &[CutoffRow]) -> String {
    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.mode.token().to_string(),
                r.cap.to_string(),
                format!("{}/{}", r.successes, r.total),
                format!("{:.1}", r.avg_pool_size),
                format!("{:.2}", r.avg_iterations),
            ]
        })
        .collect();
    aligned(&["mode", "cap", "success", "avg pool size", "avg iters"], &cells)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityRow {
    pub setting: String,
    pub summary: ModeSummary,
    pub static_chars: f64,
    pub dynamic_chars: f64,
    pub corrective_chars: f64,
    /// Largest number of pool summaries any rendered dynamic channel carried.
    pub max_dynamic_pools: usize,
}

pub fn sensitivity_row(setting: &str, logs: &[EpisodeLog]) -> SensitivityRow {
    let summary = mode_summaries(logs)
        .into_iter()
        .next()
        .unwrap_or(ModeSummary {
            mode: Mode::Cacm,
            successes: 0,
            total: 0,
            avg_pool_size: 0.0,
            avg_iterations: 0.0,
            avg_state_chars: 0.0,
            errors: 0,
        });
    let channel = |f: fn(&protoloop_core::trajectory::LogRecord) -> usize| {
        mean(logs.iter().map(|l| mean_of(&l.records, |r| f(r) as f64)))
    };
    SensitivityRow {
        setting: setting.to_string(),
        summary,
        static_chars: channel(|r| r.channel_chars.static_chars),
        dynamic_chars: channel(|r| r.channel_chars.dynamic_chars),
        corrective_chars: channel(|r| r.channel_chars.corrective_chars),
        max_dynamic_pools: logs
            .iter()
            .flat_map(|l| &l.records)
            .map(|r| r.dynamic_pools)
            .max()
            .unwrap_or(0),
    }
}

pub fn sensitivity_csv(rows: &[SensitivityRow]) -> String {
    let mut out = "setting,successes,total,tsr_pct,avg_pool_size,avg_term_iters,avg_state_chars,static_chars,dynamic_chars,corrective_chars,max_dynamic_pools\n".to_string();
    for r in rows {
        let s = &r.summary;
        let _ = writeln!(
            out,
            "{},{},{},{:.1},{:.2},{:.2},{:.1},{:.1},{:.1},{:.1},{}",
            r.setting,
            s.successes,
            s.total,
            s.success_rate(),
            s.avg_pool_size,
            s.avg_iterations,
            s.avg_state_chars,
            r.static_chars,
            r.dynamic_chars,
            r.corrective_chars,
            r.max_dynamic_pools
        );
    }
    out
}

pub fn sensitivity_text(rows: &[SensitivityRow]) -> String {
    let main: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let s = &r.summary;
            vec![
                r.setting.clone(),
                format!("{:.1} / {}", s.success_rate(), s.successes),
                format!("{:.1}", s.avg_pool_size),
                format!("{:.2}", s.avg_iterations),
                format!("{:.1}", s.avg_state_chars),
            ]
        })
        .collect();
    let channels: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.setting.clone(),
                format!("{:.1}", r.static_chars),
                format!("{:.1}", r.dynamic_chars),
                format!("{:.1}", r.corrective_chars),
            ]
        })
        .collect();
    let mut out = aligned(
        &["setting", "TSR (% / #)", "avg pool size", "avg term iters", "avg state chars"],
        &main,
    );
    out.push('\n');
    out += &aligned(&["setting", "static", "dynamic", "corrective"], &channels);
    out
}

/// Mean planner-input length per iteration over the episodes still active at
/// that iteration, one column per mode. `None` where no episode is active.
pub fn memcurve(logs: &[EpisodeLog], modes: &[Mode]) -> Vec<(usize, Vec<Option<f64>>)> {
    let max_iter = logs.iter().map(|l| l.iterations()).max().unwrap_or(0);
    (1..=max_iter)
        .map(|k| {
            let cols = modes
                .iter()
                .map(|&m| {
                    let active: Vec<f64> = logs
                        .iter()
                        .filter(|l| l.mode == m)
                        .filter_map(|l| l.records.get(k - 1))
                        .map(|r| r.state_chars as f64)
                        .collect();
                    (!active.is_empty()).then(|| mean(active))
                })
                .collect();
            (k, cols)
        })
        .collect()
}

pub fn memcurve_csv(curve: &[(usize, Vec<Option<f64>>)], modes: &[Mode]) -> String {
    let mut out = "iteration".to_string();
    for m in modes {
        out.push(',');
        out.push_str(m.token());
    }
    out.push('\n');
    for (k, cols) in curve {
        let _ = write!(out, "{k}");
        for c in cols {
            match c {
                Some(v) => {
                    let _ = write!(out, ",{v:.1}");
                }
                None => out.push(','),
            }
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aligned_pads_columns() {
        let t = aligned(&["a", "bb"], &[vec!["long".into(), "1".into()]]);
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines[0], "a     bb");
        assert_eq!(lines[2], "long   1");
    }

    #[test]
    fn empty_mean_is_zero() {
        assert_eq!(mean(std::iter::empty()), 0.0);
    }
}
