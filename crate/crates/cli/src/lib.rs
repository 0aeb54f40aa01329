//! Command-line front end: single episodes, benchmark sweeps, the budget
//! sensitivity study and memory-growth curves over the synthetic environment.

pub mod config;
pub mod sweep;
pub mod tables;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use protoloop_core::control::{LoopConfig, Mode};
use protoloop_core::memory::{Budgets, PoolStats};
use protoloop_core::synthetic::{make_target, run_synthetic, Difficulty};
use protoloop_core::trajectory::{to_jsonl, to_records};

use config::{parse_budgets, parse_seed_list, sensitivity_settings, BenchmarkConfig, SeedList};
use sweep::{run_sweep, EpisodeLog};

pub const EXIT_SUCCESS: i32 = 0;
pub const EXIT_EXECUTION: i32 = 1;
pub const EXIT_PROTOCOL: i32 = 2;
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug, Parser)]
#[command(name = "protoloop", version, about = "Protocol-aware closed-loop search over synthetic targets")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one episode and write its trajectory log.
    Run(RunArgs),
    /// Sweep seeds and modes; emit success, pool-size and cutoff tables.
    Bench(SweepArgs),
    /// Run the five budget settings of the sensitivity study.
    Sensitivity(SweepArgs),
    /// Mean planner-input length per iteration for CACM and the raw baseline.
    Memcurve(SweepArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    #[arg(long)]
    pub difficulty: Option<Difficulty>,
    /// Kd,Wd,Kc,Bs,Bd,Bc
    #[arg(long, value_parser = parse_budgets)]
    pub budgets: Option<Budgets>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// JSON config file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Make the docking requirement unreachable so episodes run to the cap.
    #[arg(long)]
    pub force_fail: bool,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub mode: Option<Mode>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Inclusive range `a..b` or a single seed.
    #[arg(long, value_parser = parse_seed_list)]
    pub seeds: Option<SeedList>,
    /// Comma-separated mode list.
    #[arg(long, value_delimiter = ',')]
    pub mode: Vec<Mode>,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[command(flatten)]
    pub common: Common,
}

enum Failure {
    Usage(String),
    Execution(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Execution(e)
    }
}

fn load_config(common: &Common) -> Result<BenchmarkConfig, Failure> {
    let mut config = match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| Failure::Usage(format!("invalid config {}: {e}", path.display())))?
        }
        None => BenchmarkConfig::default(),
    };
    if let Some(d) = common.difficulty {
        config.difficulty = d;
    }
    if let Some(b) = common.budgets {
        config.budgets = b;
    }
    if let Some(out) = &common.out {
        config.out = out.clone();
    }
    config.force_fail |= common.force_fail;
    Ok(config)
}

fn sweep_config(args: &SweepArgs, default_modes: Option<Vec<Mode>>) -> Result<BenchmarkConfig, Failure> {
    let mut config = load_config(&args.common)?;
    if let Some(SeedList(seeds)) = &args.seeds {
        config.seeds = seeds.clone();
    }
    if !args.mode.is_empty() {
        config.modes = args.mode.clone();
    } else if let (Some(modes), None) = (default_modes, &args.common.config) {
        config.modes = modes;
    }
    config.validate().map_err(Failure::Usage)?;
    Ok(config)
}

fn write_file(path: &Path, contents: &str) -> anyhow::Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn write_logs(dir: &Path, logs: &[EpisodeLog]) -> anyhow::Result<()> {
    for log in logs {
        write_file(&dir.join(log.file_name()), &to_jsonl(&log.records))?;
    }
    Ok(())
}

fn cmd_run(args: &RunArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    let config = load_config(&args.common)?;
    config.validate().map_err(Failure::Usage)?;
    let mode = args.mode.unwrap_or(Mode::Cacm);
    let mut target = make_target(args.seed, config.difficulty);
    if config.force_fail {
        target = target.with_unreachable_docking();
    }
    let loop_config = LoopConfig {
        max_iterations: config.max_iterations,
        budgets: config.budgets,
        mode,
        seed: args.seed,
    };
    let result = run_synthetic(&target, &loop_config).map_err(|e| Failure::Usage(e.to_string()))?;
    let records = to_records(&result.trajectory);
    let stem = format!("{}_seed{:03}", mode.token(), args.seed);

    let mut summary = format!(
        "target: {} ({})\nmode: {}\nsuccess: {}\niterations: {}\n",
        target.name,
        config.difficulty,
        mode,
        result.success,
        result.iterations_used
    );
    if let Some(pool) = &result.returned_pool {
        let s = PoolStats::of(pool);
        let opt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.3}"));
        summary += &format!(
            "returned pool: {} size {}; diversity {}; worst Vina {}; min novelty {}; min QED {}; max SAScore {}; min Lipinski {}\n",
            pool.id,
            s.size,
            opt(Some(s.diversity)),
            opt(s.worst_docking),
            opt(s.min_novelty),
            opt(s.min_qed),
            opt(s.max_sas),
            opt(s.min_lipinski)
        );
    }
    summary += "state chars per iteration:";
    for r in &records {
        summary += &format!(" {}", r.state_chars);
    }
    summary.push('\n');
    if let Some(f) = &result.failure {
        summary += &format!("execution error: {f}\n");
    }

    write_file(&config.out.join(format!("{stem}.jsonl")), &to_jsonl(&records))?;
    write_file(&config.out.join(format!("{stem}_summary.txt")), &summary)?;
    let _ = out.write_all(summary.as_bytes());

    Ok(if result.failure.is_some() {
        EXIT_EXECUTION
    } else if result.success {
        EXIT_SUCCESS
    } else {
        EXIT_PROTOCOL
    })
}

fn cmd_bench(args: &SweepArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    let config = sweep_config(args, None)?;
    let logs = run_sweep(&config, &config.modes, config.budgets, args.jobs);
    let summaries = tables::mode_summaries(&logs);
    let cutoffs = tables::cutoff_rows(&logs);
    let text = format!(
        "{}\n{}",
        tables::bench_text(&summaries),
        tables::cutoff_text(&cutoffs)
    );
    write_logs(&config.out.join("trajectories"), &logs)?;
    write_file(&config.out.join("bench.csv"), &tables::bench_csv(&logs))?;
    write_file(&config.out.join("cutoff.csv"), &tables::cutoff_csv(&cutoffs))?;
    write_file(&config.out.join("bench.txt"), &text)?;
    let _ = out.write_all(text.as_bytes());
    Ok(EXIT_SUCCESS)
}

fn cmd_sensitivity(args: &SweepArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    let config = sweep_config(args, Some(vec![Mode::Cacm]))?;
    let mode = config.modes[0];
    let mut rows = Vec::new();
    for (name, budgets) in sensitivity_settings() {
        let logs = run_sweep(&config, &[mode], budgets, args.jobs);
        write_logs(&config.out.join("sensitivity").join(name), &logs)?;
        rows.push(tables::sensitivity_row(name, &logs));
    }
    let text = tables::sensitivity_text(&rows);
    write_file(&config.out.join("sensitivity.csv"), &tables::sensitivity_csv(&rows))?;
    write_file(&config.out.join("sensitivity.txt"), &text)?;
    let _ = out.write_all(text.as_bytes());
    Ok(EXIT_SUCCESS)
}

fn cmd_memcurve(args: &SweepArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    let config = sweep_config(args, Some(vec![Mode::Cacm, Mode::RawBaseline]))?;
    let logs = run_sweep(&config, &config.modes, config.budgets, args.jobs);
    let csv = tables::memcurve_csv(&tables::memcurve(&logs, &config.modes), &config.modes);
    write_logs(&config.out.join("memcurve"), &logs)?;
    write_file(&config.out.join("memcurve.csv"), &csv)?;
    let _ = out.write_all(csv.as_bytes());
    Ok(EXIT_SUCCESS)
}

/// Parse `args` (including the program name) and run the command. Returns
/// the process exit status.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp
                | ErrorKind::DisplayVersion
                | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => EXIT_SUCCESS,
                _ => EXIT_USAGE,
            };
            let rendered = e.render().to_string();
            if code == EXIT_SUCCESS {
                let _ = out.write_all(rendered.as_bytes());
            } else {
                let _ = err.write_all(rendered.as_bytes());
            }
            return code;
        }
    };
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a, out),
        Command::Bench(a) => cmd_bench(a, out),
        Command::Sensitivity(a) => cmd_sensitivity(a, out),
        Command::Memcurve(a) => cmd_memcurve(a, out),
    };
    match result {
        Ok(code) => code,
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Execution(e)) => {
            let _ = writeln!(err, "error: {e:#}");
            EXIT_EXECUTION
        }
    }
}
