use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use smolsim::config::ScenarioFile;
use smolsim::harness::{run_regressions, run_single, run_study, RegressionSuite, RunOptions};

#[derive(Parser)]
#[command(name = "smolsim", version, about = "Shattering particle simulator and reference solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Master seed, overriding the one in the scenario.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,

    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,

    /// Number of snapshot intervals, overriding the scenario.
    #[arg(long, global = true)]
    snapshots: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Check a scenario file and print every problem found.
    Validate { config: String },
    /// One replica with particle dumps, at the smallest N of the scenario
    /// unless `--n` is given.
    RunSingle {
        config: String,
        #[arg(long)]
        n: Option<u64>,
    },
    /// Replica sweep over the scenario's N values.
    Study { config: String },
    /// Built-in regression checks.
    Regress,
}

/// A path to a JSON file, or the name of a built-in preset.
fn load(config: &str) -> Result<ScenarioFile> {
    if let Some(preset) = ScenarioFile::preset(config) {
        if !std::path::Path::new(config).exists() {
            return Ok(preset);
        }
    }
    ScenarioFile::load(config).with_context(|| format!("reading {config}"))
}

fn apply_overrides(file: &mut ScenarioFile, cli: &Cli) {
    if let Some(seed) = cli.seed {
        file.study.seed = seed;
    }
    if let Some(s) = cli.snapshots {
        file.snapshots = s;
    }
}

fn main() -> ExitCode {
    match real_main() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn real_main() -> Result<ExitCode> {
    let cli = Cli::parse();
    let opts = |dumps| RunOptions {
        workers: cli.workers,
        out_dir: Some(cli.out_dir.clone()),
        dumps,
    };
    match &cli.command {
        Command::Validate { config } => {
            let mut file = load(config)?;
            apply_overrides(&mut file, &cli);
            let report = file.validate();
            if report.is_valid() {
                println!("{}: ok", file.name);
                Ok(ExitCode::SUCCESS)
            } else {
                println!("{}: {} problem(s)\n{report}", file.name, report.violations.len());
                Ok(ExitCode::FAILURE)
            }
        }
        Command::RunSingle { config, n } => {
            let mut file = load(config)?;
            apply_overrides(&mut file, &cli);
            let scenario = file.build()?;
            let n = n.unwrap_or(scenario.n_values[0]);
            let run = run_single(&scenario, n, &opts(true))?;
            let last = run.rows.last().context("no snapshots")?;
            println!(
                "N = {n}, t = {}, sum d2 = {:.4e}, D_est = {:.4e}, mass = {}, clip = {:.2e}",
                last.t,
                last.d2.iter().sum::<f64>(),
                last.d_est,
                last.mass,
                last.clip_frac
            );
            println!("artifacts in {}", cli.out_dir.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Study { config } => {
            let mut file = load(config)?;
            apply_overrides(&mut file, &cli);
            let scenario = file.build()?;
            let result = run_study(&scenario, &opts(false))?;
            println!(
                "{:>8} {:>4} {:>12} {:>10} {:>12} {:>12} {:>10}",
                "N", "reps", "max d2", "se", "coarse", "D_est", "clip"
            );
            for r in &result.report.rows {
                println!(
                    "{:>8} {:>4} {:>12.4e} {:>10} {:>12.4e} {:>12.4e} {:>10.2e}",
                    r.n,
                    r.replicas,
                    r.mean_max_d2,
                    r.se_max_d2.map_or("-".into(), |s| format!("{s:.2e}")),
                    r.mean_max_d2_coarse,
                    r.mean_d_est,
                    r.clip_frac
                );
            }
            println!(
                "decreasing: {}, bound C = {:.3}, violations: {}, clip healthy: {}",
                result.report.strictly_decreasing(),
                result.report.bound_constant,
                result.report.bound_violations,
                result.report.clip_healthy
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Regress => {
            let mut suite = RegressionSuite::default();
            if let Some(seed) = cli.seed {
                suite.seed = seed;
            }
            if cli.workers > 0 {
                rayon::ThreadPoolBuilder::new()
                    .num_threads(cli.workers)
                    .build_global()
                    .ok();
            }
            let report = run_regressions(&suite);
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            for r in &report.results {
                println!("{}", r.line());
            }
            std::fs::create_dir_all(&cli.out_dir)?;
            std::fs::write(
                cli.out_dir.join("regress.json"),
                serde_json::to_string_pretty(&report)?,
            )?;
            if report.passed() {
                Ok(ExitCode::SUCCESS)
            } else {
                bail!("regression failures")
            }
        }
    }
}
