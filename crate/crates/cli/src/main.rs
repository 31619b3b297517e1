use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod config;
mod error;
mod report;
mod run;

use config::{config_hash, parse_barrier, parse_group, parse_model, RawConfig, RunConfig};
use error::CliError;

/// Barrier option pricing by symmetrization, with path-dependent and closed-form references.
#[derive(Debug, Parser)]
#[command(name = "symbar", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Override `plan.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Exit 0 even when a symmetrized path left the enumerated chambers.
    #[arg(long, global = true)]
    allow_gaps: bool,
    /// Write the CSV here instead of `output` or stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run every configured estimator once.
    Price { config: PathBuf },
    /// Run the simulation estimators over a grid of step and path counts.
    Convergence {
        config: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        steps: Vec<usize>,
        #[arg(long, value_delimiter = ',', required = true)]
        paths: Vec<usize>,
    },
    /// Reflection group tools.
    Group {
        #[command(subcommand)]
        action: GroupCommand,
    },
}

#[derive(Debug, Subcommand)]
enum GroupCommand {
    /// List the elements of the barrier's reflection group.
    Inspect { config: PathBuf },
}

fn read_config(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::config(None, None, &format!("cannot read {}: {e}", path.display())))
}

fn load(path: &Path, seed: Option<u64>) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::parse(&read_config(path)?)?;
    if let Some(seed) = seed {
        cfg.plan.seed = seed;
    }
    Ok(cfg)
}

fn emit(bytes: &[u8], target: Option<&Path>) -> Result<(), CliError> {
    match target {
        Some(path) => fs::write(path, bytes)?,
        None => std::io::stdout().lock().write_all(bytes)?,
    }
    Ok(())
}

fn check_gaps(gap_hits: u64, allow: bool) -> Result<(), CliError> {
    if gap_hits > 0 && !allow {
        return Err(CliError::Untrusted(format!("{gap_hits} path(s) ended outside the enumerated chambers; rerun with --allow-gaps to accept")));
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(CliError::config(None, Some("--workers"), "must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::Other(e.to_string()))?;
    }
    match cli.command {
        Command::Price { config } => {
            let cfg = load(&config, cli.seed)?;
            let rows = run::run_price(&cfg)?;
            let out = cli.out.or_else(|| cfg.output.clone());
            emit(&report::price(&cfg, &rows)?, out.as_deref())?;
            check_gaps(rows.iter().map(|r| r.gap_hits).sum(), cli.allow_gaps)
        }
        Command::Convergence { config, steps, paths } => {
            let cfg = load(&config, cli.seed)?;
            let (reference, rows) = run::run_convergence(&cfg, &steps, &paths)?;
            let out = cli.out.or_else(|| cfg.output.clone());
            emit(&report::convergence(&cfg, &reference, &rows)?, out.as_deref())?;
            check_gaps(rows.iter().map(|r| r.row.gap_hits).sum(), cli.allow_gaps)
        }
        Command::Group { action: GroupCommand::Inspect { config } } => {
            let text = read_config(&config)?;
            let raw = RawConfig::parse(&text)?;
            let dim = if raw.has("model.name") { Some(parse_model(&raw)?.dim()) } else { None };
            let barrier = parse_barrier(&raw, dim)?;
            let dim = dim.unwrap_or(match &barrier {
                config::BarrierSpec::Hyperplanes { witness, .. } => witness.len(),
                _ => 1,
            });
            let group = run::build_group(&barrier, dim, &parse_group(&raw)?)?;
            let out = cli.out.or_else(|| raw.str("output").map(PathBuf::from));
            emit(&report::group(&config_hash(&text), &group)?, out.as_deref())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("symbar: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
