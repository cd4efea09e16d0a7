use std::path::{Path, PathBuf};
use std::process::ExitCode;

use adecot::search::Strategy;
use adecot_cli::runner::{run_experiment, sweep_budgets, Backend};
use adecot_cli::{output, verify, CliError, CliResult, ExperimentConfig};
use clap::{Parser, Subcommand};

/// Budget-aware test-time scaling experiments.
#[derive(Debug, Parser)]
#[command(name = "adecot", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one strategy (plus its Best-of-N reference) and write report.json
    /// and trace.jsonl.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        strategy: Option<Strategy>,
        /// Replace the configured seeds with this one.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write curves.csv over a list of budgets.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        budgets: Vec<u32>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check sampler and accounting invariants against the configured backend.
    Verify {
        #[arg(long)]
        config: PathBuf,
    },
}

const EXIT_DEGENERATE: u8 = 4;

fn load(path: &Path) -> CliResult<ExperimentConfig> {
    ExperimentConfig::load(path)
}

fn run(cli: Cli) -> CliResult<u8> {
    match cli.command {
        Command::Run {
            config,
            strategy,
            seed,
            out,
        } => {
            let mut cfg = load(&config)?;
            if let Some(s) = strategy {
                cfg.strategy = s;
            }
            if let Some(k) = seed {
                cfg.seeds = vec![k];
            }
            let dir = out.unwrap_or_else(|| cfg.output_dir.clone());
            let instances = cfg.load_instances()?;
            let result = run_experiment(&cfg, &instances)?;
            output::write_experiment(&dir, &result)?;
            let avg = &result.report.average;
            println!(
                "{}: {} instances x {} seeds, mean score {:.3}, eta {:.3}, xi {:.3}, speedup {:.2}x",
                cfg.strategy,
                instances.len(),
                cfg.seeds.len(),
                avg.mean_final_score,
                avg.eta,
                avg.xi,
                avg.speedup_vs_bon
            );
            Ok(if result.degenerate() { EXIT_DEGENERATE } else { 0 })
        }
        Command::Sweep { config, budgets, out } => {
            let cfg = load(&config)?;
            let dir = out.unwrap_or_else(|| cfg.output_dir.clone());
            let instances = cfg.load_instances()?;
            let rows = sweep_budgets(&cfg, &instances, &budgets)?;
            output::write_curves(&dir, &rows)?;
            println!("wrote {} rows to {}", rows.len(), dir.join("curves.csv").display());
            Ok(0)
        }
        Command::Verify { config } => {
            let cfg = load(&config)?;
            let instances = cfg.load_instances()?;
            let instance = instances
                .first()
                .ok_or_else(|| CliError::Invalid("no instances to verify against".into()))?;
            let seed = cfg.seeds[0];
            let backend = Backend::for_seed(&cfg, seed)?;
            backend.register(std::slice::from_ref(instance))?;
            let checks = verify::run_checks(&backend, instance, &cfg.search);
            let failed = checks.iter().filter(|c| !c.passed).count();
            for c in &checks {
                if c.passed {
                    println!("PASS {}", c.name);
                } else {
                    println!("FAIL {}: {}", c.name, c.detail);
                }
            }
            if failed > 0 {
                return Err(CliError::Verify(failed));
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
