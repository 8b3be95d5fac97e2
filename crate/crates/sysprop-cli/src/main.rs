//! `sysprop`: config-driven black-box estimation of LTI system properties.

mod config;
mod runner;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::runner::RunError;

#[derive(Parser)]
#[command(
    name = "sysprop",
    version,
    about = "Black-box L2-gain, passivity and conic-sector estimation experiments"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    /// Output directory (overrides the config's [output] dir and SYSPROP_OUT).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Master seed override (noise stream seed unless [noise] pins its own).
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the configured estimation experiment.
    Run { config: PathBuf },
    /// Sweep methods against sample budgets and tabulate accuracy.
    Compare { config: PathBuf },
    /// Spectral ground-truth report for a plant file.
    Truth { plant: PathBuf },
}

fn load(path: &Path) -> Result<(String, PathBuf), RunError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| RunError::Config(format!("cannot read {}: {e}", path.display())))?;
    let dir = path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    Ok((text, dir))
}

fn dispatch(cli: Cli) -> Result<(), RunError> {
    match &cli.cmd {
        Cmd::Run { config } | Cmd::Compare { config } => {
            let for_compare = matches!(cli.cmd, Cmd::Compare { .. });
            let (text, dir) = load(config)?;
            let mut cfg = config::parse_config(&text, &dir, for_compare)
                .map_err(|e| RunError::Config(e.to_string()))?;
            if let Some(seed) = cli.seed {
                cfg.estimator.seed = seed;
            }
            let out_dir = config::resolve_out_dir(cli.out.clone(), cfg.out_dir.as_deref());
            if for_compare {
                runner::compare(&cfg, &out_dir, cli.seed)
            } else {
                runner::run(&cfg, &out_dir, cli.seed)
            }
        }
        Cmd::Truth { plant } => {
            let (text, _) = load(plant)?;
            let out_dir = config::resolve_out_dir(cli.out.clone(), None);
            runner::truth(&text, &out_dir)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("sysprop: {}", e.message());
            ExitCode::from(e.code() as u8)
        }
    }
}
