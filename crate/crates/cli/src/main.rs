use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Parser, Subcommand};
use sldg_cli::{convergence_suite, run, Overrides, RunConfig, Sweep};
use sldg_core::convergence::table_to_csv;

#[derive(Parser)]
#[command(name = "sldg", version, about = "Semi-Lagrangian DG solver for 2D vorticity and guiding-center transport")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one problem to the final time.
    Run {
        /// key = value file; flags override it.
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        flags: Overrides,
    },
    /// Error table over a list of meshes or CFL numbers.
    Converge {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Comma-separated cells per direction, e.g. 20,40,80.
        #[arg(long, value_delimiter = ',', conflicts_with = "cfls")]
        meshes: Vec<usize>,
        /// Comma-separated CFL numbers on the --nx mesh.
        #[arg(long, value_delimiter = ',')]
        cfls: Vec<f64>,
        #[command(flatten)]
        flags: Overrides,
    },
}

fn resolve(config: Option<PathBuf>, flags: Overrides) -> Result<RunConfig> {
    let base = match config {
        Some(p) => Overrides::from_file(&p)?,
        None => Overrides::default(),
    };
    RunConfig::resolve(flags.layered_over(base))
}

fn main_inner() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, flags } => {
            let cfg = resolve(config, flags)?;
            let s = run(&cfg)?;
            println!("{} steps to t = {}; output in {}", s.steps, s.time, cfg.out.display());
            if let Some(e) = s.errors {
                println!("L1 {:.6e}  L2 {:.6e}  Linf {:.6e}", e.l1, e.l2, e.linf);
            }
        }
        Command::Converge { config, meshes, cfls, flags } => {
            let cfg = resolve(config, flags)?;
            let (sweep, label) = match (meshes.is_empty(), cfls.is_empty()) {
                (false, _) => (Sweep::Meshes(meshes), "n"),
                (true, false) => (Sweep::Cfls(cfls), "cfl"),
                (true, true) => bail!("give --meshes or --cfls"),
            };
            let rows = convergence_suite(&cfg, &sweep)?;
            print!("{}", table_to_csv(label, &rows));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match main_inner() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
