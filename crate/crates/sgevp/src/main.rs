use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sgevp::config::ExperimentConfig;
use sgevp::error::{Error, Result};
use sgevp::reference::make_reference;
use sgevp::run::run_experiment;

#[derive(Parser)]
#[command(name = "sgevp", version, about = "Spectral inverse and subspace iteration experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config.
    Run {
        config: PathBuf,
        /// Output directory; defaults to `output` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve and store the reference discretization of a config.
    Reference {
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the manifest of an artifact directory.
    Report { dir: PathBuf },
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let art = run_experiment(&cfg, out.as_deref())?;
            println!("wrote {} ({})", art.dir.display(), art.files.join(", "));
            println!("{}", toml::to_string(&art.summary)?);
        }
        Command::Reference { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let (problem, sol, stored) = make_reference(&cfg)?;
            stored.save(&out)?;
            println!(
                "reference n={} #A={} steps={} mean mu={:.12} hash {}",
                problem.mesh.cells(),
                problem.space.len(),
                sol.steps,
                sol.mu[0],
                stored.payload_hash
            );
        }
        Command::Report { dir } => {
            let path = dir.join("manifest.toml");
            let text = std::fs::read_to_string(&path).map_err(|source| Error::Io { path, source })?;
            let manifest: toml::Table = toml::from_str(&text)?;
            for key in ["run", "summary"] {
                if let Some(t) = manifest.get(key) {
                    println!("[{key}]\n{}", toml::to_string(t)?);
                }
            }
        }
    }
    Ok(())
}
