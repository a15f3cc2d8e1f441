use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use pdsynth::cli::{self, Overrides, RunConfig};

/// Differentially private synthetic data with plausible deniability.
#[derive(Parser)]
#[command(name = "pdsynth", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Partition the data, learn the model structure and write the model artifact.
    Learn(Common),
    /// Release synthetic records from a learned model.
    Generate(Common),
    /// Run the exact privacy and sensitivity checks on small universes.
    Verify(Common),
    /// Compare synthetic data with the reference data.
    Metrics(Common),
}

#[derive(Args)]
struct Common {
    /// Run configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the run seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the worker count.
    #[arg(long)]
    workers: Option<usize>,
    /// Overrides the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run(command: Command) -> pdsynth::Result<()> {
    let (Command::Learn(c) | Command::Generate(c) | Command::Verify(c) | Command::Metrics(c)) = &command;
    let mut cfg = RunConfig::load(&c.config)?;
    cfg.apply(&Overrides {
        seed: c.seed,
        workers: c.workers,
        out: c.out.clone(),
    });
    match command {
        Command::Learn(_) => {
            let s = cli::cmd_learn(&cfg)?;
            let b = &s.artifact.budget;
            println!(
                "model written to {} (eps_L = {:.6}, eps_P = {:.6}, model eps = {:.6}, delta = {:e})",
                s.out.display(),
                b.structure.eps,
                b.parameters.eps,
                b.model.eps,
                b.model.delta
            );
        }
        Command::Generate(_) => {
            let s = cli::cmd_generate(&cfg)?;
            println!(
                "released {} records from {} candidates into {}",
                s.released,
                s.output.stats.candidates,
                s.out.display()
            );
        }
        Command::Verify(_) => {
            let r = cli::cmd_verify(&cfg)?;
            print!("{}", r.to_text());
        }
        Command::Metrics(_) => {
            let rows = cli::cmd_metrics(&cfg)?;
            println!("wrote {} metric rows", rows.len());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
