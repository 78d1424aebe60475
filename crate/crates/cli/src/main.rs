use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use rexch_cli::output::Format;
use rexch_cli::{run, Command, RunArgs};

/// Resonant-exchange cross sections and the quantal correction to Langevin capture.
#[derive(Debug, Parser)]
#[command(name = "rexch", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// TOML run configuration.
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Output directory (default: the config's [output] dir, else ./rexch-out).
    #[arg(long, value_name = "DIR", env = "REXCH_OUT_DIR")]
    out: Option<PathBuf>,
    /// Worker threads (default: available parallelism).
    #[arg(long, value_name = "N")]
    jobs: Option<usize>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let args = RunArgs {
        command: cli.command,
        config: cli.config,
        out: cli.out,
        jobs: cli.jobs,
        format: cli.format,
    };
    match run(&args) {
        Ok(summary) => {
            for f in &summary.files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.diagnostic());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
