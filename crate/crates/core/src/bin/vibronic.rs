use clap::Parser;
use std::path::PathBuf;
use std::process::ExitCode;
use vibronic_mpo::runner::{run, RunOptions};

/// Simulate a dissipative vibronic network from a TOML config.
#[derive(Parser, Debug)]
#[command(name = "vibronic", version, about)]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Worker threads; outputs do not depend on this.
    #[arg(long, value_name = "K")]
    workers: Option<usize>,
    /// Write a checkpoint here during and after the run.
    #[arg(long, value_name = "PATH")]
    checkpoint: Option<PathBuf>,
    /// Continue from a checkpoint written for the same config.
    #[arg(long, value_name = "PATH")]
    resume: Option<PathBuf>,
    /// Output directory; overrides VIBRONIC_OUTPUT and the config.
    #[arg(long, value_name = "DIR")]
    output: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let opts = RunOptions {
        config: cli.config,
        workers: cli.workers,
        checkpoint: cli.checkpoint,
        resume: cli.resume,
        output: cli.output,
    };
    match run(&opts) {
        Ok(summary) => {
            println!("wrote {} files to {}", summary.files.len() + 1, summary.output_dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
