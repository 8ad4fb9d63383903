use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use xdce::runner::{self, Config, Report, RunOptions};

#[derive(Parser)]
#[command(name = "xdce", version, about = "Photon pair creation from phonons in a closed optomechanical cavity")]
struct Cli {
    /// Output directory (falls back to `output.dir`, then $XDCE_OUT).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for scans (default: available parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single configuration.
    Run { config: PathBuf },
    /// Run every value of the configured scan axis.
    Scan { config: PathBuf },
    /// Run the built-in invariant suite.
    Check,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let opts = RunOptions { out_dir: cli.out, threads: cli.threads };
    let result = match &cli.command {
        Command::Run { config } => Config::load(config).and_then(|c| runner::run(&c, &opts)),
        Command::Scan { config } => Config::load(config).and_then(|c| runner::scan(&c, &opts)),
        Command::Check => runner::check(&opts),
    };
    match result {
        Ok(report) => finish(&report),
        Err(e) => {
            eprintln!("xdce: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn finish(report: &Report) -> ExitCode {
    for line in report.summary_lines() {
        eprintln!("{line}");
    }
    for v in report.violations() {
        eprintln!("invariant violated: {v}");
    }
    eprintln!("wrote {} files to {}", report.manifest.outputs.len() + 1, report.out_dir.display());
    ExitCode::from(report.exit_code() as u8)
}
