use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod config;
mod experiments;
mod record;
mod report;

/// Environment variable holding the worker-thread count.
const WORKERS_ENV: &str = "KACSIM_WORKERS";

#[derive(Parser)]
#[command(name = "kacsim", about = "Run and report Kac particle-system experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config.
    Run { config: PathBuf },
    /// Summarize a finished run directory.
    Report { dir: PathBuf },
    /// Check a config without running it; prints its content hash.
    Validate { config: PathBuf },
    /// Print the tool version.
    Version,
}

const VALIDATION: u8 = 2;
const RUNTIME: u8 = 3;

fn init_workers() -> Result<(), String> {
    let Ok(v) = std::env::var(WORKERS_ENV) else { return Ok(()) };
    let n: usize = v.trim().parse().map_err(|_| format!("{WORKERS_ENV}: expected a positive integer, got `{v}`"))?;
    if n == 0 {
        return Err(format!("{WORKERS_ENV}: must be positive"));
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = init_workers() {
        eprintln!("error: {e}");
        return ExitCode::from(VALIDATION);
    }
    match cli.command {
        Command::Version => {
            println!("kacsim {}", env!("CARGO_PKG_VERSION"));
            ExitCode::SUCCESS
        }
        Command::Validate { config } => match config::load(&config) {
            Ok(cfg) => {
                println!("ok {:?} {}", cfg.experiment, cfg.hash());
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("invalid config: {e}");
                ExitCode::from(VALIDATION)
            }
        },
        Command::Run { config } => {
            let cfg = match config::load(&config) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("invalid config: {e}");
                    return ExitCode::from(VALIDATION);
                }
            };
            let out = record::output_dir(&cfg, &config);
            match record::run(&cfg, &out) {
                Ok(r) => {
                    println!("wrote {} files to {} in {:.1}s (config {})", r.files.len(), out.display(), r.wall_time_s, r.config_hash);
                    for w in &r.warnings {
                        eprintln!("warning: {w}");
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("run failed: {e}");
                    ExitCode::from(RUNTIME)
                }
            }
        }
        Command::Report { dir } => match report::report(&dir) {
            Ok(r) => {
                print!("{}", r.text);
                if !r.plot_files.is_empty() {
                    println!("plot data: {}", r.plot_files.join(" "));
                }
                if r.missing.is_empty() {
                    ExitCode::SUCCESS
                } else {
                    ExitCode::from(RUNTIME)
                }
            }
            Err(e) => {
                eprintln!("report failed: {e}");
                ExitCode::from(RUNTIME)
            }
        },
    }
}
