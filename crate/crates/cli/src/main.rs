use clap::{Parser, Subcommand};
use nonlocal_ql_cli::{list_presets, run_scenario, validate_config, Status};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "nonlocal-ql", version, about = "Run nonlocal quasilinear scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file and write its outputs.
    Run {
        config: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Check a scenario file without running it.
    Validate { config: PathBuf },
    /// Print the named presets.
    ListPresets,
}

fn init_threads() {
    if let Some(n) = std::env::var("NONLOCAL_QL_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if n > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_threads();
    let status = match cli.command {
        Command::Run { config, output, seed } => match run_scenario(&config, output.as_deref(), seed) {
            Ok(summary) => {
                for f in &summary.soft_failures {
                    eprintln!("check failed: {f}");
                }
                println!("wrote {}", summary.output_dir.display());
                summary.status
            }
            Err(e) => {
                eprintln!("error: {e}");
                Status::HardError
            }
        },
        Command::Validate { config } => match validate_config(&config) {
            Ok(cfg) => {
                println!("ok: {} scenario", cfg.scenario.name());
                Status::Success
            }
            Err(e) => {
                eprintln!("error: {e}");
                Status::HardError
            }
        },
        Command::ListPresets => {
            print!("{}", list_presets());
            Status::Success
        }
    };
    ExitCode::from(status as u8)
}
