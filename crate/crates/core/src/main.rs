use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use repchar::cli::{list_suites, run_file, Overrides};

#[derive(Parser)]
#[command(name = "repchar", version, about = "Replication model simulator and mixing-coefficient checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the suites listed in a config file.
    Run {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        samples: Option<usize>,
    },
    /// List runnable suites.
    List,
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::List => {
            print!("{}", list_suites());
            ExitCode::SUCCESS
        }
        Command::Run {
            config,
            seed,
            out,
            samples,
        } => {
            let overrides = Overrides {
                seed,
                out_dir: out,
                samples,
            };
            match run_file(&config, &overrides) {
                Ok(outcome) => {
                    for r in &outcome.reports {
                        println!("{} {}", r.status, r.name);
                    }
                    ExitCode::from(outcome.exit_code())
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(2)
                }
            }
        }
    }
}
