use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use cpbundle_cli::{builtins, load, run_scenario, Overrides, ScenarioError};

#[derive(Parser)]
#[command(name = "cpbundle", version, about = "Run verification scenarios for Cuntz-Pimsner algebras of sampled vector bundles")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file or `builtin:<name>`.
    Run {
        scenario: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        rmax: Option<usize>,
        /// Bundle rank for presets that take one.
        #[arg(long = "d")]
        rank: Option<usize>,
        /// Write the report here.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Format of the written report; stdout always gets the text summary.
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Print the builtin scenario names.
    List,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Text,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::List => {
            for name in builtins::names() {
                println!("{name}");
            }
            ExitCode::SUCCESS
        }
        Command::Run {
            scenario,
            seed,
            tol,
            rmax,
            rank,
            report,
            format,
        } => {
            let overrides = Overrides { seed, tol, rmax, rank };
            let outcome = load(&scenario).and_then(|sc| run_scenario(&sc, &overrides));
            match outcome {
                Ok(rep) => {
                    print!("{}", rep.to_text());
                    if let Some(path) = report {
                        let body = match format {
                            Format::Json => rep.to_json(),
                            Format::Text => rep.to_text(),
                        };
                        if let Err(e) = std::fs::write(&path, body) {
                            eprintln!("cannot write {}: {e}", path.display());
                            return ExitCode::from(3);
                        }
                    }
                    if rep.passed {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(1)
                    }
                }
                Err(e) => {
                    eprintln!("{e}");
                    ExitCode::from(match e {
                        ScenarioError::Parse(_) => 2,
                        ScenarioError::Validation(_) => 3,
                    })
                }
            }
        }
    }
}
