use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use llnlab_cli::config::TaskKind;
use llnlab_cli::{load_run, render_text, run, Invocation, EXIT_ASSERTION, EXIT_PASS};

#[derive(Parser)]
#[command(name = "llnlab", version, about = "Seeded law-of-large-numbers experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides `output_path`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads. Results do not depend on this.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Replicated trajectories, event probabilities, dependence probes.
    Simulate(RunArgs),
    /// Summability, uncorrelation, tail and truncation conditions.
    Check(RunArgs),
    /// Subsequence index, κ bounds, sandwich chain, Chebyshev sums.
    Proof(RunArgs),
    /// Quadrature of the moment integrals.
    Integrate(RunArgs),
    /// Exact step-family deviation probabilities.
    Oracle(RunArgs),
    /// Print a finished run.
    Report {
        /// Directory written by an earlier run.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
}

fn exit(code: i32) -> ExitCode {
    ExitCode::from(code as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (task, args) = match cli.command {
        Command::Simulate(a) => (TaskKind::Simulate, a),
        Command::Check(a) => (TaskKind::Check, a),
        Command::Proof(a) => (TaskKind::Proof, a),
        Command::Integrate(a) => (TaskKind::Integrate, a),
        Command::Oracle(a) => (TaskKind::Oracle, a),
        Command::Report { out, format } => {
            return match load_run(&out) {
                Ok((summary, manifest)) => {
                    match format {
                        Format::Text => print!("{}", render_text(&summary, &manifest)),
                        Format::Json => println!("{}", serde_json::to_string_pretty(&summary).unwrap_or_default()),
                    }
                    exit(if summary["passed"] == serde_json::json!(true) {
                        EXIT_PASS
                    } else {
                        EXIT_ASSERTION
                    })
                }
                Err(e) => {
                    eprintln!("llnlab: {e}");
                    exit(e.exit_code())
                }
            };
        }
    };
    let inv = Invocation {
        task,
        config: args.config,
        seed: args.seed,
        out: args.out,
        threads: args.threads,
    };
    match run(&inv) {
        Ok(outcome) => {
            for a in &outcome.assertions {
                let mark = if a.passed { "PASS" } else { "FAIL" };
                println!("{mark} {} observed={}", a.path, a.observed);
            }
            println!(
                "{}: {} outputs in {}",
                if outcome.passed { "passed" } else { "assertions failed" },
                outcome.outputs.len(),
                outcome.out_dir.display()
            );
            exit(outcome.exit_code())
        }
        Err(e) => {
            eprintln!("llnlab: {e}");
            exit(e.exit_code())
        }
    }
}
