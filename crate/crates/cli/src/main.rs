use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use phase_kalman_cli::{cmd_gen, cmd_run, cmd_verify, CliError, Overrides, VerifyOptions};

#[derive(Parser)]
#[command(name = "phase-kalman", version, about = "Sparse phase retrieval from Fourier intensities")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a scenario file and its noiseless intensity spectrum.
    Gen {
        /// Builtin name (paper-1d, paper-2d, paper-2d-noparasitic, paper-2d-random) or scenario file.
        scenario: String,
        #[arg(short, long)]
        out: PathBuf,
        /// Replace the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Reconstruct a scenario and write report.json, sites.csv and trace.csv.
    Run {
        /// Scenario file (or builtin name).
        scenario: String,
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long)]
        max_iter: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the seeded property suites.
    Verify {
        #[arg(long, default_value_t = 100)]
        seeds: usize,
        #[arg(long, hide = true)]
        inject_broken_sensor: bool,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Gen { scenario, out, seed } => cmd_gen(&scenario, &out, seed).map(|p| {
            println!("wrote {}", p.display());
        }),
        Command::Run {
            scenario,
            out,
            max_iter,
            seed,
        } => cmd_run(&scenario, &out, Overrides { max_iter, seed }).map(|o| {
            println!(
                "{}: {} iterations, aligned error {:.3e} (relative {:.3e}), {:.1}s",
                o.spec.name,
                o.reconstruction.trace.iterations_run,
                o.evaluation.aligned_error,
                o.evaluation.relative_error,
                o.seconds
            );
        }),
        Command::Verify {
            seeds,
            inject_broken_sensor,
        } => cmd_verify(&VerifyOptions {
            seeds,
            inject_broken_sensor,
            ..VerifyOptions::default()
        })
        .map(|_| ()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report(e),
    }
}

fn report(e: CliError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(e.exit_code() as u8)
}
