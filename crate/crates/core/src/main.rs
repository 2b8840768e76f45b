use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mvstieltjes::experiment::{run_experiment, write_outputs, Experiment, ExperimentConfig, Method};

#[derive(Parser)]
#[command(name = "mvstieltjes", version, about = "Recurrence matrices for multivariate orthogonal polynomials")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment with one method and write its outputs
    Run {
        #[arg(long, value_enum)]
        experiment: Experiment,
        #[arg(long, value_enum)]
        method: Method,
        /// Maximum polynomial degree (39 for d=2, 15 for d=3 by default)
        #[arg(long)]
        degree: Option<usize>,
        /// Monte Carlo sample count for hol
        #[arg(long)]
        mc_samples: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// CSV point file for the cloud experiment
        #[arg(long)]
        cloud: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Enable the numerical solver used for d > 3
        #[arg(long)]
        experimental_wopp: bool,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let Command::Run {
        experiment,
        method,
        degree,
        mc_samples,
        seed,
        cloud,
        out,
        experimental_wopp,
    } = cli.command;

    let mut cfg = ExperimentConfig::new(experiment, method, degree);
    if let Some(m) = mc_samples {
        cfg.mc_samples = m;
    }
    cfg.seed = seed;
    cfg.cloud_path = cloud;
    cfg.output_dir = out;
    cfg.experimental_wopp = experimental_wopp;
    if let Err(e) = cfg.validate() {
        eprintln!("error: {e}");
        return ExitCode::from(1);
    }

    let outcome = match run_experiment(&cfg) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(if e.is_numerical() { 2 } else { 1 });
        }
    };
    if let Err(e) = write_outputs(&outcome) {
        eprintln!("error writing outputs: {e}");
        return ExitCode::from(1);
    }
    match outcome.max_error() {
        Some(err) => println!(
            "{} {} N={} R_N={}: max |E| = {err:e}, max commuting residual = {:e}",
            experiment.tag(),
            method.tag(),
            cfg.degree,
            outcome.n_functions,
            outcome.max_cc()
        ),
        None => println!("{} {} N={}: no basis produced", experiment.tag(), method.tag(), cfg.degree),
    }
    if let Some(e) = &outcome.failure {
        eprintln!("numerical failure: {e}");
        return ExitCode::from(2);
    }
    ExitCode::SUCCESS
}
