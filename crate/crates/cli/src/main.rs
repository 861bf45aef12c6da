//! `lab`: run registered experiments from config files.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use priorlab::experiments::{
    describe, emit_results, registered, run_experiment, write_raw_table, ExperimentConfig, OutputFormat,
};
use priorlab::LabError;

#[derive(Parser)]
#[command(name = "lab", version, about = "Frequentist vs Bayesian estimator simulation lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run {
        config: PathBuf,
        /// Output directory, created if missing.
        #[arg(long, default_value = "results")]
        out: PathBuf,
        /// Worker threads (default: available cores).
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long, default_value = "csv", value_parser = ["csv", "json"])]
        format: String,
    },
    /// List registered experiments.
    List,
    /// Show an experiment's model and parameters.
    Describe { experiment_id: String },
}

fn exit_code(e: &LabError) -> u8 {
    match e {
        LabError::Config(_) => 2,
        _ => 3,
    }
}

fn run(config: &Path, out: &Path, workers: Option<usize>, format: &str) -> Result<(), LabError> {
    let text = std::fs::read_to_string(config)
        .map_err(|e| LabError::Config(format!("cannot read {}: {e}", config.display())))?;
    let mut cfg = ExperimentConfig::parse(&text)?;
    cfg.apply_env_seed()?;
    let format: OutputFormat = format.parse()?;
    let workers = workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .max(1);

    let output = run_experiment(&cfg, workers)?;
    for w in &output.warnings {
        eprintln!("warning: {w}");
    }
    std::fs::create_dir_all(out).map_err(|e| LabError::Io {
        path: out.display().to_string(),
        message: e.to_string(),
    })?;
    let id = &output.experiment_id;
    let summary = out.join(format!("{id}.summary.{}", format.extension()));
    emit_results(id, output.master_seed, &output.summaries, format, &summary)?;
    let raw = out.join(format!("{id}.raw.csv.gz"));
    write_raw_table(&output, &raw)?;

    let failed = output.raw.iter().filter(|r| r.outcome.is_err()).count();
    println!(
        "{id}: {} replications x {} sizes, seed {}, {failed} failed",
        cfg.reps,
        cfg.size_grid.len(),
        output.master_seed
    );
    println!("wrote {}", summary.display());
    println!("wrote {}", raw.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run {
            config,
            out,
            workers,
            format,
        } => run(config, out, *workers, format),
        Command::List => {
            let w = registered().iter().map(|d| d.id.len()).max().unwrap_or(0);
            for d in registered() {
                println!("{:w$}  {}", d.id, d.title, w = w);
            }
            Ok(())
        }
        Command::Describe { experiment_id } => describe(experiment_id).map(|text| print!("{text}")),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("lab: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
