//! Command-line front end: run experiment grids, re-score record streams,
//! and print privacy/utility tradeoff tables.
//!
//! Exit codes: 0 on success, 1 on configuration or input errors, 2 when the
//! run completed but some games failed.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use synth_audit::experiment::{
    self, read_records, score_records, summary_csv_to_writer, tradeoff_csv_to_writer,
    ExperimentConfig, ExperimentError, ExperimentReport,
};

#[derive(Parser)]
#[command(name = "synth-audit", version, about = "Attribute-inference risk auditing for tabular synthetic data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment grid described by a JSON config.
    Run {
        config: PathBuf,
        /// Override the config's master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the config's worker count.
        #[arg(long)]
        workers: Option<usize>,
        /// Override the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-score a records.jsonl stream into a summary CSV.
    Score {
        records: PathBuf,
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Emit the privacy/utility tradeoff table from a report.json.
    Tradeoff {
        report: PathBuf,
        /// Attack-accuracy threshold below which a cell counts as private.
        #[arg(long, default_value_t = experiment::PRIVACY_THRESHOLD)]
        privacy_threshold: f64,
        /// Error threshold below which a cell counts as useful.
        #[arg(long, default_value_t = experiment::UTILITY_THRESHOLD)]
        utility_threshold: f64,
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(command: Command) -> Result<ExitCode, ExperimentError> {
    match command {
        Command::Run {
            config,
            seed,
            workers,
            out,
        } => {
            let mut config = ExperimentConfig::from_json_path(&config)?;
            if let Some(seed) = seed {
                config.master_seed = seed;
            }
            if let Some(workers) = workers {
                config.workers = workers;
            }
            if let Some(out) = out {
                config.out_dir = out;
            }
            let report = experiment::run(&config)?;
            let failures = report.total_failures();
            eprintln!(
                "ran {} cells, {} games scored, {} failed; outputs in {}",
                report.cells.len(),
                report
                    .cells
                    .iter()
                    .filter_map(|c| c.summary.as_ref())
                    .map(|s| s.games)
                    .sum::<usize>(),
                failures,
                config.out_dir.display()
            );
            Ok(if failures > 0 {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            })
        }
        Command::Score { records, out } => {
            let lines = read_records(&records)?;
            let cells = score_records(&lines);
            match out {
                Some(path) => {
                    let mut buf = Vec::new();
                    summary_csv_to_writer(&mut buf, &cells)?;
                    std::fs::write(path, buf)?;
                }
                None => summary_csv_to_writer(std::io::stdout().lock(), &cells)?,
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Tradeoff {
            report,
            privacy_threshold,
            utility_threshold,
            out,
        } => {
            let report = ExperimentReport::from_json_path(&report)?;
            let rows =
                experiment::tradeoff_table(&report.cells, privacy_threshold, utility_threshold);
            match out {
                Some(path) => {
                    let mut buf = Vec::new();
                    tradeoff_csv_to_writer(&mut buf, &rows)?;
                    std::fs::write(path, buf)?;
                }
                None => tradeoff_csv_to_writer(std::io::stdout().lock(), &rows)?,
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
