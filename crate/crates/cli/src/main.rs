use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use dsmppi::correlation::write_matrix_csv;
use dsmppi::harness::{run_experiment, summarize_dir, ExperimentConfig};
use dsmppi::sampling::{export_text, generate_pool, save_pool};
use dsmppi::{CorrelationStructure, Error, OptimizerConfig};

#[derive(Parser)]
#[command(name = "dsmppi", version, about = "Deterministic-sampling MPPI: pools, experiments and summaries")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a deterministic standard-normal sample pool.
    GenPool {
        /// Dimension per optimizer iteration (H · d_u).
        #[arg(long)]
        dim: usize,
        #[arg(long)]
        count: usize,
        #[arg(long)]
        out: PathBuf,
        /// Build a pool of dimension `dim · J` for the multi-iteration scheme.
        #[arg(long, value_name = "J")]
        multi_iter: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        max_iterations: Option<usize>,
        /// Also write the samples as CSV text to this path.
        #[arg(long)]
        text: Option<PathBuf>,
        /// Keep the best pool even if the optimizer budget runs out.
        #[arg(long)]
        allow_unconverged: bool,
    },
    /// Run an experiment sweep described by a TOML file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override `experiment.output_dir`.
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Run episodes one after another.
        #[arg(long)]
        sequential: bool,
    },
    /// Recompute `runs.csv` and `summary.csv` of a task directory.
    Summarize {
        #[arg(long)]
        dir: PathBuf,
    },
    /// Write the correlation matrix and its square root as CSV.
    Corr {
        #[arg(long)]
        horizon: usize,
        #[arg(long, default_value_t = 1)]
        control_dim: usize,
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        root_out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::GenPool {
            dim,
            count,
            out,
            multi_iter,
            seed,
            max_iterations,
            text,
            allow_unconverged,
        } => {
            let mut config = OptimizerConfig::default();
            if let Some(s) = seed {
                config.seed = s;
            }
            if let Some(m) = max_iterations {
                config.max_iterations = m;
            }
            let total = match multi_iter {
                Some(0) => bail!("--multi-iter must be at least 1"),
                Some(j) => dim * j,
                None => dim,
            };
            let pool = match generate_pool(total, count, &config) {
                Ok(p) => p,
                Err(Error::NotConverged { best, iterations, .. }) if allow_unconverged => {
                    eprintln!("warning: optimizer stopped after {iterations} iterations");
                    *best
                }
                Err(e) => return Err(e).context("pool generation failed"),
            };
            save_pool(&pool, &out).with_context(|| format!("writing {}", out.display()))?;
            if let Some(t) = text {
                export_text(&pool, &t).with_context(|| format!("writing {}", t.display()))?;
            }
            let q = pool.quality();
            println!(
                "{} × {} pool -> {} (mean err {:.3e}, cov err {:.3e}, distance {:.6e}, {} iterations)",
                pool.count(),
                pool.dim(),
                out.display(),
                q.mean_error,
                q.cov_error,
                q.cvm_value,
                pool.provenance().optimizer_iterations
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Run {
            config,
            output_dir,
            sequential,
        } => {
            let mut cfg =
                ExperimentConfig::load(&config).with_context(|| format!("loading {}", config.display()))?;
            if let Some(dir) = output_dir {
                cfg.experiment.output_dir = dir;
            }
            if sequential {
                cfg.experiment.parallel = false;
            }
            let report = run_experiment(&cfg)?;
            for f in &report.failures {
                eprintln!(
                    "run failed: {} N={} seed={}: {}",
                    f.key.method, f.key.sample_count, f.key.seed, f.message
                );
            }
            println!(
                "{} runs executed, {} reused, {} failed; summary in {}",
                report.executed,
                report.skipped,
                report.failures.len(),
                report.task_dir.join("summary.csv").display()
            );
            print_summary(&report.summary);
            Ok(if report.failures.is_empty() {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
        Command::Summarize { dir } => {
            let summary = summarize_dir(&dir).with_context(|| format!("summarizing {}", dir.display()))?;
            print_summary(&summary);
            Ok(ExitCode::SUCCESS)
        }
        Command::Corr {
            horizon,
            control_dim,
            beta,
            out,
            root_out,
        } => {
            let c = CorrelationStructure::colored(horizon, control_dim, beta)?;
            write_matrix_csv(&c.full, &out)?;
            if let Some(r) = root_out {
                write_matrix_csv(&c.root, &r)?;
            }
            if c.clipped_eigenvalues > 0 {
                eprintln!("note: {} negative eigenvalues clipped", c.clipped_eigenvalues);
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn print_summary(rows: &[dsmppi::harness::SummaryRow]) {
    println!(
        "{:<24} {:>5} {:>5} {:>14} {:>14} {:>14} {:>10}",
        "method", "N", "runs", "cost", "smoothness", "settled", "ms/step"
    );
    for r in rows {
        println!(
            "{:<24} {:>5} {:>5} {:>14.4} {:>14.4} {:>14.4} {:>10.3}",
            r.method.name(),
            r.sample_count,
            r.runs,
            r.cost_median,
            r.smoothness_median,
            r.settled_median,
            r.step_time_ms_median
        );
    }
}
