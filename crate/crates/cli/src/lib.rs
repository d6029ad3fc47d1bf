//! Configuration-driven experiment runner.

pub mod config;
pub mod error;
pub mod oracle;
pub mod runner;

use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use widecl_core::compare::loss_gaps;
use widecl_core::metrics::report;
use widecl_core::trajectory::{fmt_f64, read_records_csv, LossTable};
use widecl_core::EvalMatrix;

use config::{ExperimentConfig, ModelSpec};
use error::{CliError, CliResult};
use oracle::{write_oracle_csv, OracleGrid};

#[derive(Debug, Parser)]
#[command(name = "widecl", version, about = "Continual learning in wide two-layer networks")]
pub struct Cli {
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides `output.dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Root seed; overrides the config's.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Concurrent sweep points.
    #[arg(long, global = true, default_value_t = 1)]
    pub workers: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write dataset.csv and gram.csv.
    GenData,
    /// Train a finite network.
    Train,
    /// Run the infinite-width simulator.
    Dmft,
    /// Print closed-form residual coefficients as CSV.
    Oracle {
        #[arg(long, default_value_t = 0.5)]
        rho: f64,
        #[arg(long, default_value_t = 1.0)]
        y: f64,
        #[arg(long, default_value_t = 5.0)]
        t_max: f64,
        #[arg(long, default_value_t = 51)]
        points: usize,
        /// Expansion orders to print; all of 0, 1, 2 when omitted.
        #[arg(long, value_delimiter = ',')]
        order: Vec<u8>,
    },
    /// Compute metrics from an evaluation-matrix CSV.
    Metrics {
        #[arg(long)]
        matrix: PathBuf,
    },
    /// Run the config's parameter sweep.
    Sweep,
    /// Compare two trajectory CSVs on a shared grid.
    Compare {
        #[arg(long)]
        finite: PathBuf,
        /// Reference trajectory; gaps are relative to its losses.
        #[arg(long)]
        reference: PathBuf,
    },
}

impl Cli {
    fn load_config(&self) -> CliResult<ExperimentConfig> {
        let path = self
            .config
            .as_ref()
            .ok_or_else(|| CliError::field("--config", "required by this subcommand"))?;
        let mut cfg = ExperimentConfig::load(path)?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.output.dir = out.clone();
        }
        Ok(cfg)
    }

    /// Runs the subcommand, writing human-readable results to `stdout`.
    pub fn execute<W: Write>(&self, stdout: &mut W) -> CliResult<()> {
        match &self.command {
            Command::GenData => {
                let cfg = self.load_config()?;
                for p in runner::gen_data(&cfg, &cfg.output.dir)? {
                    writeln!(stdout, "{}", p.display())?;
                }
            }
            Command::Train | Command::Dmft => {
                let cfg = self.load_config()?;
                let want_finite = matches!(self.command, Command::Train);
                if matches!(cfg.model, ModelSpec::Finite(_)) != want_finite {
                    let need = if want_finite { "finite" } else { "dmft" };
                    return Err(CliError::field("model.kind", format!("this subcommand needs `{need}`")));
                }
                let m = runner::run(&cfg, &cfg.output.dir)?;
                writeln!(stdout, "{}", serde_json::to_string_pretty(&m)?)?;
            }
            Command::Oracle {
                rho,
                y,
                t_max,
                points,
                order,
            } => {
                let grid = OracleGrid {
                    rho: *rho,
                    y: *y,
                    t_max: *t_max,
                    points: *points,
                    orders: if order.is_empty() { vec![0, 1, 2] } else { order.clone() },
                };
                let mut buf = Vec::new();
                write_oracle_csv(&grid, &mut buf)?;
                if let Some(dir) = &self.out {
                    fs::create_dir_all(dir)?;
                    fs::write(dir.join("oracle.csv"), &buf)?;
                }
                stdout.write_all(&buf)?;
            }
            Command::Metrics { matrix } => {
                let file = fs::File::open(matrix)
                    .map_err(|e| CliError::Io(format!("{}: {e}", matrix.display())))?;
                let m = EvalMatrix::read_csv(file)?;
                let mut buf = Vec::new();
                report(&m)?.write_csv(&mut buf)?;
                if let Some(dir) = &self.out {
                    fs::create_dir_all(dir)?;
                    fs::write(dir.join(runner::METRICS_FILE), &buf)?;
                }
                stdout.write_all(&buf)?;
            }
            Command::Sweep => {
                let cfg = self.load_config()?;
                let rows = runner::sweep(&cfg, &cfg.output.dir, self.workers)?;
                let failed = rows.iter().filter(|r| r.outcome.is_err()).count();
                writeln!(
                    stdout,
                    "{} points, {} failed; summary in {}",
                    rows.len(),
                    failed,
                    cfg.output.dir.join(runner::SWEEP_SUMMARY_FILE).display()
                )?;
            }
            Command::Compare { finite, reference } => {
                let read = |p: &PathBuf| -> CliResult<LossTable> {
                    let f = fs::File::open(p)
                        .map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
                    Ok(LossTable::from_records(&read_records_csv(f)?)?)
                };
                let gaps = loss_gaps(&read(finite)?, &read(reference)?)?;
                if let Some(dir) = &self.out {
                    fs::create_dir_all(dir)?;
                    gaps.write_csv(fs::File::create(dir.join("loss_gaps.csv"))?)?;
                }
                writeln!(stdout, "max_relative_gap,{}", fmt_f64(gaps.max_relative_gap))?;
            }
        }
        Ok(())
    }
}
