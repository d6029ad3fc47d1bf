//! Closed-form residual coefficients of the two-task linear model on a time grid.

use std::io::Write;

use widecl_core::perturb::{OracleParams, OracleTask};
use widecl_core::trajectory::fmt_f64;

use crate::error::{CliError, CliResult};

pub const ORACLE_HEADER: &str = "t,rho,y,order,task,value";

#[derive(Debug, Clone, PartialEq)]
pub struct OracleGrid {
    pub rho: f64,
    pub y: f64,
    pub t_max: f64,
    pub points: usize,
    pub orders: Vec<u8>,
}

impl OracleGrid {
    pub fn times(&self) -> Vec<f64> {
        match self.points {
            0 => Vec::new(),
            1 => vec![0.0],
            n => (0..n).map(|k| self.t_max * k as f64 / (n - 1) as f64).collect(),
        }
    }
}

/// One row per (t, order, task), task-1 training phase.
pub fn write_oracle_csv<W: Write>(grid: &OracleGrid, w: W) -> CliResult<()> {
    if grid.points == 0 {
        return Err(CliError::field("points", "must be positive"));
    }
    if !(grid.t_max >= 0.0) {
        return Err(CliError::field("t-max", "must be non-negative"));
    }
    let mut out = std::io::BufWriter::new(w);
    writeln!(out, "{ORACLE_HEADER}")?;
    for t in grid.times() {
        for &order in &grid.orders {
            for task in [OracleTask::First, OracleTask::Second] {
                let p = OracleParams {
                    rho: grid.rho,
                    y: grid.y,
                    t,
                    order,
                };
                let v = p.during_task1(task)?;
                writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    fmt_f64(t),
                    fmt_f64(grid.rho),
                    fmt_f64(grid.y),
                    order,
                    task.index(),
                    fmt_f64(v)
                )?;
            }
        }
    }
    out.flush()?;
    Ok(())
}
