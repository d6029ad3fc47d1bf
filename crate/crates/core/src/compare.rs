//! Finite-width versus infinite-width comparison: loss gaps on a shared time
//! grid, kernel distances at matched checkpoints and field-distribution KS
//! statistics.

use std::io::Write;

use nalgebra::DMatrix;

use crate::dmft::FieldEnsemble;
use crate::error::{Error, Result};
use crate::finite_net::FieldSamples;
use crate::linalg::frobenius_distance;
use crate::stats::ks_two_sample;
use crate::trajectory::{fmt_f64, LossTable, Trajectory};

/// Loss differences of `a` relative to the reference `b`.
///
/// The gap of task `i` at time `t` is `|La(t) - Lb(t)|` divided by the largest
/// reference loss of task `i` within the training window containing `t`
/// (floored at `1e-3` of that task's overall peak). Pointwise ratios would
/// blow up once a task is fit and its loss approaches zero, while a single
/// run-wide peak would hide errors in the much smaller forgetting losses.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGaps {
    pub times: Vec<f64>,
    /// `gaps[k][i]` for checkpoint `k` and 0-based task `i`.
    pub gaps: Vec<Vec<f64>>,
    pub max_relative_gap: f64,
}

impl LossGaps {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["time", "task", "relative_gap"])?;
        for (t, row) in self.times.iter().zip(&self.gaps) {
            for (i, g) in row.iter().enumerate() {
                out.write_record([fmt_f64(*t), (i + 1).to_string(), fmt_f64(*g)])?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

fn times_match(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

pub fn loss_gaps(a: &LossTable, b: &LossTable) -> Result<LossGaps> {
    if a.num_tasks() != b.num_tasks() {
        return Err(Error::Alignment(format!(
            "task counts differ: {} vs {}",
            a.num_tasks(),
            b.num_tasks()
        )));
    }
    if a.times.len() != b.times.len()
        || !a.times.iter().zip(&b.times).all(|(x, y)| times_match(*x, *y))
        || a.phases != b.phases
    {
        return Err(Error::Alignment("checkpoint time grids differ".into()));
    }
    let tasks = a.num_tasks();
    let windows = b.phases.iter().copied().max().unwrap_or(0);
    // scale[i][w]: peak reference loss of task i in window w (1-based).
    let scale: Vec<Vec<f64>> = (0..tasks)
        .map(|i| {
            let overall = b.losses.iter().map(|row| row[i]).fold(0.0, f64::max);
            let floor = (1e-3 * overall).max(1e-300);
            (0..=windows)
                .map(|w| {
                    b.losses
                        .iter()
                        .zip(&b.phases)
                        .filter(|(_, &p)| p == w)
                        .map(|(row, _)| row[i])
                        .fold(floor, f64::max)
                })
                .collect()
        })
        .collect();
    let gaps: Vec<Vec<f64>> = a
        .losses
        .iter()
        .zip(&b.losses)
        .zip(&b.phases)
        .map(|((ra, rb), &w)| (0..tasks).map(|i| (ra[i] - rb[i]).abs() / scale[i][w]).collect())
        .collect();
    let max_relative_gap = gaps.iter().flatten().copied().fold(0.0, f64::max);
    Ok(LossGaps {
        times: a.times.clone(),
        gaps,
        max_relative_gap,
    })
}

/// KS statistic and p-value per datum of one field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldKs {
    pub datum: usize,
    pub statistic: f64,
    pub p_value: f64,
}

fn column_ks(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<Vec<FieldKs>> {
    if a.ncols() != b.ncols() {
        return Err(Error::Alignment(format!(
            "field data counts differ: {} vs {}",
            a.ncols(),
            b.ncols()
        )));
    }
    Ok((0..a.ncols())
        .map(|mu| {
            let xa: Vec<f64> = a.column(mu).iter().copied().collect();
            let xb: Vec<f64> = b.column(mu).iter().copied().collect();
            let (statistic, p_value) = ks_two_sample(&xa, &xb);
            FieldKs {
                datum: mu,
                statistic,
                p_value,
            }
        })
        .collect())
}

/// Pre-activation and gradient-field KS tests between the units of a finite
/// network and the samples of an ensemble.
pub fn field_ks(
    finite: &FieldSamples,
    ensemble: &FieldEnsemble,
    act: crate::Activation,
) -> Result<(Vec<FieldKs>, Vec<FieldKs>)> {
    let h = column_ks(&finite.h, &ensemble.h)?;
    let g = column_ks(&finite.g, &ensemble.gradient_fields(act))?;
    Ok((h, g))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub loss: LossGaps,
    /// `(time, ||Ka - Kb||_F)` where both trajectories stored kernels.
    pub kernel_distances: Vec<(f64, f64)>,
    pub max_relative_gap: f64,
}

pub fn compare(a: &Trajectory, b: &Trajectory) -> Result<ComparisonReport> {
    if a.layout.sizes() != b.layout.sizes() {
        return Err(Error::Alignment("task layouts differ".into()));
    }
    let loss = loss_gaps(&a.loss_table(), &b.loss_table())?;
    let kernel_distances = a
        .checkpoints
        .iter()
        .zip(&b.checkpoints)
        .filter_map(|(ca, cb)| match (&ca.kernels, &cb.kernels) {
            (Some(ka), Some(kb)) => Some((ca.time, frobenius_distance(&ka.ntk, &kb.ntk))),
            _ => None,
        })
        .collect();
    Ok(ComparisonReport {
        max_relative_gap: loss.max_relative_gap,
        loss,
        kernel_distances,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(losses: Vec<Vec<f64>>) -> LossTable {
        LossTable {
            times: (0..losses.len()).map(|k| k as f64 * 0.25).collect(),
            phases: (0..losses.len()).map(|k| 1 + k / 2).collect(),
            losses,
        }
    }

    #[test]
    fn self_comparison_is_zero() {
        let t = table(vec![vec![0.5, 0.5], vec![0.1, 0.4]]);
        let g = loss_gaps(&t, &t).unwrap();
        assert_eq!(g.max_relative_gap, 0.0);
    }

    #[test]
    fn gap_scales_by_window_peak() {
        let a = table(vec![vec![0.5], vec![0.2]]);
        let b = table(vec![vec![0.5], vec![0.1]]);
        let g = loss_gaps(&a, &b).unwrap();
        assert!((g.max_relative_gap - 0.2).abs() < 1e-15);
        // Second window: reference peak 0.1, so an error of 0.05 is 50%.
        let a = table(vec![vec![1.0], vec![0.0], vec![0.15], vec![0.1]]);
        let b = table(vec![vec![1.0], vec![0.0], vec![0.1], vec![0.1]]);
        let g = loss_gaps(&a, &b).unwrap();
        assert!((g.max_relative_gap - 0.5).abs() < 1e-12);
    }

    #[test]
    fn mismatches_are_alignment_errors() {
        let a = table(vec![vec![0.5, 0.1]]);
        let b = table(vec![vec![0.5]]);
        assert!(matches!(loss_gaps(&a, &b), Err(Error::Alignment(_))));
        let c = table(vec![vec![0.5, 0.1], vec![0.5, 0.1]]);
        assert!(matches!(loss_gaps(&a, &c), Err(Error::Alignment(_))));
    }
}
