//! Time-indexed record of a sequential training run, shared by the finite-width
//! trainer and the DMFT simulator.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};

use crate::data::TaskLayout;
use crate::error::{Error, Result};
use crate::metrics::{EvalKind, EvalMatrix};

/// Equal-time kernels over all data of the sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSnapshot {
    pub phi: DMatrix<f64>,
    pub g: DMatrix<f64>,
    pub ntk: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    /// Number of updates applied so far.
    pub step: usize,
    pub time: f64,
    /// 1-based task whose data drives the update taken at this step.
    pub task_trained: usize,
    /// `y - f` for every datum of every task.
    pub residuals: DVector<f64>,
    /// `1/2 sum Delta^2` per task.
    pub losses: Vec<f64>,
    pub kernels: Option<KernelSnapshot>,
}

/// Per-task half loss of a residual vector.
pub fn task_losses(residuals: &DVector<f64>, layout: &TaskLayout) -> Vec<f64> {
    (0..layout.num_tasks())
        .map(|i| 0.5 * residuals.rows_range(layout.range(i)).norm_squared())
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub layout: TaskLayout,
    pub steps_per_task: usize,
    /// Time elapsed per update.
    pub dt: f64,
    pub checkpoints: Vec<Checkpoint>,
}

/// One row of the trajectory CSV.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryRecord {
    pub time: f64,
    pub task_trained: usize,
    pub task_eval: usize,
    pub loss: f64,
    pub forgetting: f64,
}

pub const TRAJECTORY_HEADER: &str = "time,task_trained,task_eval,loss,forgetting";

/// Formats a float with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Decides which steps of a run are recorded: every `every` steps plus all task
/// boundaries and the final step.
#[derive(Debug, Clone, Copy)]
pub struct Cadence {
    pub every: usize,
    pub steps_per_task: usize,
    pub num_tasks: usize,
}

impl Cadence {
    pub fn total_steps(&self) -> usize {
        self.steps_per_task * self.num_tasks
    }

    pub fn records(&self, step: usize) -> bool {
        step.is_multiple_of(self.every.max(1)) || step.is_multiple_of(self.steps_per_task) || step == self.total_steps()
    }

    /// 1-based task trained by update number `step`.
    pub fn task_at(&self, step: usize) -> usize {
        (step / self.steps_per_task).min(self.num_tasks - 1) + 1
    }
}

impl Trajectory {
    pub fn num_tasks(&self) -> usize {
        self.layout.num_tasks()
    }

    /// Step index at which 1-based task `task` finishes training.
    pub fn task_end_step(&self, task: usize) -> usize {
        task * self.steps_per_task
    }

    pub fn checkpoint_at_step(&self, step: usize) -> Option<&Checkpoint> {
        self.checkpoints
            .binary_search_by_key(&step, |c| c.step)
            .ok()
            .map(|i| &self.checkpoints[i])
    }

    /// `(time, loss)` series of 1-based task `task`.
    pub fn loss_series(&self, task: usize) -> Vec<(f64, f64)> {
        self.checkpoints
            .iter()
            .map(|c| (c.time, c.losses[task - 1]))
            .collect()
    }

    /// Forgetting of task `task` at checkpoint `cp`: loss increase since the
    /// end of that task's own training, zero before it.
    pub fn forgetting(&self, cp: &Checkpoint, task: usize) -> f64 {
        let end = self.task_end_step(task);
        if cp.step <= end {
            return 0.0;
        }
        match self.checkpoint_at_step(end) {
            Some(reference) => cp.losses[task - 1] - reference.losses[task - 1],
            None => 0.0,
        }
    }

    /// `L[j, i]`: loss on task `i` when task `j` has finished training.
    pub fn loss_matrix(&self) -> Result<EvalMatrix> {
        let t = self.num_tasks();
        let mut values = DMatrix::zeros(t, t);
        for j in 1..=t {
            let cp = self.checkpoint_at_step(self.task_end_step(j)).ok_or_else(|| {
                Error::Alignment(format!("no checkpoint at the end of task {j}"))
            })?;
            for i in 0..t {
                values[(j - 1, i)] = cp.losses[i];
            }
        }
        EvalMatrix::new(values, EvalKind::Loss)
    }

    pub fn records(&self) -> Vec<TrajectoryRecord> {
        let mut out = Vec::with_capacity(self.checkpoints.len() * self.num_tasks());
        for cp in &self.checkpoints {
            for task in 1..=self.num_tasks() {
                out.push(TrajectoryRecord {
                    time: cp.time,
                    task_trained: cp.task_trained,
                    task_eval: task,
                    loss: cp.losses[task - 1],
                    forgetting: self.forgetting(cp, task),
                });
            }
        }
        out
    }

    pub fn loss_table(&self) -> LossTable {
        LossTable {
            times: self.checkpoints.iter().map(|c| c.time).collect(),
            phases: self.checkpoints.iter().map(|c| c.task_trained).collect(),
            losses: self.checkpoints.iter().map(|c| c.losses.clone()).collect(),
        }
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        write_records_csv(&self.records(), w)
    }
}

pub fn write_records_csv<W: Write>(records: &[TrajectoryRecord], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(TRAJECTORY_HEADER.split(','))?;
    for r in records {
        wr.write_record([
            fmt_f64(r.time),
            r.task_trained.to_string(),
            r.task_eval.to_string(),
            fmt_f64(r.loss),
            fmt_f64(r.forgetting),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_records_csv<R: Read>(r: R) -> Result<Vec<TrajectoryRecord>> {
    let mut rd = csv::Reader::from_reader(r);
    let header: Vec<String> = rd.headers()?.iter().map(str::to_owned).collect();
    if header.join(",") != TRAJECTORY_HEADER {
        return Err(Error::Parse(format!(
            "unexpected trajectory header `{}`",
            header.join(",")
        )));
    }
    let parse_f = |s: &str| s.parse::<f64>().map_err(|e| Error::Parse(format!("{s}: {e}")));
    let parse_u = |s: &str| s.parse::<usize>().map_err(|e| Error::Parse(format!("{s}: {e}")));
    let mut out = Vec::new();
    for row in rd.records() {
        let row = row?;
        out.push(TrajectoryRecord {
            time: parse_f(&row[0])?,
            task_trained: parse_u(&row[1])?,
            task_eval: parse_u(&row[2])?,
            loss: parse_f(&row[3])?,
            forgetting: parse_f(&row[4])?,
        });
    }
    Ok(out)
}

/// Per-checkpoint per-task losses, the common currency of trajectory comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct LossTable {
    pub times: Vec<f64>,
    /// 1-based task trained at each checkpoint.
    pub phases: Vec<usize>,
    /// `losses[k][i]`: loss of 0-based task `i` at checkpoint `k`.
    pub losses: Vec<Vec<f64>>,
}

impl LossTable {
    pub fn num_tasks(&self) -> usize {
        self.losses.first().map_or(0, Vec::len)
    }

    pub fn from_records(records: &[TrajectoryRecord]) -> Result<Self> {
        let num_tasks = records.iter().map(|r| r.task_eval).max().unwrap_or(0);
        if num_tasks == 0 || !records.len().is_multiple_of(num_tasks) {
            return Err(Error::Parse("records do not form complete checkpoints".into()));
        }
        let mut times = Vec::new();
        let mut phases = Vec::new();
        let mut losses = Vec::new();
        for chunk in records.chunks(num_tasks) {
            let t = chunk[0].time;
            let mut row = vec![0.0; num_tasks];
            for r in chunk {
                if r.time != t || r.task_eval == 0 {
                    return Err(Error::Parse("checkpoint rows are not contiguous".into()));
                }
                row[r.task_eval - 1] = r.loss;
            }
            times.push(t);
            phases.push(chunk[0].task_trained);
            losses.push(row);
        }
        Ok(Self {
            times,
            phases,
            losses,
        })
    }

    /// Pointwise mean of several tables on an identical grid.
    pub fn mean(tables: &[LossTable]) -> Result<Self> {
        let first = tables
            .first()
            .ok_or_else(|| Error::Alignment("no tables to average".into()))?;
        for t in tables {
            if t.times != first.times || t.phases != first.phases || t.num_tasks() != first.num_tasks() {
                return Err(Error::Alignment("tables have different grids".into()));
            }
        }
        let n = tables.len() as f64;
        let losses = (0..first.times.len())
            .map(|k| {
                (0..first.num_tasks())
                    .map(|i| tables.iter().map(|t| t.losses[k][i]).sum::<f64>() / n)
                    .collect()
            })
            .collect();
        Ok(Self {
            times: first.times.clone(),
            phases: first.phases.clone(),
            losses,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Trajectory {
        let layout = TaskLayout::new(vec![1, 1]);
        let mk = |step: usize, r: [f64; 2]| {
            let residuals = DVector::from_row_slice(&r);
            Checkpoint {
                step,
                time: step as f64 * 0.5,
                task_trained: if step < 2 { 1 } else { 2 },
                losses: task_losses(&residuals, &layout),
                residuals,
                kernels: None,
            }
        };
        Trajectory {
            layout: layout.clone(),
            steps_per_task: 2,
            dt: 0.5,
            checkpoints: vec![mk(0, [1.0, 1.0]), mk(2, [0.2, 0.9]), mk(4, [0.5, 0.1])],
        }
    }

    #[test]
    fn forgetting_is_zero_before_task_end() {
        let tr = toy();
        let cp0 = &tr.checkpoints[0];
        assert_eq!(tr.forgetting(cp0, 1), 0.0);
        let last = &tr.checkpoints[2];
        let expect = 0.5 * 0.25 - 0.5 * 0.04;
        assert!((tr.forgetting(last, 1) - expect).abs() < 1e-15);
    }

    #[test]
    fn loss_matrix_reads_task_boundaries() {
        let m = toy().loss_matrix().unwrap();
        assert!((m.values[(0, 0)] - 0.02).abs() < 1e-15);
        assert!((m.values[(1, 0)] - 0.125).abs() < 1e-15);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let tr = toy();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let back = read_records_csv(buf.as_slice()).unwrap();
        assert_eq!(back, tr.records());
        let table = LossTable::from_records(&back).unwrap();
        assert_eq!(table, tr.loss_table());
    }

    #[test]
    fn cadence_always_records_boundaries() {
        let c = Cadence {
            every: 7,
            steps_per_task: 10,
            num_tasks: 2,
        };
        assert!(c.records(0) && c.records(7) && c.records(10) && c.records(20));
        assert!(!c.records(9));
        assert_eq!(c.task_at(9), 1);
        assert_eq!(c.task_at(10), 2);
        assert_eq!(c.task_at(20), 2);
    }
}
