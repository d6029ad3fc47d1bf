//! Continual-learning evaluation metrics over accuracy / loss matrices, and
//! CKA-based feature-evolution measures.
//!
//! Row `j`, column `i` of an [`EvalMatrix`] holds the value on task `i` after
//! training task `j` (both 0-based here, 1-based in the CSV).

use std::io::{Read, Write};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg;
use crate::trajectory::fmt_f64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalKind {
    Accuracy,
    Loss,
}

impl EvalKind {
    pub fn name(self) -> &'static str {
        match self {
            EvalKind::Accuracy => "accuracy",
            EvalKind::Loss => "loss",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalMatrix {
    pub values: DMatrix<f64>,
    pub kind: EvalKind,
}

impl EvalMatrix {
    pub fn new(values: DMatrix<f64>, kind: EvalKind) -> Result<Self> {
        let t = values.nrows();
        if t == 0 || values.ncols() != t {
            return Err(Error::DimensionMismatch {
                expected: t.max(1),
                got: values.ncols(),
            });
        }
        let ok = match kind {
            EvalKind::Accuracy => values.iter().all(|v| (0.0..=1.0).contains(v)),
            EvalKind::Loss => values.iter().all(|v| *v >= 0.0 && v.is_finite()),
        };
        if !ok {
            return Err(Error::InvalidParameter {
                name: "values",
                reason: format!("entries out of range for a {} matrix", kind.name()),
            });
        }
        Ok(Self { values, kind })
    }

    pub fn accuracy(values: DMatrix<f64>) -> Result<Self> {
        Self::new(values, EvalKind::Accuracy)
    }

    pub fn loss(values: DMatrix<f64>) -> Result<Self> {
        Self::new(values, EvalKind::Loss)
    }

    pub fn num_tasks(&self) -> usize {
        self.values.nrows()
    }

    fn expect(&self, kind: EvalKind) -> Result<()> {
        if self.kind != kind {
            return Err(Error::KindMismatch {
                expected: kind.name(),
                got: self.kind.name(),
            });
        }
        Ok(())
    }

    fn diagonal_mean(&self) -> f64 {
        self.values.diagonal().mean()
    }

    fn final_row_mean(&self) -> f64 {
        self.values.row(self.num_tasks() - 1).mean()
    }

    /// Largest value on task `i` from its own training up to task `T-1`.
    fn running_max(&self, i: usize) -> f64 {
        let t = self.num_tasks();
        (i..t - 1)
            .map(|j| self.values[(j, i)])
            .fold(f64::NEG_INFINITY, f64::max)
    }

    fn running_min(&self, i: usize) -> f64 {
        let t = self.num_tasks();
        (i..t - 1)
            .map(|j| self.values[(j, i)])
            .fold(f64::INFINITY, f64::min)
    }

    fn drop_mean(&self) -> Result<f64> {
        let t = self.num_tasks();
        if t < 2 {
            return Err(Error::SingleTask);
        }
        let total: f64 = (0..t - 1)
            .map(|i| self.running_max(i) - self.values[(t - 1, i)])
            .sum();
        Ok(total / (t - 1) as f64)
    }

    fn relative_drop_mean(&self) -> Result<RelativeDrop> {
        let t = self.num_tasks();
        if t < 2 {
            return Err(Error::SingleTask);
        }
        let mut excluded = Vec::new();
        let mut total = 0.0;
        let mut used = 0usize;
        for i in 0..t - 1 {
            let peak = self.running_max(i);
            if peak == 0.0 {
                excluded.push(i + 1);
                continue;
            }
            total += (peak - self.values[(t - 1, i)]) / peak;
            used += 1;
        }
        if used == 0 {
            return Err(Error::AllTasksExcluded);
        }
        Ok(RelativeDrop {
            value: total / used as f64,
            excluded_tasks: excluded,
        })
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["kind", "T", "row", "col", "value"])?;
        let t = self.num_tasks();
        for j in 0..t {
            for i in 0..t {
                wr.write_record([
                    self.kind.name().to_string(),
                    t.to_string(),
                    (j + 1).to_string(),
                    (i + 1).to_string(),
                    fmt_f64(self.values[(j, i)]),
                ])?;
            }
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let mut kind = None;
        let mut values: Option<DMatrix<f64>> = None;
        let bad = |m: String| Error::Parse(m);
        for row in rd.records() {
            let row = row?;
            let k = match &row[0] {
                "accuracy" => EvalKind::Accuracy,
                "loss" => EvalKind::Loss,
                other => return Err(bad(format!("unknown kind `{other}`"))),
            };
            if *kind.get_or_insert(k) != k {
                return Err(bad("mixed kinds in one matrix".into()));
            }
            let t: usize = row[1].parse().map_err(|_| bad(format!("bad T `{}`", &row[1])))?;
            let m = values.get_or_insert_with(|| DMatrix::from_element(t, t, f64::NAN));
            if m.nrows() != t {
                return Err(bad("inconsistent T".into()));
            }
            let j: usize = row[2].parse().map_err(|_| bad("bad row".into()))?;
            let i: usize = row[3].parse().map_err(|_| bad("bad col".into()))?;
            if j == 0 || i == 0 || j > t || i > t {
                return Err(bad(format!("cell ({j}, {i}) outside a {t}x{t} matrix")));
            }
            m[(j - 1, i - 1)] = row[4].parse().map_err(|_| bad("bad value".into()))?;
        }
        let values = values.ok_or_else(|| bad("empty matrix file".into()))?;
        if values.iter().any(|v| v.is_nan()) {
            return Err(bad("matrix has missing cells".into()));
        }
        Self::new(values, kind.expect("set with values"))
    }
}

/// Mean relative drop together with tasks skipped for a zero reference.
#[derive(Debug, Clone, PartialEq)]
pub struct RelativeDrop {
    pub value: f64,
    /// 1-based tasks whose running maximum was zero.
    pub excluded_tasks: Vec<usize>,
}

/// LA: mean accuracy on each task right after training it.
pub fn learning_accuracy(m: &EvalMatrix) -> Result<f64> {
    m.expect(EvalKind::Accuracy)?;
    Ok(m.diagonal_mean())
}

pub fn learning_error(m: &EvalMatrix) -> Result<f64> {
    Ok(1.0 - learning_accuracy(m)?)
}

/// LL: mean loss on each task right after training it.
pub fn learning_loss(m: &EvalMatrix) -> Result<f64> {
    m.expect(EvalKind::Loss)?;
    Ok(m.diagonal_mean())
}

/// AA: mean accuracy over all tasks after the last one.
pub fn average_accuracy(m: &EvalMatrix) -> Result<f64> {
    m.expect(EvalKind::Accuracy)?;
    Ok(m.final_row_mean())
}

pub fn average_error(m: &EvalMatrix) -> Result<f64> {
    Ok(1.0 - average_accuracy(m)?)
}

/// AL: mean loss over all tasks after the last one.
pub fn average_loss(m: &EvalMatrix) -> Result<f64> {
    m.expect(EvalKind::Loss)?;
    Ok(m.final_row_mean())
}

/// CF: mean over tasks `1..T-1` of `max_{t in i..T-1} a[t, i] - a[T, i]`.
pub fn catastrophic_forgetting(m: &EvalMatrix) -> Result<f64> {
    m.expect(EvalKind::Accuracy)?;
    m.drop_mean()
}

/// CFr: [`catastrophic_forgetting`] with each drop divided by its running max.
pub fn catastrophic_forgetting_rate(m: &EvalMatrix) -> Result<RelativeDrop> {
    m.expect(EvalKind::Accuracy)?;
    m.relative_drop_mean()
}

/// Loss CF with the same formula as the accuracy version: running maximum of
/// earlier losses minus the final loss. Negative when losses grow.
pub fn cf_loss(m: &EvalMatrix) -> Result<f64> {
    m.expect(EvalKind::Loss)?;
    m.drop_mean()
}

/// Loss CFr with the same formula as the accuracy version.
pub fn cfr_loss(m: &EvalMatrix) -> Result<RelativeDrop> {
    m.expect(EvalKind::Loss)?;
    m.relative_drop_mean()
}

/// Mean loss increase of tasks `1..T-1`: `L[T, i] - min_{t in i..T-1} L[t, i]`.
/// Positive when training later tasks raises earlier losses.
pub fn cf_loss_increase(m: &EvalMatrix) -> Result<f64> {
    m.expect(EvalKind::Loss)?;
    let t = m.num_tasks();
    if t < 2 {
        return Err(Error::SingleTask);
    }
    let total: f64 = (0..t - 1)
        .map(|i| m.values[(t - 1, i)] - m.running_min(i))
        .sum();
    Ok(total / (t - 1) as f64)
}

const RELATIVE_FLOOR: f64 = 1e-12;

/// Relative loss increase: mean over tasks `1..T-1` of
/// `(L[T, i] - min_{t in i..T-1} L[t, i]) / max(L[T, i], eps)`.
pub fn cfr_loss_relative_increase(m: &EvalMatrix) -> Result<f64> {
    m.expect(EvalKind::Loss)?;
    let t = m.num_tasks();
    if t < 2 {
        return Err(Error::SingleTask);
    }
    let total: f64 = (0..t - 1)
        .map(|i| {
            let last = m.values[(t - 1, i)];
            (last - m.running_min(i)) / last.max(RELATIVE_FLOOR)
        })
        .sum();
    Ok(total / (t - 1) as f64)
}

/// Named metric values for the report CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub entries: Vec<(String, f64)>,
    pub excluded_tasks: Vec<usize>,
}

impl MetricReport {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["metric", "value"])?;
        for (name, v) in &self.entries {
            wr.write_record([name.clone(), fmt_f64(*v)])?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Every metric applicable to `m`. Forgetting metrics are omitted for T = 1.
pub fn report(m: &EvalMatrix) -> Result<MetricReport> {
    let mut entries = Vec::new();
    let mut excluded_tasks = Vec::new();
    let multi = m.num_tasks() >= 2;
    match m.kind {
        EvalKind::Accuracy => {
            entries.push(("LA".into(), learning_accuracy(m)?));
            entries.push(("LE".into(), learning_error(m)?));
            entries.push(("AA".into(), average_accuracy(m)?));
            entries.push(("AE".into(), average_error(m)?));
            if multi {
                entries.push(("CF".into(), catastrophic_forgetting(m)?));
                match catastrophic_forgetting_rate(m) {
                    Ok(r) => {
                        entries.push(("CFr".into(), r.value));
                        excluded_tasks = r.excluded_tasks;
                    }
                    Err(Error::AllTasksExcluded) => entries.push(("CFr".into(), f64::NAN)),
                    Err(e) => return Err(e),
                }
            }
        }
        EvalKind::Loss => {
            entries.push(("LL".into(), learning_loss(m)?));
            entries.push(("AL".into(), average_loss(m)?));
            if multi {
                entries.push(("CF_loss".into(), cf_loss(m)?));
                match cfr_loss(m) {
                    Ok(r) => {
                        entries.push(("CFr_loss".into(), r.value));
                        excluded_tasks = r.excluded_tasks;
                    }
                    Err(Error::AllTasksExcluded) => entries.push(("CFr_loss".into(), f64::NAN)),
                    Err(e) => return Err(e),
                }
                entries.push(("CF_loss_increase".into(), cf_loss_increase(m)?));
                entries.push((
                    "CFr_loss_relative_increase".into(),
                    cfr_loss_relative_increase(m)?,
                ));
            }
        }
    }
    Ok(MetricReport {
        entries,
        excluded_tasks,
    })
}

/// Centered kernel alignment of two Gram matrices.
pub fn cka(gram_a: &DMatrix<f64>, gram_b: &DMatrix<f64>) -> Result<f64> {
    linalg::centered_cosine(gram_a, gram_b)
}

/// Activation Grams of one probe set at successive checkpoints.
#[derive(Debug, Clone, Default)]
pub struct ActivationKernelSeries {
    pub grams: Vec<DMatrix<f64>>,
}

/// Mean `1 - CKA` between the Gram at `reference_index` and every later one.
pub fn feature_evolution(series: &ActivationKernelSeries, reference_index: usize) -> Result<f64> {
    let reference = series
        .grams
        .get(reference_index)
        .ok_or(Error::EmptyWindow)?;
    let later = &series.grams[reference_index + 1..];
    if later.is_empty() {
        return Err(Error::EmptyWindow);
    }
    let mut total = 0.0;
    for g in later {
        total += 1.0 - cka(reference, g)?;
    }
    Ok(total / later.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn acc(rows: &[&[f64]]) -> EvalMatrix {
        let t = rows.len();
        EvalMatrix::accuracy(DMatrix::from_fn(t, t, |j, i| rows[j][i])).unwrap()
    }

    #[test]
    fn learning_accuracy_is_diagonal_mean() {
        assert_eq!(learning_accuracy(&acc(&[&[1.0, 0.0, 0.0], &[1.0, 1.0, 0.0], &[1.0, 1.0, 1.0]])).unwrap(), 1.0);
        let m = acc(&[&[0.8, 0.1], &[0.5, 0.6]]);
        assert!((learning_accuracy(&m).unwrap() - 0.7).abs() < 1e-15);
        assert!((learning_error(&m).unwrap() - 0.3).abs() < 1e-15);
        assert_eq!(learning_accuracy(&acc(&[&[0.5]])).unwrap(), 0.5);
    }

    #[test]
    fn average_accuracy_is_final_row_mean() {
        let m = acc(&[&[1.0, 0.0], &[0.9, 0.7]]);
        assert!((average_accuracy(&m).unwrap() - 0.8).abs() < 1e-15);
        let c = acc(&[&[0.3, 0.3], &[0.3, 0.3]]);
        assert!((average_accuracy(&c).unwrap() - 0.3).abs() < 1e-15);
        assert_eq!(average_accuracy(&acc(&[&[0.4]])).unwrap(), 0.4);
    }

    #[test]
    fn forgetting_toy_models() {
        let first = acc(&[&[1.0, 0.0], &[0.8, 1.0]]);
        let second = acc(&[&[0.4, 0.0], &[0.3, 1.0]]);
        assert!((catastrophic_forgetting(&first).unwrap() - 0.2).abs() < 1e-12);
        assert!((catastrophic_forgetting(&second).unwrap() - 0.1).abs() < 1e-12);
        assert!((catastrophic_forgetting_rate(&first).unwrap().value - 0.2).abs() < 1e-12);
        assert!((catastrophic_forgetting_rate(&second).unwrap().value - 0.25).abs() < 1e-12);
        let none = acc(&[&[0.6, 0.0], &[0.6, 0.9]]);
        assert_eq!(catastrophic_forgetting(&none).unwrap(), 0.0);
    }

    #[test]
    fn single_task_forgetting_is_an_error() {
        assert!(matches!(
            catastrophic_forgetting(&acc(&[&[0.4]])),
            Err(Error::SingleTask)
        ));
    }

    #[test]
    fn zero_max_tasks_are_excluded_and_reported() {
        let m = acc(&[&[0.0, 0.0, 0.0], &[0.0, 0.5, 0.0], &[0.0, 0.25, 1.0]]);
        let r = catastrophic_forgetting_rate(&m).unwrap();
        assert_eq!(r.excluded_tasks, vec![1]);
        assert!((r.value - 0.5).abs() < 1e-15);
        let all_zero = acc(&[&[0.0, 0.0], &[0.0, 1.0]]);
        assert!(matches!(
            catastrophic_forgetting_rate(&all_zero),
            Err(Error::AllTasksExcluded)
        ));
    }

    #[test]
    fn kind_mismatch_is_rejected() {
        let l = EvalMatrix::loss(DMatrix::from_element(2, 2, 0.1)).unwrap();
        assert!(matches!(learning_accuracy(&l), Err(Error::KindMismatch { .. })));
        let a = acc(&[&[0.5]]);
        assert!(matches!(average_loss(&a), Err(Error::KindMismatch { .. })));
    }

    #[test]
    fn relative_increase_for_two_tasks() {
        let m = EvalMatrix::loss(DMatrix::from_row_slice(2, 2, &[0.1, 0.5, 0.4, 0.0])).unwrap();
        assert!((cfr_loss_relative_increase(&m).unwrap() - 0.75).abs() < 1e-15);
        assert!((cf_loss(&m).unwrap() + 0.3).abs() < 1e-15);
    }

    #[test]
    fn csv_round_trip() {
        let m = acc(&[&[0.9, 0.1], &[0.7, 0.8]]);
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        assert_eq!(EvalMatrix::read_csv(buf.as_slice()).unwrap(), m);
    }

    #[test]
    fn feature_evolution_of_constant_series_is_zero() {
        let g = DMatrix::from_row_slice(3, 3, &[2.0, 0.5, 0.1, 0.5, 1.0, 0.3, 0.1, 0.3, 1.5]);
        let s = ActivationKernelSeries {
            grams: vec![g.clone(), g.clone(), g],
        };
        assert!(feature_evolution(&s, 0).unwrap().abs() < 1e-15);
        assert!(matches!(feature_evolution(&s, 2), Err(Error::EmptyWindow)));
    }
}
