//! Synthetic multi-task datasets with controllable similarity and their
//! cross-task input Gram kernels.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg;
use crate::rng::rng_from_seed;

/// One task: `inputs` holds one datum per column (D x P).
#[derive(Debug, Clone, PartialEq)]
pub struct TaskDataset {
    pub inputs: DMatrix<f64>,
    pub targets: DVector<f64>,
    /// 1-based position in the sequence.
    pub task_index: usize,
}

impl TaskDataset {
    pub fn new(inputs: DMatrix<f64>, targets: DVector<f64>, task_index: usize) -> Result<Self> {
        if inputs.ncols() == 0 || inputs.nrows() == 0 {
            return Err(invalid("inputs", "need P >= 1 samples of dimension D >= 1"));
        }
        if targets.len() != inputs.ncols() {
            return Err(Error::DimensionMismatch {
                expected: inputs.ncols(),
                got: targets.len(),
            });
        }
        if inputs.iter().chain(targets.iter()).any(|v| !v.is_finite()) {
            return Err(invalid("inputs", "non-finite entry"));
        }
        if task_index == 0 {
            return Err(invalid("task_index", "task indices are 1-based"));
        }
        Ok(Self {
            inputs,
            targets,
            task_index,
        })
    }

    pub fn dim(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn len(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimilarityKind {
    Rotated,
    Permuted,
}

/// How a synthetic sequence was generated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilaritySpec {
    pub kind: SimilarityKind,
    pub rho: f64,
    pub seed: u64,
}

/// Offsets of each task's data inside the concatenated datum index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskLayout {
    sizes: Vec<usize>,
    offsets: Vec<usize>,
}

impl TaskLayout {
    pub fn new(sizes: Vec<usize>) -> Self {
        let mut offsets = Vec::with_capacity(sizes.len());
        let mut acc = 0;
        for &s in &sizes {
            offsets.push(acc);
            acc += s;
        }
        Self { sizes, offsets }
    }

    pub fn num_tasks(&self) -> usize {
        self.sizes.len()
    }

    pub fn total(&self) -> usize {
        self.sizes.iter().sum()
    }

    /// Datum range of 0-based task `task`.
    pub fn range(&self, task: usize) -> Range<usize> {
        self.offsets[task]..self.offsets[task] + self.sizes[task]
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    /// 0-based task owning datum `mu`.
    pub fn task_of(&self, mu: usize) -> usize {
        self.offsets
            .iter()
            .rposition(|&o| o <= mu)
            .expect("datum index within layout")
    }
}

/// Ordered tasks plus the full cross-task input Gram.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskSequence {
    pub tasks: Vec<TaskDataset>,
    pub spec: Option<SimilaritySpec>,
    pub gram: DMatrix<f64>,
}

impl TaskSequence {
    /// Builds a sequence and computes its Gram.
    pub fn from_tasks(tasks: Vec<TaskDataset>, spec: Option<SimilaritySpec>) -> Result<Self> {
        let Some(first) = tasks.first() else {
            return Err(invalid("tasks", "sequence is empty"));
        };
        let d = first.dim();
        if let Some(bad) = tasks.iter().find(|t| t.dim() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: bad.dim(),
            });
        }
        let mut seq = Self {
            tasks,
            spec,
            gram: DMatrix::zeros(0, 0),
        };
        seq.gram = input_gram(&seq);
        Ok(seq)
    }

    pub fn similarity(&self) -> Option<f64> {
        self.spec.map(|s| s.rho)
    }

    pub fn layout(&self) -> TaskLayout {
        TaskLayout::new(self.tasks.iter().map(TaskDataset::len).collect())
    }

    pub fn dim(&self) -> usize {
        self.tasks[0].dim()
    }

    pub fn num_tasks(&self) -> usize {
        self.tasks.len()
    }

    /// All inputs side by side (D x sum P).
    pub fn all_inputs(&self) -> DMatrix<f64> {
        let total: usize = self.tasks.iter().map(TaskDataset::len).sum();
        let mut x = DMatrix::zeros(self.dim(), total);
        let mut col = 0;
        for t in &self.tasks {
            x.columns_mut(col, t.len()).copy_from(&t.inputs);
            col += t.len();
        }
        x
    }

    pub fn all_targets(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.tasks.iter().map(TaskDataset::len).sum(),
            self.tasks.iter().flat_map(|t| t.targets.iter().copied()),
        )
    }
}

fn check_rho(rho: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&rho) || rho.is_nan() {
        return Err(Error::InvalidRho(rho));
    }
    Ok(())
}

/// Tasks whose inputs are rotations of each other: column `a` of task `i` is
/// `sqrt(D) (sqrt(rho) u0_a + sqrt(1 - rho) ui_a)` for mutually orthonormal
/// blocks `u0, u1, ..., uT`, so same-task Grams are `I` and cross-task Grams
/// are `rho I`.
pub fn make_rotated_tasks(
    num_tasks: usize,
    samples: usize,
    dim: usize,
    rho: f64,
    targets: &[f64],
    seed: u64,
) -> Result<TaskSequence> {
    if num_tasks == 0 {
        return Err(invalid("tasks", "need T >= 1"));
    }
    if samples == 0 {
        return Err(invalid("samples", "need P >= 1"));
    }
    check_rho(rho)?;
    if targets.len() != samples {
        return Err(Error::DimensionMismatch {
            expected: samples,
            got: targets.len(),
        });
    }
    let required = (num_tasks + 1) * samples;
    if dim < required {
        return Err(Error::DimensionTooSmall { required, got: dim });
    }

    let mut rng = rng_from_seed(seed);
    let raw = DMatrix::from_fn(dim, required, |_, _| rng.sample::<f64, _>(StandardNormal));
    let basis = raw.qr().q();

    let scale = (dim as f64).sqrt();
    let shared_w = rho.sqrt();
    let own_w = (1.0 - rho).sqrt();
    let shared = basis.columns(0, samples);
    let y = DVector::from_column_slice(targets);
    let mut tasks = Vec::with_capacity(num_tasks);
    for i in 1..=num_tasks {
        let own = basis.columns(i * samples, samples);
        let inputs = (shared * shared_w + own * own_w) * scale;
        tasks.push(TaskDataset::new(inputs, y.clone(), i)?);
    }
    TaskSequence::from_tasks(
        tasks,
        Some(SimilaritySpec {
            kind: SimilarityKind::Rotated,
            rho,
            seed,
        }),
    )
}

/// Indices permuted for similarity `rho`: the last `ceil((1 - rho) D)` coordinates.
pub fn permuted_block(dim: usize, rho: f64) -> Vec<usize> {
    let count = (((1.0 - rho) * dim as f64).ceil() as usize).min(dim);
    (dim - count..dim).collect()
}

/// Permuted-input tasks: task 1 is `base`; every later task applies a fresh
/// uniform permutation to the coordinates in the tail block of size
/// `ceil((1 - rho) D)`.
pub fn make_permuted_tasks(
    base: &TaskDataset,
    num_tasks: usize,
    rho: f64,
    seed: u64,
) -> Result<TaskSequence> {
    check_rho(rho)?;
    let block = permuted_block(base.dim(), rho);
    make_permuted_tasks_with_indices(base, num_tasks, &block, rho, seed)
}

/// As [`make_permuted_tasks`] with an explicit list of coordinates to permute.
pub fn make_permuted_tasks_with_indices(
    base: &TaskDataset,
    num_tasks: usize,
    indices: &[usize],
    rho: f64,
    seed: u64,
) -> Result<TaskSequence> {
    check_rho(rho)?;
    if num_tasks == 0 {
        return Err(invalid("tasks", "need T >= 1"));
    }
    if let Some(&bad) = indices.iter().find(|&&i| i >= base.dim()) {
        return Err(invalid("indices", format!("index {bad} out of range")));
    }
    let mut rng = rng_from_seed(seed);
    let mut tasks = Vec::with_capacity(num_tasks);
    let mut first = base.clone();
    first.task_index = 1;
    tasks.push(first);
    for i in 2..=num_tasks {
        let mut shuffled = indices.to_vec();
        shuffled.shuffle(&mut rng);
        let mut inputs = base.inputs.clone();
        for (&dst, &src) in indices.iter().zip(&shuffled) {
            inputs.row_mut(dst).copy_from(&base.inputs.row(src));
        }
        tasks.push(TaskDataset::new(inputs, base.targets.clone(), i)?);
    }
    TaskSequence::from_tasks(
        tasks,
        Some(SimilaritySpec {
            kind: SimilarityKind::Permuted,
            rho,
            seed,
        }),
    )
}

/// Shape of the synthetic image-like base task used for permuted benchmarks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrototypeSpec {
    pub classes: usize,
    pub samples_per_class: usize,
    pub dim: usize,
    /// Fraction of "ink" pixels in each class prototype.
    pub density: f64,
    /// Per-pixel jitter applied to every sample.
    pub noise: f64,
    /// Brightest pixel value; samples are scaled into `[0, intensity]`.
    pub intensity: f64,
}

impl Default for PrototypeSpec {
    fn default() -> Self {
        Self {
            classes: 10,
            samples_per_class: 3,
            dim: 100,
            density: 0.1,
            noise: 0.3,
            intensity: 0.3,
        }
    }
}

/// Image-like base task with pixel values in `[0, intensity]`: each class has
/// a sparse binary prototype and each sample is a jittered copy. Targets encode class
/// parity as +1 / -1.
pub fn make_prototype_base(spec: &PrototypeSpec, seed: u64) -> Result<TaskDataset> {
    if spec.classes == 0 || spec.samples_per_class == 0 || spec.dim == 0 {
        return Err(invalid("prototype", "classes, samples and dim must be >= 1"));
    }
    if !(spec.intensity > 0.0 && spec.noise >= 0.0) {
        return Err(invalid("prototype", "intensity must be positive and noise non-negative"));
    }
    if !(0.0..=1.0).contains(&spec.density) {
        return Err(invalid("density", "must lie in [0, 1]"));
    }
    let mut rng = rng_from_seed(seed);
    let ink = ((spec.density * spec.dim as f64).round() as usize).clamp(1, spec.dim);
    let mut pixels: Vec<usize> = (0..spec.dim).collect();
    let prototypes: Vec<Vec<usize>> = (0..spec.classes)
        .map(|_| {
            pixels.shuffle(&mut rng);
            pixels[..ink].to_vec()
        })
        .collect();

    let p = spec.classes * spec.samples_per_class;
    let mut inputs = DMatrix::zeros(spec.dim, p);
    let mut targets = DVector::zeros(p);
    for c in 0..spec.classes {
        for k in 0..spec.samples_per_class {
            let col = c * spec.samples_per_class + k;
            for &px in &prototypes[c] {
                inputs[(px, col)] = 1.0;
            }
            for px in 0..spec.dim {
                let jitter: f64 = spec.noise * rng.sample::<f64, _>(StandardNormal);
                inputs[(px, col)] = spec.intensity * (inputs[(px, col)] + jitter).clamp(0.0, 1.0);
            }
            targets[col] = if c % 2 == 0 { 1.0 } else { -1.0 };
        }
    }
    TaskDataset::new(inputs, targets, 1)
}

/// Full cross-task input Gram `K[mu, nu] = x_mu . x_nu / D`.
pub fn input_gram(seq: &TaskSequence) -> DMatrix<f64> {
    linalg::scaled_gram(&seq.all_inputs())
}

#[derive(Debug, Clone, PartialEq)]
pub enum GramFailure {
    Asymmetric { defect: f64 },
    NotPsd { min_eigenvalue: f64 },
    SelfBlock { task: usize, deviation: f64 },
    CrossBlock { task_a: usize, task_b: usize, deviation: f64 },
}

#[derive(Debug, Clone)]
pub struct GramReport {
    pub symmetry_defect: f64,
    pub min_eigenvalue: f64,
    /// Ascending eigenvalues of the symmetric part.
    pub eigenvalues: Vec<f64>,
    /// Largest `|K_ij - rho I|` over cross-task blocks, for rotated sequences.
    pub max_cross_deviation: Option<f64>,
    pub failures: Vec<GramFailure>,
}

impl GramReport {
    pub fn is_valid(&self) -> bool {
        self.failures.is_empty()
    }

    /// Eigenvalues with magnitude at most `tol`.
    pub fn zero_eigenvalues(&self, tol: f64) -> usize {
        self.eigenvalues.iter().filter(|e| e.abs() <= tol).count()
    }
}

/// Checks the stored Gram for symmetry, positive semi-definiteness, agreement
/// of its diagonal blocks with each task's self-Gram, and (for rotated
/// sequences) the `rho I` cross-block structure. Never fails; problems are
/// listed in the report.
pub fn validate_gram(seq: &TaskSequence, tol: f64) -> GramReport {
    let gram = &seq.gram;
    let layout = seq.layout();
    let mut failures = Vec::new();

    let symmetry_defect = linalg::symmetry_defect(gram);
    if symmetry_defect > tol {
        failures.push(GramFailure::Asymmetric {
            defect: symmetry_defect,
        });
    }
    let eigenvalues = linalg::symmetric_eigenvalues(gram);
    let min_eigenvalue = eigenvalues.first().copied().unwrap_or(0.0);
    if min_eigenvalue < -tol.max(1e-10) {
        failures.push(GramFailure::NotPsd { min_eigenvalue });
    }

    for (i, task) in seq.tasks.iter().enumerate() {
        let own = linalg::scaled_gram(&task.inputs);
        let r = layout.range(i);
        let block = gram.view((r.start, r.start), (r.len(), r.len()));
        let deviation = (block - own).amax();
        if deviation > tol.max(1e-12) {
            failures.push(GramFailure::SelfBlock {
                task: i + 1,
                deviation,
            });
        }
    }

    let mut max_cross_deviation = None;
    if let Some(spec) = seq.spec.filter(|s| s.kind == SimilarityKind::Rotated) {
        let mut worst = 0.0_f64;
        for a in 0..layout.num_tasks() {
            for b in 0..layout.num_tasks() {
                if a == b {
                    continue;
                }
                let (ra, rb) = (layout.range(a), layout.range(b));
                let mut dev = 0.0_f64;
                for (ii, mu) in ra.clone().enumerate() {
                    for (jj, nu) in rb.clone().enumerate() {
                        let expect = if ii == jj { spec.rho } else { 0.0 };
                        dev = dev.max((gram[(mu, nu)] - expect).abs());
                    }
                }
                if dev > tol.max(1e-12) && a < b {
                    failures.push(GramFailure::CrossBlock {
                        task_a: a + 1,
                        task_b: b + 1,
                        deviation: dev,
                    });
                }
                worst = worst.max(dev);
            }
        }
        max_cross_deviation = Some(worst);
    }

    GramReport {
        symmetry_defect,
        min_eigenvalue,
        eigenvalues,
        max_cross_deviation,
        failures,
    }
}

/// Writes every datum as `task,sample,target,x0,...,x{D-1}`.
pub fn write_dataset_csv<W: std::io::Write>(seq: &TaskSequence, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["task".to_string(), "sample".into(), "target".into()];
    header.extend((0..seq.dim()).map(|i| format!("x{i}")));
    out.write_record(&header)?;
    for task in &seq.tasks {
        for s in 0..task.len() {
            let mut row = vec![
                task.task_index.to_string(),
                s.to_string(),
                fmt_f64(task.targets[s]),
            ];
            row.extend(task.inputs.column(s).iter().map(|&v| fmt_f64(v)));
            out.write_record(&row)?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Reads a dataset written by [`write_dataset_csv`]. Rows must be grouped by
/// task in increasing order.
pub fn read_dataset_csv<R: std::io::Read>(r: R) -> Result<TaskSequence> {
    let mut rd = csv::Reader::from_reader(r);
    let header = rd.headers()?.clone();
    if header.len() < 4 || &header[0] != "task" || &header[1] != "sample" || &header[2] != "target" {
        return Err(Error::Parse("dataset header must start with task,sample,target,x0".into()));
    }
    let dim = header.len() - 3;
    let mut groups: Vec<(usize, Vec<f64>, Vec<f64>)> = Vec::new();
    for row in rd.records() {
        let row = row?;
        let task: usize = row[0].parse().map_err(|e| Error::Parse(format!("task: {e}")))?;
        let target = parse_f64(&row[2])?;
        let x = (3..3 + dim).map(|i| parse_f64(&row[i])).collect::<Result<Vec<_>>>()?;
        match groups.last_mut() {
            Some(g) if g.0 == task => {
                g.1.push(target);
                g.2.extend(x);
            }
            Some(g) if g.0 > task => {
                return Err(Error::Parse("rows are not grouped by increasing task".into()))
            }
            _ => groups.push((task, vec![target], x)),
        }
    }
    let tasks = groups
        .into_iter()
        .map(|(task, y, x)| {
            let p = y.len();
            TaskDataset::new(DMatrix::from_column_slice(dim, p, &x), DVector::from_vec(y), task)
        })
        .collect::<Result<Vec<_>>>()?;
    TaskSequence::from_tasks(tasks, None)
}

fn parse_f64(s: &str) -> Result<f64> {
    s.trim().parse().map_err(|e| Error::Parse(format!("{s}: {e}")))
}

fn fmt_f64(v: f64) -> String {
    crate::trajectory::fmt_f64(v)
}

/// Plain numeric CSV of a matrix, one row per line, no header.
pub fn write_matrix_csv<W: std::io::Write>(m: &DMatrix<f64>, w: W) -> Result<()> {
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    for row in m.row_iter() {
        out.write_record(row.iter().map(|&v| fmt_f64(v)))?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_matrix_csv<R: std::io::Read>(r: R) -> Result<DMatrix<f64>> {
    let mut rd = csv::ReaderBuilder::new().has_headers(false).from_reader(r);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for row in rd.records() {
        rows.push(row?.iter().map(parse_f64).collect::<Result<_>>()?);
    }
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Parse("ragged matrix rows".into()));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rotated_two_tasks_have_rho_identity_cross_block() {
        let seq = make_rotated_tasks(2, 2, 6, 0.3, &[1.0, 1.0], 11).unwrap();
        let g = &seq.gram;
        for i in 0..2 {
            for j in 0..2 {
                let eye = if i == j { 1.0 } else { 0.0 };
                assert!((g[(i, j)] - eye).abs() < 1e-12);
                assert!((g[(i + 2, j + 2)] - eye).abs() < 1e-12);
                assert!((g[(i, j + 2)] - 0.3 * eye).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rho_one_gives_identical_tasks() {
        let seq = make_rotated_tasks(2, 1, 3, 1.0, &[1.0], 5).unwrap();
        assert_eq!(seq.tasks[0].inputs, seq.tasks[1].inputs);
        assert!((seq.gram[(0, 1)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rho_zero_gives_orthogonal_tasks() {
        let seq = make_rotated_tasks(3, 2, 8, 0.0, &[1.0, -1.0], 5).unwrap();
        let layout = seq.layout();
        for a in 0..3 {
            for b in 0..3 {
                if a != b {
                    let (ra, rb) = (layout.range(a), layout.range(b));
                    let block = seq.gram.view((ra.start, rb.start), (2, 2));
                    assert!(block.amax() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn rotated_rejects_small_dimension_and_bad_rho() {
        assert!(matches!(
            make_rotated_tasks(2, 2, 5, 0.5, &[1.0, 1.0], 0),
            Err(Error::DimensionTooSmall { required: 6, got: 5 })
        ));
        assert!(matches!(
            make_rotated_tasks(2, 2, 6, 1.5, &[1.0, 1.0], 0),
            Err(Error::InvalidRho(_))
        ));
        assert!(matches!(
            make_rotated_tasks(2, 2, 6, -0.1, &[1.0, 1.0], 0),
            Err(Error::InvalidRho(_))
        ));
    }

    fn small_base(dim: usize, p: usize, seed: u64) -> TaskDataset {
        let mut rng = rng_from_seed(seed);
        let x = DMatrix::from_fn(dim, p, |_, _| rng.random::<f64>());
        TaskDataset::new(x, DVector::from_element(p, 1.0), 1).unwrap()
    }

    #[test]
    fn permuted_rho_one_is_identity() {
        let base = small_base(784, 3, 1);
        let seq = make_permuted_tasks(&base, 5, 1.0, 9).unwrap();
        for t in &seq.tasks {
            assert_eq!(t.inputs, base.inputs);
        }
    }

    #[test]
    fn permuted_rho_zero_touches_every_coordinate_block() {
        assert_eq!(permuted_block(784, 0.0), (0..784).collect::<Vec<_>>());
        assert_eq!(permuted_block(10, 0.5), vec![5, 6, 7, 8, 9]);
        let base = small_base(784, 2, 2);
        let seq = make_permuted_tasks(&base, 2, 0.0, 3).unwrap();
        let moved = (0..784)
            .filter(|&r| seq.tasks[1].inputs.row(r) != base.inputs.row(r))
            .count();
        assert!(moved > 700, "only {moved} coordinates moved");
    }

    #[test]
    fn permutation_preserves_self_gram_diagonal() {
        let mut base = small_base(50, 30, 4);
        for mut c in base.inputs.column_iter_mut() {
            let n = c.norm();
            c /= n;
        }
        let seq = make_permuted_tasks(&base, 2, 0.0, 8).unwrap();
        for a in 0..30 {
            assert!((seq.gram[(a, a)] - seq.gram[(30 + a, 30 + a)]).abs() < 1e-15);
        }
    }

    #[test]
    fn validate_flags_asymmetry() {
        let mut seq = make_rotated_tasks(2, 2, 6, 0.3, &[1.0, 1.0], 1).unwrap();
        assert!(validate_gram(&seq, 1e-10).is_valid());
        seq.gram[(0, 1)] += 1e-3;
        let report = validate_gram(&seq, 1e-10);
        assert!(report
            .failures
            .iter()
            .any(|f| matches!(f, GramFailure::Asymmetric { .. })));
    }

    #[test]
    fn rho_one_gram_has_rank_p() {
        let seq = make_rotated_tasks(3, 2, 8, 1.0, &[1.0, 1.0], 1).unwrap();
        let report = validate_gram(&seq, 1e-10);
        assert!(report.is_valid(), "{:?}", report.failures);
        assert_eq!(report.zero_eigenvalues(1e-9), 4);
    }

    #[test]
    fn layout_maps_data_to_tasks() {
        let l = TaskLayout::new(vec![2, 3, 1]);
        assert_eq!(l.range(1), 2..5);
        assert_eq!(l.task_of(0), 0);
        assert_eq!(l.task_of(4), 1);
        assert_eq!(l.task_of(5), 2);
        assert_eq!(l.total(), 6);
    }

    #[test]
    fn dataset_and_matrix_csv_round_trip() {
        let seq = make_rotated_tasks(2, 2, 6, 0.3, &[1.0, -0.5], 7).unwrap();
        let mut buf = Vec::new();
        write_dataset_csv(&seq, &mut buf).unwrap();
        let back = read_dataset_csv(buf.as_slice()).unwrap();
        assert_eq!(back.tasks, seq.tasks);
        let mut buf = Vec::new();
        write_matrix_csv(&seq.gram, &mut buf).unwrap();
        assert_eq!(read_matrix_csv(buf.as_slice()).unwrap(), seq.gram);
    }
}
