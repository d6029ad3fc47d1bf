//! Small dense linear-algebra helpers shared by the simulators and metrics.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Input Gram of the columns of `x` (one column per datum), normalized by the
/// input dimension: `K[i, j] = x_i . x_j / D`.
pub fn scaled_gram(x: &DMatrix<f64>) -> DMatrix<f64> {
    let d = x.nrows() as f64;
    let mut g = x.tr_mul(x);
    g /= d;
    symmetrize(&mut g);
    g
}

/// Replace `m` by `(m + m^T) / 2`.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Largest absolute difference between `m` and its transpose.
pub fn symmetry_defect(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Eigenvalues of the symmetric part of `m`, ascending.
pub fn symmetric_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut s = m.clone();
    symmetrize(&mut s);
    let mut ev: Vec<f64> = s.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    symmetric_eigenvalues(m).first().copied().unwrap_or(0.0)
}

/// Lower Cholesky factor of `m + jitter * I`.
pub fn cholesky_lower(m: &DMatrix<f64>, jitter: f64) -> Result<DMatrix<f64>> {
    if m.nrows() != m.ncols() {
        return Err(Error::Factorization(format!(
            "matrix is {}x{}, not square",
            m.nrows(),
            m.ncols()
        )));
    }
    let mut a = m.clone();
    symmetrize(&mut a);
    for i in 0..a.nrows() {
        a[(i, i)] += jitter;
    }
    a.cholesky()
        .map(|c| c.unpack())
        .ok_or_else(|| Error::Factorization("matrix is not positive definite after jitter".into()))
}

/// Double centering `H m H` with `H = I - 11^T / n`.
pub fn double_center(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let nf = n as f64;
    let row_means: Vec<f64> = (0..n).map(|i| m.row(i).sum() / nf).collect();
    let col_means: Vec<f64> = (0..n).map(|j| m.column(j).sum() / nf).collect();
    let grand = row_means.iter().sum::<f64>() / nf;
    DMatrix::from_fn(n, n, |i, j| m[(i, j)] - row_means[i] - col_means[j] + grand)
}

/// Frobenius cosine of the double-centered matrices.
pub fn centered_cosine(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    if a.shape() != b.shape() || a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            got: b.nrows(),
        });
    }
    let ac = double_center(a);
    let bc = double_center(b);
    let na = ac.norm();
    let nb = bc.norm();
    if na <= f64::MIN_POSITIVE || nb <= f64::MIN_POSITIVE {
        return Err(Error::UndefinedAlignment);
    }
    Ok((ac.dot(&bc) / (na * nb)).clamp(-1.0, 1.0))
}

/// Frobenius norm of `a - b`.
pub fn frobenius_distance(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_of_singular_matrix_succeeds_with_jitter() {
        let ones = DMatrix::from_element(3, 3, 1.0);
        assert!(cholesky_lower(&ones, 0.0).is_err());
        let l = cholesky_lower(&ones, 1e-10).unwrap();
        let back = &l * l.transpose();
        assert!((back - ones).amax() < 1e-9);
    }

    #[test]
    fn double_center_removes_means() {
        let m = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 1.0]);
        let c = double_center(&m);
        for i in 0..3 {
            assert!(c.row(i).sum().abs() < 1e-14);
            assert!(c.column(i).sum().abs() < 1e-14);
        }
    }

    #[test]
    fn centered_cosine_of_constant_matrix_is_undefined() {
        let ones = DMatrix::from_element(4, 4, 1.0);
        assert!(matches!(
            centered_cosine(&ones, &ones),
            Err(Error::UndefinedAlignment)
        ));
    }
}
