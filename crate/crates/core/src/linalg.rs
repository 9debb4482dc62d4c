//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Result, SemError};

/// Smallest eigenvalue of a symmetric matrix. Empty matrices report +inf.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    let eig = SymmetricEigen::new(m.clone());
    eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

pub fn is_positive_definite(m: &DMatrix<f64>, tol: f64) -> bool {
    m.iter().all(|v| v.is_finite()) && min_eigenvalue(m) > tol
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Applies `f` to the eigenvalues of a symmetric matrix.
fn spectral_map(m: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(f));
    let mut out = &eig.eigenvectors * d * eig.eigenvectors.transpose();
    symmetrize(&mut out);
    out
}

/// Symmetric square root of a positive (semi-)definite matrix.
pub fn sym_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if min_eigenvalue(m) < -1e-12 {
        return Err(SemError::NotPositiveDefinite("sym_sqrt".into()));
    }
    Ok(spectral_map(m, |v| v.max(0.0).sqrt()))
}

/// Symmetric inverse square root of a positive definite matrix.
pub fn sym_inv_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if min_eigenvalue(m) <= 1e-14 {
        return Err(SemError::Singular("sym_inv_sqrt".into()));
    }
    Ok(spectral_map(m, |v| 1.0 / v.sqrt()))
}

/// Cholesky-based log-determinant and inverse; `None` if not positive definite.
pub fn logdet_inverse(m: &DMatrix<f64>) -> Option<(f64, DMatrix<f64>)> {
    if !m.iter().all(|v| v.is_finite()) {
        return None;
    }
    let chol = m.clone().cholesky()?;
    let l = chol.l_dirty();
    let mut logdet = 0.0;
    for i in 0..m.nrows() {
        let d = l[(i, i)];
        if d <= 0.0 {
            return None;
        }
        logdet += 2.0 * d.ln();
    }
    let mut inv = chol.inverse();
    symmetrize(&mut inv);
    Some((logdet, inv))
}

/// Column-centered copy of a data matrix.
pub fn center_columns(data: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = data.clone();
    let n = data.nrows() as f64;
    for mut col in out.column_iter_mut() {
        let mean = col.sum() / n;
        col.add_scalar_mut(-mean);
    }
    out
}

/// Sample covariance with the n-1 divisor.
pub fn sample_covariance(data: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = data.nrows();
    if n < 2 {
        return Err(SemError::Dimension(format!("need at least 2 rows, got {n}")));
    }
    let c = center_columns(data);
    let mut s = c.transpose() * &c / (n as f64 - 1.0);
    symmetrize(&mut s);
    Ok(s)
}

/// Covariance to correlation.
pub fn to_correlation(s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let p = s.nrows();
    let sd: Vec<f64> = (0..p).map(|i| s[(i, i)].sqrt()).collect();
    if sd.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(SemError::NotPositiveDefinite("zero or negative variance".into()));
    }
    let mut r = DMatrix::from_fn(p, p, |i, j| s[(i, j)] / (sd[i] * sd[j]));
    for i in 0..p {
        r[(i, i)] = 1.0;
    }
    Ok(r)
}

/// Factor `F` with `F Fᵀ = m` for a symmetric PSD matrix, dropping null directions.
pub fn psd_factor(m: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let keep: Vec<usize> = (0..m.nrows()).filter(|&i| eig.eigenvalues[i] > tol).collect();
    let mut f = DMatrix::zeros(m.nrows(), keep.len());
    for (c, &i) in keep.iter().enumerate() {
        let s = eig.eigenvalues[i].sqrt();
        f.set_column(c, &(eig.eigenvectors.column(i) * s));
    }
    f
}

/// Submatrix with the given row and column index sets.
pub fn submatrix(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

pub fn subvector(v: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_fn(idx.len(), |i, _| v[idx[i]])
}

/// Ratio of largest to smallest singular value.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().singular_values();
    let max = sv.iter().copied().fold(0.0, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
