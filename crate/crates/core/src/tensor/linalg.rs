//! Dense Hermitian helpers on raw matrices.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::{Error, Result, C64};

const EIGEN_MAX_SWEEPS: usize = 100_000;

/// Eigendecomposition of a Hermitian matrix; eigenvalues sorted ascending.
///
/// The matrix is symmetrized first. The QR iteration is deterministic for a fixed input.
pub fn eigh(m: &DMatrix<C64>) -> Result<(DVector<f64>, DMatrix<C64>)> {
    let n = m.nrows();
    if n == 0 {
        return Ok((DVector::zeros(0), DMatrix::zeros(0, 0)));
    }
    let h = hermitian_part(m);
    let eig = SymmetricEigen::try_new(h, f64::EPSILON, EIGEN_MAX_SWEEPS).ok_or(Error::EigenFailure)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (col, &i) in order.iter().enumerate() {
        vectors.set_column(col, &eig.eigenvectors.column(i));
    }
    Ok((values, vectors))
}

pub fn hermitian_part(m: &DMatrix<C64>) -> DMatrix<C64> {
    (m + m.adjoint()).scale(0.5)
}

/// Largest entrywise deviation from Hermiticity.
pub fn hermiticity_defect(m: &DMatrix<C64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

pub fn max_abs(m: &DMatrix<C64>) -> f64 {
    m.iter().fold(0.0f64, |acc, z| acc.max(z.norm()))
}

pub fn min_eigenvalue(m: &DMatrix<C64>) -> Result<f64> {
    let (values, _) = eigh(m)?;
    Ok(values.iter().copied().fold(f64::INFINITY, f64::min))
}

/// Reassemble `V diag(f(λ)) V†`.
pub fn spectral_map(values: &DVector<f64>, vectors: &DMatrix<C64>, f: impl Fn(f64) -> f64) -> DMatrix<C64> {
    let mut scaled = vectors.clone();
    for (j, &v) in values.iter().enumerate() {
        let s = f(v);
        scaled.column_mut(j).scale_mut(s);
    }
    &scaled * vectors.adjoint()
}

/// Frobenius-nearest positive semidefinite matrix: negative eigenvalues are clipped.
pub fn project_psd_matrix(m: &DMatrix<C64>) -> Result<DMatrix<C64>> {
    let (values, vectors) = eigh(m)?;
    if values.iter().all(|&v| v >= 0.0) {
        return Ok(hermitian_part(m));
    }
    Ok(hermitian_part(&spectral_map(&values, &vectors, |v| v.max(0.0))))
}

pub fn frobenius_norm(m: &DMatrix<C64>) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// `Tr(a b)` without forming the product.
pub fn trace_of_product(a: &DMatrix<C64>, b: &DMatrix<C64>) -> C64 {
    let n = a.nrows();
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            acc += a[(i, j)] * b[(j, i)];
        }
    }
    acc
}

pub fn kron(a: &DMatrix<C64>, b: &DMatrix<C64>) -> DMatrix<C64> {
    a.kronecker(b)
}

pub fn is_unitary(u: &DMatrix<C64>, tol: f64) -> Result<()> {
    if u.nrows() != u.ncols() {
        return Err(Error::NotUnitary(f64::INFINITY));
    }
    let defect = max_abs(&(u.adjoint() * u - DMatrix::identity(u.nrows(), u.ncols())));
    if defect > tol {
        return Err(Error::NotUnitary(defect));
    }
    Ok(())
}
