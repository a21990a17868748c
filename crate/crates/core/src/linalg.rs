//! Small dense helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Solves the generalized Hermitian problem `K v = sigma M v` for SPD real `M`.
///
/// Returns eigenvalues in ascending order with `M`-orthonormal eigenvectors,
/// each phase-normalized so that its largest-modulus entry is real positive.
pub fn generalized_hermitian_eig(
    k: &DMatrix<Complex64>,
    m: &DMatrix<f64>,
) -> Result<(Vec<f64>, Vec<DVector<Complex64>>)> {
    let n = m.nrows();
    let chol = m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::LinearAlgebra("mass matrix is not positive definite".into()))?;
    let l = chol.l().map(|x| Complex64::new(x, 0.0));
    let lt = l.adjoint();
    // C = L^-1 K L^-H
    let y = l
        .solve_lower_triangular(k)
        .ok_or_else(|| Error::LinearAlgebra("singular Cholesky factor".into()))?;
    let c = l
        .solve_lower_triangular(&y.adjoint())
        .ok_or_else(|| Error::LinearAlgebra("singular Cholesky factor".into()))?
        .adjoint();
    let c = (&c + c.adjoint()).map(|z| z * 0.5);
    let eig = SymmetricEigen::new(c);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let mut values = Vec::with_capacity(n);
    let mut vectors = Vec::with_capacity(n);
    for idx in order {
        values.push(eig.eigenvalues[idx]);
        let w = eig.eigenvectors.column(idx).into_owned();
        let v = lt
            .solve_upper_triangular(&w)
            .ok_or_else(|| Error::LinearAlgebra("singular Cholesky factor".into()))?;
        vectors.push(fix_phase(v));
    }
    Ok((values, vectors))
}

/// Rotates `v` so that its largest-modulus entry (lowest index on ties) is real positive.
pub fn fix_phase(v: DVector<Complex64>) -> DVector<Complex64> {
    let max = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if max == 0.0 {
        return v;
    }
    let pivot = v
        .iter()
        .position(|z| z.norm() >= max * (1.0 - 1e-9))
        .unwrap_or(0);
    let phase = v[pivot] / v[pivot].norm();
    v.map(|z| z / phase)
}

/// `a^H M b` for real symmetric `M`.
pub fn m_inner(a: &DVector<Complex64>, m: &DMatrix<f64>, b: &DVector<Complex64>) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            acc += a[i].conj() * m[(i, j)] * b[j];
        }
    }
    acc
}

/// `a^H K b` for a complex matrix `K`.
pub fn herm_form(a: &DVector<Complex64>, k: &DMatrix<Complex64>, b: &DVector<Complex64>) -> Complex64 {
    (a.adjoint() * k * b)[(0, 0)]
}

/// Eigen-decomposition of a real symmetric matrix, ascending eigenvalues.
pub fn symmetric_eig(a: DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let eig = SymmetricEigen::new(a);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[x].total_cmp(&eig.eigenvalues[y]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Ascending eigenvalues of a real symmetric matrix.
pub fn symmetric_eigenvalues(a: DMatrix<f64>) -> Vec<f64> {
    let mut v: Vec<f64> = a.symmetric_eigenvalues().iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v
}

/// Symmetrizes in place: `a <- (a + a^T) / 2`.
pub fn symmetrize(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let s = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = s;
            a[(j, i)] = s;
        }
    }
}
