use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use super::DenseMatrix;

/// Eigendecomposition of a Hermitian matrix, eigenvalues ascending.
///
/// Only the lower triangle is referenced.
pub fn hermitian_eigen(m: &DenseMatrix<Complex64>) -> (Vec<f64>, DenseMatrix<Complex64>) {
    let n = m.rows();
    let a = DMatrix::from_fn(n, n, |i, j| m[(i, j)]);
    let eig = SymmetricEigen::new(a);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DenseMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    (values, vectors)
}

/// Eigendecomposition of a real symmetric matrix given row-major, eigenvalues
/// ascending, eigenvectors returned column-major.
pub fn symmetric_eigen(n: usize, row_major: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let a = DMatrix::from_row_slice(n, n, row_major);
    let eig = SymmetricEigen::new(a);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = Vec::with_capacity(n * n);
    for &j in &order {
        vectors.extend(eig.eigenvectors.column(j).iter().copied());
    }
    (values, vectors)
}
