use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::operator::ModeOperator;
use crate::error::{Error, Result};

/// Eigenpairs of a Hermitian operator, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct Eigensystem {
    pub values: Vec<f64>,
    /// Column `j` is the eigenvector of `values[j]`.
    pub vectors: DMatrix<Complex64>,
}

impl Eigensystem {
    pub fn vector(&self, j: usize) -> DVector<Complex64> {
        self.vectors.column(j).into_owned()
    }
}

pub fn hermitian_eig(op: &ModeOperator) -> Result<Eigensystem> {
    if !op.is_hermitian() {
        return Err(Error::NotHermitian(op.matrix().hermitian_deviation()));
    }
    Ok(hermitian_eig_dense(&op.matrix().to_dense()))
}

pub(crate) fn hermitian_eig_dense(m: &DMatrix<Complex64>) -> Eigensystem {
    let eig = m.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(m.nrows(), order.len(), |r, c| {
        eig.eigenvectors[(r, order[c])]
    });
    Eigensystem { values, vectors }
}

pub(crate) fn hermitian_eigenvalues(m: &DMatrix<Complex64>) -> Vec<f64> {
    let mut v: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v
}
