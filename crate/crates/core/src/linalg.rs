//! Dense eigenproblems, backed by nalgebra.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Eigenpairs of a real symmetric matrix, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct Eigensystem {
    pub values: Vec<f64>,
    /// Eigenvectors as columns, in the order of `values`.
    pub vectors: DMatrix<f64>,
}

impl Eigensystem {
    /// `max |H V - V Λ|`.
    pub fn residual(&self, h: &DMatrix<f64>) -> f64 {
        let hv = h * &self.vectors;
        let mut worst = 0.0f64;
        for (j, &l) in self.values.iter().enumerate() {
            for i in 0..hv.nrows() {
                worst = worst.max((hv[(i, j)] - self.vectors[(i, j)] * l).abs());
            }
        }
        worst
    }
}

pub fn symmetric_eigen(h: DMatrix<f64>) -> Result<Eigensystem> {
    if h.nrows() != h.ncols() {
        return Err(Error::DimensionMismatch { expected: h.nrows(), found: h.ncols() });
    }
    let n = h.nrows();
    if n == 0 {
        return Ok(Eigensystem { values: Vec::new(), vectors: DMatrix::zeros(0, 0) });
    }
    let eig = SymmetricEigen::try_new(h, f64::EPSILON, 0)
        .ok_or_else(|| Error::Convergence("symmetric eigensolver did not converge".into()))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok(Eigensystem { values, vectors })
}

/// Eigenvalues of a complex Hermitian matrix, ascending.
pub fn hermitian_eigenvalues(m: DMatrix<Complex64>) -> Result<Vec<f64>> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch { expected: m.nrows(), found: m.ncols() });
    }
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    if m.iter().all(|z| z.im == 0.0) {
        let re = m.map(|z| z.re);
        return Ok(symmetric_eigen(re)?.values);
    }
    let eig = SymmetricEigen::try_new(m, f64::EPSILON, 0)
        .ok_or_else(|| Error::Convergence("Hermitian eigensolver did not converge".into()))?;
    let mut values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    values.sort_by(f64::total_cmp);
    Ok(values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two() {
        let h = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let e = symmetric_eigen(h.clone()).unwrap();
        assert!((e.values[0] + 1.0).abs() < 1e-15 && (e.values[1] - 1.0).abs() < 1e-15);
        assert!(e.residual(&h) < 1e-14);
    }

    #[test]
    fn complex_hermitian() {
        let i = Complex64::new(0.0, 1.0);
        let one = Complex64::new(1.0, 0.0);
        let m = DMatrix::from_row_slice(2, 2, &[one, i, -i, one]);
        let v = hermitian_eigenvalues(m).unwrap();
        assert!(v[0].abs() < 1e-14 && (v[1] - 2.0).abs() < 1e-14);
    }
}
