//! Dense symmetric helpers on top of faer.

use crate::error::{Error, Result};
use faer::{Mat, Side};

/// Eigenpairs of a real symmetric matrix, values ascending.
/// `vectors[k]` is the k-th unit eigenvector.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
}

pub fn sym_eigen(n: usize, entry: impl Fn(usize, usize) -> f64) -> Result<SymEigen> {
    let m = Mat::<f64>::from_fn(n, n, |i, j| entry(i, j));
    let e = m
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::BadParams(format!("eigendecomposition failed: {e:?}")))?;
    let s = e.S().column_vector();
    let u = e.U();
    let values = (0..n).map(|k| s[k]).collect();
    let vectors = (0..n).map(|k| (0..n).map(|i| u[(i, k)]).collect()).collect();
    Ok(SymEigen { values, vectors })
}

/// Eigenvalues only.
pub fn sym_eigenvalues(n: usize, entry: impl Fn(usize, usize) -> f64) -> Result<Vec<f64>> {
    Mat::<f64>::from_fn(n, n, |i, j| entry(i, j))
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::BadParams(format!("eigendecomposition failed: {e:?}")))
}

/// Orthonormalize the columns `cols[k]` (all of length m) by Cholesky of the Gram
/// matrix: Q = Phi L^{-T}. Column k of Q mixes only columns 0..=k.
pub fn cholesky_orthonormalize(cols: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let n = cols.len();
    let m = cols.first().map(|c| c.len()).unwrap_or(0);
    let gram = Mat::<f64>::from_fn(n, n, |i, j| cols[i].iter().zip(&cols[j]).map(|(a, b)| a * b).sum());
    let llt = gram.llt(Side::Lower).map_err(|_| Error::NonInvertible("Gram matrix is not positive definite".into()))?;
    let l = llt.L();
    // rows of Q are solutions of L x = phi_row
    let mut rhs = Mat::<f64>::from_fn(n, m, |k, i| cols[k][i]);
    l.solve_lower_triangular_in_place(rhs.as_mut());
    Ok((0..n).map(|k| (0..m).map(|i| rhs[(k, i)]).collect()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigen_two_by_two() {
        let e = sym_eigen(2, |i, j| if i == j { 0.0 } else { 1.0 }).unwrap();
        assert!((e.values[0] + 1.0).abs() < 1e-14 && (e.values[1] - 1.0).abs() < 1e-14);
        let v = &e.vectors[1];
        assert!((v[0].abs() - 0.5f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn orthonormal_columns() {
        let cols: Vec<Vec<f64>> = (0..5).map(|k| (0..7).map(|i| (-((i as f64) - k as f64).abs()).exp()).collect()).collect();
        let q = cholesky_orthonormalize(&cols).unwrap();
        for a in 0..5 {
            for b in 0..5 {
                let d: f64 = q[a].iter().zip(&q[b]).map(|(x, y)| x * y).sum();
                assert!((d - if a == b { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
        }
        // first column is only rescaled
        let r = q[0][0] / cols[0][0];
        assert!(q[0].iter().zip(&cols[0]).all(|(x, y)| (x - r * y).abs() < 1e-14));
    }
}
