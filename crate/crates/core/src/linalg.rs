//! Small dense linear-algebra helpers on top of nalgebra.
//!
//! Everything here operates on `DMatrix<f64>` at desk scale (tens to a few
//! hundred rows), so dense factorizations are always the right tool.

use nalgebra::{DMatrix, DVector};

use crate::error::{DasfError, Result};

/// Eigenpairs of a symmetric matrix, sorted by descending eigenvalue.
pub fn sym_eigen_sorted(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let sym = symmetrize(m);
    let eig = sym.symmetric_eigen();
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .expect("non-finite eigenvalue")
    });
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (col, &i) in order.iter().enumerate() {
        vectors.set_column(col, &eig.eigenvectors.column(i));
    }
    (values, vectors)
}

/// Force exact symmetry: (M + Mᵀ)/2.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    0.5 * (m + m.transpose())
}

/// Largest eigenvalue of a symmetric matrix.
pub fn sym_eigen_max(m: &DMatrix<f64>) -> f64 {
    let (values, _) = sym_eigen_sorted(m);
    values.first().copied().unwrap_or(0.0)
}

/// Generalized eigendecomposition of the symmetric pair (A, S) with S
/// positive definite, via Cholesky whitening S = LLᵀ. Returns eigenvalues in
/// descending order and eigenvectors normalized so that xᵀS x = 1 per column.
pub fn gevd(a: &DMatrix<f64>, s: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = a.nrows();
    if a.ncols() != n || s.nrows() != n || s.ncols() != n {
        return Err(DasfError::Shape(format!(
            "gevd expects square matrices of equal size, got {}x{} and {}x{}",
            a.nrows(),
            a.ncols(),
            s.nrows(),
            s.ncols()
        )));
    }
    let chol = s
        .clone()
        .cholesky()
        .ok_or_else(|| DasfError::Factorization("metric matrix is not positive definite".into()))?;
    // W = L⁻¹ A L⁻ᵀ, symmetric by construction.
    let l = chol.l();
    let mut w = a.clone();
    l.solve_lower_triangular_mut(&mut w);
    let mut wt = w.transpose();
    l.solve_lower_triangular_mut(&mut wt);
    let (values, u) = sym_eigen_sorted(&wt);
    // x = L⁻ᵀ u, so xᵀ S x = uᵀu = 1.
    let mut x = u;
    l.transpose().solve_upper_triangular_mut(&mut x);
    Ok((values, x))
}

/// Inverse square root of a symmetric positive definite matrix.
pub fn inv_sqrt_spd(m: &DMatrix<f64>, tol: f64) -> Result<DMatrix<f64>> {
    let (values, vectors) = sym_eigen_sorted(m);
    let max = values.first().copied().unwrap_or(0.0);
    if max <= 0.0 {
        return Err(DasfError::DegeneratePoint(
            "matrix has no positive spectrum".into(),
        ));
    }
    for &v in &values {
        if v <= tol * max {
            return Err(DasfError::DegeneratePoint(format!(
                "matrix is singular up to tolerance (eigenvalue {v:.3e})"
            )));
        }
    }
    let d = DMatrix::from_diagonal(&DVector::from_iterator(
        values.len(),
        values.iter().map(|v| 1.0 / v.sqrt()),
    ));
    Ok(&vectors * d * vectors.transpose())
}

/// Polar factor of a full-column-rank matrix: the orthonormal U from the SVD
/// M = UΣVᵀ mapped to UVᵀ. Closest orthonormal matrix in Frobenius norm.
pub fn polar_factor(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let svd = m.clone().svd(true, true);
    let u = svd.u.ok_or_else(|| DasfError::Factorization("svd: no u".into()))?;
    let vt = svd.v_t.ok_or_else(|| DasfError::Factorization("svd: no vt".into()))?;
    let smallest = svd.singular_values.iter().cloned().fold(f64::INFINITY, f64::min);
    if !smallest.is_finite() || smallest <= 0.0 {
        return Err(DasfError::DegeneratePoint(
            "polar factor of a rank-deficient matrix".into(),
        ));
    }
    Ok(u * vt)
}

/// Minimum-norm least-squares solution of `A x = b` via SVD with a relative
/// rank cutoff. Also returns the residual norm ‖Ax − b‖.
pub fn lstsq_min_norm(a: &DMatrix<f64>, b: &DVector<f64>, rank_tol: f64) -> (DVector<f64>, f64) {
    if a.ncols() == 0 {
        return (DVector::zeros(0), b.norm());
    }
    let svd = a.clone().svd(true, true);
    let x = svd
        .solve(b, rank_tol * svd.singular_values.max())
        .expect("svd solve");
    let residual = (a * &x - b).norm();
    (x, residual)
}

/// Frobenius inner product tr(AᵀB).
pub fn frob_inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}
