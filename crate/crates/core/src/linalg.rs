//! Small dense helpers shared by the forward and inverse problems.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::{Error, Result};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

pub fn symmetrize(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

/// Frobenius norm of the antisymmetric part relative to `max(1, ‖m‖_F)`.
pub fn asymmetry(m: &Mat) -> f64 {
    let skew = (m - m.transpose()).norm() * 0.5;
    skew / m.norm().max(1.0)
}

pub fn all_finite(m: &Mat) -> bool {
    m.iter().all(|v| v.is_finite())
}

/// Ascending eigenvalues of the symmetric part of `m`.
pub fn sym_eigenvalues(m: &Mat) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let mut ev: Vec<f64> = SymmetricEigen::new(symmetrize(m)).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

pub fn min_eigenvalue(m: &Mat) -> f64 {
    sym_eigenvalues(m).first().copied().unwrap_or(0.0)
}

/// Nearest PSD matrix in Frobenius norm (eigenvalue clamping).
pub fn project_psd(m: &Mat) -> Mat {
    let eig = SymmetricEigen::new(symmetrize(m));
    let clamped = eig.eigenvalues.map(|v| v.max(0.0));
    let v = &eig.eigenvectors;
    symmetrize(&(v * Mat::from_diagonal(&clamped) * v.transpose()))
}

/// Numerical rank from singular values with tolerance relative to the largest.
pub fn rank(m: &Mat, rel_tol: f64) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let top = sv.iter().fold(0.0_f64, |a, &b| a.max(b));
    if top == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * top).count()
}

/// 2-norm condition number; infinite for singular input.
pub fn condition_number(m: &Mat) -> f64 {
    let sv = m.clone().svd(false, false).singular_values;
    let hi = sv.iter().fold(0.0_f64, |a, &b| a.max(b));
    let lo = sv.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    if lo == 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Left inverse `(BᵀB)⁻¹Bᵀ` of a full-column-rank matrix.
pub fn left_pinv(b: &Mat) -> Result<Mat> {
    let btb = b.transpose() * b;
    let chol = btb
        .cholesky()
        .ok_or_else(|| Error::Structural("matrix is not of full column rank".into()))?;
    Ok(chol.solve(&b.transpose()))
}

/// Square root factor `L` with `L Lᵀ = S` for symmetric PSD `S`, via eigendecomposition
/// so that singular covariances are accepted.
pub fn psd_sqrt(s: &Mat, tol: f64) -> Result<Mat> {
    let eig = SymmetricEigen::new(symmetrize(s));
    let scale = eig.eigenvalues.amax().max(1.0);
    if eig.eigenvalues.iter().any(|&v| v < -tol * scale) {
        return Err(Error::Numeric("matrix is not positive semidefinite".into()));
    }
    let root = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    Ok(&eig.eigenvectors * Mat::from_diagonal(&root))
}
