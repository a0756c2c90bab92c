//! Cone blocks and Euclidean projections onto them.

use nalgebra::SymmetricEigen;

use super::svec::{smat, svec_len, svec_unchecked};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cone {
    /// `{0}^k`
    Zero(usize),
    /// `R_+^k`
    Nonneg(usize),
    /// `{(t, u) ∈ R × R^{k-1} : ‖u‖ ≤ t}`
    Soc(usize),
    /// PSD matrices of the given side, stored as `svec` of length `s(s+1)/2`.
    Psd(usize),
}

impl Cone {
    pub fn dim(&self) -> usize {
        match *self {
            Cone::Zero(k) | Cone::Nonneg(k) | Cone::Soc(k) => k,
            Cone::Psd(s) => svec_len(s),
        }
    }

    /// Scaling of the slack must be uniform on blocks whose membership test
    /// couples entries.
    pub(crate) fn is_separable(&self) -> bool {
        matches!(self, Cone::Zero(_) | Cone::Nonneg(_))
    }
}

fn project_soc(v: &mut [f64]) {
    let t = v[0];
    let norm = v[1..].iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm <= t {
        return;
    }
    if norm <= -t {
        v.iter_mut().for_each(|x| *x = 0.0);
        return;
    }
    let a = 0.5 * (t + norm);
    v[0] = a;
    let f = a / norm;
    v[1..].iter_mut().for_each(|x| *x *= f);
}

fn project_psd(v: &mut [f64]) -> Result<()> {
    if v.len() == 1 {
        v[0] = v[0].max(0.0);
        return Ok(());
    }
    let m = smat(v)?;
    let eig = SymmetricEigen::try_new(m, f64::EPSILON, 1000)
        .ok_or_else(|| Error::Numeric("symmetric eigendecomposition did not converge".into()))?;
    if eig.eigenvalues.iter().all(|&l| l >= 0.0) {
        return Ok(());
    }
    let vecs = &eig.eigenvectors;
    let clamped = eig.eigenvalues.map(|l| l.max(0.0));
    let p = vecs * nalgebra::DMatrix::from_diagonal(&clamped) * vecs.transpose();
    let p = (&p + p.transpose()) * 0.5;
    v.copy_from_slice(&svec_unchecked(&p));
    Ok(())
}

/// Project `v` onto a single cone block in place.
pub fn project_block(cone: &Cone, v: &mut [f64]) -> Result<()> {
    if v.len() != cone.dim() {
        return Err(Error::Dimension(format!("block of length {} for cone {cone:?}", v.len())));
    }
    match cone {
        Cone::Zero(_) => v.iter_mut().for_each(|x| *x = 0.0),
        Cone::Nonneg(_) => v.iter_mut().for_each(|x| *x = x.max(0.0)),
        Cone::Soc(_) => {
            if !v.is_empty() {
                project_soc(v)
            }
        }
        Cone::Psd(_) => project_psd(v)?,
    }
    Ok(())
}

/// Project `v` onto the product cone in place.
pub fn project(cones: &[Cone], v: &mut [f64]) -> Result<()> {
    let total: usize = cones.iter().map(Cone::dim).sum();
    if total != v.len() {
        return Err(Error::Dimension(format!("vector of length {} for cones of total size {total}", v.len())));
    }
    let mut off = 0;
    for c in cones {
        let d = c.dim();
        project_block(c, &mut v[off..off + d])?;
        off += d;
    }
    Ok(())
}

/// Project onto the dual cone `K*` (zero blocks are free, the rest self-dual).
pub fn project_dual(cones: &[Cone], v: &mut [f64]) -> Result<()> {
    let total: usize = cones.iter().map(Cone::dim).sum();
    if total != v.len() {
        return Err(Error::Dimension(format!("vector of length {} for cones of total size {total}", v.len())));
    }
    let mut off = 0;
    for c in cones {
        let d = c.dim();
        if !matches!(c, Cone::Zero(_)) {
            project_block(c, &mut v[off..off + d])?;
        }
        off += d;
    }
    Ok(())
}
