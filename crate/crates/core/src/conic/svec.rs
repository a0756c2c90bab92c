//! Norm-preserving vectorisation of symmetric matrices.
//!
//! Entries are taken column by column from the lower triangle,
//! `(0,0), (1,0), …, (s-1,0), (1,1), (2,1), …`, with off-diagonal entries
//! multiplied by √2 so that `⟨svec(X), svec(Y)⟩ = tr(XY)`.

use std::f64::consts::SQRT_2;

use crate::linalg::{self, Mat};
use crate::{Error, Result};

pub fn svec_len(side: usize) -> usize {
    side * (side + 1) / 2
}

/// Side length for a vectorised length, if it is triangular.
pub fn svec_side(len: usize) -> Option<usize> {
    let s = (((8 * len + 1) as f64).sqrt() as usize).saturating_sub(1) / 2;
    (s..=s + 1).find(|&k| svec_len(k) == len)
}

pub fn svec(m: &Mat, tol: f64) -> Result<Vec<f64>> {
    if !m.is_square() {
        return Err(Error::Dimension("svec needs a square matrix".into()));
    }
    if linalg::asymmetry(m) > tol {
        return Err(Error::InvalidInput("svec needs a symmetric matrix".into()));
    }
    Ok(svec_unchecked(m))
}

/// Vectorise the lower triangle without checking symmetry.
pub fn svec_unchecked(m: &Mat) -> Vec<f64> {
    let s = m.nrows();
    let mut out = Vec::with_capacity(svec_len(s));
    for j in 0..s {
        out.push(m[(j, j)]);
        for i in j + 1..s {
            out.push(m[(i, j)] * SQRT_2);
        }
    }
    out
}

pub fn smat(v: &[f64]) -> Result<Mat> {
    let s = svec_side(v.len()).ok_or_else(|| Error::Dimension(format!("{} is not a triangular number", v.len())))?;
    let mut m = Mat::zeros(s, s);
    let mut k = 0;
    for j in 0..s {
        m[(j, j)] = v[k];
        k += 1;
        for i in j + 1..s {
            let e = v[k] / SQRT_2;
            m[(i, j)] = e;
            m[(j, i)] = e;
            k += 1;
        }
    }
    Ok(m)
}
