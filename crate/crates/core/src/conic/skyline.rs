//! Envelope (skyline) Cholesky for sparse symmetric positive definite systems.
//!
//! Row `i` of the lower factor is stored densely from its first structural
//! nonzero `first[i]` up to the diagonal; fill stays inside that envelope.

use crate::{Error, Result};

#[derive(Debug, Clone)]
pub(crate) struct Skyline {
    first: Vec<usize>,
    start: Vec<usize>,
    data: Vec<f64>,
}

impl Skyline {
    /// Pattern of `Σ_g M_gᵀ M_g` where each group `g` couples the listed columns.
    pub(crate) fn from_groups<'a>(n: usize, groups: impl IntoIterator<Item = &'a [usize]>) -> Self {
        let mut first: Vec<usize> = (0..n).collect();
        for g in groups {
            if let Some(&lo) = g.iter().min() {
                for &j in g {
                    first[j] = first[j].min(lo);
                }
            }
        }
        let mut start = Vec::with_capacity(n + 1);
        let mut len = 0;
        for (i, &f) in first.iter().enumerate() {
            start.push(len);
            len += i - f + 1;
        }
        start.push(len);
        Self { first, start, data: vec![0.0; len] }
    }

    pub(crate) fn n(&self) -> usize {
        self.first.len()
    }

    pub(crate) fn clear(&mut self) {
        self.data.iter_mut().for_each(|v| *v = 0.0);
    }

    /// Adds `v` at `(i, j)` of the lower triangle; `(i, j)` must lie in the envelope.
    #[inline]
    pub(crate) fn add(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if j > i { (j, i) } else { (i, j) };
        debug_assert!(j >= self.first[i]);
        self.data[self.start[i] + j - self.first[i]] += v;
    }


    /// In-place factorisation `A = L Lᵀ`.
    pub(crate) fn factor(&mut self) -> Result<()> {
        let n = self.n();
        for i in 0..n {
            let fi = self.first[i];
            let si = self.start[i];
            for j in fi..i {
                let fj = self.first[j];
                let sj = self.start[j];
                let lo = fi.max(fj);
                let mut acc = self.data[si + j - fi];
                for k in lo..j {
                    acc -= self.data[si + k - fi] * self.data[sj + k - fj];
                }
                let ljj = self.data[sj + j - fj];
                self.data[si + j - fi] = acc / ljj;
            }
            let mut d = self.data[si + i - fi];
            for k in fi..i {
                let l = self.data[si + k - fi];
                d -= l * l;
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::Numeric(format!("matrix is not positive definite (pivot {i}: {d:.3e})")));
            }
            self.data[si + i - fi] = d.sqrt();
        }
        Ok(())
    }

    /// Solves `L Lᵀ x = b` in place, after [`factor`](Self::factor).
    pub(crate) fn solve(&self, b: &mut [f64]) {
        let n = self.n();
        for i in 0..n {
            let (fi, si) = (self.first[i], self.start[i]);
            let mut acc = b[i];
            for k in fi..i {
                acc -= self.data[si + k - fi] * b[k];
            }
            b[i] = acc / self.data[si + i - fi];
        }
        for i in (0..n).rev() {
            let (fi, si) = (self.first[i], self.start[i]);
            b[i] /= self.data[si + i - fi];
            let xi = b[i];
            for k in fi..i {
                b[k] -= self.data[si + k - fi] * xi;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Mat;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn matches_dense_cholesky(seed in 0u64..500) {
            use rand::Rng;
            let mut rng = crate::seed::rng(seed);
            let n = rng.random_range(1..12);
            let mut groups: Vec<Vec<usize>> = (0..rng.random_range(1..8))
                .map(|_| (0..rng.random_range(1..4)).map(|_| rng.random_range(0..n)).collect())
                .collect();
            for g in &mut groups { g.sort(); g.dedup(); }
            let mut sky = Skyline::from_groups(n, groups.iter().map(|g| g.as_slice()));
            let mut dense = Mat::identity(n, n);
            for i in 0..n { sky.add(i, i, 1.0); }
            for g in &groups {
                let w: Vec<f64> = g.iter().map(|_| rng.random_range(-1.0..1.0)).collect();
                for (a, &i) in g.iter().enumerate() {
                    for (b, &j) in g.iter().enumerate() {
                        if j <= i {
                            sky.add(i, j, w[a] * w[b]);
                        }
                        dense[(i, j)] += w[a] * w[b];
                    }
                }
            }
            let rhs: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let want = dense.cholesky().unwrap().solve(&crate::linalg::Vector::from_vec(rhs.clone()));
            sky.factor().unwrap();
            let mut got = rhs;
            sky.solve(&mut got);
            for i in 0..n {
                prop_assert!((got[i] - want[i]).abs() < 1e-10 * (1.0 + want[i].abs()));
            }
        }
    }

    #[test]
    fn rejects_indefinite_input() {
        let mut s = Skyline::from_groups(2, [&[0usize, 1][..]]);
        s.add(0, 0, 1.0);
        s.add(1, 0, 2.0);
        s.add(1, 1, 1.0);
        assert!(s.factor().is_err());
    }
}
