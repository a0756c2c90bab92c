use std::io::{BufRead, Write};

use super::cone::Cone;
use crate::{Error, Result};

/// Compressed sparse column matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds from `(row, col, value)` triplets; duplicates are summed and
    /// explicit zeros dropped.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut t: Vec<(usize, usize, f64)> = triplets.to_vec();
        if let Some(&(i, j, _)) = t.iter().find(|&&(i, j, _)| i >= nrows || j >= ncols) {
            return Err(Error::Dimension(format!("entry ({i}, {j}) outside {nrows}x{ncols}")));
        }
        t.sort_by(|a, b| (a.1, a.0).cmp(&(b.1, b.0)));
        let mut col_ptr = vec![0; ncols + 1];
        let mut row_idx = Vec::with_capacity(t.len());
        let mut values = Vec::with_capacity(t.len());
        let mut k = 0;
        while k < t.len() {
            let (i, j, mut v) = t[k];
            k += 1;
            while k < t.len() && t[k].0 == i && t[k].1 == j {
                v += t[k].2;
                k += 1;
            }
            if v != 0.0 {
                row_idx.push(i);
                values.push(v);
                col_ptr[j + 1] += 1;
            }
        }
        for j in 0..ncols {
            col_ptr[j + 1] += col_ptr[j];
        }
        Ok(Self { nrows, ncols, col_ptr, row_idx, values })
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Entries of column `j` as `(row, value)`.
    pub fn column(&self, j: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.col_ptr[j]..self.col_ptr[j + 1];
        self.row_idx[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.ncols).flat_map(move |j| self.column(j).map(move |(i, v)| (i, j, v)))
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..self.ncols {
            let xj = x[j];
            if xj == 0.0 {
                continue;
            }
            for k in self.col_ptr[j]..self.col_ptr[j + 1] {
                y[self.row_idx[k]] += self.values[k] * xj;
            }
        }
    }

    pub fn tmul_vec(&self, y: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.ncols];
        self.tmul_vec_into(y, &mut x);
        x
    }

    pub fn tmul_vec_into(&self, y: &[f64], x: &mut [f64]) {
        for (j, xj) in x.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.col_ptr[j]..self.col_ptr[j + 1] {
                acc += self.values[k] * y[self.row_idx[k]];
            }
            *xj = acc;
        }
    }

    /// `diag(row) · A · diag(col)` in place.
    pub(crate) fn scale(&mut self, row: &[f64], col: &[f64]) {
        for j in 0..self.ncols {
            for k in self.col_ptr[j]..self.col_ptr[j + 1] {
                self.values[k] *= row[self.row_idx[k]] * col[j];
            }
        }
    }

    /// Infinity norms of rows and columns.
    pub(crate) fn row_col_inf_norms(&self) -> (Vec<f64>, Vec<f64>) {
        let mut rows = vec![0.0_f64; self.nrows];
        let mut cols = vec![0.0_f64; self.ncols];
        for j in 0..self.ncols {
            for k in self.col_ptr[j]..self.col_ptr[j + 1] {
                let a = self.values[k].abs();
                rows[self.row_idx[k]] = rows[self.row_idx[k]].max(a);
                cols[j] = cols[j].max(a);
            }
        }
        (rows, cols)
    }

    /// Compressed rows: for each row, its `(col, value)` entries.
    pub(crate) fn rows(&self) -> Vec<Vec<(usize, f64)>> {
        let mut out = vec![Vec::new(); self.nrows];
        for (i, j, v) in self.triplets() {
            out[i].push((j, v));
        }
        out
    }
}

/// `minimize cᵀx  s.t.  A x + s = b,  s ∈ K`; see the module docs.
#[derive(Debug, Clone, PartialEq)]
pub struct ConicProgram {
    c: Vec<f64>,
    a: SparseMatrix,
    b: Vec<f64>,
    cones: Vec<Cone>,
}

impl ConicProgram {
    pub fn new(c: Vec<f64>, a: SparseMatrix, b: Vec<f64>, cones: Vec<Cone>) -> Result<Self> {
        if a.ncols() != c.len() {
            return Err(Error::Dimension(format!("A has {} columns, c has length {}", a.ncols(), c.len())));
        }
        if a.nrows() != b.len() {
            return Err(Error::Dimension(format!("A has {} rows, b has length {}", a.nrows(), b.len())));
        }
        let total: usize = cones.iter().map(Cone::dim).sum();
        if total != b.len() {
            return Err(Error::Dimension(format!("cones cover {total} rows, program has {}", b.len())));
        }
        if c.iter().chain(&b).chain(&a.values).any(|v| !v.is_finite()) {
            return Err(Error::Numeric("program data contains non-finite values".into()));
        }
        Ok(Self { c, a, b, cones })
    }

    pub fn c(&self) -> &[f64] {
        &self.c
    }

    pub fn a(&self) -> &SparseMatrix {
        &self.a
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn cones(&self) -> &[Cone] {
        &self.cones
    }

    pub fn num_vars(&self) -> usize {
        self.c.len()
    }

    pub fn num_rows(&self) -> usize {
        self.b.len()
    }

    /// Plain-text dump for debugging or replay in another solver:
    ///
    /// ```text
    /// conic-program 1
    /// size <rows> <cols>
    /// cone zero|nonneg|soc|psd <k>     (psd: side length)
    /// c <j> <value>
    /// b <i> <value>
    /// a <i> <j> <value>
    /// ```
    pub fn write_dump<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "conic-program 1")?;
        writeln!(w, "size {} {}", self.num_rows(), self.num_vars())?;
        for cone in &self.cones {
            let (k, v) = match *cone {
                Cone::Zero(k) => ("zero", k),
                Cone::Nonneg(k) => ("nonneg", k),
                Cone::Soc(k) => ("soc", k),
                Cone::Psd(s) => ("psd", s),
            };
            writeln!(w, "cone {k} {v}")?;
        }
        for (j, &v) in self.c.iter().enumerate().filter(|(_, v)| **v != 0.0) {
            writeln!(w, "c {j} {v:.16e}")?;
        }
        for (i, &v) in self.b.iter().enumerate().filter(|(_, v)| **v != 0.0) {
            writeln!(w, "b {i} {v:.16e}")?;
        }
        for (i, j, v) in self.a.triplets() {
            writeln!(w, "a {i} {j} {v:.16e}")?;
        }
        Ok(())
    }

    pub fn read_dump<R: BufRead>(r: R) -> Result<Self> {
        let mut size = None;
        let mut cones = Vec::new();
        let mut c_entries = Vec::new();
        let mut b_entries = Vec::new();
        let mut trip = Vec::new();
        for (k, line) in r.lines().enumerate() {
            let line_no = k + 1;
            let line = line?;
            let bad = |msg: &str| Error::Parse { line: line_no, msg: msg.to_string() };
            let f: Vec<&str> = line.split_whitespace().collect();
            let num = |i: usize| -> Result<usize> { f.get(i).and_then(|s| s.parse().ok()).ok_or_else(|| bad("bad index")) };
            let val = |i: usize| -> Result<f64> { f.get(i).and_then(|s| s.parse().ok()).ok_or_else(|| bad("bad value")) };
            match f.first().copied() {
                None => continue,
                Some("conic-program") => {
                    if f.get(1) != Some(&"1") {
                        return Err(Error::Schema("unsupported dump version".into()));
                    }
                }
                Some("size") => size = Some((num(1)?, num(2)?)),
                Some("cone") => {
                    let k = num(2)?;
                    cones.push(match f.get(1).copied() {
                        Some("zero") => Cone::Zero(k),
                        Some("nonneg") => Cone::Nonneg(k),
                        Some("soc") => Cone::Soc(k),
                        Some("psd") => Cone::Psd(k),
                        _ => return Err(bad("unknown cone")),
                    });
                }
                Some("c") => c_entries.push((num(1)?, val(2)?)),
                Some("b") => b_entries.push((num(1)?, val(2)?)),
                Some("a") => trip.push((num(1)?, num(2)?, val(3)?)),
                Some(_) => return Err(bad("unknown record")),
            }
        }
        let (rows, cols) = size.ok_or_else(|| Error::Parse { line: 0, msg: "missing size record".into() })?;
        let mut c = vec![0.0; cols];
        for (j, v) in c_entries {
            *c.get_mut(j).ok_or_else(|| Error::Dimension(format!("c index {j}")))? = v;
        }
        let mut b = vec![0.0; rows];
        for (i, v) in b_entries {
            *b.get_mut(i).ok_or_else(|| Error::Dimension(format!("b index {i}")))? = v;
        }
        Self::new(c, SparseMatrix::from_triplets(rows, cols, &trip)?, b, cones)
    }
}
