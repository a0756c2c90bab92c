//! Primal-dual interior-point method with Nesterov–Todd scaling.
//!
//! Zero-cone rows are kept as equalities `A_eq x = b_eq`; every other block
//! becomes `G x + s = h`, `s ∈ K`. Each iteration takes a Mehrotra
//! predictor-corrector step. The Newton system is reduced to
//! `Gᵀ(WᵀW)⁻¹G Δx + A_eqᵀ Δy = r`, `A_eq Δx = r'`, factored with an envelope
//! Cholesky and a dense Schur complement for the equalities.
//!
//! No homogeneous embedding is used, so infeasible or unbounded programs end
//! in [`SolveStatus::MaxIter`] rather than with a certificate.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::cone::Cone;
use super::program::ConicProgram;
use super::skyline::Skyline;
use super::svec::{smat, svec_len, svec_unchecked};
use super::{residuals, ConicBackend, ConicSolution, SolveStatus};
use crate::{Error, Result};

type Mat = DMatrix<f64>;

#[derive(Debug, Clone, PartialEq)]
pub struct IpmOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Fraction of the distance to the cone boundary taken per step.
    pub step_fraction: f64,
    pub refinement_steps: usize,
}

impl Default for IpmOptions {
    fn default() -> Self {
        Self { tol: 1e-9, max_iter: 200, step_fraction: 0.99, refinement_steps: 3 }
    }
}

#[derive(Debug, Clone, Default)]
pub struct InteriorPointSolver {
    pub options: IpmOptions,
}

impl InteriorPointSolver {
    pub fn new(options: IpmOptions) -> Self {
        Self { options }
    }
}

impl ConicBackend for InteriorPointSolver {
    fn solve(&self, program: &ConicProgram) -> Result<ConicSolution> {
        run(program, &self.options)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Kind {
    Nonneg,
    Soc,
    Psd(usize),
}

/// One non-zero cone block of `G x + s = h`.
struct Block {
    kind: Kind,
    /// first row in the original program
    row: usize,
    /// offset in the stacked `s`, `z` vectors
    off: usize,
    dim: usize,
    /// columns touched by the block, ascending
    cols: Vec<usize>,
    /// dense `dim × cols.len()` slice of `G`
    g: Mat,
}

impl Block {
    fn degree(&self) -> f64 {
        match self.kind {
            Kind::Nonneg => self.dim as f64,
            Kind::Soc => 1.0,
            Kind::Psd(s) => s as f64,
        }
    }

    fn identity(&self) -> Vec<f64> {
        match self.kind {
            Kind::Nonneg => vec![1.0; self.dim],
            Kind::Soc => {
                let mut e = vec![0.0; self.dim];
                e[0] = 1.0;
                e
            }
            Kind::Psd(s) => svec_unchecked(&Mat::identity(s, s)),
        }
    }

    /// Smallest "eigenvalue" with respect to the cone: `v + t e ∈ K` iff `t ≥ −min_eig`.
    fn min_eig(&self, v: &[f64]) -> Result<f64> {
        Ok(match self.kind {
            Kind::Nonneg => v.iter().copied().fold(f64::INFINITY, f64::min),
            Kind::Soc => v[0] - norm(&v[1..]),
            Kind::Psd(_) => sym_eig(&smat(v)?)?.0.iter().copied().fold(f64::INFINITY, f64::min),
        })
    }

    /// Jordan product `u ∘ v`.
    fn jordan(&self, u: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        Ok(match self.kind {
            Kind::Nonneg => u.iter().zip(v).map(|(a, b)| a * b).collect(),
            Kind::Soc => {
                let mut out = Vec::with_capacity(self.dim);
                out.push(dot(u, v));
                for i in 1..self.dim {
                    out.push(u[0] * v[i] + v[0] * u[i]);
                }
                out
            }
            Kind::Psd(_) => {
                let (a, b) = (smat(u)?, smat(v)?);
                let p = &a * &b;
                svec_unchecked(&((&p + p.transpose()) * 0.5))
            }
        })
    }
}

/// NT scaling of one block: `W z = W⁻ᵀ s = λ`.
struct Scaling {
    // only the inverse enters the iteration; W itself is checked in tests
    #[cfg_attr(not(test), allow(dead_code))]
    w: Mat,
    w_inv: Mat,
    lambda: Vec<f64>,
}

impl Scaling {
    /// `x` with `λ ∘ x = v`.
    fn lambda_div(&self, kind: Kind, v: &[f64]) -> Vec<f64> {
        let l = &self.lambda;
        match kind {
            Kind::Nonneg => v.iter().zip(l).map(|(a, b)| a / b).collect(),
            Kind::Soc => {
                let l1 = &l[1..];
                let det = l[0] * l[0] - dot(l1, l1);
                let x0 = (l[0] * v[0] - dot(l1, &v[1..])) / det;
                let mut out = Vec::with_capacity(v.len());
                out.push(x0);
                for i in 1..v.len() {
                    out.push((v[i] - x0 * l[i]) / l[0]);
                }
                out
            }
            Kind::Psd(s) => {
                let d = psd_diag(l, s);
                let mut out = vec![0.0; v.len()];
                let mut k = 0;
                for j in 0..s {
                    for i in j..s {
                        out[k] = 2.0 * v[k] / (d[i] + d[j]);
                        k += 1;
                    }
                }
                out
            }
        }
    }

    /// Largest `α` with `λ + α d` in the cone (infinite if unbounded).
    fn max_step(&self, kind: Kind, d: &[f64]) -> Result<f64> {
        let l = &self.lambda;
        Ok(match kind {
            Kind::Nonneg => l.iter().zip(d).filter(|(_, &di)| di < 0.0).map(|(li, di)| -li / di).fold(f64::INFINITY, f64::min),
            Kind::Soc => soc_step(l, d),
            Kind::Psd(s) => {
                let lam = psd_diag(l, s);
                let mut m = smat(d)?;
                for i in 0..s {
                    for j in 0..s {
                        m[(i, j)] /= (lam[i] * lam[j]).sqrt();
                    }
                }
                let lo = sym_eig(&m)?.0.iter().copied().fold(f64::INFINITY, f64::min);
                if lo < 0.0 {
                    -1.0 / lo
                } else {
                    f64::INFINITY
                }
            }
        })
    }
}

fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn psd_diag(v: &[f64], s: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(s);
    let mut k = 0;
    for j in 0..s {
        out.push(v[k]);
        k += s - j;
    }
    out
}

fn sym_eig(m: &Mat) -> Result<(Vec<f64>, Mat)> {
    let e = nalgebra::SymmetricEigen::try_new((m + m.transpose()) * 0.5, f64::EPSILON, 1000)
        .ok_or_else(|| Error::Numeric("symmetric eigendecomposition did not converge".into()))?;
    Ok((e.eigenvalues.iter().copied().collect(), e.eigenvectors))
}

/// Smallest positive root of `‖x₁ + α d₁‖² = (x₀ + α d₀)²` for `x` interior.
fn soc_step(x: &[f64], d: &[f64]) -> f64 {
    let a = d[0] * d[0] - dot(&d[1..], &d[1..]);
    let b = 2.0 * (x[0] * d[0] - dot(&x[1..], &d[1..]));
    let c = x[0] * x[0] - dot(&x[1..], &x[1..]);
    let scale = a.abs().max(b.abs()).max(c.abs());
    let mut best = f64::INFINITY;
    if a.abs() <= 1e-14 * scale {
        if b < 0.0 {
            best = -c / b;
        }
    } else {
        let disc = b * b - 4.0 * a * c;
        if disc >= 0.0 {
            let sq = disc.sqrt();
            let qv = -0.5 * (b + b.signum() * sq);
            for r in [qv / a, if qv != 0.0 { c / qv } else { f64::INFINITY }] {
                if r > 0.0 {
                    best = best.min(r);
                }
            }
        }
    }
    if d[0] < 0.0 {
        best = best.min(-x[0] / d[0]);
    }
    best
}

/// Dense matrix of a linear map on `svec` coordinates.
fn svec_operator(side: usize, f: impl Fn(&Mat) -> Mat) -> Mat {
    let dim = svec_len(side);
    let mut out = Mat::zeros(dim, dim);
    let mut e = vec![0.0; dim];
    for k in 0..dim {
        e[k] = 1.0;
        let m = smat(&e).expect("triangular length");
        out.set_column(k, &DVector::from_vec(svec_unchecked(&f(&m))));
        e[k] = 0.0;
    }
    out
}

fn nt_scaling(kind: Kind, s: &[f64], z: &[f64]) -> Result<Scaling> {
    let notpos = || Error::Numeric("iterate left the cone interior".into());
    match kind {
        Kind::Nonneg => {
            if s.iter().chain(z).any(|&v| !(v > 0.0)) {
                return Err(notpos());
            }
            let w: Vec<f64> = s.iter().zip(z).map(|(a, b)| (a / b).sqrt()).collect();
            let lambda = s.iter().zip(z).map(|(a, b)| (a * b).sqrt()).collect();
            Ok(Scaling {
                w: Mat::from_diagonal(&DVector::from_vec(w.clone())),
                w_inv: Mat::from_diagonal(&DVector::from_iterator(w.len(), w.iter().map(|v| 1.0 / v))),
                lambda,
            })
        }
        Kind::Soc => {
            let k = s.len();
            let jdot = |u: &[f64]| u[0] * u[0] - dot(&u[1..], &u[1..]);
            let (sn, zn) = (jdot(s), jdot(z));
            if !(sn > 0.0 && zn > 0.0 && s[0] > 0.0 && z[0] > 0.0) {
                return Err(notpos());
            }
            let (sq_s, sq_z) = (sn.sqrt(), zn.sqrt());
            let sb: Vec<f64> = s.iter().map(|v| v / sq_s).collect();
            let zb: Vec<f64> = z.iter().map(|v| v / sq_z).collect();
            let gamma = ((1.0 + dot(&sb, &zb)) / 2.0).sqrt();
            let mut wb: Vec<f64> = (0..k).map(|i| if i == 0 { sb[0] + zb[0] } else { sb[i] - zb[i] }).collect();
            wb.iter_mut().for_each(|v| *v /= 2.0 * gamma);
            // half-angle point, so that W² is the quadratic representation of w̄
            let half = (2.0 * (wb[0] + 1.0)).sqrt();
            wb[0] += 1.0;
            wb.iter_mut().for_each(|v| *v /= half);
            let beta = (sn / zn).powf(0.25);
            let mut jm = Mat::identity(k, k);
            for i in 1..k {
                jm[(i, i)] = -1.0;
            }
            let wv = DVector::from_vec(wb);
            let jw = &jm * &wv;
            let w = (&wv * wv.transpose() * 2.0 - &jm) * beta;
            let w_inv = (&jw * jw.transpose() * 2.0 - &jm) / beta;
            let lambda = (&w * DVector::from_column_slice(z)).iter().copied().collect();
            Ok(Scaling { w, w_inv, lambda })
        }
        Kind::Psd(side) => {
            let ls = smat(s)?.cholesky().ok_or_else(notpos)?.l();
            let lz = smat(z)?.cholesky().ok_or_else(notpos)?.l();
            let svd = (lz.transpose() * &ls).svd(true, true);
            let u = svd.u.ok_or_else(|| Error::Numeric("SVD failed".into()))?;
            let v_t = svd.v_t.ok_or_else(|| Error::Numeric("SVD failed".into()))?;
            let sig = svd.singular_values;
            if sig.iter().any(|&v| !(v > 0.0)) {
                return Err(notpos());
            }
            let inv_sqrt = Mat::from_diagonal(&sig.map(|v| 1.0 / v.sqrt()));
            let r = &ls * v_t.transpose() * &inv_sqrt;
            let r_inv = &inv_sqrt * u.transpose() * lz.transpose();
            let w = svec_operator(side, |x| r.transpose() * x * &r);
            let w_inv = svec_operator(side, |x| r_inv.transpose() * x * &r_inv);
            let lambda = svec_unchecked(&Mat::from_diagonal(&sig));
            Ok(Scaling { w, w_inv, lambda })
        }
    }
}

struct Problem {
    n: usize,
    c: Vec<f64>,
    /// rows of `A_eq`
    aeq: Vec<Vec<(usize, f64)>>,
    beq: Vec<f64>,
    eq_rows: Vec<usize>,
    blocks: Vec<Block>,
    h: Vec<f64>,
    pattern: Skyline,
}

impl Problem {
    fn new(p: &ConicProgram) -> Result<Self> {
        let rows = p.a().rows();
        let mut aeq = Vec::new();
        let mut beq = Vec::new();
        let mut eq_rows = Vec::new();
        let mut blocks = Vec::new();
        let mut h = Vec::new();
        let mut row = 0;
        for cone in p.cones() {
            let dim = cone.dim();
            let kind = match *cone {
                Cone::Zero(_) => {
                    for r in row..row + dim {
                        aeq.push(rows[r].clone());
                        beq.push(p.b()[r]);
                        eq_rows.push(r);
                    }
                    row += dim;
                    continue;
                }
                Cone::Nonneg(_) => Kind::Nonneg,
                Cone::Soc(_) => Kind::Soc,
                Cone::Psd(s) => Kind::Psd(s),
            };
            if dim == 0 {
                continue;
            }
            let mut cols: Vec<usize> = rows[row..row + dim].iter().flat_map(|r| r.iter().map(|&(j, _)| j)).collect();
            cols.sort_unstable();
            cols.dedup();
            let mut g = Mat::zeros(dim, cols.len());
            for (i, r) in rows[row..row + dim].iter().enumerate() {
                for &(j, v) in r {
                    let jj = cols.binary_search(&j).expect("column listed");
                    g[(i, jj)] += v;
                }
            }
            blocks.push(Block { kind, row, off: h.len(), dim, cols, g });
            h.extend_from_slice(&p.b()[row..row + dim]);
            row += dim;
        }
        let n = p.num_vars();
        let pattern = Skyline::from_groups(n, blocks.iter().map(|b| b.cols.as_slice()));
        Ok(Self { n, c: p.c().to_vec(), aeq, beq, eq_rows, blocks, h, pattern })
    }

    fn g_mul(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.h.len()];
        for b in &self.blocks {
            for i in 0..b.dim {
                out[b.off + i] = b.cols.iter().enumerate().map(|(jj, &j)| b.g[(i, jj)] * x[j]).sum();
            }
        }
        out
    }

    fn gt_mul(&self, z: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for b in &self.blocks {
            for (jj, &j) in b.cols.iter().enumerate() {
                out[j] += (0..b.dim).map(|i| b.g[(i, jj)] * z[b.off + i]).sum::<f64>();
            }
        }
        out
    }

    fn aeq_mul(&self, x: &[f64]) -> Vec<f64> {
        self.aeq.iter().map(|r| r.iter().map(|&(j, v)| v * x[j]).sum()).collect()
    }

    fn aeqt_mul(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (r, &yi) in self.aeq.iter().zip(y) {
            for &(j, v) in r {
                out[j] += v * yi;
            }
        }
        out
    }

    /// Full-length slack and dual in the program's row order.
    fn assemble(&self, m: usize, s: &[f64], y: &[f64], z: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut s_full = vec![0.0; m];
        let mut y_full = vec![0.0; m];
        for (k, &r) in self.eq_rows.iter().enumerate() {
            y_full[r] = y[k];
        }
        for b in &self.blocks {
            s_full[b.row..b.row + b.dim].copy_from_slice(&s[b.off..b.off + b.dim]);
            y_full[b.row..b.row + b.dim].copy_from_slice(&z[b.off..b.off + b.dim]);
        }
        (s_full, y_full)
    }
}

/// Diagonal shift of the equilibrated normal matrix.
const REGULARIZATION: f64 = 1e-13;

fn scaled_solve(sky: &Skyline, d: &[f64], v: &mut [f64]) {
    v.iter_mut().zip(d).for_each(|(a, b)| *a *= b);
    sky.solve(v);
    v.iter_mut().zip(d).for_each(|(a, b)| *a *= b);
}

/// Factored reduced system for a fixed scaling.
struct Kkt<'a> {
    prob: &'a Problem,
    /// `W⁻ᵀ G_k` per block
    scaled_g: Vec<Mat>,
    sky: Skyline,
    d: Vec<f64>,
    hinv_aeqt: Vec<Vec<f64>>,
    schur: Option<Cholesky<f64, Dyn>>,
}

impl<'a> Kkt<'a> {
    /// `w_inv_t[k]` is `W_k⁻ᵀ` (identity when `None`).
    fn new(prob: &'a Problem, w_inv_t: Option<&[Mat]>) -> Result<Self> {
        let scaled_g: Vec<Mat> = prob
            .blocks
            .iter()
            .enumerate()
            .map(|(k, b)| match w_inv_t {
                Some(w) => &w[k] * &b.g,
                None => b.g.clone(),
            })
            .collect();
        // Jacobi equilibration: factor D H D with unit diagonal
        let mut d = vec![0.0; prob.n];
        for (b, bg) in prob.blocks.iter().zip(&scaled_g) {
            for (jj, &j) in b.cols.iter().enumerate() {
                d[j] += bg.column(jj).norm_squared();
            }
        }
        let d: Vec<f64> = d.iter().map(|&v| if v > 0.0 { 1.0 / v.sqrt() } else { 1.0 }).collect();
        let mut sky = prob.pattern.clone();
        sky.clear();
        for (b, bg) in prob.blocks.iter().zip(&scaled_g) {
            let gram = bg.transpose() * bg;
            for (ii, &i) in b.cols.iter().enumerate() {
                for (jj, &j) in b.cols.iter().enumerate().take(ii + 1) {
                    sky.add(i, j, d[i] * d[j] * gram[(ii, jj)]);
                }
            }
        }
        for i in 0..prob.n {
            sky.add(i, i, REGULARIZATION);
        }
        sky.factor()?;
        let p = prob.aeq.len();
        let mut hinv_aeqt = Vec::with_capacity(p);
        for r in &prob.aeq {
            let mut col = vec![0.0; prob.n];
            for &(j, v) in r {
                col[j] += v;
            }
            scaled_solve(&sky, &d, &mut col);
            hinv_aeqt.push(col);
        }
        let schur = if p > 0 {
            let s = Mat::from_fn(p, p, |i, j| prob.aeq[i].iter().map(|&(c, v)| v * hinv_aeqt[j][c]).sum());
            let s = (&s + s.transpose()) * 0.5;
            Some(s.cholesky().ok_or_else(|| Error::Numeric("equality constraints are rank deficient".into()))?)
        } else {
            None
        };
        Ok(Self { prob, scaled_g, sky, d, hinv_aeqt, schur })
    }

    fn h_mul(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.prob.n];
        for (b, bg) in self.prob.blocks.iter().zip(&self.scaled_g) {
            let xl = DVector::from_iterator(b.cols.len(), b.cols.iter().map(|&j| x[j]));
            let y = bg.transpose() * (bg * xl);
            for (jj, &j) in b.cols.iter().enumerate() {
                out[j] += y[jj];
            }
        }
        out
    }

    fn solve_once(&self, r1: &[f64], r2: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut dx = r1.to_vec();
        scaled_solve(&self.sky, &self.d, &mut dx);
        let dy = match &self.schur {
            Some(ch) => {
                let mut rhs = DVector::from_vec(self.prob.aeq_mul(&dx));
                for (v, r) in rhs.iter_mut().zip(r2) {
                    *v -= r;
                }
                let dy = ch.solve(&rhs);
                for (k, col) in self.hinv_aeqt.iter().enumerate() {
                    for j in 0..dx.len() {
                        dx[j] -= dy[k] * col[j];
                    }
                }
                dy.iter().copied().collect()
            }
            None => Vec::new(),
        };
        (dx, dy)
    }

    /// `H dx + A_eqᵀ dy = r1`, `A_eq dx = r2`, with iterative refinement.
    fn solve(&self, r1: &[f64], r2: &[f64], refine: usize) -> (Vec<f64>, Vec<f64>) {
        let (mut dx, mut dy) = self.solve_once(r1, r2);
        for _ in 0..refine {
            let hx = self.h_mul(&dx);
            let aty = self.prob.aeqt_mul(&dy);
            let e1: Vec<f64> = (0..dx.len()).map(|j| r1[j] - hx[j] - aty[j]).collect();
            let ax = self.prob.aeq_mul(&dx);
            let e2: Vec<f64> = (0..ax.len()).map(|i| r2[i] - ax[i]).collect();
            let (cx, cy) = self.solve_once(&e1, &e2);
            dx.iter_mut().zip(&cx).for_each(|(a, b)| *a += b);
            dy.iter_mut().zip(&cy).for_each(|(a, b)| *a += b);
        }
        (dx, dy)
    }
}

fn shift_into_cone(prob: &Problem, v: &mut [f64]) -> Result<()> {
    let mut worst = f64::NEG_INFINITY;
    for b in &prob.blocks {
        worst = worst.max(-b.min_eig(&v[b.off..b.off + b.dim])?);
    }
    if worst >= 0.0 {
        for b in &prob.blocks {
            let e = b.identity();
            for i in 0..b.dim {
                v[b.off + i] += (1.0 + worst) * e[i];
            }
        }
    }
    Ok(())
}

fn block_apply(prob: &Problem, mats: &[Mat], v: &[f64], transpose: bool) -> Vec<f64> {
    let mut out = vec![0.0; v.len()];
    for (b, m) in prob.blocks.iter().zip(mats) {
        let vl = DVector::from_column_slice(&v[b.off..b.off + b.dim]);
        let r = if transpose { m.transpose() * vl } else { m * vl };
        out[b.off..b.off + b.dim].copy_from_slice(r.as_slice());
    }
    out
}

struct Direction {
    dx: Vec<f64>,
    dy: Vec<f64>,
    /// `W Δz`
    dz: Vec<f64>,
    /// `W⁻ᵀ Δs`
    ds: Vec<f64>,
    dz_raw: Vec<f64>,
    ds_raw: Vec<f64>,
}

fn run(p: &ConicProgram, o: &IpmOptions) -> Result<ConicSolution> {
    if !(o.tol > 0.0) || !(o.step_fraction > 0.0 && o.step_fraction < 1.0) {
        return Err(Error::InvalidInput("solver options out of range".into()));
    }
    let prob = Problem::new(p)?;
    let (n, m) = (prob.n, p.num_rows());
    let total_degree: f64 = prob.blocks.iter().map(Block::degree).sum();

    // starting point
    let init = Kkt::new(&prob, None)?;
    let (x0, _) = init.solve(&prob.gt_mul(&prob.h), &prob.beq, o.refinement_steps);
    let gx = prob.g_mul(&x0);
    let mut s: Vec<f64> = prob.h.iter().zip(&gx).map(|(h, g)| h - g).collect();
    shift_into_cone(&prob, &mut s)?;
    let neg_c: Vec<f64> = prob.c.iter().map(|v| -v).collect();
    let (xd, yd) = init.solve(&neg_c, &vec![0.0; prob.aeq.len()], o.refinement_steps);
    let mut z = prob.g_mul(&xd);
    shift_into_cone(&prob, &mut z)?;
    let mut x = x0;
    let mut y = yd;

    let mut best: Option<(f64, Vec<f64>, Vec<f64>, Vec<f64>, (f64, f64, f64))> = None;
    let mut iterations = 0;
    for k in 0..=o.max_iter {
        iterations = k;
        let (s_full, y_full) = prob.assemble(m, &s, &y, &z);
        let res = residuals(p, &x, &s_full, &y_full);
        let worst = res.0.max(res.1).max(res.2);
        let finite = |v: &[f64]| v.iter().all(|a| a.is_finite());
        if !(finite(&x) && finite(&s_full) && finite(&y_full) && [res.0, res.1, res.2].iter().all(|r| r.is_finite())) {
            log::debug!("interior point stopped at iteration {k}: non-finite iterate");
            break;
        }
        if best.as_ref().is_none_or(|b| worst < b.0) {
            best = Some((worst, x.clone(), s_full.clone(), y_full.clone(), res));
        }
        if worst <= o.tol {
            return Ok(finish(p, x, s_full, y_full, SolveStatus::Optimal, k, res));
        }
        if k == o.max_iter {
            break;
        }

        let scalings: Vec<Scaling> = match prob
            .blocks
            .iter()
            .map(|b| nt_scaling(b.kind, &s[b.off..b.off + b.dim], &z[b.off..b.off + b.dim]))
            .collect::<Result<Vec<_>>>()
        {
            Ok(v) => v,
            Err(e) => {
                log::debug!("interior point stopped at iteration {k}: {e}");
                break;
            }
        };
        let w_inv_t: Vec<Mat> = scalings.iter().map(|sc| sc.w_inv.transpose()).collect();
        let kkt = match Kkt::new(&prob, Some(&w_inv_t)) {
            Ok(kk) => kk,
            Err(e) => {
                log::debug!("interior point stopped at iteration {k}: {e}");
                break;
            }
        };
        let lambda: Vec<f64> = prob.blocks.iter().zip(&scalings).flat_map(|(_, sc)| sc.lambda.iter().copied()).collect();
        let mu = dot(&lambda, &lambda) / total_degree;

        let rx: Vec<f64> = {
            let a = prob.aeqt_mul(&y);
            let g = prob.gt_mul(&z);
            (0..n).map(|j| a[j] + g[j] + prob.c[j]).collect()
        };
        let ry: Vec<f64> = prob.aeq_mul(&x).iter().zip(&prob.beq).map(|(a, b)| a - b).collect();
        let rz: Vec<f64> = {
            let g = prob.g_mul(&x);
            (0..s.len()).map(|i| g[i] + s[i] - prob.h[i]).collect()
        };

        let w_inv: Vec<Mat> = scalings.iter().map(|sc| sc.w_inv.clone()).collect();
        let scaled_g_mul = |dx: &[f64]| -> Vec<f64> {
            let mut out = vec![0.0; s.len()];
            for (b, bg) in prob.blocks.iter().zip(&kkt.scaled_g) {
                let xl = DVector::from_iterator(b.cols.len(), b.cols.iter().map(|&j| dx[j]));
                out[b.off..b.off + b.dim].copy_from_slice((bg * xl).as_slice());
            }
            out
        };
        let direction = |d_s: &[f64], eta: f64| -> Direction {
            let mut ld = vec![0.0; d_s.len()];
            for (b, sc) in prob.blocks.iter().zip(&scalings) {
                let v = sc.lambda_div(b.kind, &d_s[b.off..b.off + b.dim]);
                ld[b.off..b.off + b.dim].copy_from_slice(&v);
            }
            let wrz = block_apply(&prob, &w_inv_t, &rz, false);
            let u: Vec<f64> = (0..ld.len()).map(|i| -(1.0 - eta) * wrz[i] - ld[i]).collect();
            let gu = prob.gt_mul(&block_apply(&prob, &w_inv_t, &u, true));
            let target_x: Vec<f64> = rx.iter().map(|v| -(1.0 - eta) * v).collect();
            let target_y: Vec<f64> = ry.iter().map(|v| -(1.0 - eta) * v).collect();
            let r1: Vec<f64> = (0..n).map(|j| target_x[j] + gu[j]).collect();
            let (mut dx, mut dy) = kkt.solve(&r1, &target_y, o.refinement_steps);
            let bdx = scaled_g_mul(&dx);
            let mut dz: Vec<f64> = (0..ld.len()).map(|i| bdx[i] - u[i]).collect();
            let mut dz_raw = block_apply(&prob, &w_inv, &dz, false);
            // refine against the unscaled dual and equality rows, which is what the
            // residuals measure once W is badly conditioned
            for _ in 0..o.refinement_steps {
                let aty = prob.aeqt_mul(&dy);
                let gz = prob.gt_mul(&dz_raw);
                let ex: Vec<f64> = (0..n).map(|j| target_x[j] - aty[j] - gz[j]).collect();
                let ax = prob.aeq_mul(&dx);
                let ey: Vec<f64> = (0..ax.len()).map(|i| target_y[i] - ax[i]).collect();
                let (cx, cy) = kkt.solve(&ex, &ey, o.refinement_steps);
                let cz = scaled_g_mul(&cx);
                let cz_raw = block_apply(&prob, &w_inv, &cz, false);
                dx.iter_mut().zip(&cx).for_each(|(a, b)| *a += b);
                dy.iter_mut().zip(&cy).for_each(|(a, b)| *a += b);
                dz.iter_mut().zip(&cz).for_each(|(a, b)| *a += b);
                dz_raw.iter_mut().zip(&cz_raw).for_each(|(a, b)| *a += b);
            }
            // slack step straight from the primal equation, which avoids
            // cancellation in Wᵀ W⁻ᵀ
            let gdx = prob.g_mul(&dx);
            let ds_raw: Vec<f64> = (0..ld.len()).map(|i| -(1.0 - eta) * rz[i] - gdx[i]).collect();
            let ds = block_apply(&prob, &w_inv_t, &ds_raw, false);
            Direction { dx, dy, dz, ds, dz_raw, ds_raw }
        };
        let max_step = |d: &Direction| -> Result<f64> {
            let mut a = f64::INFINITY;
            for (b, sc) in prob.blocks.iter().zip(&scalings) {
                a = a.min(sc.max_step(b.kind, &d.ds[b.off..b.off + b.dim])?);
                a = a.min(sc.max_step(b.kind, &d.dz[b.off..b.off + b.dim])?);
            }
            Ok(a)
        };

        let mut ll = vec![0.0; lambda.len()];
        for b in &prob.blocks {
            let l = &lambda[b.off..b.off + b.dim];
            ll[b.off..b.off + b.dim].copy_from_slice(&b.jordan(l, l)?);
        }
        let aff_ds: Vec<f64> = ll.iter().map(|v| -v).collect();
        let aff = direction(&aff_ds, 0.0);
        let alpha_aff = max_step(&aff)?.min(1.0);
        let sigma = (1.0 - alpha_aff).powi(3).clamp(0.0, 1.0);

        let mut d_s = aff_ds;
        for b in &prob.blocks {
            let corr = b.jordan(&aff.ds[b.off..b.off + b.dim], &aff.dz[b.off..b.off + b.dim])?;
            let e = b.identity();
            for i in 0..b.dim {
                d_s[b.off + i] += -corr[i] + sigma * mu * e[i];
            }
        }
        let dir = direction(&d_s, sigma);
        let alpha = (o.step_fraction * max_step(&dir)?).min(1.0);

        let (ds, dz) = (&dir.ds_raw, &dir.dz_raw);
        for j in 0..n {
            x[j] += alpha * dir.dx[j];
        }
        for (yi, d) in y.iter_mut().zip(&dir.dy) {
            *yi += alpha * d;
        }
        for i in 0..s.len() {
            s[i] += alpha * ds[i];
            z[i] += alpha * dz[i];
        }
    }
    let (_, x, s_full, y_full, res) = best.ok_or_else(|| Error::Numeric("interior point diverged".into()))?;
    Ok(finish(p, x, s_full, y_full, SolveStatus::MaxIter, iterations, res))
}

fn finish(
    p: &ConicProgram,
    x: Vec<f64>,
    s: Vec<f64>,
    y: Vec<f64>,
    status: SolveStatus,
    iterations: usize,
    res: (f64, f64, f64),
) -> ConicSolution {
    let objective = dot(p.c(), &x);
    ConicSolution { x, s, y, status, iterations, primal_residual: res.0, dual_residual: res.1, gap: res.2, objective }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conic::SparseMatrix;

    fn solve(p: &ConicProgram) -> ConicSolution {
        InteriorPointSolver::default().solve(p).unwrap()
    }

    #[test]
    fn nt_scaling_maps_s_and_z_to_lambda() {
        let cases: Vec<(Kind, Vec<f64>, Vec<f64>)> = vec![
            (Kind::Nonneg, vec![1.0, 2.0], vec![3.0, 0.5]),
            (Kind::Soc, vec![2.0, 0.5, -1.0], vec![1.5, 0.3, 0.9]),
            (Kind::Psd(2), svec_unchecked(&Mat::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0])), svec_unchecked(&Mat::from_row_slice(2, 2, &[1.0, -0.3, -0.3, 3.0]))),
        ];
        for (kind, s, z) in cases {
            let sc = nt_scaling(kind, &s, &z).unwrap();
            let wz = &sc.w * DVector::from_vec(z.clone());
            let wis = sc.w_inv.transpose() * DVector::from_vec(s.clone());
            for i in 0..s.len() {
                assert!((wz[i] - sc.lambda[i]).abs() < 1e-12, "{kind:?}");
                assert!((wis[i] - sc.lambda[i]).abs() < 1e-12, "{kind:?}");
            }
            let id = &sc.w * &sc.w_inv;
            assert!((id - Mat::identity(s.len(), s.len())).amax() < 1e-12);
        }
    }

    #[test]
    fn soc_step_hits_the_boundary() {
        let x = [2.0, 0.0, 0.0];
        let d = [0.0, 1.0, 0.0];
        assert!((soc_step(&x, &d) - 2.0).abs() < 1e-14);
        assert_eq!(soc_step(&x, &[1.0, 0.0, 0.0]), f64::INFINITY);
    }

    #[test]
    fn minimal_eigenvalue_sdp() {
        let c = svec_unchecked(&Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]));
        let trace = svec_unchecked(&Mat::identity(2, 2));
        let mut trip: Vec<(usize, usize, f64)> = trace.iter().enumerate().map(|(j, &v)| (0, j, v)).collect();
        trip.extend((0..3).map(|j| (1 + j, j, -1.0)));
        let a = SparseMatrix::from_triplets(4, 3, &trip).unwrap();
        let p = ConicProgram::new(c, a, vec![1.0, 0.0, 0.0, 0.0], vec![Cone::Zero(1), Cone::Psd(2)]).unwrap();
        let sol = solve(&p);
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.objective - 1.0).abs() < 1e-8);
        let x = smat(&sol.x).unwrap();
        assert!((x - Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0])).amax() < 1e-7);
        assert_eq!(residuals(&p, &sol.x, &sol.s, &sol.y), (sol.primal_residual, sol.dual_residual, sol.gap));
    }

    #[test]
    fn second_order_cone_and_orthant() {
        // min x0 + x1 s.t. ‖(x0, x1)‖ ≤ 1, x0 ≥ −0.5
        let trip = vec![(1, 0, -1.0), (2, 1, -1.0), (3, 0, -1.0)];
        let a = SparseMatrix::from_triplets(4, 2, &trip).unwrap();
        let p = ConicProgram::new(vec![1.0, 1.0], a, vec![1.0, 0.0, 0.0, 0.5], vec![Cone::Soc(3), Cone::Nonneg(1)]).unwrap();
        let sol = solve(&p);
        assert_eq!(sol.status, SolveStatus::Optimal);
        let want = -(0.75_f64).sqrt();
        assert!((sol.x[0] + 0.5).abs() < 1e-7, "{:?}", sol.x);
        assert!((sol.x[1] - want).abs() < 1e-7);
    }

    #[test]
    fn infeasible_program_does_not_report_optimal() {
        let a = SparseMatrix::from_triplets(2, 1, &[(0, 0, 1.0), (1, 0, 1.0)]).unwrap();
        let p = ConicProgram::new(vec![0.0], a, vec![1.0, 0.0], vec![Cone::Zero(1), Cone::Nonneg(1)]).unwrap();
        let sol = InteriorPointSolver::new(IpmOptions { max_iter: 50, ..IpmOptions::default() }).solve(&p).unwrap();
        assert_ne!(sol.status, SolveStatus::Optimal, "{sol:?}");
    }
}
