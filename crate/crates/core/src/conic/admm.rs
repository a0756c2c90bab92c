//! ADMM on the slack formulation with a reused factorisation.
//!
//! With `ρ` a positive per-row weight (constant on each non-separable cone
//! block), one iteration is
//!
//! ```text
//! x̃      = (σI + Aᵀ diag(ρ) A)⁻¹ (σx − c + Aᵀ(ρ∘(b − s) + λ))
//! s̃      = b − A x̃
//! x, ŝ   = relaxation of (x̃, s̃) with factor α
//! s      = Π_K(ŝ + λ/ρ)
//! λ      = λ + ρ∘(ŝ − s)
//! ```
//!
//! and `y = −λ` is the dual in the `y ∈ K*` convention. Iterates live in a
//! Ruiz-equilibrated copy of the problem; the scaling changes the path but
//! not the fixed points. Residuals used for stopping are always computed on
//! the original data.


use super::cone::{project, project_dual, Cone};
use super::program::{ConicProgram, SparseMatrix};
use super::skyline::Skyline;
use super::{residuals, ConicBackend, ConicSolution, SolveStatus};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    /// Stop when the largest relative residual is at most this.
    pub tol: f64,
    pub max_iter: usize,
    /// Initial penalty for cone rows; zero-cone rows use `rho * eq_rho_factor`.
    pub rho: f64,
    pub eq_rho_factor: f64,
    /// Proximal weight on `x`, keeps the linear system positive definite.
    pub sigma: f64,
    /// Over-relaxation factor in (0, 2).
    pub alpha: f64,
    pub adaptive_rho: bool,
    /// Iterations between penalty adaptations.
    pub adapt_interval: usize,
    pub scaling_iters: usize,
    /// Iterations between convergence checks.
    pub check_interval: usize,
    /// Infeasibility tests are only run after this many iterations.
    pub infeasibility_warmup: usize,
    pub infeasibility_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-7,
            max_iter: 100_000,
            rho: 0.1,
            eq_rho_factor: 1e3,
            sigma: 1e-6,
            alpha: 1.6,
            adaptive_rho: true,
            adapt_interval: 50,
            scaling_iters: 15,
            check_interval: 10,
            infeasibility_warmup: 500,
            infeasibility_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct AdmmSolver {
    pub options: SolverOptions,
}

impl AdmmSolver {
    pub fn new(options: SolverOptions) -> Self {
        Self { options }
    }
}

impl ConicBackend for AdmmSolver {
    fn solve(&self, program: &ConicProgram) -> Result<ConicSolution> {
        run(program, &self.options)
    }
}

/// Equilibrated copy of the problem data.
struct Scaled {
    a: SparseMatrix,
    rows: Vec<Vec<(usize, f64)>>,
    b: Vec<f64>,
    c: Vec<f64>,
    /// column scaling `D`
    d: Vec<f64>,
    /// row scaling `E`
    e: Vec<f64>,
    cost_scale: f64,
    pattern: Skyline,
}

fn clamp_scale(v: f64) -> f64 {
    if v < 1e-4 {
        1.0
    } else {
        (1.0 / v.sqrt()).clamp(1e-4, 1e4)
    }
}

impl Scaled {
    fn new(p: &ConicProgram, iters: usize) -> Self {
        let mut a = p.a().clone();
        let (m, n) = (a.nrows(), a.ncols());
        let mut d = vec![1.0; n];
        let mut e = vec![1.0; m];
        for _ in 0..iters {
            let (rn, cn) = a.row_col_inf_norms();
            let dc: Vec<f64> = cn.iter().map(|&v| clamp_scale(v)).collect();
            let mut er: Vec<f64> = rn.iter().map(|&v| clamp_scale(v)).collect();
            let mut off = 0;
            for cone in p.cones() {
                let k = cone.dim();
                if !cone.is_separable() && k > 0 {
                    let mean = er[off..off + k].iter().sum::<f64>() / k as f64;
                    er[off..off + k].iter_mut().for_each(|v| *v = mean);
                }
                off += k;
            }
            a.scale(&er, &dc);
            d.iter_mut().zip(&dc).for_each(|(x, y)| *x *= y);
            e.iter_mut().zip(&er).for_each(|(x, y)| *x *= y);
        }
        let b: Vec<f64> = p.b().iter().zip(&e).map(|(b, e)| b * e).collect();
        let mut c: Vec<f64> = p.c().iter().zip(&d).map(|(c, d)| c * d).collect();
        let cmax = c.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
        let cost_scale = if cmax > 1e-12 { (1.0 / cmax).clamp(1e-6, 1e6) } else { 1.0 };
        c.iter_mut().for_each(|v| *v *= cost_scale);
        let rows = a.rows();
        let cols: Vec<Vec<usize>> = rows.iter().map(|r| r.iter().map(|&(j, _)| j).collect()).collect();
        let pattern = Skyline::from_groups(n, cols.iter().map(|c| c.as_slice()));
        Self { a, rows, b, c, d, e, cost_scale, pattern }
    }

    fn factor(&self, rho: &[f64], sigma: f64) -> Result<Skyline> {
        let mut k = self.pattern.clone();
        k.clear();
        for (i, row) in self.rows.iter().enumerate() {
            let r = rho[i];
            for &(j1, v1) in row {
                for &(j2, v2) in row {
                    if j2 <= j1 {
                        k.add(j1, j2, r * v1 * v2);
                    }
                }
            }
        }
        for j in 0..k.n() {
            k.add(j, j, sigma);
        }
        k.factor().map_err(|_| Error::Numeric("ADMM linear system is not positive definite".into()))?;
        Ok(k)
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |a, b| a.max(b.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn row_penalties(cones: &[Cone], rho: f64, eq_factor: f64) -> Vec<f64> {
    let mut out = Vec::new();
    for cone in cones {
        let r = if matches!(cone, Cone::Zero(_)) { rho * eq_factor } else { rho };
        out.extend(std::iter::repeat_n(r, cone.dim()));
    }
    out
}

struct Unscaled {
    x: Vec<f64>,
    s: Vec<f64>,
    y: Vec<f64>,
}

fn unscale(sc: &Scaled, x: &[f64], s: &[f64], lambda: &[f64]) -> Unscaled {
    Unscaled {
        x: x.iter().zip(&sc.d).map(|(v, d)| v * d).collect(),
        s: s.iter().zip(&sc.e).map(|(v, e)| v / e).collect(),
        y: lambda.iter().zip(&sc.e).map(|(v, e)| -v * e / sc.cost_scale).collect(),
    }
}

/// Distance of `v` from the cone (or its dual), infinity norm.
fn cone_violation(cones: &[Cone], v: &[f64], dual: bool) -> Result<f64> {
    let mut p = v.to_vec();
    if dual {
        project_dual(cones, &mut p)?;
    } else {
        project(cones, &mut p)?;
    }
    Ok(v.iter().zip(&p).fold(0.0_f64, |acc, (a, b)| acc.max((a - b).abs())))
}

fn primal_infeasible(p: &ConicProgram, dy: &[f64], eps: f64) -> Result<bool> {
    let nv = inf_norm(dy);
    if !(nv > 0.0) {
        return Ok(false);
    }
    let aty = p.a().tmul_vec(dy);
    Ok(inf_norm(&aty) <= eps * nv
        && dot(p.b(), dy) < -eps * nv
        && cone_violation(p.cones(), dy, true)? <= eps * nv)
}

fn dual_infeasible(p: &ConicProgram, dx: &[f64], eps: f64) -> Result<bool> {
    let nv = inf_norm(dx);
    if !(nv > 0.0) {
        return Ok(false);
    }
    let neg_ax: Vec<f64> = p.a().mul_vec(dx).into_iter().map(|v| -v).collect();
    Ok(dot(p.c(), dx) < -eps * nv && cone_violation(p.cones(), &neg_ax, false)? <= eps * nv)
}

fn run(p: &ConicProgram, o: &SolverOptions) -> Result<ConicSolution> {
    if !(o.alpha > 0.0 && o.alpha < 2.0) || !(o.rho > 0.0) || !(o.sigma > 0.0) || !(o.tol > 0.0) {
        return Err(Error::InvalidInput("solver options out of range".into()));
    }
    let sc = Scaled::new(p, o.scaling_iters);
    let (m, n) = (p.num_rows(), p.num_vars());
    let mut rho_base = o.rho;
    let mut rho = row_penalties(p.cones(), rho_base, o.eq_rho_factor);
    let mut chol = sc.factor(&rho, o.sigma)?;

    let mut x = vec![0.0; n];
    let mut s = vec![0.0; m];
    let mut lambda = vec![0.0; m];
    let mut x_prev = x.clone();
    let mut lambda_prev = lambda.clone();
    let mut rhs = vec![0.0; n];
    let mut tmp_m = vec![0.0; m];
    let mut tmp_n = vec![0.0; n];
    let mut s_hat = vec![0.0; m];

    let mut best: Option<(f64, Unscaled, (f64, f64, f64))> = None;
    let mut pinf_streak = 0;
    let mut dinf_streak = 0;
    let check = o.check_interval.max(1);

    for k in 1..=o.max_iter {
        x_prev.copy_from_slice(&x);
        lambda_prev.copy_from_slice(&lambda);

        for i in 0..m {
            tmp_m[i] = rho[i] * (sc.b[i] - s[i]) + lambda[i];
        }
        sc.a.tmul_vec_into(&tmp_m, &mut tmp_n);
        for j in 0..n {
            rhs[j] = o.sigma * x[j] - sc.c[j] + tmp_n[j];
        }
        chol.solve(&mut rhs);
        sc.a.mul_vec_into(&rhs, &mut tmp_m);
        for j in 0..n {
            x[j] = o.alpha * rhs[j] + (1.0 - o.alpha) * x[j];
        }
        for i in 0..m {
            let s_tilde = sc.b[i] - tmp_m[i];
            s_hat[i] = o.alpha * s_tilde + (1.0 - o.alpha) * s[i];
            s[i] = s_hat[i] + lambda[i] / rho[i];
        }
        project(p.cones(), &mut s)?;
        for i in 0..m {
            lambda[i] += rho[i] * (s_hat[i] - s[i]);
        }

        if k % check != 0 && k != o.max_iter {
            continue;
        }

        let u = unscale(&sc, &x, &s, &lambda);
        let (pres, dres, gap) = residuals(p, &u.x, &u.s, &u.y);
        if !(pres.is_finite() && dres.is_finite() && gap.is_finite()) {
            return Err(Error::Numeric(format!("ADMM diverged at iteration {k}")));
        }
        let worst = pres.max(dres).max(gap);
        if worst <= o.tol {
            return Ok(finish(p, u, SolveStatus::Optimal, k, (pres, dres, gap)));
        }
        if best.as_ref().is_none_or(|b| worst < b.0) {
            best = Some((worst, u, (pres, dres, gap)));
        }

        if k >= o.infeasibility_warmup {
            let dy: Vec<f64> = (0..m).map(|i| -(lambda[i] - lambda_prev[i]) * sc.e[i] / sc.cost_scale).collect();
            let dx: Vec<f64> = (0..n).map(|j| (x[j] - x_prev[j]) * sc.d[j]).collect();
            pinf_streak = if primal_infeasible(p, &dy, o.infeasibility_tol)? { pinf_streak + 1 } else { 0 };
            dinf_streak = if dual_infeasible(p, &dx, o.infeasibility_tol)? { dinf_streak + 1 } else { 0 };
            if pinf_streak >= 3 || dinf_streak >= 3 {
                let status = if pinf_streak >= 3 { SolveStatus::Infeasible } else { SolveStatus::Unbounded };
                let u = unscale(&sc, &x, &s, &lambda);
                return Ok(finish(p, u, status, k, (pres, dres, gap)));
            }
        }

        if o.adaptive_rho && k % o.adapt_interval.max(check) == 0 {
            let ax = sc.a.mul_vec(&x);
            let aty = sc.a.tmul_vec(&lambda);
            let rp: Vec<f64> = (0..m).map(|i| ax[i] + s[i] - sc.b[i]).collect();
            let rd: Vec<f64> = (0..n).map(|j| sc.c[j] - aty[j]).collect();
            let pn = inf_norm(&ax).max(inf_norm(&s)).max(inf_norm(&sc.b)).max(1e-30);
            let dn = inf_norm(&aty).max(inf_norm(&sc.c)).max(1e-30);
            let num = inf_norm(&rp) / pn;
            let den = (inf_norm(&rd) / dn).max(1e-30);
            let ratio = (num / den).sqrt();
            if ratio > 5.0 || ratio < 0.2 {
                let next = (rho_base * ratio).clamp(1e-6, 1e6);
                if next != rho_base {
                    rho_base = next;
                    rho = row_penalties(p.cones(), rho_base, o.eq_rho_factor);
                    chol = sc.factor(&rho, o.sigma)?;
                }
            }
        }
    }

    let (_, u, res) = best.expect("at least one check runs before max_iter is reached");
    Ok(finish(p, u, SolveStatus::MaxIter, o.max_iter, res))
}

fn finish(p: &ConicProgram, u: Unscaled, status: SolveStatus, iterations: usize, res: (f64, f64, f64)) -> ConicSolution {
    let objective = dot(p.c(), &u.x);
    ConicSolution {
        x: u.x,
        s: u.s,
        y: u.y,
        status,
        iterations,
        primal_residual: res.0,
        dual_residual: res.1,
        gap: res.2,
        objective,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conic::{smat, solve_conic, svec_unchecked};
    use crate::linalg::Mat;

    #[test]
    fn scalar_equality_with_sign() {
        // min x  s.t. x = 1 (zero cone), x ≥ 0 (nonneg cone)
        let a = SparseMatrix::from_triplets(2, 1, &[(0, 0, 1.0), (1, 0, -1.0)]).unwrap();
        let p = ConicProgram::new(vec![1.0], a, vec![1.0, 0.0], vec![Cone::Zero(1), Cone::Nonneg(1)]).unwrap();
        let sol = solve_conic(&p, 1e-9, 10_000).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.x[0] - 1.0).abs() < 1e-7);
    }

    #[test]
    fn minimal_eigenvalue_sdp() {
        // min tr(C X) s.t. tr(X) = 1, X ⪰ 0; variables are svec(X).
        let c_mat = Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]);
        let c = svec_unchecked(&c_mat);
        let trace = svec_unchecked(&Mat::identity(2, 2));
        let mut trip: Vec<(usize, usize, f64)> = trace.iter().enumerate().map(|(j, &v)| (0, j, v)).collect();
        trip.extend((0..3).map(|j| (1 + j, j, -1.0)));
        let a = SparseMatrix::from_triplets(4, 3, &trip).unwrap();
        let p = ConicProgram::new(c, a, vec![1.0, 0.0, 0.0, 0.0], vec![Cone::Zero(1), Cone::Psd(2)]).unwrap();
        let sol = solve_conic(&p, 1e-9, 20_000).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        let x = smat(&sol.x).unwrap();
        assert!((x - Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0])).amax() < 1e-6);
        assert!((sol.objective - 1.0).abs() < 1e-6);
        let (pr, dr, gap) = residuals(&p, &sol.x, &sol.s, &sol.y);
        assert_eq!((pr, dr, gap), (sol.primal_residual, sol.dual_residual, sol.gap));
    }

    #[test]
    fn second_order_cone() {
        // min x0 + x1 s.t. ‖(x0, x1)‖ ≤ 1  → x = −(1, 1)/√2
        let trip = vec![(1, 0, -1.0), (2, 1, -1.0)];
        let a = SparseMatrix::from_triplets(3, 2, &trip).unwrap();
        let p = ConicProgram::new(vec![1.0, 1.0], a, vec![1.0, 0.0, 0.0], vec![Cone::Soc(3)]).unwrap();
        let sol = solve_conic(&p, 1e-9, 20_000).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        let r = -std::f64::consts::FRAC_1_SQRT_2;
        assert!((sol.x[0] - r).abs() < 1e-6 && (sol.x[1] - r).abs() < 1e-6);
    }

    #[test]
    fn detects_primal_infeasibility() {
        // x = 1 and x ≤ 0
        let a = SparseMatrix::from_triplets(2, 1, &[(0, 0, 1.0), (1, 0, 1.0)]).unwrap();
        let p = ConicProgram::new(vec![0.0], a, vec![1.0, 0.0], vec![Cone::Zero(1), Cone::Nonneg(1)]).unwrap();
        let sol = solve_conic(&p, 1e-9, 20_000).unwrap();
        assert_eq!(sol.status, SolveStatus::Infeasible);
    }

    #[test]
    fn detects_unboundedness() {
        // min −x s.t. x ≥ 0
        let a = SparseMatrix::from_triplets(1, 1, &[(0, 0, -1.0)]).unwrap();
        let p = ConicProgram::new(vec![-1.0], a, vec![0.0], vec![Cone::Nonneg(1)]).unwrap();
        let sol = solve_conic(&p, 1e-9, 20_000).unwrap();
        assert_eq!(sol.status, SolveStatus::Unbounded);
    }

    #[test]
    fn budget_exhaustion_reports_max_iter() {
        let c_mat = Mat::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 2.0]);
        let c = svec_unchecked(&c_mat);
        let trace = svec_unchecked(&Mat::identity(2, 2));
        let mut trip: Vec<(usize, usize, f64)> = trace.iter().enumerate().map(|(j, &v)| (0, j, v)).collect();
        trip.extend((0..3).map(|j| (1 + j, j, -1.0)));
        let a = SparseMatrix::from_triplets(4, 3, &trip).unwrap();
        let p = ConicProgram::new(c, a, vec![1.0, 0.0, 0.0, 0.0], vec![Cone::Zero(1), Cone::Psd(2)]).unwrap();
        let sol = solve_conic(&p, 1e-14, 15).unwrap();
        assert_eq!(sol.status, SolveStatus::MaxIter);
        assert_eq!(sol.iterations, 15);
        assert!(sol.primal_residual.is_finite());
    }

    #[test]
    fn deterministic() {
        let a = SparseMatrix::from_triplets(3, 2, &[(1, 0, -1.0), (2, 1, -1.0)]).unwrap();
        let p = ConicProgram::new(vec![1.0, 2.0], a, vec![1.0, 0.0, 0.0], vec![Cone::Soc(3)]).unwrap();
        assert_eq!(solve_conic(&p, 1e-8, 5000).unwrap(), solve_conic(&p, 1e-8, 5000).unwrap());
    }
}
