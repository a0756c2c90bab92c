//! Standard-form conic programs with an operator-splitting and an interior-point solver.
//!
//! Programs are stated as
//!
//! ```text
//! minimize    cᵀx
//! subject to  A x + s = b,   s ∈ K = K_1 × … × K_p
//! ```
//!
//! where each `K_i` is a zero cone, a nonnegative orthant, a second-order
//! cone `{(t, u) : ‖u‖ ≤ t}` or a PSD cone stored with [`svec`]. The cone
//! list covers the rows of `A` (the slack vector) in order. Dual variables
//! follow the convention `y ∈ K*`, `Aᵀy + c = 0`, duality gap `cᵀx + bᵀy`.

mod admm;
mod cone;
mod ipm;
mod program;
mod skyline;
mod svec;

pub use admm::{AdmmSolver, SolverOptions};
pub use ipm::{InteriorPointSolver, IpmOptions};
pub use cone::{project, project_dual, Cone};
pub use program::{ConicProgram, SparseMatrix};
pub use svec::{smat, svec, svec_len, svec_side, svec_unchecked};

use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    MaxIter,
    Infeasible,
    Unbounded,
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::MaxIter => "max_iter",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::Unbounded => "unbounded",
        };
        f.write_str(s)
    }
}

/// Solver output in the original (unscaled) coordinates.
///
/// Residuals are relative infinity norms:
///
/// * `primal_residual = ‖Ax + s − b‖∞ / (1 + max(‖Ax‖∞, ‖s‖∞, ‖b‖∞))`
/// * `dual_residual   = ‖Aᵀy + c‖∞ / (1 + max(‖Aᵀy‖∞, ‖c‖∞))`
/// * `gap             = |cᵀx + bᵀy| / (1 + |cᵀx| + |bᵀy|)`
#[derive(Debug, Clone, PartialEq)]
pub struct ConicSolution {
    pub x: Vec<f64>,
    pub s: Vec<f64>,
    pub y: Vec<f64>,
    pub status: SolveStatus,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
    pub objective: f64,
}

/// Seam for swapping the solver behind the estimator.
pub trait ConicBackend {
    fn solve(&self, program: &ConicProgram) -> Result<ConicSolution>;
}

/// Choice of built-in backend.
#[derive(Debug, Clone, PartialEq)]
pub enum Backend {
    InteriorPoint(IpmOptions),
    Admm(SolverOptions),
}

impl Default for Backend {
    fn default() -> Self {
        Backend::InteriorPoint(IpmOptions::default())
    }
}

impl Backend {
    pub fn tol(&self) -> f64 {
        match self {
            Backend::InteriorPoint(o) => o.tol,
            Backend::Admm(o) => o.tol,
        }
    }

    pub fn set_tol(&mut self, tol: f64) {
        match self {
            Backend::InteriorPoint(o) => o.tol = tol,
            Backend::Admm(o) => o.tol = tol,
        }
    }

    pub fn max_iter(&self) -> usize {
        match self {
            Backend::InteriorPoint(o) => o.max_iter,
            Backend::Admm(o) => o.max_iter,
        }
    }

    pub fn set_max_iter(&mut self, max_iter: usize) {
        match self {
            Backend::InteriorPoint(o) => o.max_iter = max_iter,
            Backend::Admm(o) => o.max_iter = max_iter,
        }
    }
}

impl ConicBackend for Backend {
    fn solve(&self, program: &ConicProgram) -> Result<ConicSolution> {
        match self {
            Backend::InteriorPoint(o) => InteriorPointSolver::new(o.clone()).solve(program),
            Backend::Admm(o) => AdmmSolver::new(o.clone()).solve(program),
        }
    }
}

/// Solve with the built-in ADMM backend and default settings apart from the
/// stopping tolerance and iteration budget.
pub fn solve_conic(program: &ConicProgram, tol: f64, max_iter: usize) -> Result<ConicSolution> {
    AdmmSolver::new(SolverOptions { tol, max_iter, ..SolverOptions::default() }).solve(program)
}

/// Recompute the relative residuals of a point, independently of the solver loop.
pub fn residuals(p: &ConicProgram, x: &[f64], s: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let inf = |v: &[f64]| v.iter().fold(0.0_f64, |a, b| a.max(b.abs()));
    let ax = p.a().mul_vec(x);
    let rp: Vec<f64> = (0..ax.len()).map(|i| ax[i] + s[i] - p.b()[i]).collect();
    let aty = p.a().tmul_vec(y);
    let rd: Vec<f64> = (0..aty.len()).map(|j| aty[j] + p.c()[j]).collect();
    let cx: f64 = p.c().iter().zip(x).map(|(a, b)| a * b).sum();
    let by: f64 = p.b().iter().zip(y).map(|(a, b)| a * b).sum();
    let pres = inf(&rp) / (1.0 + inf(&ax).max(inf(s)).max(inf(p.b())));
    let dres = inf(&rd) / (1.0 + inf(&aty).max(inf(p.c())));
    let gap = (cx + by).abs() / (1.0 + cx.abs() + by.abs());
    (pres, dres, gap)
}
