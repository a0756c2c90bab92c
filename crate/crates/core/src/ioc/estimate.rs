use std::collections::BTreeMap;

use super::{
    assemble_objective, assemble_program, feasibility_check, Candidate, EstimatorConfig, FeasibilityReport,
    ProgramLayout, References,
};
use crate::conic::{ConicBackend, ConicProgram, SolveStatus};
use crate::data::Dataset;
use crate::linalg::{self, Mat, Vector};
use crate::lq::{DiscreteLti, NoiseModel};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum IocDiagnostic {
    /// No trajectory spans the full window, so the excitation check was skipped.
    NoFullLengthTrajectories,
    /// Smallest eigenvalue of the `[x; 1]` second moment at the weakest stage.
    WeakExcitation { min_eig: f64 },
    /// The solver's `Q` had a negative eigenvalue and was projected onto the PSD cone.
    QProjected { min_eig: f64 },
    SolverStopped { status: SolveStatus, iterations: usize },
}

impl std::fmt::Display for IocDiagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            IocDiagnostic::NoFullLengthTrajectories => write!(f, "no full-length trajectories; excitation not assessed"),
            IocDiagnostic::WeakExcitation { min_eig } => {
                write!(f, "weak excitation: smallest second-moment eigenvalue {min_eig:.3e}; Q may not be identifiable")
            }
            IocDiagnostic::QProjected { min_eig } => write!(f, "estimated Q projected onto PSD cone (min eig {min_eig:.3e})"),
            IocDiagnostic::SolverStopped { status, iterations } => write!(f, "solver stopped with {status} after {iterations} iterations"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct IocSolution {
    /// PSD estimate of `Q`.
    pub q_est: Mat,
    /// `Q` as returned by the solver, before projection.
    pub q_raw: Mat,
    /// The full solver point, with `q = q_raw`.
    pub point: Candidate,
    /// `q_t = −Q̂ x_t^r` per reference, `t = 1..=nu2`.
    pub q_lin: BTreeMap<String, Vec<Vector>>,
    /// Empirical objective at `point`.
    pub objective_value: f64,
    pub status: SolveStatus,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
    pub feasibility: FeasibilityReport,
    pub excitation: Option<f64>,
    pub diagnostics: Vec<IocDiagnostic>,
}

/// Smallest eigenvalue, over `t`, of the second moment of `[x_t; 1]` across
/// trajectories that start at `t = 1`. `None` if there are none.
pub fn excitation_min_eigenvalue(ds: &Dataset) -> Option<f64> {
    let full: Vec<_> = ds.trajectories().iter().filter(|tr| tr.start_time() == 1).collect();
    if full.is_empty() {
        return None;
    }
    let n = ds.n();
    let mut worst = f64::INFINITY;
    for t in 1..=ds.nu2() {
        let mut mom = Mat::zeros(n + 1, n + 1);
        for tr in &full {
            let x = tr.state_at(t);
            let z = Vector::from_iterator(n + 1, x.iter().copied().chain(std::iter::once(1.0)));
            mom += &z * z.transpose();
        }
        mom /= full.len() as f64;
        worst = worst.min(linalg::min_eigenvalue(&mom));
    }
    Some(worst)
}

/// Estimates `Q` with the backend selected in `cfg.solver`.
pub fn solve_ioc(
    ds: &Dataset,
    refs: &References,
    sys: &DiscreteLti,
    noise: &NoiseModel,
    cfg: &EstimatorConfig,
) -> Result<IocSolution> {
    solve_ioc_with(&cfg.solver, ds, refs, sys, noise, cfg)
}

pub fn solve_ioc_with(
    backend: &dyn ConicBackend,
    ds: &Dataset,
    refs: &References,
    sys: &DiscreteLti,
    noise: &NoiseModel,
    cfg: &EstimatorConfig,
) -> Result<IocSolution> {
    cfg.validate()?;
    let mut diagnostics = Vec::new();
    for w in ds.warnings() {
        log::warn!("{w}");
    }
    let excitation = excitation_min_eigenvalue(ds);
    match excitation {
        None => diagnostics.push(IocDiagnostic::NoFullLengthTrajectories),
        Some(e) if e < cfg.excitation_tol => diagnostics.push(IocDiagnostic::WeakExcitation { min_eig: e }),
        _ => {}
    }

    let objective = assemble_objective(ds, refs, sys, noise)?;
    let (program, layout) = assemble_program(&objective, sys, refs, cfg)?;
    let sol = backend.solve(&normalized(&program)?)?;
    match sol.status {
        SolveStatus::Infeasible | SolveStatus::Unbounded => {
            return Err(Error::Solver(format!("estimation program reported {}", sol.status)));
        }
        SolveStatus::MaxIter => {
            diagnostics.push(IocDiagnostic::SolverStopped { status: sol.status, iterations: sol.iterations })
        }
        SolveStatus::Optimal => {}
    }
    let point = layout.extract(&sol.x)?;
    let q_raw = linalg::symmetrize(&point.q);
    let q_min = linalg::min_eigenvalue(&q_raw);
    let q_est = if q_min < 0.0 {
        diagnostics.push(IocDiagnostic::QProjected { min_eig: q_min });
        linalg::project_psd(&q_raw)
    } else {
        q_raw.clone()
    };
    let q_lin = q_lin_map(&q_est, refs, &layout);
    let objective_value = objective.eval(&point)?;
    let feasibility = feasibility_check(&point, sys, refs, cfg)?;
    for d in &diagnostics {
        log::warn!("{d}");
    }
    Ok(IocSolution {
        q_est,
        q_raw,
        point,
        q_lin,
        objective_value,
        status: sol.status,
        iterations: sol.iterations,
        primal_residual: sol.primal_residual,
        dual_residual: sol.dual_residual,
        gap: sol.gap,
        feasibility,
        excitation,
        diagnostics,
    })
}

/// Same constraints with the cost divided by its largest magnitude.
fn normalized(p: &ConicProgram) -> Result<ConicProgram> {
    let scale = p.c().iter().fold(0.0_f64, |a, b| a.max(b.abs()));
    if scale == 0.0 {
        return Ok(p.clone());
    }
    let c = p.c().iter().map(|v| v / scale).collect();
    ConicProgram::new(c, p.a().clone(), p.b().to_vec(), p.cones().to_vec())
}

fn q_lin_map(q: &Mat, refs: &References, layout: &ProgramLayout) -> BTreeMap<String, Vec<Vector>> {
    layout
        .chain_ids
        .iter()
        .map(|id| (id.clone(), refs[id].samples().iter().map(|xr| -(q * xr)).collect()))
        .collect()
}
