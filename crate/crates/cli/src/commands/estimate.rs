use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use lqt_ioc::conic::SolveStatus;
use lqt_ioc::data::Dataset;
use lqt_ioc::ioc::{self, IocSolution, References};
use lqt_ioc::linalg::Mat;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::read_dataset;
use crate::config::{LoadedConfig, RunConfig};
use crate::output::{ensure_dir, rows, write_json, write_manifest};
use crate::{CliError, Options};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainFile {
    pub p: Vec<Vec<Vec<f64>>>,
    pub eta: Vec<Vec<f64>>,
    pub xi: Vec<f64>,
    /// `q_t = −Q_est x_t^r`.
    pub q: Vec<Vec<f64>>,
    pub h_min_eig: Vec<f64>,
    pub p_min_eig: Vec<f64>,
    pub schur_norm: Vec<f64>,
    pub terminal_residual: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolutionFile {
    pub q_est: Vec<Vec<f64>>,
    pub q_raw: Vec<Vec<f64>>,
    pub status: SolveStatus,
    pub feasible: bool,
    pub objective_value: f64,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
    pub q_min_eig: f64,
    pub phi_slack: f64,
    pub min_h_eig: f64,
    pub min_p_eig: f64,
    pub max_schur_norm: f64,
    pub max_terminal_residual: f64,
    pub excitation: Option<f64>,
    pub diagnostics: Vec<String>,
    pub trajectories: usize,
    pub chains: BTreeMap<String, ChainFile>,
}

impl SolutionFile {
    pub fn from_solution(sol: &IocSolution, trajectories: usize) -> Self {
        let f = &sol.feasibility;
        let chains = sol
            .point
            .chains
            .iter()
            .map(|c| {
                let report = f.chains.iter().find(|r| r.ref_id == c.ref_id);
                let file = ChainFile {
                    p: c.p.iter().map(rows).collect(),
                    eta: c.eta.iter().map(|v| v.iter().copied().collect()).collect(),
                    xi: c.xi.clone(),
                    q: sol.q_lin.get(&c.ref_id).map_or_else(Vec::new, |q| q.iter().map(|v| v.iter().copied().collect()).collect()),
                    h_min_eig: report.map_or_else(Vec::new, |r| r.h_min_eig.clone()),
                    p_min_eig: report.map_or_else(Vec::new, |r| r.p_min_eig.clone()),
                    schur_norm: report.map_or_else(Vec::new, |r| r.schur_norm.clone()),
                    terminal_residual: report.map_or(f64::NAN, |r| r.terminal_residual),
                };
                (c.ref_id.clone(), file)
            })
            .collect();
        Self {
            q_est: rows(&sol.q_est),
            q_raw: rows(&sol.q_raw),
            status: sol.status,
            feasible: f.is_feasible(),
            objective_value: sol.objective_value,
            iterations: sol.iterations,
            primal_residual: sol.primal_residual,
            dual_residual: sol.dual_residual,
            gap: sol.gap,
            q_min_eig: f.q_min_eig,
            phi_slack: f.phi_slack,
            min_h_eig: f.min_h_eig(),
            min_p_eig: f.min_p_eig(),
            max_schur_norm: f.max_schur_norm(),
            max_terminal_residual: f.max_terminal_residual(),
            excitation: sol.excitation,
            diagnostics: sol.diagnostics.iter().map(|d| d.to_string()).collect(),
            trajectories,
            chains,
        }
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read solution `{}`: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("solution `{}`: {e}", path.display())))
    }

    pub fn q_est(&self) -> Result<Mat, CliError> {
        square(&self.q_est)
    }

    pub fn succeeded(&self) -> bool {
        self.status == SolveStatus::Optimal && self.feasible
    }
}

fn square(rows: &[Vec<f64>]) -> Result<Mat, CliError> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(CliError::Config("solution: q_est must be a square matrix".into()));
    }
    Ok(Mat::from_fn(n, n, |i, j| rows[i][j]))
}

/// `q_est` of a solution file; every other field is ignored, so a file
/// holding only the matrix is accepted.
pub fn read_q_est(path: &Path) -> Result<Mat, CliError> {
    #[derive(Deserialize)]
    struct Only {
        q_est: Vec<Vec<f64>>,
    }
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read solution `{}`: {e}", path.display())))?;
    let only: Only =
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("solution `{}`: {e}", path.display())))?;
    square(&only.q_est)
}

#[derive(Debug, Clone)]
pub struct EstimateReport {
    pub solution: SolutionFile,
    pub path: PathBuf,
    pub manifest: PathBuf,
}

/// References of `cfg` used by `ds`; unknown ids are a configuration error.
pub(crate) fn dataset_references(cfg: &RunConfig, sys: &lqt_ioc::lq::DiscreteLti, ds: &Dataset) -> Result<References, CliError> {
    let mut all = cfg.references_for(sys)?;
    let mut out = References::new();
    for id in ds.ref_ids() {
        let r = all
            .remove(&id)
            .ok_or_else(|| CliError::Config(format!("dataset uses reference `{id}`, which the configuration does not define")))?;
        out.insert(id, r);
    }
    Ok(out)
}

/// Writes `solution.json` and the manifest; fails with a numeric error
/// (after writing) unless the solver reached optimality and the point
/// passes the feasibility check.
pub fn estimate(cfg: &LoadedConfig, opts: &Options) -> Result<EstimateReport, CliError> {
    let c = &cfg.config;
    let sys = c.system()?;
    let dataset_path = opts.dataset()?.clone();
    let ds = read_dataset(&dataset_path)?;
    if ds.is_empty() {
        return Err(CliError::Config(format!("dataset `{}` has no trajectories", dataset_path.display())));
    }
    let refs = dataset_references(c, &sys, &ds)?;
    let sol = ioc::solve_ioc(&ds, &refs, &sys, &c.noise(&sys)?, &c.estimator_config()?)?;
    let file = SolutionFile::from_solution(&sol, ds.len());
    ensure_dir(&opts.out)?;
    let path = opts.out.join("solution.json");
    write_json(&path, &file)?;
    let details = json!({ "status": file.status, "feasible": file.feasible, "trajectories": ds.len() });
    let manifest =
        write_manifest(&opts.out, "estimate", cfg, opts.seed, &[dataset_path.as_path()], std::slice::from_ref(&path), details)?;
    if !file.succeeded() {
        return Err(CliError::Numeric(format!(
            "estimation did not succeed: status {}, feasible {}; report written to {}",
            file.status,
            file.feasible,
            path.display()
        )));
    }
    Ok(EstimateReport { solution: file, path, manifest })
}
