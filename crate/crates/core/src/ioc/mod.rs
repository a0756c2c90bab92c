//! The convex estimator for `Q`.
//!
//! Given trajectories that all end at `nu2` but start at random times, the
//! estimator minimises an empirical functional that is linear in
//! `(Q, P_t, η_t, ξ_t)` subject to the LMIs
//!
//! ```text
//!       ⎡ BᵀP_{t+1}B + I   BᵀP_{t+1}A              Bᵀη_{t+1}            ⎤
//! H_t = ⎢       ·          AᵀP_{t+1}A + Q − P_t    q_t + Aᵀη_{t+1} − η_t ⎥ ⪰ 0
//!       ⎣       ·                 ·                ξ_t                  ⎦
//! ```
//!
//! with `P_{nu2} = Q`, `η_{nu2} = q_{nu2}`, `q_t = −Q x_t^r`, `P_t ⪰ 0` and
//! `‖Q‖_F ≤ φ`. The Riccati chain of the true `Q` makes every Schur
//! complement `H_t ∖ (BᵀP_{t+1}B + I)` vanish, which is what
//! [`Candidate::certificate`] builds.

mod estimate;
mod feasibility;
mod objective;
mod program;

use std::collections::BTreeMap;

use crate::conic::Backend;
use crate::linalg::{Mat, Vector};
use crate::lq::{self, CostParams, DiscreteLti, ReferenceSignal};
use crate::{Error, Result};

pub use estimate::{excitation_min_eigenvalue, solve_ioc, solve_ioc_with, IocDiagnostic, IocSolution};
pub use feasibility::{feasibility_check, lmi_block, schur_complement, ChainReport, FeasibilityReport};
pub use objective::{assemble_objective, evaluate_objective, Objective};
pub use program::{assemble_program, ProgramLayout};

/// Reference signals keyed by id.
pub type References = BTreeMap<String, ReferenceSignal>;

pub fn references(list: impl IntoIterator<Item = ReferenceSignal>) -> References {
    list.into_iter().map(|r| (r.id().to_string(), r)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorConfig {
    /// Radius of the Frobenius ball containing `Q`.
    pub phi: f64,
    pub tol_psd: f64,
    pub tol_eq: f64,
    /// Below this, the smallest eigenvalue of the second moment of `[x; 1]`
    /// over full-length trajectories is reported as insufficient excitation.
    pub excitation_tol: f64,
    pub solver: Backend,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self { phi: 50.0, tol_psd: 1e-6, tol_eq: 1e-6, excitation_tol: 1e-10, solver: Backend::default() }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.phi > 0.0) {
            return Err(Error::InvalidInput(format!("phi must be positive, got {}", self.phi)));
        }
        if !(self.tol_psd > 0.0) || !(self.tol_eq > 0.0) {
            return Err(Error::InvalidInput("tolerances must be positive".into()));
        }
        Ok(())
    }
}

/// Value-function chain for one reference signal.
///
/// `p[t-1]`, `eta[t-1]` hold `P_t`, `η_t` for `t = 1..=nu2` (with
/// `P_{nu2} = Q`); `xi[t-1]` holds `ξ_t` for `t = 1..nu2-1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    pub ref_id: String,
    pub p: Vec<Mat>,
    pub eta: Vec<Vector>,
    pub xi: Vec<f64>,
}

impl Chain {
    pub fn nu2(&self) -> usize {
        self.p.len()
    }

    pub fn zero(ref_id: impl Into<String>, n: usize, nu2: usize) -> Self {
        Self {
            ref_id: ref_id.into(),
            p: vec![Mat::zeros(n, n); nu2],
            eta: vec![Vector::zeros(n); nu2],
            xi: vec![0.0; nu2 - 1],
        }
    }
}

/// A point `(Q, {P_t, η_t, ξ_t} per reference)` of the estimation problem.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub q: Mat,
    pub chains: Vec<Chain>,
}

impl Candidate {
    /// Riccati-generated point with `ξ_t = g_tᵀ(BᵀP_{t+1}B + I)⁻¹g_t`; one chain
    /// per reference, in key order.
    pub fn certificate(sys: &DiscreteLti, cost: &CostParams, refs: &References) -> Result<Self> {
        let mut chains = Vec::with_capacity(refs.len());
        for r in refs.values() {
            let b = lq::riccati(sys, cost, r)?;
            chains.push(Chain { ref_id: b.ref_id, p: b.p, eta: b.eta, xi: b.xi_cert });
        }
        Ok(Self { q: cost.q().clone(), chains })
    }

    pub fn zero(n: usize, nu2: usize, ref_ids: &[String]) -> Self {
        Self { q: Mat::zeros(n, n), chains: ref_ids.iter().map(|id| Chain::zero(id.clone(), n, nu2)).collect() }
    }

    pub fn chain(&self, ref_id: &str) -> Option<&Chain> {
        self.chains.iter().find(|c| c.ref_id == ref_id)
    }

    /// `α·self + (1 − α)·other`, chain by chain.
    pub fn blend(&self, other: &Candidate, alpha: f64) -> Result<Candidate> {
        if self.chains.len() != other.chains.len() {
            return Err(Error::Dimension("candidates have different chain counts".into()));
        }
        let mix_m = |a: &Mat, b: &Mat| a * alpha + b * (1.0 - alpha);
        let mix_v = |a: &Vector, b: &Vector| a * alpha + b * (1.0 - alpha);
        let chains = self
            .chains
            .iter()
            .zip(&other.chains)
            .map(|(a, b)| Chain {
                ref_id: a.ref_id.clone(),
                p: a.p.iter().zip(&b.p).map(|(x, y)| mix_m(x, y)).collect(),
                eta: a.eta.iter().zip(&b.eta).map(|(x, y)| mix_v(x, y)).collect(),
                xi: a.xi.iter().zip(&b.xi).map(|(x, y)| alpha * x + (1.0 - alpha) * y).collect(),
            })
            .collect();
        Ok(Candidate { q: mix_m(&self.q, &other.q), chains })
    }

    pub(crate) fn check_shape(&self, n: usize, nu2: usize) -> Result<()> {
        if self.q.nrows() != n || self.q.ncols() != n {
            return Err(Error::Dimension(format!("Q is {}x{}, expected {n}x{n}", self.q.nrows(), self.q.ncols())));
        }
        for c in &self.chains {
            if c.p.len() != nu2 || c.eta.len() != nu2 || c.xi.len() + 1 != nu2 {
                return Err(Error::Dimension(format!("chain `{}` does not cover t = 1..={nu2}", c.ref_id)));
            }
            if c.p.iter().any(|p| p.nrows() != n || p.ncols() != n) || c.eta.iter().any(|e| e.len() != n) {
                return Err(Error::Dimension(format!("chain `{}` has entries of the wrong size", c.ref_id)));
            }
        }
        Ok(())
    }
}
