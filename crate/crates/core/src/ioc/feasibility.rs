use super::{Candidate, EstimatorConfig, References};
use crate::linalg::{self, Mat, Vector};
use crate::lq::DiscreteLti;
use crate::{Error, Result};

/// The `(m + n + 1)`-sided block `H_t` for stage `t`, with `q_t = −Q x_t^r`.
#[allow(clippy::too_many_arguments)]
pub fn lmi_block(
    sys: &DiscreteLti,
    x_ref: &Vector,
    q: &Mat,
    p_t: &Mat,
    p_next: &Mat,
    eta_t: &Vector,
    eta_next: &Vector,
    xi_t: f64,
) -> Mat {
    let (a, b) = (sys.a(), sys.b());
    let (n, m) = (sys.n(), sys.m());
    let q_lin = -(q * x_ref);
    let bt_p = b.transpose() * p_next;
    let r = &bt_p * b + Mat::identity(m, m);
    let s = &bt_p * a;
    let g = b.transpose() * eta_next;
    let mid = a.transpose() * p_next * a + q - p_t;
    let beta = q_lin + a.transpose() * eta_next - eta_t;
    let side = m + n + 1;
    let mut h = Mat::zeros(side, side);
    h.view_mut((0, 0), (m, m)).copy_from(&r);
    h.view_mut((0, m), (m, n)).copy_from(&s);
    h.view_mut((m, 0), (n, m)).copy_from(&s.transpose());
    h.view_mut((0, m + n), (m, 1)).copy_from(&g);
    h.view_mut((m + n, 0), (1, m)).copy_from(&g.transpose());
    h.view_mut((m, m), (n, n)).copy_from(&mid);
    h.view_mut((m, m + n), (n, 1)).copy_from(&beta);
    h.view_mut((m + n, m), (1, n)).copy_from(&beta.transpose());
    h[(m + n, m + n)] = xi_t;
    h
}

/// `H ∖ H[..m, ..m]`, the Schur complement of the leading `m×m` block.
pub fn schur_complement(h: &Mat, m: usize) -> Result<Mat> {
    let k = h.nrows() - m;
    let r = h.view((0, 0), (m, m)).into_owned();
    let off = h.view((0, m), (m, k)).into_owned();
    let chol = r.cholesky().ok_or_else(|| Error::Numeric("leading block is not positive definite".into()))?;
    Ok(h.view((m, m), (k, k)).into_owned() - off.transpose() * chol.solve(&off))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainReport {
    pub ref_id: String,
    /// smallest eigenvalue of `H_t`, `t = 1..nu2-1`
    pub h_min_eig: Vec<f64>,
    /// Frobenius norm of `H_t ∖ (BᵀP_{t+1}B + I)`
    pub schur_norm: Vec<f64>,
    /// smallest eigenvalue of `P_t`, `t = 1..=nu2`
    pub p_min_eig: Vec<f64>,
    /// `max(‖η_{nu2} + Q x_{nu2}^r‖_∞, ‖P_{nu2} − Q‖_F)`
    pub terminal_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityReport {
    pub q_min_eig: f64,
    /// `φ − ‖Q‖_F`
    pub phi_slack: f64,
    pub chains: Vec<ChainReport>,
    pub tol_psd: f64,
    pub tol_eq: f64,
}

impl FeasibilityReport {
    pub fn min_h_eig(&self) -> f64 {
        self.chains.iter().flat_map(|c| c.h_min_eig.iter().copied()).fold(f64::INFINITY, f64::min)
    }

    pub fn min_p_eig(&self) -> f64 {
        self.chains.iter().flat_map(|c| c.p_min_eig.iter().copied()).fold(f64::INFINITY, f64::min)
    }

    pub fn max_schur_norm(&self) -> f64 {
        self.chains.iter().flat_map(|c| c.schur_norm.iter().copied()).fold(0.0, f64::max)
    }

    pub fn max_terminal_residual(&self) -> f64 {
        self.chains.iter().map(|c| c.terminal_residual).fold(0.0, f64::max)
    }

    pub fn is_feasible(&self) -> bool {
        self.q_min_eig >= -self.tol_psd
            && self.min_h_eig() >= -self.tol_psd
            && self.min_p_eig() >= -self.tol_psd
            && self.max_terminal_residual() <= self.tol_eq
            && self.phi_slack >= -self.tol_eq
    }
}

/// Evaluates every constraint of the estimation problem at `point`.
pub fn feasibility_check(
    point: &Candidate,
    sys: &DiscreteLti,
    refs: &References,
    cfg: &EstimatorConfig,
) -> Result<FeasibilityReport> {
    let n = sys.n();
    let q = &point.q;
    let mut chains = Vec::with_capacity(point.chains.len());
    for ch in &point.chains {
        let r = refs.get(&ch.ref_id).ok_or_else(|| Error::UnknownReference(ch.ref_id.clone()))?;
        let nu2 = r.nu2();
        point.check_shape(n, nu2)?;
        let mut h_min_eig = Vec::with_capacity(nu2 - 1);
        let mut schur_norm = Vec::with_capacity(nu2 - 1);
        for t in 1..nu2 {
            let p_next = if t + 1 == nu2 { q } else { &ch.p[t] };
            let h = lmi_block(sys, r.at(t), q, &ch.p[t - 1], p_next, &ch.eta[t - 1], &ch.eta[t], ch.xi[t - 1]);
            h_min_eig.push(linalg::min_eigenvalue(&h));
            schur_norm.push(schur_complement(&h, sys.m())?.norm());
        }
        let p_min_eig = ch.p.iter().map(linalg::min_eigenvalue).collect();
        let eta_res = (&ch.eta[nu2 - 1] + q * r.at(nu2)).amax();
        let p_res = (&ch.p[nu2 - 1] - q).norm();
        chains.push(ChainReport {
            ref_id: ch.ref_id.clone(),
            h_min_eig,
            schur_norm,
            p_min_eig,
            terminal_residual: eta_res.max(p_res),
        });
    }
    Ok(FeasibilityReport {
        q_min_eig: linalg::min_eigenvalue(q),
        phi_slack: cfg.phi - q.norm(),
        chains,
        tol_psd: cfg.tol_psd,
        tol_eq: cfg.tol_eq,
    })
}
