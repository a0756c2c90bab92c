use super::feasibility::lmi_block;
use super::{Candidate, Chain, EstimatorConfig, Objective, References};
use crate::conic::{smat, svec_len, svec_unchecked, Cone, ConicProgram, SparseMatrix};
use crate::linalg::{Mat, Vector};
use crate::lq::DiscreteLti;
use crate::{Error, Result};

/// Where each unknown lives in the conic variable vector.
///
/// Each reference chain occupies a contiguous block ordered by time,
/// `[svec P_1, η_1, ξ_1, svec P_2, η_2, ξ_2, …, η_{nu2}]`, and `svec Q` comes
/// last.
#[derive(Debug, Clone, PartialEq)]
pub struct ProgramLayout {
    pub n: usize,
    pub m: usize,
    pub nu2: usize,
    pub chain_ids: Vec<String>,
    pub num_vars: usize,
}

impl ProgramLayout {
    fn new(n: usize, m: usize, nu2: usize, chain_ids: Vec<String>) -> Self {
        let mut l = Self { n, m, nu2, chain_ids, num_vars: 0 };
        l.num_vars = l.chain_ids.len() * l.chain_len() + l.nq();
        l
    }

    pub fn nq(&self) -> usize {
        svec_len(self.n)
    }

    fn stage_len(&self) -> usize {
        self.nq() + self.n + 1
    }

    fn chain_len(&self) -> usize {
        (self.nu2 - 1) * self.stage_len() + self.n
    }

    pub fn q_offset(&self) -> usize {
        self.chain_ids.len() * self.chain_len()
    }

    /// Start of `svec P_t`, `1 ≤ t < nu2`.
    pub fn p_offset(&self, chain: usize, t: usize) -> usize {
        debug_assert!((1..self.nu2).contains(&t));
        chain * self.chain_len() + (t - 1) * self.stage_len()
    }

    /// Start of `η_t`, `1 ≤ t ≤ nu2`.
    pub fn eta_offset(&self, chain: usize, t: usize) -> usize {
        chain * self.chain_len() + (t - 1) * self.stage_len() + if t < self.nu2 { self.nq() } else { 0 }
    }

    /// Index of `ξ_t`, `1 ≤ t < nu2`.
    pub fn xi_index(&self, chain: usize, t: usize) -> usize {
        self.p_offset(chain, t) + self.nq() + self.n
    }

    /// Reads a candidate back from a variable vector; `P_{nu2}` is set to `Q`.
    pub fn extract(&self, x: &[f64]) -> Result<Candidate> {
        if x.len() != self.num_vars {
            return Err(Error::Dimension(format!("expected {} variables, got {}", self.num_vars, x.len())));
        }
        let (n, nq, nu2) = (self.n, self.nq(), self.nu2);
        let qo = self.q_offset();
        let q = smat(&x[qo..qo + nq])?;
        let chains = self
            .chain_ids
            .iter()
            .enumerate()
            .map(|(c, id)| {
                let mut p = Vec::with_capacity(nu2);
                let mut eta = Vec::with_capacity(nu2);
                let mut xi = Vec::with_capacity(nu2 - 1);
                for t in 1..nu2 {
                    let po = self.p_offset(c, t);
                    p.push(smat(&x[po..po + nq])?);
                    let eo = self.eta_offset(c, t);
                    eta.push(Vector::from_column_slice(&x[eo..eo + n]));
                    xi.push(x[self.xi_index(c, t)]);
                }
                p.push(q.clone());
                let eo = self.eta_offset(c, nu2);
                eta.push(Vector::from_column_slice(&x[eo..eo + n]));
                Ok(Chain { ref_id: id.clone(), p, eta, xi })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Candidate { q, chains })
    }

    /// Inverse of [`extract`](Self::extract); the stored `P_{nu2}` is ignored.
    pub fn pack(&self, point: &Candidate) -> Result<Vec<f64>> {
        point.check_shape(self.n, self.nu2)?;
        let mut x = vec![0.0; self.num_vars];
        let (n, nq) = (self.n, self.nq());
        let qo = self.q_offset();
        x[qo..qo + nq].copy_from_slice(&svec_unchecked(&point.q));
        for (c, id) in self.chain_ids.iter().enumerate() {
            let ch = point.chain(id).ok_or_else(|| Error::UnknownReference(id.clone()))?;
            for t in 1..self.nu2 {
                let po = self.p_offset(c, t);
                x[po..po + nq].copy_from_slice(&svec_unchecked(&ch.p[t - 1]));
                x[self.xi_index(c, t)] = ch.xi[t - 1];
            }
            for t in 1..=self.nu2 {
                let eo = self.eta_offset(c, t);
                x[eo..eo + n].copy_from_slice(ch.eta[t - 1].as_slice());
            }
        }
        Ok(x)
    }
}

fn unit_sym(n: usize, k: usize) -> Mat {
    let mut v = vec![0.0; svec_len(n)];
    v[k] = 1.0;
    smat(&v).expect("triangular length")
}

fn unit_vec(n: usize, i: usize) -> Vector {
    let mut v = Vector::zeros(n);
    v[i] = 1.0;
    v
}

/// Lowers the estimation problem into `min cᵀx s.t. Ax + s = b, s ∈ K`.
///
/// Row blocks, in order: the terminal equalities `η_{nu2} + Q x_{nu2}^r = 0`
/// (one zero cone of `n` rows per chain), the ball `(1, svec Q / φ)` as a
/// second-order cone, `Q ⪰ 0`, every `P_t ⪰ 0` (chain by chain), then every
/// `H_t ⪰ 0`. The cost is the objective's coefficients, unscaled.
pub fn assemble_program(
    objective: &Objective,
    sys: &DiscreteLti,
    refs: &References,
    cfg: &EstimatorConfig,
) -> Result<(ConicProgram, ProgramLayout)> {
    cfg.validate()?;
    let (n, m, nu2) = (sys.n(), sys.m(), objective.nu2);
    if objective.n != n {
        return Err(Error::Dimension("objective and system have different state sizes".into()));
    }
    let ids: Vec<String> = objective.chains.keys().cloned().collect();
    let layout = ProgramLayout::new(n, m, nu2, ids);
    let nq = layout.nq();
    let qo = layout.q_offset();

    let mut c = vec![0.0; layout.num_vars];
    c[qo..qo + nq].copy_from_slice(&svec_unchecked(&objective.q));
    for (ci, id) in layout.chain_ids.iter().enumerate() {
        let cc = &objective.chains[id];
        for t in 1..nu2 {
            let po = layout.p_offset(ci, t);
            c[po..po + nq].copy_from_slice(&svec_unchecked(&cc.p[t - 1]));
            c[layout.xi_index(ci, t)] = cc.xi[t - 1];
        }
        for t in 1..=nu2 {
            let eo = layout.eta_offset(ci, t);
            c[eo..eo + n].copy_from_slice(cc.eta[t - 1].as_slice());
        }
    }

    let mut trip: Vec<(usize, usize, f64)> = Vec::new();
    let mut b: Vec<f64> = Vec::new();
    let mut cones: Vec<Cone> = Vec::new();

    // η_{nu2} + Q x^r = 0
    let q_units: Vec<Mat> = (0..nq).map(|k| unit_sym(n, k)).collect();
    for (ci, id) in layout.chain_ids.iter().enumerate() {
        let r = refs.get(id).ok_or_else(|| Error::UnknownReference(id.clone()))?;
        if r.nu2() != nu2 || r.n() != n {
            return Err(Error::Dimension(format!("reference `{id}` does not match the objective")));
        }
        let row0 = b.len();
        let eo = layout.eta_offset(ci, nu2);
        for i in 0..n {
            trip.push((row0 + i, eo + i, 1.0));
        }
        for (k, e) in q_units.iter().enumerate() {
            let col = e * r.at(nu2);
            for i in 0..n {
                trip.push((row0 + i, qo + k, col[i]));
            }
        }
        b.extend(std::iter::repeat_n(0.0, n));
        cones.push(Cone::Zero(n));
    }

    // (1, svec Q / φ) in the second-order cone; keeps φ out of ‖b‖∞
    let row0 = b.len();
    b.push(1.0);
    for k in 0..nq {
        trip.push((row0 + 1 + k, qo + k, -1.0 / cfg.phi));
        b.push(0.0);
    }
    cones.push(Cone::Soc(1 + nq));

    let push_psd_var = |trip: &mut Vec<_>, b: &mut Vec<f64>, cones: &mut Vec<Cone>, off: usize| {
        let row0 = b.len();
        for k in 0..nq {
            trip.push((row0 + k, off + k, -1.0));
            b.push(0.0);
        }
        cones.push(Cone::Psd(n));
    };
    push_psd_var(&mut trip, &mut b, &mut cones, qo);
    for ci in 0..layout.chain_ids.len() {
        for t in 1..nu2 {
            push_psd_var(&mut trip, &mut b, &mut cones, layout.p_offset(ci, t));
        }
    }

    let side = m + n + 1;
    let zn = Mat::zeros(n, n);
    let zv = Vector::zeros(n);
    for (ci, id) in layout.chain_ids.iter().enumerate() {
        let r = &refs[id];
        for t in 1..nu2 {
            let xr = r.at(t);
            let terminal = t + 1 == nu2;
            let h0 = lmi_block(sys, xr, &zn, &zn, &zn, &zv, &zv, 0.0);
            let h0v = svec_unchecked(&h0);
            let row0 = b.len();
            b.extend_from_slice(&h0v);
            let add_col = |trip: &mut Vec<_>, col: usize, h: Mat| {
                for (i, v) in svec_unchecked(&h).iter().zip(&h0v).map(|(a, z)| a - z).enumerate() {
                    if v != 0.0 {
                        trip.push((row0 + i, col, -v));
                    }
                }
            };
            for (k, e) in q_units.iter().enumerate() {
                let p_next = if terminal { e } else { &zn };
                add_col(&mut trip, qo + k, lmi_block(sys, xr, e, &zn, p_next, &zv, &zv, 0.0));
                add_col(&mut trip, layout.p_offset(ci, t) + k, lmi_block(sys, xr, &zn, e, &zn, &zv, &zv, 0.0));
                if !terminal {
                    add_col(
                        &mut trip,
                        layout.p_offset(ci, t + 1) + k,
                        lmi_block(sys, xr, &zn, &zn, e, &zv, &zv, 0.0),
                    );
                }
            }
            for i in 0..n {
                let e = unit_vec(n, i);
                add_col(&mut trip, layout.eta_offset(ci, t) + i, lmi_block(sys, xr, &zn, &zn, &zn, &e, &zv, 0.0));
                add_col(&mut trip, layout.eta_offset(ci, t + 1) + i, lmi_block(sys, xr, &zn, &zn, &zn, &zv, &e, 0.0));
            }
            add_col(&mut trip, layout.xi_index(ci, t), lmi_block(sys, xr, &zn, &zn, &zn, &zv, &zv, 1.0));
            cones.push(Cone::Psd(side));
        }
    }

    let a = SparseMatrix::from_triplets(b.len(), layout.num_vars, &trip)?;
    Ok((ConicProgram::new(c, a, b, cones)?, layout))
}
