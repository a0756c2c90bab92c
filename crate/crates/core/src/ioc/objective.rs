use std::collections::BTreeMap;

use super::{Candidate, References};
use crate::data::Dataset;
use crate::linalg::{Mat, Vector};
use crate::lq::{DiscreteLti, NoiseModel};
use crate::{Error, Result};

/// Coefficients of the empirical objective for one reference chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainCoefficients {
    /// on `P_t`, `t = 1..nu2-1` (terms on `P_{nu2}` are folded into `Q`)
    pub p: Vec<Mat>,
    /// on `η_t`, `t = 1..=nu2`
    pub eta: Vec<Vector>,
    /// on `ξ_t`, `t = 1..nu2-1`
    pub xi: Vec<f64>,
}

/// The empirical objective as a linear functional
/// `⟨C_Q, Q⟩ + Σ_chains Σ_t (⟨C_{P_t}, P_t⟩ + c_{η_t}ᵀη_t + c_{ξ_t}ξ_t)`.
///
/// `q_t = −Q x_t^r` and `P_{nu2} = Q` are substituted, so their data terms
/// live in `C_Q`.
#[derive(Debug, Clone, PartialEq)]
pub struct Objective {
    pub n: usize,
    pub nu2: usize,
    pub q: Mat,
    pub chains: BTreeMap<String, ChainCoefficients>,
}

fn sym_outer(a: &Vector, b: &Vector) -> Mat {
    let ab = a * b.transpose();
    (&ab + ab.transpose()) * 0.5
}

/// Builds the empirical objective. Trajectories are visited in dataset order,
/// so the coefficients are reproducible bit for bit.
pub fn assemble_objective(ds: &Dataset, refs: &References, sys: &DiscreteLti, noise: &NoiseModel) -> Result<Objective> {
    if ds.is_empty() {
        return Err(Error::InvalidInput("dataset is empty".into()));
    }
    let (n, nu2) = (ds.n(), ds.nu2());
    if sys.n() != n {
        return Err(Error::Dimension(format!("dataset has n = {n}, system has n = {}", sys.n())));
    }
    if noise.m() != sys.m() {
        return Err(Error::Dimension("Σ_w size differs from the input dimension".into()));
    }
    let noise_term = sys.b() * noise.sigma_w() * sys.b().transpose() * 0.5;
    let mut q = Mat::zeros(n, n);
    let mut chains = BTreeMap::new();
    for id in ds.ref_ids() {
        let r = refs.get(&id).ok_or_else(|| Error::UnknownReference(id.clone()))?;
        if r.nu2() != nu2 || r.n() != n {
            return Err(Error::Dimension(format!("reference `{id}` does not match the dataset's nu2/n")));
        }
        chains.insert(
            id,
            ChainCoefficients { p: vec![Mat::zeros(n, n); nu2 - 1], eta: vec![Vector::zeros(n); nu2], xi: vec![0.0; nu2 - 1] },
        );
    }
    for tr in ds.trajectories() {
        let r = &refs[tr.ref_id()];
        let cc = chains.get_mut(tr.ref_id()).expect("chain created for every ref id");
        let s = tr.start_time();
        let x_end = tr.state_at(nu2);
        let x_s = tr.state_at(s);
        q += &x_end * x_end.transpose() * 0.5;
        cc.eta[nu2 - 1] += &x_end;
        let start_term = &x_s * x_s.transpose() * 0.5;
        if s == nu2 {
            q -= start_term;
        } else {
            cc.p[s - 1] -= start_term;
        }
        cc.eta[s - 1] -= &x_s;
        for t in s..nu2 {
            let x = tr.state_at(t);
            cc.xi[t - 1] += 0.5;
            q += &x * x.transpose() * 0.5 - sym_outer(r.at(t), &x);
            if t + 1 == nu2 {
                q -= &noise_term;
            } else {
                cc.p[t] -= &noise_term;
            }
        }
    }
    let scale = 1.0 / ds.len() as f64;
    q *= scale;
    for cc in chains.values_mut() {
        cc.p.iter_mut().for_each(|m| *m *= scale);
        cc.eta.iter_mut().for_each(|v| *v *= scale);
        cc.xi.iter_mut().for_each(|v| *v *= scale);
    }
    Ok(Objective { n, nu2, q, chains })
}

fn inner(a: &Mat, b: &Mat) -> f64 {
    a.component_mul(b).sum()
}

impl Objective {
    /// Value at a candidate; `P_{nu2}` is taken to be `Q` regardless of what
    /// the chain stores. Chains without coefficients contribute nothing.
    pub fn eval(&self, point: &Candidate) -> Result<f64> {
        point.check_shape(self.n, self.nu2)?;
        let mut v = inner(&self.q, &point.q);
        for (id, cc) in &self.chains {
            let ch = point.chain(id).ok_or_else(|| Error::UnknownReference(id.clone()))?;
            for t in 0..self.nu2 - 1 {
                v += inner(&cc.p[t], &ch.p[t]) + cc.xi[t] * ch.xi[t];
            }
            for t in 0..self.nu2 {
                v += cc.eta[t].dot(&ch.eta[t]);
            }
        }
        Ok(v)
    }
}

pub fn evaluate_objective(
    point: &Candidate,
    ds: &Dataset,
    refs: &References,
    sys: &DiscreteLti,
    noise: &NoiseModel,
) -> Result<f64> {
    assemble_objective(ds, refs, sys, noise)?.eval(point)
}
