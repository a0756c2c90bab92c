//! Slow reference implementations used to cross-check the fast paths.

use crate::data::{Dataset, Trajectory};
use crate::ioc::{Candidate, Chain, References};
use crate::linalg::{Mat, Vector};
use crate::lq::{CostParams, DiscreteLti, NoiseModel, ReferenceSignal};
use crate::{Error, Result};

/// KKT system of the noiseless tracking problem over stacked variables
/// `z = [x_s, …, x_{nu2}, u_s, …, u_{nu2-1}]`, with multipliers for
/// `x_s = x_start` and `x_{t+1} = A x_t + B u_t` appended.
#[derive(Debug, Clone)]
pub struct StackedQp {
    pub kkt: Mat,
    pub rhs: Vector,
    n: usize,
    m: usize,
    horizon: usize,
    nu2: usize,
}

impl StackedQp {
    pub fn build(
        sys: &DiscreteLti,
        cost: &CostParams,
        reference: &ReferenceSignal,
        x_start: &Vector,
        horizon: usize,
    ) -> Result<Self> {
        let (n, m, nu2) = (sys.n(), sys.m(), reference.nu2());
        if horizon == 0 || horizon > nu2 {
            return Err(Error::IndexOutOfRange { index: horizon, lo: 1, hi: nu2 });
        }
        if x_start.len() != n || cost.n() != n || reference.n() != n {
            return Err(Error::Dimension("state sizes disagree".into()));
        }
        let s = nu2 - horizon + 1;
        let nx = horizon * n;
        let nz = nx + (horizon - 1) * m;
        let nc = horizon * n;
        let mut kkt = Mat::zeros(nz + nc, nz + nc);
        let mut rhs = Vector::zeros(nz + nc);
        let q = cost.q();
        for k in 0..horizon {
            let o = k * n;
            kkt.view_mut((o, o), (n, n)).copy_from(q);
            rhs.rows_mut(o, n).copy_from(&(q * reference.at(s + k)));
        }
        for k in 0..horizon - 1 {
            let o = nx + k * m;
            kkt.view_mut((o, o), (m, m)).fill_with_identity();
        }
        let mut put = |r: usize, c: usize, blk: &Mat| {
            kkt.view_mut((nz + r, c), blk.shape()).copy_from(blk);
            kkt.view_mut((c, nz + r), (blk.ncols(), blk.nrows())).copy_from(&blk.transpose());
        };
        put(0, 0, &Mat::identity(n, n));
        for k in 0..horizon - 1 {
            let r = (k + 1) * n;
            put(r, (k + 1) * n, &Mat::identity(n, n));
            put(r, k * n, &(-sys.a()));
            put(r, nx + k * m, &(-sys.b()));
        }
        rhs.rows_mut(nz, n).copy_from(x_start);
        Ok(Self { kkt, rhs, n, m, horizon, nu2 })
    }

    pub fn solve(&self) -> Result<Vector> {
        self.kkt
            .clone()
            .lu()
            .solve(&self.rhs)
            .ok_or_else(|| Error::Numeric("KKT matrix is singular".into()))
    }

    /// `‖K z − r‖∞ / (‖K‖∞ ‖z‖∞ + ‖r‖∞)`.
    pub fn residual(&self, sol: &Vector) -> f64 {
        let res = (&self.kkt * sol - &self.rhs).amax();
        let k_inf = self.kkt.row_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
        let denom = k_inf * sol.amax() + self.rhs.amax();
        if denom == 0.0 {
            res
        } else {
            res / denom
        }
    }

    pub fn to_trajectory(&self, sol: &Vector, ref_id: &str) -> Result<Trajectory> {
        let (n, m, h) = (self.n, self.m, self.horizon);
        let states = (0..h).map(|k| sol.rows(k * n, n).into_owned()).collect();
        let controls = (0..h - 1).map(|k| sol.rows(h * n + k * m, m).into_owned()).collect();
        Trajectory::new(String::new(), self.nu2, h, states, Some(controls), ref_id.to_string())
    }
}

/// Noiseless optimal trajectory from the stacked KKT system.
pub fn qp_forward_solve(
    sys: &DiscreteLti,
    cost: &CostParams,
    reference: &ReferenceSignal,
    x_start: &Vector,
    horizon: usize,
) -> Result<Trajectory> {
    let qp = StackedQp::build(sys, cost, reference, x_start, horizon)?;
    let sol = qp.solve()?;
    let res = qp.residual(&sol);
    if res > 1e-10 {
        log::warn!("KKT residual {res:.3e}");
    }
    qp.to_trajectory(&sol, reference.id())
}

fn quad(x: &Vector, p: &Mat) -> f64 {
    x.dot(&(p * x))
}

fn noise_trace(sys: &DiscreteLti, p_next: &Mat, noise: &NoiseModel) -> f64 {
    (sys.b().transpose() * p_next * sys.b() * noise.sigma_w()).trace()
}

fn check_chain(tr: &Trajectory, chain: &Chain, q: &Mat, reference: &ReferenceSignal) -> Result<()> {
    let nu2 = tr.nu2();
    if reference.nu2() != nu2 || chain.p.len() != nu2 || chain.eta.len() != nu2 || chain.xi.len() + 1 != nu2 {
        return Err(Error::Dimension("chain, reference and trajectory disagree on nu2".into()));
    }
    if q.nrows() != tr.n() {
        return Err(Error::Dimension("Q and trajectory disagree on n".into()));
    }
    Ok(())
}

/// One trajectory's term of the empirical objective, in boundary form. Uses
/// the observed states only; `P_{nu2}` is taken to be `Q`.
pub fn psi_boundary(
    tr: &Trajectory,
    q: &Mat,
    chain: &Chain,
    reference: &ReferenceSignal,
    sys: &DiscreteLti,
    noise: &NoiseModel,
) -> Result<f64> {
    check_chain(tr, chain, q, reference)?;
    let nu2 = tr.nu2();
    let s = tr.start_time();
    let p_at = |t: usize| if t == nu2 { q } else { &chain.p[t - 1] };
    let (xe, xs) = (tr.state_at(nu2), tr.state_at(s));
    let mut v = 0.5 * quad(&xe, q) + chain.eta[nu2 - 1].dot(&xe) - 0.5 * quad(&xs, p_at(s)) - chain.eta[s - 1].dot(&xs);
    for t in s..nu2 {
        let x = tr.state_at(t);
        let q_lin = -(q * reference.at(t));
        v += 0.5 * chain.xi[t - 1] + 0.5 * quad(&x, q) + q_lin.dot(&x) - 0.5 * noise_trace(sys, p_at(t + 1), noise);
    }
    Ok(v)
}

/// The same quantity summed step by step with `x_{t+1}` replaced by
/// `A x_t + B u_t` from the stored controls.
pub fn psi_stepwise(
    tr: &Trajectory,
    q: &Mat,
    chain: &Chain,
    reference: &ReferenceSignal,
    sys: &DiscreteLti,
    noise: &NoiseModel,
) -> Result<f64> {
    check_chain(tr, chain, q, reference)?;
    let controls = tr.controls().ok_or_else(|| Error::InvalidInput(format!("trajectory `{}` has no controls", tr.id())))?;
    let nu2 = tr.nu2();
    let s = tr.start_time();
    let p_at = |t: usize| if t == nu2 { q } else { &chain.p[t - 1] };
    let mut v = 0.0;
    for (k, t) in (s..nu2).enumerate() {
        let x = tr.state_at(t);
        let next = sys.step(&x, &controls[k]);
        let q_lin = -(q * reference.at(t));
        v += 0.5 * quad(&next, p_at(t + 1)) + chain.eta[t].dot(&next) - 0.5 * quad(&x, p_at(t)) - chain.eta[t - 1].dot(&x)
            + 0.5 * chain.xi[t - 1]
            + 0.5 * quad(&x, q)
            + q_lin.dot(&x)
            - 0.5 * noise_trace(sys, p_at(t + 1), noise);
    }
    Ok(v)
}

/// `|boundary form − step-sum form|`; small exactly when the stored controls
/// reproduce the stored states.
pub fn telescoping_check(
    tr: &Trajectory,
    q: &Mat,
    chain: &Chain,
    reference: &ReferenceSignal,
    sys: &DiscreteLti,
    noise: &NoiseModel,
) -> Result<f64> {
    let step = psi_stepwise(tr, q, chain, reference, sys, noise)?;
    let boundary = psi_boundary(tr, q, chain, reference, sys, noise)?;
    Ok((boundary - step).abs())
}

/// Dataset mean of [`psi_boundary`].
pub fn empirical_objective(
    point: &Candidate,
    ds: &Dataset,
    refs: &References,
    sys: &DiscreteLti,
    noise: &NoiseModel,
) -> Result<f64> {
    if ds.is_empty() {
        return Err(Error::InvalidInput("dataset is empty".into()));
    }
    let mut total = 0.0;
    for tr in ds.trajectories() {
        let r = refs.get(tr.ref_id()).ok_or_else(|| Error::UnknownReference(tr.ref_id().to_string()))?;
        let ch = point.chain(tr.ref_id()).ok_or_else(|| Error::UnknownReference(tr.ref_id().to_string()))?;
        total += psi_boundary(tr, &point.q, ch, r, sys, noise)?;
    }
    Ok(total / ds.len() as f64)
}

/// Candidate set for the direct search.
#[derive(Debug, Clone, PartialEq)]
pub enum SearchGrid {
    /// `Q = L Lᵀ`; one value list per lower-triangular entry of `L`, column
    /// by column. Candidates enumerate the Cartesian product with the last
    /// entry varying fastest.
    Cholesky { n: usize, entries: Vec<Vec<f64>> },
    /// `Q = c I` for each listed `c ≥ 0`.
    Scalar { n: usize, values: Vec<f64> },
    Explicit(Vec<Mat>),
}

impl SearchGrid {
    pub fn candidates(&self) -> Result<Vec<Mat>> {
        match self {
            SearchGrid::Explicit(list) => Ok(list.clone()),
            SearchGrid::Scalar { n, values } => Ok(values.iter().map(|&c| Mat::identity(*n, *n) * c).collect()),
            SearchGrid::Cholesky { n, entries } => {
                let n = *n;
                if entries.len() != n * (n + 1) / 2 {
                    return Err(Error::Dimension(format!("need {} entry lists for n = {n}", n * (n + 1) / 2)));
                }
                if entries.iter().any(|e| e.is_empty()) {
                    return Ok(Vec::new());
                }
                let mut out = Vec::new();
                let mut idx = vec![0usize; entries.len()];
                loop {
                    let mut l = Mat::zeros(n, n);
                    let mut k = 0;
                    for j in 0..n {
                        for i in j..n {
                            l[(i, j)] = entries[k][idx[k]];
                            k += 1;
                        }
                    }
                    out.push(&l * l.transpose());
                    let mut pos = entries.len();
                    loop {
                        if pos == 0 {
                            return Ok(out);
                        }
                        pos -= 1;
                        idx[pos] += 1;
                        if idx[pos] < entries[pos].len() {
                            break;
                        }
                        idx[pos] = 0;
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DirectSearchResult {
    pub q: Mat,
    pub index: usize,
    pub objective: f64,
    /// objective of every candidate, in grid order
    pub objectives: Vec<f64>,
}

/// Minimises the empirical objective over Riccati-generated points of the
/// grid. Ties go to the earliest candidate.
pub fn direct_search_estimator(
    ds: &Dataset,
    sys: &DiscreteLti,
    refs: &References,
    noise: &NoiseModel,
    grid: &SearchGrid,
) -> Result<DirectSearchResult> {
    let candidates = grid.candidates()?;
    if candidates.is_empty() {
        return Err(Error::InvalidInput("search grid is empty".into()));
    }
    let used: References = ds.ref_ids().into_iter().filter_map(|id| refs.get(&id).map(|r| (id, r.clone()))).collect();
    let mut objectives = Vec::with_capacity(candidates.len());
    let mut best = 0;
    for (i, q) in candidates.iter().enumerate() {
        let cost = CostParams::new(q.clone())?;
        let point = Candidate::certificate(sys, &cost, &used)?;
        let v = empirical_objective(&point, ds, &used, sys, noise)?;
        if v < objectives.get(best).copied().unwrap_or(f64::INFINITY) {
            best = i;
        }
        objectives.push(v);
    }
    Ok(DirectSearchResult { q: candidates[best].clone(), index: best, objective: objectives[best], objectives })
}
