//! Forward linear-quadratic tracking: plant models, the tracking Riccati
//! recursion, the affine optimal control law and trajectory simulation.
//!
//! Time indices follow the usual 1-based convention of the tracking problem:
//! a reference of length `nu2` has samples at `t = 1..=nu2`, and a trajectory
//! with horizon `N` is active on `t = nu2 - N + 1..=nu2`.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::data::Trajectory;
use crate::linalg::{self, Mat, Vector};
use crate::{seed, Error, Result};

/// Condition number above which `A` is treated as singular.
pub const DEFAULT_MAX_CONDITION: f64 = 1e12;
/// Relative singular-value cut used by rank checks.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;
/// Relative tolerance for PSD and symmetry checks on cost matrices.
pub const DEFAULT_TOL_PSD: f64 = 1e-9;
/// Riccati symmetry drift beyond which the recursion is aborted.
pub const RICCATI_SYMMETRY_TOL: f64 = 1e-8;

/// Continuous-time plant `ẋ = Â x + B̂ u`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousLti {
    pub a_hat: Mat,
    pub b_hat: Mat,
}

impl ContinuousLti {
    pub fn new(a_hat: Mat, b_hat: Mat) -> Result<Self> {
        if !a_hat.is_square() || b_hat.nrows() != a_hat.nrows() {
            return Err(Error::Dimension(format!(
                "A_hat is {}x{}, B_hat is {}x{}",
                a_hat.nrows(),
                a_hat.ncols(),
                b_hat.nrows(),
                b_hat.ncols()
            )));
        }
        if !linalg::all_finite(&a_hat) || !linalg::all_finite(&b_hat) {
            return Err(Error::Numeric("continuous-time matrices contain non-finite entries".into()));
        }
        Ok(Self { a_hat, b_hat })
    }

    /// Point mass `mass` on a light rod of length `length` rotating about an axis:
    /// state is (angle, angular rate), input is torque.
    pub fn rotating_mass(mass: f64, length: f64) -> Result<Self> {
        let inertia = mass * length * length;
        Self::new(
            Mat::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
            Mat::from_row_slice(2, 1, &[0.0, 1.0 / inertia]),
        )
    }
}

/// Discrete-time plant `x_{t+1} = A x_t + B u_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteLti {
    a: Mat,
    b: Mat,
    dt: Option<f64>,
}

impl DiscreteLti {
    pub fn new(a: Mat, b: Mat, dt: Option<f64>) -> Result<Self> {
        Self::with_tolerances(a, b, dt, DEFAULT_MAX_CONDITION, DEFAULT_RANK_TOL)
    }

    /// Validates invertibility of `A`, full column rank of `B` and controllability.
    pub fn with_tolerances(a: Mat, b: Mat, dt: Option<f64>, max_cond: f64, rank_tol: f64) -> Result<Self> {
        let n = a.nrows();
        if !a.is_square() || b.nrows() != n || b.ncols() == 0 || n == 0 {
            return Err(Error::Dimension(format!(
                "A is {}x{}, B is {}x{}",
                a.nrows(),
                a.ncols(),
                b.nrows(),
                b.ncols()
            )));
        }
        if !linalg::all_finite(&a) || !linalg::all_finite(&b) {
            return Err(Error::Numeric("system matrices contain non-finite entries".into()));
        }
        let cond = linalg::condition_number(&a);
        if !(cond <= max_cond) {
            return Err(Error::Structural(format!("A is not invertible (condition number {cond:.3e})")));
        }
        let m = b.ncols();
        if linalg::rank(&b, rank_tol) < m {
            return Err(Error::Structural("B does not have full column rank".into()));
        }
        let ctrb = controllability_matrix(&a, &b);
        if linalg::rank(&ctrb, rank_tol) < n {
            return Err(Error::Structural("(A, B) is not controllable".into()));
        }
        Ok(Self { a, b, dt })
    }

    pub fn a(&self) -> &Mat {
        &self.a
    }

    pub fn b(&self) -> &Mat {
        &self.b
    }

    pub fn dt(&self) -> Option<f64> {
        self.dt
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    pub fn step(&self, x: &Vector, u: &Vector) -> Vector {
        &self.a * x + &self.b * u
    }
}

/// `[B, AB, …, A^{n-1}B]`.
pub fn controllability_matrix(a: &Mat, b: &Mat) -> Mat {
    let n = a.nrows();
    let m = b.ncols();
    let mut out = Mat::zeros(n, n * m);
    let mut block = b.clone();
    for k in 0..n {
        out.view_mut((0, k * m), (n, m)).copy_from(&block);
        block = a * block;
    }
    out
}

/// Zero-order-hold discretisation through the exponential of the augmented
/// generator `[[Â, B̂], [0, 0]]·dt`.
pub fn discretize(cont: &ContinuousLti, dt: f64) -> Result<DiscreteLti> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidInput(format!("sampling period must be positive, got {dt}")));
    }
    let n = cont.a_hat.nrows();
    let m = cont.b_hat.ncols();
    let mut aug = DMatrix::zeros(n + m, n + m);
    aug.view_mut((0, 0), (n, n)).copy_from(&(&cont.a_hat * dt));
    aug.view_mut((0, n), (n, m)).copy_from(&(&cont.b_hat * dt));
    let e = aug.exp();
    if !linalg::all_finite(&e) {
        return Err(Error::Numeric("matrix exponential overflowed".into()));
    }
    let a = e.view((0, 0), (n, n)).into_owned();
    let b = e.view((0, n), (n, m)).into_owned();
    DiscreteLti::new(a, b, Some(dt))
}

/// Known tracking target `x_t^r`, `t = 1..=nu2`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSignal {
    id: String,
    samples: Vec<Vector>,
}

impl ReferenceSignal {
    pub fn new(id: impl Into<String>, samples: Vec<Vector>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidInput("reference signal is empty".into()));
        }
        let n = samples[0].len();
        if samples.iter().any(|s| s.len() != n) {
            return Err(Error::Dimension("reference samples have inconsistent lengths".into()));
        }
        if samples.iter().any(|s| s.iter().any(|v| !v.is_finite())) {
            return Err(Error::Numeric("reference contains non-finite entries".into()));
        }
        Ok(Self { id: id.into(), samples })
    }

    pub fn zero(id: impl Into<String>, n: usize, nu2: usize) -> Self {
        Self { id: id.into(), samples: vec![Vector::zeros(n); nu2] }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn nu2(&self) -> usize {
        self.samples.len()
    }

    pub fn n(&self) -> usize {
        self.samples[0].len()
    }

    /// Sample at 1-based time `t`.
    pub fn at(&self, t: usize) -> &Vector {
        &self.samples[t - 1]
    }

    pub fn samples(&self) -> &[Vector] {
        &self.samples
    }
}

/// State weight `Q`; the control weight is the identity.
#[derive(Debug, Clone, PartialEq)]
pub struct CostParams {
    q: Mat,
}

impl CostParams {
    pub fn new(q: Mat) -> Result<Self> {
        Self::with_tolerance(q, DEFAULT_TOL_PSD)
    }

    pub fn with_tolerance(q: Mat, tol_psd: f64) -> Result<Self> {
        if !q.is_square() {
            return Err(Error::Dimension(format!("Q is {}x{}", q.nrows(), q.ncols())));
        }
        if !linalg::all_finite(&q) {
            return Err(Error::Numeric("Q contains non-finite entries".into()));
        }
        if linalg::asymmetry(&q) > tol_psd {
            return Err(Error::InvalidInput("Q is not symmetric".into()));
        }
        let q = linalg::symmetrize(&q);
        let scale = q.norm().max(1.0);
        let lo = linalg::min_eigenvalue(&q);
        if lo < -tol_psd * scale {
            return Err(Error::InvalidInput(format!("Q is not PSD (min eigenvalue {lo:.3e})")));
        }
        Ok(Self { q })
    }

    /// Additionally require `‖Q‖_F ≤ phi`.
    pub fn bounded(q: Mat, phi: f64) -> Result<Self> {
        let c = Self::new(q)?;
        if c.q.norm() > phi {
            return Err(Error::InvalidInput(format!("‖Q‖_F = {} exceeds the bound {phi}", c.q.norm())));
        }
        Ok(c)
    }

    pub fn q(&self) -> &Mat {
        &self.q
    }

    pub fn n(&self) -> usize {
        self.q.nrows()
    }
}

/// Linear cost terms `q_t = −Q x_t^r`, `t = 1..=nu2`.
pub fn tracking_to_linear(cost: &CostParams, reference: &ReferenceSignal) -> Result<Vec<Vector>> {
    if cost.n() != reference.n() {
        return Err(Error::Dimension(format!(
            "Q is {}x{} but the reference has dimension {}",
            cost.n(),
            cost.n(),
            reference.n()
        )));
    }
    Ok(reference.samples().iter().map(|x| -(cost.q() * x)).collect())
}

/// Output of the backward tracking recursion.
///
/// `p[t-1]`, `eta[t-1]` hold `P_t`, `η_t` for `t = 1..=nu2`; the per-step
/// vectors `gain`, `feedforward`, `xi_cert` hold entries for `t = 1..nu2-1`.
#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiBundle {
    pub ref_id: String,
    pub p: Vec<Mat>,
    pub eta: Vec<Vector>,
    /// `K_t = (BᵀP_{t+1}B + I)⁻¹ BᵀP_{t+1}A`
    pub gain: Vec<Mat>,
    /// `k_t = (BᵀP_{t+1}B + I)⁻¹ Bᵀη_{t+1}`
    pub feedforward: Vec<Vector>,
    /// `ξ̄_t = g_tᵀ(BᵀP_{t+1}B + I)⁻¹g_t`, `g_t = Bᵀη_{t+1}`
    pub xi_cert: Vec<f64>,
}

impl RiccatiBundle {
    pub fn nu2(&self) -> usize {
        self.p.len()
    }

    pub fn p_at(&self, t: usize) -> &Mat {
        &self.p[t - 1]
    }

    pub fn eta_at(&self, t: usize) -> &Vector {
        &self.eta[t - 1]
    }
}

/// One step of the value recursion: returns `(P_t, η_t, K_t, k_t, ξ̄_t)` from
/// `(P_{t+1}, η_{t+1})` and the stage terms `(Q, q_t)`.
pub fn riccati_step(
    sys: &DiscreteLti,
    q: &Mat,
    q_lin: &Vector,
    p_next: &Mat,
    eta_next: &Vector,
) -> Result<(Mat, Vector, Mat, Vector, f64)> {
    let (a, b) = (sys.a(), sys.b());
    let bt_p = b.transpose() * p_next;
    let r = &bt_p * b + Mat::identity(sys.m(), sys.m());
    let chol = r
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numeric("BᵀPB + I is not positive definite".into()))?;
    let gain = chol.solve(&(&bt_p * a));
    let g = b.transpose() * eta_next;
    let feedforward = chol.solve(&g);
    let xi = g.dot(&feedforward);
    let closed = a - b * &gain;
    let p_raw = a.transpose() * p_next * a + q - a.transpose() * bt_p.transpose() * &gain;
    let drift = linalg::asymmetry(&p_raw);
    if drift > RICCATI_SYMMETRY_TOL {
        return Err(Error::Numeric(format!("Riccati iterate lost symmetry ({drift:.3e})")));
    }
    if drift > 1e-12 {
        log::warn!("Riccati iterate symmetrised (drift {drift:.3e})");
    }
    let p = linalg::symmetrize(&p_raw);
    let eta = closed.transpose() * eta_next + q_lin;
    Ok((p, eta, gain, feedforward, xi))
}

/// Backward recursion from `P_{nu2} = Q`, `η_{nu2} = q_{nu2}`.
pub fn riccati(sys: &DiscreteLti, cost: &CostParams, reference: &ReferenceSignal) -> Result<RiccatiBundle> {
    if cost.n() != sys.n() {
        return Err(Error::Dimension("Q and A have different sizes".into()));
    }
    let q_lin = tracking_to_linear(cost, reference)?;
    let nu2 = reference.nu2();
    let n = sys.n();
    let m = sys.m();
    let mut p = vec![Mat::zeros(n, n); nu2];
    let mut eta = vec![Vector::zeros(n); nu2];
    let steps = nu2 - 1;
    let mut gain = vec![Mat::zeros(m, n); steps];
    let mut feedforward = vec![Vector::zeros(m); steps];
    let mut xi_cert = vec![0.0; steps];
    p[nu2 - 1] = cost.q().clone();
    eta[nu2 - 1] = q_lin[nu2 - 1].clone();
    for i in (0..steps).rev() {
        let (pt, et, k, kff, xi) = riccati_step(sys, cost.q(), &q_lin[i], &p[i + 1], &eta[i + 1])?;
        p[i] = pt;
        eta[i] = et;
        gain[i] = k;
        feedforward[i] = kff;
        xi_cert[i] = xi;
    }
    Ok(RiccatiBundle { ref_id: reference.id().to_string(), p, eta, gain, feedforward, xi_cert })
}

/// `u_t = −K_t x − k_t` for `1 ≤ t ≤ nu2 − 1`.
pub fn optimal_input(bundle: &RiccatiBundle, t: usize, x: &Vector) -> Result<Vector> {
    let steps = bundle.gain.len();
    if t == 0 || t > steps {
        return Err(Error::IndexOutOfRange { index: t, lo: 1, hi: steps });
    }
    let k = &bundle.gain[t - 1];
    if k.ncols() != x.len() {
        return Err(Error::Dimension(format!("state has length {}, expected {}", x.len(), k.ncols())));
    }
    Ok(-(k * x) - &bundle.feedforward[t - 1])
}

/// I.i.d. zero-mean process noise entering through `B`, with `m×m` covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    sigma_w: Mat,
}

impl NoiseModel {
    pub fn new(sigma_w: Mat) -> Result<Self> {
        if !sigma_w.is_square() {
            return Err(Error::Dimension("Σ_w must be square".into()));
        }
        if !linalg::all_finite(&sigma_w) {
            return Err(Error::Numeric("Σ_w has non-finite entries".into()));
        }
        if linalg::asymmetry(&sigma_w) > DEFAULT_TOL_PSD {
            return Err(Error::InvalidInput("Σ_w is not symmetric".into()));
        }
        let sigma_w = linalg::symmetrize(&sigma_w);
        if linalg::min_eigenvalue(&sigma_w) < -DEFAULT_TOL_PSD * sigma_w.norm().max(1.0) {
            return Err(Error::InvalidInput("Σ_w is not PSD".into()));
        }
        Ok(Self { sigma_w })
    }

    pub fn zero(m: usize) -> Self {
        Self { sigma_w: Mat::zeros(m, m) }
    }

    pub fn scalar(variance: f64) -> Result<Self> {
        Self::new(Mat::from_element(1, 1, variance))
    }

    pub fn sigma_w(&self) -> &Mat {
        &self.sigma_w
    }

    pub fn m(&self) -> usize {
        self.sigma_w.nrows()
    }

    pub fn is_zero(&self) -> bool {
        self.sigma_w.iter().all(|&v| v == 0.0)
    }
}

/// Source of process-noise samples.
pub trait ProcessNoise {
    fn dim(&self) -> usize;
    fn sample(&self, rng: &mut dyn rand::RngCore) -> Vector;
}

/// Gaussian sampler `w = L z`, `L Lᵀ = Σ_w`.
#[derive(Debug, Clone)]
pub struct GaussianNoise {
    factor: Mat,
    zero: bool,
}

impl GaussianNoise {
    pub fn new(model: &NoiseModel) -> Result<Self> {
        let factor = linalg::psd_sqrt(model.sigma_w(), DEFAULT_TOL_PSD)?;
        Ok(Self { factor, zero: model.is_zero() })
    }
}

impl ProcessNoise for GaussianNoise {
    fn dim(&self) -> usize {
        self.factor.nrows()
    }

    fn sample(&self, rng: &mut dyn rand::RngCore) -> Vector {
        let m = self.factor.nrows();
        if self.zero {
            return Vector::zeros(m);
        }
        let z = Vector::from_iterator(m, (0..m).map(|_| rng.sample::<f64, _>(StandardNormal)));
        &self.factor * z
    }
}

/// Closed-loop rollout of horizon `horizon` that starts at `x_start` at time
/// `nu2 - horizon + 1`, with Gaussian process noise drawn from `rng_seed`.
pub fn simulate_trajectory(
    sys: &DiscreteLti,
    bundle: &RiccatiBundle,
    x_start: &Vector,
    horizon: usize,
    noise: &NoiseModel,
    rng_seed: u64,
) -> Result<Trajectory> {
    let sampler = GaussianNoise::new(noise).map_err(|e| Error::Numeric(format!("cannot factor Σ_w: {e}")))?;
    simulate_with_sampler(sys, bundle, x_start, horizon, &sampler, rng_seed)
}

pub fn simulate_with_sampler(
    sys: &DiscreteLti,
    bundle: &RiccatiBundle,
    x_start: &Vector,
    horizon: usize,
    noise: &dyn ProcessNoise,
    rng_seed: u64,
) -> Result<Trajectory> {
    let nu2 = bundle.nu2();
    if horizon == 0 || horizon > nu2 {
        return Err(Error::IndexOutOfRange { index: horizon, lo: 1, hi: nu2 });
    }
    if x_start.len() != sys.n() {
        return Err(Error::Dimension("start state has the wrong length".into()));
    }
    if noise.dim() != sys.m() {
        return Err(Error::Dimension("noise dimension differs from the input dimension".into()));
    }
    let mut rng = seed::rng(rng_seed);
    let start = nu2 - horizon + 1;
    let mut states = Vec::with_capacity(horizon);
    let mut controls = Vec::with_capacity(horizon - 1);
    let mut x = x_start.clone();
    for t in start..nu2 {
        let u = optimal_input(bundle, t, &x)?;
        let w = noise.sample(&mut rng);
        let next = sys.step(&x, &(&u + w));
        states.push(x);
        controls.push(u);
        x = next;
    }
    states.push(x);
    Trajectory::new(String::new(), nu2, horizon, states, Some(controls), bundle.ref_id.clone())
}
