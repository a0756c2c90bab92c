//! Trajectories, datasets and the machinery that produces them: reference
//! generation, synthetic data, process-noise identification and the dataset
//! file format.

mod io;
mod noise;

use std::collections::BTreeMap;

use rand::Rng;

use crate::linalg::Vector;
use crate::lq::{self, CostParams, DiscreteLti, NoiseModel, ReferenceSignal};
use crate::{seed, Error, Result};

pub use io::{read_dataset, read_dataset_from, write_dataset, write_dataset_to, SCHEMA_VERSION};
pub use noise::{estimate_noise_covariance, NoiseEstimate, NoiseEstimationConfig};

/// One observed trajectory, active on `t = nu2 - N + 1..=nu2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    id: String,
    nu2: usize,
    horizon: usize,
    states: Vec<Vector>,
    controls: Option<Vec<Vector>>,
    ref_id: String,
}

impl Trajectory {
    pub fn new(
        id: String,
        nu2: usize,
        horizon: usize,
        states: Vec<Vector>,
        controls: Option<Vec<Vector>>,
        ref_id: String,
    ) -> Result<Self> {
        if horizon == 0 || horizon > nu2 {
            return Err(Error::InvalidInput(format!("horizon {horizon} outside 1..={nu2}")));
        }
        if states.len() != horizon {
            return Err(Error::Dimension(format!("{} states for horizon {horizon}", states.len())));
        }
        let n = states[0].len();
        if states.iter().any(|x| x.len() != n) {
            return Err(Error::Dimension("states have inconsistent lengths".into()));
        }
        if let Some(u) = &controls {
            if u.len() != horizon - 1 {
                return Err(Error::Dimension(format!("{} controls for horizon {horizon}", u.len())));
            }
            if let Some(first) = u.first() {
                if u.iter().any(|v| v.len() != first.len()) {
                    return Err(Error::Dimension("controls have inconsistent lengths".into()));
                }
            }
        }
        Ok(Self { id, nu2, horizon, states, controls, ref_id })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn set_id(&mut self, id: impl Into<String>) {
        self.id = id.into();
    }

    pub fn nu2(&self) -> usize {
        self.nu2
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// First active time index `nu2 - N + 1`.
    pub fn start_time(&self) -> usize {
        self.nu2 - self.horizon + 1
    }

    pub fn n(&self) -> usize {
        self.states[0].len()
    }

    pub fn states(&self) -> &[Vector] {
        &self.states
    }

    /// State at 1-based time `t`; zero before the trajectory starts.
    pub fn state_at(&self, t: usize) -> Vector {
        let s = self.start_time();
        if t < s {
            Vector::zeros(self.n())
        } else {
            self.states[t - s].clone()
        }
    }

    pub fn controls(&self) -> Option<&[Vector]> {
        self.controls.as_deref()
    }

    pub fn without_controls(mut self) -> Self {
        self.controls = None;
        self
    }

    pub fn ref_id(&self) -> &str {
        &self.ref_id
    }

    pub fn set_ref_id(&mut self, ref_id: impl Into<String>) {
        self.ref_id = ref_id.into();
    }
}

/// Non-fatal findings about a dataset.
#[derive(Debug, Clone, PartialEq)]
pub enum DatasetWarning {
    /// No trajectory has the longest horizon, so the estimator is not identifiable.
    NoFullLengthTrajectories { nu2: usize },
}

impl std::fmt::Display for DatasetWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DatasetWarning::NoFullLengthTrajectories { nu2 } => {
                write!(f, "no trajectory has the full horizon {nu2}; Q is not identifiable from this data")
            }
        }
    }
}

/// Trajectories sharing a terminal time and state dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    nu2: usize,
    n: usize,
    m: usize,
    trajectories: Vec<Trajectory>,
    counts: BTreeMap<usize, usize>,
}

impl Dataset {
    pub fn new(nu2: usize, n: usize, m: usize, trajectories: Vec<Trajectory>) -> Result<Self> {
        let mut counts = BTreeMap::new();
        for tr in &trajectories {
            if tr.nu2() != nu2 {
                return Err(Error::InvalidInput(format!(
                    "trajectory `{}` has nu2 = {}, dataset has {nu2}",
                    tr.id(),
                    tr.nu2()
                )));
            }
            if tr.n() != n {
                return Err(Error::Dimension(format!("trajectory `{}` has state dimension {}", tr.id(), tr.n())));
            }
            if let Some(u) = tr.controls().and_then(|u| u.first()) {
                if u.len() != m {
                    return Err(Error::Dimension(format!("trajectory `{}` has control dimension {}", tr.id(), u.len())));
                }
            }
            *counts.entry(tr.horizon()).or_insert(0) += 1;
        }
        Ok(Self { nu2, n, m, trajectories, counts })
    }

    pub fn nu2(&self) -> usize {
        self.nu2
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    /// `M_N` for every horizon present.
    pub fn counts(&self) -> &BTreeMap<usize, usize> {
        &self.counts
    }

    /// Sorted, de-duplicated reference ids used by the trajectories.
    pub fn ref_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.trajectories.iter().map(|t| t.ref_id().to_string()).collect();
        ids.sort();
        ids.dedup();
        ids
    }

    /// Keep only trajectories satisfying `keep`.
    pub fn filter(&self, keep: impl Fn(&Trajectory) -> bool) -> Dataset {
        let kept = self.trajectories.iter().filter(|t| keep(t)).cloned().collect();
        Dataset::new(self.nu2, self.n, self.m, kept).expect("subset of a valid dataset")
    }

    pub fn merge(mut self, other: Dataset) -> Result<Dataset> {
        if other.nu2 != self.nu2 || other.n != self.n {
            return Err(Error::InvalidInput("datasets differ in nu2 or state dimension".into()));
        }
        self.trajectories.extend(other.trajectories);
        Dataset::new(self.nu2, self.n, self.m, self.trajectories)
    }

    pub fn warnings(&self) -> Vec<DatasetWarning> {
        let mut out = Vec::new();
        if self.counts.get(&self.nu2).copied().unwrap_or(0) == 0 {
            out.push(DatasetWarning::NoFullLengthTrajectories { nu2: self.nu2 });
        }
        out
    }
}

/// Distribution of the planning horizon on `nu1..=nu2`.
#[derive(Debug, Clone, PartialEq)]
pub struct HorizonDistribution {
    nu1: usize,
    nu2: usize,
    pmf: Vec<f64>,
}

impl HorizonDistribution {
    pub fn new(nu1: usize, nu2: usize, pmf: Vec<f64>) -> Result<Self> {
        if nu1 == 0 || nu1 > nu2 {
            return Err(Error::InvalidInput(format!("need 1 ≤ nu1 ≤ nu2, got {nu1}, {nu2}")));
        }
        if pmf.len() != nu2 - nu1 + 1 {
            return Err(Error::Dimension(format!("pmf has {} entries for {nu1}..={nu2}", pmf.len())));
        }
        if pmf.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(Error::InvalidInput("pmf entries must be nonnegative".into()));
        }
        let total: f64 = pmf.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput(format!("pmf sums to {total}")));
        }
        if pmf[pmf.len() - 1] <= 0.0 {
            return Err(Error::InvalidInput("the longest horizon must have positive probability".into()));
        }
        Ok(Self { nu1, nu2, pmf })
    }

    pub fn uniform(nu1: usize, nu2: usize) -> Result<Self> {
        if nu1 == 0 || nu1 > nu2 {
            return Err(Error::InvalidInput(format!("need 1 ≤ nu1 ≤ nu2, got {nu1}, {nu2}")));
        }
        let k = nu2 - nu1 + 1;
        let mut pmf = vec![1.0 / k as f64; k];
        // absorb rounding so the sum is exact to an ulp or two
        let rest: f64 = pmf[..k - 1].iter().sum();
        pmf[k - 1] = 1.0 - rest;
        Self::new(nu1, nu2, pmf)
    }

    pub fn point(nu2: usize) -> Result<Self> {
        Self::new(nu2, nu2, vec![1.0])
    }

    pub fn nu1(&self) -> usize {
        self.nu1
    }

    pub fn nu2(&self) -> usize {
        self.nu2
    }

    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    pub fn prob(&self, horizon: usize) -> f64 {
        if horizon < self.nu1 || horizon > self.nu2 {
            0.0
        } else {
            self.pmf[horizon - self.nu1]
        }
    }

    /// `nu2 ≥ n + 1`.
    pub fn check_state_dim(&self, n: usize) -> Result<()> {
        if self.nu2 < n + 1 {
            return Err(Error::InvalidInput(format!("nu2 = {} is shorter than n + 1 = {}", self.nu2, n + 1)));
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (k, p) in self.pmf.iter().enumerate() {
            acc += p;
            if u < acc {
                return self.nu1 + k;
            }
        }
        // u landed in the rounding gap above the last cumulative value
        self.nu2 - self.pmf.iter().rev().position(|&p| p > 0.0).unwrap_or(0)
    }
}

/// How a trajectory's first state is drawn.
pub trait InitSampler {
    fn sample(&self, reference: &ReferenceSignal, start_time: usize, rng: &mut dyn rand::RngCore) -> Vector;
}

/// `x_i = (anchored_i ? x^r_i : 0) + U[-h_i, h_i]` at the start time.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceOffset {
    pub half_width: Vec<f64>,
    pub anchored: Vec<bool>,
}

impl ReferenceOffset {
    /// Angle offset around the reference, zero rate.
    pub fn position_only(half_width: f64) -> Self {
        Self { half_width: vec![half_width, 0.0], anchored: vec![true, false] }
    }
}

impl InitSampler for ReferenceOffset {
    fn sample(&self, reference: &ReferenceSignal, start_time: usize, rng: &mut dyn rand::RngCore) -> Vector {
        let xr = reference.at(start_time);
        Vector::from_iterator(
            xr.len(),
            (0..xr.len()).map(|i| {
                let centre = if self.anchored.get(i).copied().unwrap_or(false) { xr[i] } else { 0.0 };
                let h = self.half_width.get(i).copied().unwrap_or(0.0);
                if h > 0.0 {
                    centre + rng.random_range(-h..=h)
                } else {
                    centre
                }
            }),
        )
    }
}

/// Every trajectory starts at the same state.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedStart(pub Vector);

impl InitSampler for FixedStart {
    fn sample(&self, _: &ReferenceSignal, _: usize, _: &mut dyn rand::RngCore) -> Vector {
        self.0.clone()
    }
}

/// Reference input `u_t^r` for `t = 1..nu2-1`.
#[derive(Debug, Clone, PartialEq)]
pub enum Waveform {
    Zero,
    Sin { amplitude: f64, omega: f64 },
    Cos { amplitude: f64, omega: f64 },
    Samples(Vec<Vector>),
}

impl Waveform {
    fn input(&self, t: usize, m: usize) -> Result<Vector> {
        Ok(match self {
            Waveform::Zero => Vector::zeros(m),
            Waveform::Sin { amplitude, omega } => Vector::from_element(m, amplitude * (omega * t as f64).sin()),
            Waveform::Cos { amplitude, omega } => Vector::from_element(m, amplitude * (omega * t as f64).cos()),
            Waveform::Samples(u) => {
                let v = u.get(t - 1).ok_or_else(|| Error::Dimension(format!("no reference input for t = {t}")))?;
                if v.len() != m {
                    return Err(Error::Dimension(format!("reference input has length {}, expected {m}", v.len())));
                }
                v.clone()
            }
        })
    }
}

/// Roll `x_{t+1}^r = A x_t^r + B u_t^r` forward from `x1r` to `nu2` samples.
pub fn generate_reference(
    id: impl Into<String>,
    sys: &DiscreteLti,
    x1r: &Vector,
    waveform: &Waveform,
    nu2: usize,
) -> Result<ReferenceSignal> {
    if x1r.len() != sys.n() {
        return Err(Error::Dimension(format!("x1r has length {}, expected {}", x1r.len(), sys.n())));
    }
    if nu2 == 0 {
        return Err(Error::InvalidInput("reference length must be positive".into()));
    }
    if let Waveform::Samples(u) = waveform {
        if u.len() != nu2 - 1 {
            return Err(Error::Dimension(format!("{} reference inputs for nu2 = {nu2}", u.len())));
        }
    }
    let mut samples = Vec::with_capacity(nu2);
    samples.push(x1r.clone());
    for t in 1..nu2 {
        let u = waveform.input(t, sys.m())?;
        let next = sys.step(&samples[t - 1], &u);
        samples.push(next);
    }
    ReferenceSignal::new(id, samples)
}

/// Draws `count` trajectories: horizon from `horizons`, start from `init`,
/// closed-loop dynamics under `cost` with process noise `noise`.
///
/// Trajectory `i` uses the stream `seed::split(root_seed, i)`, so the output
/// is reproducible and does not depend on evaluation order.
#[allow(clippy::too_many_arguments)]
pub fn synth_dataset(
    sys: &DiscreteLti,
    cost: &CostParams,
    reference: &ReferenceSignal,
    horizons: &HorizonDistribution,
    init: &dyn InitSampler,
    noise: &NoiseModel,
    count: usize,
    root_seed: u64,
) -> Result<Dataset> {
    if count == 0 {
        return Err(Error::InvalidInput("number of trajectories must be positive".into()));
    }
    if horizons.nu2() != reference.nu2() {
        return Err(Error::InvalidInput(format!(
            "horizon distribution ends at {} but the reference has {} samples",
            horizons.nu2(),
            reference.nu2()
        )));
    }
    horizons.check_state_dim(sys.n())?;
    if noise.m() != sys.m() {
        return Err(Error::Dimension("Σ_w size differs from the input dimension".into()));
    }
    let bundle = lq::riccati(sys, cost, reference)?;
    let sampler = lq::GaussianNoise::new(noise)?;
    let mut trajectories = Vec::with_capacity(count);
    for i in 0..count {
        let stream = seed::split(root_seed, i as u64);
        let mut rng = seed::rng(stream);
        let horizon = horizons.sample(&mut rng);
        let start = reference.nu2() - horizon + 1;
        let x0 = init.sample(reference, start, &mut rng);
        let mut tr = lq::simulate_with_sampler(sys, &bundle, &x0, horizon, &sampler, seed::mix64(stream))?;
        tr.set_id(format!("{}-{i:06}", reference.id()));
        trajectories.push(tr);
    }
    Dataset::new(reference.nu2(), sys.n(), sys.m(), trajectories)
}

/// `M_N / M` for every horizon present in the dataset.
pub fn empirical_horizon_weights(ds: &Dataset) -> Result<BTreeMap<usize, f64>> {
    if ds.is_empty() {
        return Err(Error::InvalidInput("dataset is empty".into()));
    }
    let total = ds.len() as f64;
    Ok(ds.counts().iter().map(|(&n, &c)| (n, c as f64 / total)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Mat;
    use crate::lq::{discretize, ContinuousLti};

    fn device() -> DiscreteLti {
        discretize(&ContinuousLti::rotating_mass(0.2, 0.255).unwrap(), 0.05).unwrap()
    }

    fn training_reference(sys: &DiscreteLti) -> ReferenceSignal {
        let w = Waveform::Sin { amplitude: 0.01, omega: std::f64::consts::PI / 40.0 };
        generate_reference("train", sys, &Vector::from_vec(vec![0.0, -0.5]), &w, 120).unwrap()
    }

    fn traj(horizon: usize, nu2: usize) -> Trajectory {
        Trajectory::new(format!("h{horizon}"), nu2, horizon, vec![Vector::zeros(2); horizon], None, "r".into()).unwrap()
    }

    #[test]
    fn reference_recursion() {
        let sys = device();
        let r = training_reference(&sys);
        assert_eq!(r.nu2(), 120);
        assert_eq!(r.at(1), &Vector::from_vec(vec![0.0, -0.5]));
        let u1 = 0.01 * (std::f64::consts::PI / 40.0).sin();
        let expect = sys.step(r.at(1), &Vector::from_element(1, u1));
        assert!((r.at(2) - expect).norm() < 1e-15);
        let z = generate_reference("z", &sys, &Vector::zeros(2), &Waveform::Zero, 30).unwrap();
        assert!(z.samples().iter().all(|x| x.norm() == 0.0));
        let bad = Waveform::Samples(vec![Vector::zeros(1); 3]);
        assert!(generate_reference("b", &sys, &Vector::zeros(2), &bad, 10).is_err());
        assert!(generate_reference("b", &sys, &Vector::zeros(3), &Waveform::Zero, 10).is_err());
    }

    #[test]
    fn validation_references_from_waveforms() {
        let sys = device();
        let c = Waveform::Cos { amplitude: 0.01, omega: std::f64::consts::PI / 40.0 };
        let r1 = generate_reference("val1", &sys, &Vector::from_vec(vec![0.0, 0.05]), &c, 120).unwrap();
        let r2 = generate_reference("val2", &sys, &Vector::from_vec(vec![0.0, 0.2]), &Waveform::Zero, 120).unwrap();
        // constant rate: position grows linearly
        assert!((r2.at(120)[0] - 119.0 * 0.05 * 0.2).abs() < 1e-12);
        assert!((r2.at(120)[1] - 0.2).abs() < 1e-15);
        assert_eq!(r1.nu2(), 120);
    }

    #[test]
    fn horizon_distribution_checks() {
        assert!(HorizonDistribution::new(3, 5, vec![0.5, 0.5, 0.0]).is_err());
        assert!(HorizonDistribution::new(3, 5, vec![0.5, 0.4, 0.0]).is_err());
        assert!(HorizonDistribution::new(5, 3, vec![]).is_err());
        let u = HorizonDistribution::uniform(80, 120).unwrap();
        assert_eq!(u.pmf().len(), 41);
        assert!((u.pmf().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        assert!(HorizonDistribution::point(2).unwrap().check_state_dim(2).is_err());
        let mut rng = seed::rng(5);
        for _ in 0..1000 {
            let n = u.sample(&mut rng);
            assert!((80..=120).contains(&n));
        }
    }

    #[test]
    fn horizon_weights() {
        let trs = vec![traj(80, 120), traj(80, 120), traj(120, 120), traj(120, 120)];
        let ds = Dataset::new(120, 2, 1, trs).unwrap();
        let w = empirical_horizon_weights(&ds).unwrap();
        assert_eq!(w.len(), 2);
        assert_eq!(w[&80], 0.5);
        assert_eq!(w[&120], 0.5);
        let full = Dataset::new(50, 2, 1, vec![traj(50, 50); 3]).unwrap();
        let w = empirical_horizon_weights(&full).unwrap();
        assert_eq!(w[&50], 1.0);
        let empty = Dataset::new(50, 2, 1, vec![]).unwrap();
        assert!(empirical_horizon_weights(&empty).is_err());
    }

    #[test]
    fn missing_full_horizon_warns() {
        let ds = Dataset::new(120, 2, 1, vec![traj(80, 120)]).unwrap();
        assert_eq!(ds.warnings(), vec![DatasetWarning::NoFullLengthTrajectories { nu2: 120 }]);
        let ok = Dataset::new(120, 2, 1, vec![traj(120, 120)]).unwrap();
        assert!(ok.warnings().is_empty());
    }

    #[test]
    fn dataset_rejects_mixed_terminal_times() {
        assert!(Dataset::new(120, 2, 1, vec![traj(80, 121)]).is_err());
        assert!(Trajectory::new("x".into(), 10, 11, vec![Vector::zeros(2); 11], None, "r".into()).is_err());
        assert!(Trajectory::new("x".into(), 10, 3, vec![Vector::zeros(2); 3], Some(vec![Vector::zeros(1)]), "r".into()).is_err());
    }

    #[test]
    fn synth_dataset_is_reproducible_with_degenerate_pmf() {
        let sys = device();
        let r = training_reference(&sys);
        let cost = CostParams::new(Mat::identity(2, 2) * 0.01).unwrap();
        let h = HorizonDistribution::point(120).unwrap();
        let init = ReferenceOffset::position_only(std::f64::consts::PI / 6.0);
        let noise = NoiseModel::scalar(6.8062e-4).unwrap();
        let a = synth_dataset(&sys, &cost, &r, &h, &init, &noise, 12, 99).unwrap();
        let b = synth_dataset(&sys, &cost, &r, &h, &init, &noise, 12, 99).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.counts().get(&120), Some(&12));
        for tr in a.trajectories() {
            assert_eq!(tr.states()[0][1], 0.0);
            assert!((tr.states()[0][0] - r.at(1)[0]).abs() <= std::f64::consts::PI / 6.0);
        }
        assert!(synth_dataset(&sys, &cost, &r, &h, &init, &noise, 0, 99).is_err());
    }

    #[test]
    fn uniform_weights_within_binomial_band() {
        let sys = device();
        let r = training_reference(&sys);
        let cost = CostParams::new(Mat::identity(2, 2) * 0.01).unwrap();
        let h = HorizonDistribution::uniform(80, 120).unwrap();
        let init = ReferenceOffset::position_only(std::f64::consts::PI / 6.0);
        let noise = NoiseModel::scalar(6.8062e-4).unwrap();
        let ds = synth_dataset(&sys, &cost, &r, &h, &init, &noise, 5000, 2024).unwrap();
        let w = empirical_horizon_weights(&ds).unwrap();
        let p: f64 = 1.0 / 41.0;
        let se = (p * (1.0 - p) / 5000.0).sqrt();
        assert_eq!(w.len(), 41);
        for (&n, &wn) in &w {
            assert!((80..=120).contains(&n));
            assert!((wn - p).abs() <= 3.0 * se, "N = {n}: weight {wn}");
        }
        assert!((w.values().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
