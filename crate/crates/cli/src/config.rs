//! Run configuration read from a TOML file.
//!
//! Every section mirrors the parameters of one library component. Unknown keys
//! are rejected so that typos surface as configuration errors.

use std::path::{Path, PathBuf};

use lqt_ioc::conic::{Backend, IpmOptions, SolverOptions};
use lqt_ioc::data::{self, HorizonDistribution, NoiseEstimationConfig, ReferenceOffset, Waveform};
use lqt_ioc::ioc::{EstimatorConfig, References};
use lqt_ioc::linalg::{Mat, Vector};
use lqt_ioc::lq::{self, ContinuousLti, CostParams, DiscreteLti, NoiseModel, ReferenceSignal};
use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    pub system: SystemConfig,
    #[serde(default, rename = "reference")]
    pub references: Vec<ReferenceConfig>,
    #[serde(default)]
    pub horizon: Option<HorizonConfig>,
    #[serde(default)]
    pub init: Option<InitConfig>,
    #[serde(default)]
    pub cost: Option<CostConfig>,
    #[serde(default)]
    pub noise: Option<NoiseConfig>,
    #[serde(default)]
    pub simulate: Option<SimulateConfig>,
    #[serde(default)]
    pub estimator: EstimatorSection,
    #[serde(default)]
    pub consistency: Option<ConsistencyConfig>,
    #[serde(default)]
    pub noise_estimation: NoiseEstimationSection,
    #[serde(default)]
    pub predict: PredictConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, tag = "model", rename_all = "snake_case")]
pub enum SystemConfig {
    /// Point mass on a rod, discretised with zero-order hold.
    RotatingMass { mass: f64, length: f64, dt: f64 },
    Continuous { a: Vec<Vec<f64>>, b: Vec<Vec<f64>>, dt: f64 },
    Discrete { a: Vec<Vec<f64>>, b: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceConfig {
    pub id: String,
    pub nu2: usize,
    pub x1: Vec<f64>,
    #[serde(default)]
    pub input: InputConfig,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "snake_case")]
pub enum InputConfig {
    #[default]
    Zero,
    Sin {
        amplitude: f64,
        omega: f64,
    },
    Cos {
        amplitude: f64,
        omega: f64,
    },
    /// One row per time step `t = 1..nu2-1`.
    Samples {
        values: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HorizonConfig {
    pub nu1: usize,
    /// Defaults to the reference length.
    #[serde(default)]
    pub nu2: Option<usize>,
    /// Probabilities for `N = nu1..=nu2`; uniform when absent.
    #[serde(default)]
    pub pmf: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitConfig {
    pub half_width: Vec<f64>,
    pub anchored: Vec<bool>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostConfig {
    pub q: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub sigma_w: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimulationMode {
    /// Optimal tracking under the configured cost.
    #[default]
    ClosedLoop,
    /// Zero input from the reference's first sample, so every transition is
    /// pure process noise.
    Steady,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    /// Trajectories per simulated reference.
    pub trajectories: usize,
    /// Reference ids to simulate; all configured references when absent.
    #[serde(default)]
    pub references: Option<Vec<String>>,
    #[serde(default)]
    pub mode: SimulationMode,
    #[serde(default)]
    pub store_controls: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    #[default]
    InteriorPoint,
    Admm,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorSection {
    #[serde(default = "default_phi")]
    pub phi: f64,
    #[serde(default = "default_tol")]
    pub tol_psd: f64,
    #[serde(default = "default_tol")]
    pub tol_eq: f64,
    #[serde(default = "default_excitation_tol")]
    pub excitation_tol: f64,
    #[serde(default)]
    pub solver: SolverKind,
    #[serde(default)]
    pub solver_tol: Option<f64>,
    #[serde(default)]
    pub max_iter: Option<usize>,
}

fn default_phi() -> f64 {
    50.0
}

fn default_tol() -> f64 {
    1e-6
}

fn default_excitation_tol() -> f64 {
    1e-10
}

impl Default for EstimatorSection {
    fn default() -> Self {
        Self {
            phi: default_phi(),
            tol_psd: default_tol(),
            tol_eq: default_tol(),
            excitation_tol: default_excitation_tol(),
            solver: SolverKind::default(),
            solver_tol: None,
            max_iter: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConsistencyMode {
    /// Fresh data for every (M, seed) pair.
    #[default]
    Regenerate,
    /// Draw M trajectories without replacement from `--dataset`.
    Subsample,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConsistencyConfig {
    pub m_values: Vec<usize>,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub mode: ConsistencyMode,
    #[serde(default = "default_inversions")]
    pub max_inversions: usize,
    /// Reference used for training; the first configured one when absent.
    #[serde(default)]
    pub reference: Option<String>,
}

fn default_inversions() -> usize {
    1
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseEstimationSection {
    #[serde(default)]
    pub cut_in: usize,
    #[serde(default = "default_min_samples")]
    pub min_samples: usize,
}

fn default_min_samples() -> usize {
    10
}

impl Default for NoiseEstimationSection {
    fn default() -> Self {
        Self { cut_in: 0, min_samples: default_min_samples() }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictStart {
    /// Mean start state of the group's trajectories.
    #[default]
    GroupMean,
    /// Each trajectory predicted from its own start state.
    PerTrajectory,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictConfig {
    /// Horizons to report; every horizon present when absent.
    #[serde(default)]
    pub horizons: Option<Vec<usize>>,
    #[serde(default)]
    pub start: PredictStart,
}

/// A parsed configuration together with the hash of its source text.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub sha256: String,
    pub path: PathBuf,
}

pub fn load(path: &Path) -> Result<LoadedConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config `{}`: {e}", path.display())))?;
    let config = parse(&text)?;
    Ok(LoadedConfig { config, sha256: sha256_hex(text.as_bytes()), path: path.to_path_buf() })
}

pub fn parse(text: &str) -> Result<RunConfig, CliError> {
    let config: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
    config.validate()?;
    Ok(config)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn field(name: &str, e: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{name}: {e}"))
}

fn matrix(name: &str, rows: &[Vec<f64>]) -> Result<Mat, CliError> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if r == 0 || c == 0 {
        return Err(field(name, "matrix must be non-empty"));
    }
    if rows.iter().any(|row| row.len() != c) {
        return Err(field(name, "rows have different lengths"));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(field(name, "entries must be finite"));
    }
    Ok(Mat::from_fn(r, c, |i, j| rows[i][j]))
}

impl RunConfig {
    fn validate(&self) -> Result<(), CliError> {
        let sys = self.system()?;
        let mut seen = std::collections::BTreeSet::new();
        for r in &self.references {
            if !seen.insert(r.id.as_str()) {
                return Err(field("reference.id", format!("duplicate id `{}`", r.id)));
            }
        }
        self.references_for(&sys)?;
        if let Some(h) = &self.horizon {
            if h.nu1 == 0 {
                return Err(field("horizon.nu1", "must be at least 1"));
            }
        }
        if let Some(init) = &self.init {
            if init.half_width.len() != sys.n() || init.anchored.len() != sys.n() {
                return Err(field("init", format!("half_width and anchored need {} entries", sys.n())));
            }
            if init.half_width.iter().any(|h| !(*h >= 0.0) || !h.is_finite()) {
                return Err(field("init.half_width", "entries must be finite and nonnegative"));
            }
        }
        if self.cost.is_some() {
            self.cost(&sys)?;
        }
        self.noise(&sys)?;
        if let Some(s) = &self.simulate {
            if s.trajectories == 0 {
                return Err(field("simulate.trajectories", "must be positive"));
            }
            if let Some(ids) = &s.references {
                for id in ids {
                    if !seen.contains(id.as_str()) {
                        return Err(field("simulate.references", format!("unknown reference `{id}`")));
                    }
                }
            }
        }
        self.estimator_config()?.validate().map_err(|e| field("estimator", e))?;
        if let Some(c) = &self.consistency {
            if c.m_values.is_empty() || c.m_values.contains(&0) {
                return Err(field("consistency.m_values", "needs at least one positive value"));
            }
            if c.seeds.is_empty() {
                return Err(field("consistency.seeds", "needs at least one seed"));
            }
            if let Some(id) = &c.reference {
                if !seen.contains(id.as_str()) {
                    return Err(field("consistency.reference", format!("unknown reference `{id}`")));
                }
            }
        }
        Ok(())
    }

    pub fn system(&self) -> Result<DiscreteLti, CliError> {
        let sys = match &self.system {
            SystemConfig::RotatingMass { mass, length, dt } => {
                if !(*mass > 0.0) || !(*length > 0.0) {
                    return Err(field("system", "mass and length must be positive"));
                }
                ContinuousLti::rotating_mass(*mass, *length).and_then(|c| lq::discretize(&c, *dt))
            }
            SystemConfig::Continuous { a, b, dt } => {
                ContinuousLti::new(matrix("system.a", a)?, matrix("system.b", b)?).and_then(|c| lq::discretize(&c, *dt))
            }
            SystemConfig::Discrete { a, b } => DiscreteLti::new(matrix("system.a", a)?, matrix("system.b", b)?, None),
        };
        sys.map_err(|e| field("system", e))
    }

    pub fn references_for(&self, sys: &DiscreteLti) -> Result<References, CliError> {
        let mut out = References::new();
        for r in &self.references {
            let name = format!("reference `{}`", r.id);
            let waveform = match &r.input {
                InputConfig::Zero => Waveform::Zero,
                InputConfig::Sin { amplitude, omega } => Waveform::Sin { amplitude: *amplitude, omega: *omega },
                InputConfig::Cos { amplitude, omega } => Waveform::Cos { amplitude: *amplitude, omega: *omega },
                InputConfig::Samples { values } => {
                    if values.iter().any(|row| row.len() != sys.m()) {
                        return Err(field(&name, format!("input samples need {} entries per row", sys.m())));
                    }
                    Waveform::Samples(values.iter().map(|row| Vector::from_column_slice(row)).collect())
                }
            };
            let signal = data::generate_reference(r.id.clone(), sys, &Vector::from_column_slice(&r.x1), &waveform, r.nu2)
                .map_err(|e| field(&name, e))?;
            out.insert(r.id.clone(), signal);
        }
        Ok(out)
    }

    pub fn reference(&self, sys: &DiscreteLti, id: &str) -> Result<ReferenceSignal, CliError> {
        self.references_for(sys)?
            .remove(id)
            .ok_or_else(|| field("reference", format!("unknown reference `{id}`")))
    }

    pub fn horizons(&self, reference: &ReferenceSignal) -> Result<HorizonDistribution, CliError> {
        let h = self.horizon.as_ref().ok_or_else(|| field("horizon", "section is required"))?;
        let nu2 = h.nu2.unwrap_or(reference.nu2());
        if nu2 != reference.nu2() {
            return Err(field("horizon.nu2", format!("{nu2} differs from the length of `{}`", reference.id())));
        }
        match &h.pmf {
            Some(p) => HorizonDistribution::new(h.nu1, nu2, p.clone()),
            None => HorizonDistribution::uniform(h.nu1, nu2),
        }
        .map_err(|e| field("horizon", e))
    }

    pub fn init(&self) -> Result<ReferenceOffset, CliError> {
        let i = self.init.as_ref().ok_or_else(|| field("init", "section is required"))?;
        Ok(ReferenceOffset { half_width: i.half_width.clone(), anchored: i.anchored.clone() })
    }

    pub fn cost(&self, sys: &DiscreteLti) -> Result<CostParams, CliError> {
        let c = self.cost.as_ref().ok_or_else(|| field("cost", "section is required"))?;
        let q = matrix("cost.q", &c.q)?;
        if q.nrows() != sys.n() || q.ncols() != sys.n() {
            return Err(field("cost.q", format!("must be {0}x{0}", sys.n())));
        }
        CostParams::new(q).map_err(|e| field("cost.q", e))
    }

    /// Configured `Σ_w`, zero when the section is absent.
    pub fn noise(&self, sys: &DiscreteLti) -> Result<NoiseModel, CliError> {
        let Some(n) = &self.noise else {
            return Ok(NoiseModel::zero(sys.m()));
        };
        let s = matrix("noise.sigma_w", &n.sigma_w)?;
        if s.nrows() != sys.m() || s.ncols() != sys.m() {
            return Err(field("noise.sigma_w", format!("must be {0}x{0}", sys.m())));
        }
        NoiseModel::new(s).map_err(|e| field("noise.sigma_w", e))
    }

    pub fn estimator_config(&self) -> Result<EstimatorConfig, CliError> {
        let e = &self.estimator;
        let mut solver = match e.solver {
            SolverKind::InteriorPoint => Backend::InteriorPoint(IpmOptions::default()),
            SolverKind::Admm => Backend::Admm(SolverOptions::default()),
        };
        if let Some(t) = e.solver_tol {
            if !(t > 0.0) {
                return Err(field("estimator.solver_tol", "must be positive"));
            }
            solver.set_tol(t);
        }
        if let Some(k) = e.max_iter {
            if k == 0 {
                return Err(field("estimator.max_iter", "must be positive"));
            }
            solver.set_max_iter(k);
        }
        Ok(EstimatorConfig { phi: e.phi, tol_psd: e.tol_psd, tol_eq: e.tol_eq, excitation_tol: e.excitation_tol, solver })
    }

    pub fn noise_estimation(&self) -> NoiseEstimationConfig {
        NoiseEstimationConfig { cut_in: self.noise_estimation.cut_in, min_samples: self.noise_estimation.min_samples }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
seed = 3

[system]
model = "rotating_mass"
mass = 0.2
length = 0.255
dt = 0.05

[[reference]]
id = "train"
nu2 = 10
x1 = [0.0, -0.5]
input = { kind = "sin", amplitude = 0.01, omega = 0.07853981633974483 }
"#;

    #[test]
    fn minimal_config_parses() {
        let c = parse(MINIMAL).unwrap();
        let sys = c.system().unwrap();
        assert_eq!((sys.n(), sys.m()), (2, 1));
        let refs = c.references_for(&sys).unwrap();
        assert_eq!(refs["train"].nu2(), 10);
        assert!(c.noise(&sys).unwrap().is_zero());
        assert_eq!(c.estimator_config().unwrap().phi, 50.0);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = parse(&format!("{MINIMAL}\n[cost]\nq = [[1.0, 0.0], [0.0, 1.0]]\nr = 1\n")).unwrap_err();
        assert!(err.to_string().contains("unknown field"), "{err}");
    }

    #[test]
    fn field_errors_name_the_field() {
        let text = MINIMAL.replace("[[reference]]", "[noise]\nsigma_w = [[1.0, 0.0]]\n\n[[reference]]");
        let err = parse(&text).unwrap_err();
        assert!(err.to_string().starts_with("noise.sigma_w"), "{err}");
        let text = format!("{MINIMAL}\n[simulate]\ntrajectories = 0\n");
        assert!(parse(&text).unwrap_err().to_string().starts_with("simulate.trajectories"));
    }

    #[test]
    fn duplicate_reference_ids_are_rejected() {
        let text = format!("{MINIMAL}\n[[reference]]\nid = \"train\"\nnu2 = 4\nx1 = [0.0, 0.0]\n");
        assert!(parse(&text).unwrap_err().to_string().contains("duplicate"));
    }

    #[test]
    fn hash_is_stable() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }
}
