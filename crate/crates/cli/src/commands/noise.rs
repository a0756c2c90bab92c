use std::path::PathBuf;

use lqt_ioc::data;
use serde::Serialize;
use serde_json::json;

use super::read_dataset;
use crate::config::LoadedConfig;
use crate::output::{ensure_dir, rows, write_json, write_manifest};
use crate::{CliError, Options};

#[derive(Debug, Clone, Serialize)]
pub struct NoiseReport {
    pub sigma_w: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    pub samples: usize,
    #[serde(skip)]
    pub path: PathBuf,
}

/// Estimates `Σ_w` from steady data and writes `noise.json`.
pub fn noise(cfg: &LoadedConfig, opts: &Options) -> Result<NoiseReport, CliError> {
    let c = &cfg.config;
    let sys = c.system()?;
    let dataset_path = opts.dataset()?.clone();
    let ds = read_dataset(&dataset_path)?;
    let est = data::estimate_noise_covariance(&ds, &sys, &c.noise_estimation())?;
    ensure_dir(&opts.out)?;
    let path = opts.out.join("noise.json");
    let report = NoiseReport {
        sigma_w: rows(est.model.sigma_w()),
        mean: est.mean.iter().copied().collect(),
        samples: est.samples,
        path: path.clone(),
    };
    write_json(&path, &report)?;
    let details = json!({ "samples": est.samples, "cut_in": c.noise_estimation.cut_in });
    write_manifest(&opts.out, "noise", cfg, opts.seed, &[dataset_path.as_path()], std::slice::from_ref(&path), details)?;
    Ok(report)
}
