use std::collections::BTreeMap;
use std::path::PathBuf;

use lqt_ioc::data::{self, Dataset, Trajectory};
use lqt_ioc::lq::{DiscreteLti, GaussianNoise, ProcessNoise};
use lqt_ioc::seed;
use serde_json::json;

use crate::config::{LoadedConfig, RunConfig, SimulationMode};
use crate::output::{ensure_dir, write_manifest};
use crate::{CliError, Options};

#[derive(Debug, Clone)]
pub struct SimulateReport {
    pub dataset: PathBuf,
    pub manifest: PathBuf,
    /// `M_N` per horizon.
    pub counts: BTreeMap<usize, usize>,
}

/// `count` trajectories for every reference in `ids`; reference `k` draws
/// from the stream `seed::split(root, k)`.
pub fn build_dataset(
    cfg: &RunConfig,
    sys: &DiscreteLti,
    ids: &[String],
    count: usize,
    mode: SimulationMode,
    store_controls: bool,
    root: u64,
) -> Result<Dataset, CliError> {
    if count == 0 {
        return Err(CliError::Config("number of trajectories must be positive".into()));
    }
    let noise = cfg.noise(sys)?;
    let mut merged: Option<Dataset> = None;
    for (k, id) in ids.iter().enumerate() {
        let reference = cfg.reference(sys, id)?;
        let stream = seed::split(root, k as u64);
        let ds = match mode {
            SimulationMode::ClosedLoop => {
                let horizons = cfg.horizons(&reference)?;
                let init = cfg.init()?;
                data::synth_dataset(sys, &cfg.cost(sys)?, &reference, &horizons, &init, &noise, count, stream)?
            }
            SimulationMode::Steady => {
                let sampler = GaussianNoise::new(&noise)?;
                let nu2 = reference.nu2();
                if nu2 < 2 {
                    return Err(CliError::Config(format!("reference `{id}` needs at least two samples")));
                }
                let mut trajectories = Vec::with_capacity(count);
                for i in 0..count {
                    let mut rng = seed::rng(seed::split(stream, i as u64));
                    let mut x = reference.at(1).clone();
                    let mut states = vec![x.clone()];
                    let mut controls = Vec::with_capacity(nu2 - 1);
                    for _ in 1..nu2 {
                        let w = sampler.sample(&mut rng);
                        x = sys.step(&x, &w);
                        states.push(x.clone());
                        controls.push(lqt_ioc::linalg::Vector::zeros(sys.m()));
                    }
                    let tr = Trajectory::new(format!("{id}-{i:06}"), nu2, nu2, states, Some(controls), id.clone())?;
                    trajectories.push(tr);
                }
                Dataset::new(nu2, sys.n(), sys.m(), trajectories)?
            }
        };
        merged = Some(match merged {
            None => ds,
            Some(prev) => prev.merge(ds)?,
        });
    }
    let ds = merged.ok_or_else(|| CliError::Config("no reference to simulate".into()))?;
    if store_controls {
        return Ok(ds);
    }
    let stripped = ds.trajectories().iter().cloned().map(Trajectory::without_controls).collect();
    Ok(Dataset::new(ds.nu2(), ds.n(), ds.m(), stripped)?)
}

pub fn simulate(cfg: &LoadedConfig, opts: &Options) -> Result<SimulateReport, CliError> {
    let c = &cfg.config;
    let s = c.simulate.as_ref().ok_or_else(|| CliError::Config("simulate: section is required".into()))?;
    let sys = c.system()?;
    let ids: Vec<String> = match &s.references {
        Some(ids) => ids.clone(),
        None => c.references.iter().map(|r| r.id.clone()).collect(),
    };
    let ds = build_dataset(c, &sys, &ids, s.trajectories, s.mode, s.store_controls, opts.seed)?;
    ensure_dir(&opts.out)?;
    let path = opts.out.join("dataset.jsonl");
    data::write_dataset(&ds, &path)?;
    let counts = ds.counts().clone();
    let details = json!({
        "trajectories": ds.len(),
        "references": ids,
        "counts": counts.iter().map(|(n, k)| json!({ "horizon": n, "trajectories": k })).collect::<Vec<_>>(),
    });
    let manifest = write_manifest(&opts.out, "simulate", cfg, opts.seed, &[], std::slice::from_ref(&path), details)?;
    Ok(SimulateReport { dataset: path, manifest, counts })
}
