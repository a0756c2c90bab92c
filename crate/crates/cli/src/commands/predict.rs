use std::collections::BTreeMap;
use std::path::PathBuf;

use lqt_ioc::data::Trajectory;
use lqt_ioc::linalg::Vector;
use lqt_ioc::lq::{self, CostParams, NoiseModel};
use serde::Serialize;
use serde_json::json;

use super::estimate::{dataset_references, read_q_est};
use super::read_dataset;
use crate::config::{LoadedConfig, PredictStart};
use crate::output::{ensure_dir, num, write_manifest, Csv};
use crate::{CliError, Options};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupRmse {
    pub ref_id: String,
    pub horizon: usize,
    pub trajectories: usize,
    pub rmse: f64,
}

#[derive(Debug, Clone)]
pub struct PredictReport {
    pub groups: Vec<GroupRmse>,
    pub outputs: Vec<PathBuf>,
}

/// Replays the estimated cost in closed loop without noise, for every
/// `(reference, horizon)` group of the validation dataset, and compares the
/// prediction with the recorded states.
pub fn predict(cfg: &LoadedConfig, opts: &Options) -> Result<PredictReport, CliError> {
    let c = &cfg.config;
    let sys = c.system()?;
    let solution_path = opts.solution()?.clone();
    let dataset_path = opts.dataset()?.clone();
    let q = read_q_est(&solution_path)?;
    if q.nrows() != sys.n() {
        return Err(CliError::Config(format!("solution: Q is {0}×{0} but the system has n = {1}", q.nrows(), sys.n())));
    }
    let cost = CostParams::new(q).map_err(|e| CliError::Config(format!("solution: {e}")))?;
    let ds = read_dataset(&dataset_path)?;
    if ds.is_empty() {
        return Err(CliError::Config(format!("dataset `{}` has no trajectories", dataset_path.display())));
    }
    if ds.n() != sys.n() {
        return Err(CliError::Config(format!("dataset has n = {} but the system has n = {}", ds.n(), sys.n())));
    }
    let refs = dataset_references(c, &sys, &ds)?;

    let mut groups: BTreeMap<(String, usize), Vec<&Trajectory>> = BTreeMap::new();
    for tr in ds.trajectories() {
        let wanted = c.predict.horizons.as_ref().is_none_or(|h| h.contains(&tr.horizon()));
        if wanted {
            groups.entry((tr.ref_id().to_string(), tr.horizon())).or_default().push(tr);
        }
    }
    if groups.is_empty() {
        return Err(CliError::Config("predict.horizons: no trajectory of the dataset has a listed horizon".into()));
    }

    ensure_dir(&opts.out)?;
    let n = sys.n();
    let header: Vec<String> = ["t".to_string(), "trajectory".to_string()]
        .into_iter()
        .chain((1..=n).map(|i| format!("pred_x{i}")))
        .chain((1..=n).map(|i| format!("obs_x{i}")))
        .collect();
    let silent = NoiseModel::zero(sys.m());
    let mut bundles = BTreeMap::new();
    let mut outputs = Vec::new();
    let mut summary = Vec::new();
    for ((ref_id, horizon), members) in &groups {
        let reference = &refs[ref_id];
        if reference.nu2() != ds.nu2() {
            return Err(CliError::Config(format!(
                "reference `{ref_id}` has nu2 = {} but the dataset has nu2 = {}",
                reference.nu2(),
                ds.nu2()
            )));
        }
        if !bundles.contains_key(ref_id) {
            bundles.insert(ref_id.clone(), lq::riccati(&sys, &cost, reference)?);
        }
        let bundle = &bundles[ref_id];
        let rollout = |x0: &Vector| -> Result<Vec<Vector>, CliError> {
            Ok(lq::simulate_trajectory(&sys, bundle, x0, *horizon, &silent, 0)?.states().to_vec())
        };
        let shared = match c.predict.start {
            PredictStart::GroupMean => {
                let mean = members.iter().fold(Vector::zeros(n), |acc, tr| acc + &tr.states()[0]) / members.len() as f64;
                Some(rollout(&mean)?)
            }
            PredictStart::PerTrajectory => None,
        };
        let path = opts.out.join(format!("predict_{ref_id}_N{horizon}.csv"));
        let mut csv = Csv::create(path, &header)?;
        let start = ds.nu2() - horizon + 1;
        let mut sq = 0.0;
        let mut count = 0usize;
        for tr in members {
            let own;
            let pred = match &shared {
                Some(p) => p,
                None => {
                    own = rollout(&tr.states()[0])?;
                    &own
                }
            };
            for (k, (p, o)) in pred.iter().zip(tr.states()).enumerate() {
                sq += (p - o).norm_squared();
                count += n;
                let fields: Vec<String> = [(start + k).to_string(), tr.id().to_string()]
                    .into_iter()
                    .chain(p.iter().map(|v| num(*v)))
                    .chain(o.iter().map(|v| num(*v)))
                    .collect();
                csv.row(&fields)?;
            }
        }
        outputs.push(csv.finish()?);
        summary.push(GroupRmse {
            ref_id: ref_id.clone(),
            horizon: *horizon,
            trajectories: members.len(),
            rmse: (sq / count as f64).sqrt(),
        });
    }

    let mut table = Csv::create(
        opts.out.join("rmse.csv"),
        &["ref_id", "horizon", "trajectories", "rmse"].map(String::from),
    )?;
    for g in &summary {
        table.row(&[g.ref_id.clone(), g.horizon.to_string(), g.trajectories.to_string(), num(g.rmse)])?;
    }
    outputs.push(table.finish()?);
    let details = json!({ "groups": summary.len(), "start": format!("{:?}", c.predict.start) });
    write_manifest(
        &opts.out,
        "predict",
        cfg,
        opts.seed,
        &[solution_path.as_path(), dataset_path.as_path()],
        &outputs,
        details,
    )?;
    Ok(PredictReport { groups: summary, outputs })
}
