use std::path::PathBuf;

use lqt_ioc::data::Dataset;
use lqt_ioc::ioc;
use lqt_ioc::seed;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use super::estimate::dataset_references;
use super::read_dataset;
use super::simulate::build_dataset;
use crate::config::{ConsistencyMode, LoadedConfig, SimulationMode};
use crate::output::{ensure_dir, num, write_json, write_manifest, Csv};
use crate::{CliError, Options};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsistencyRow {
    pub m: usize,
    pub seed: u64,
    /// `‖Q_est − Q̄‖_F / ‖Q̄‖_F`.
    pub relative_error: f64,
    pub status: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConsistencyReport {
    pub rows: Vec<ConsistencyRow>,
    /// `(M, median relative error)` in the configured order of `M`.
    pub medians: Vec<(usize, f64)>,
    pub inversions: usize,
    pub passed: bool,
    #[serde(skip)]
    pub outputs: Vec<PathBuf>,
}

/// Median; NaN ranks above every number.
fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let k = v.len();
    if k == 0 {
        return f64::NAN;
    }
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

/// Counts adjacent increases of the medians. The trend passes when there
/// are at most `max_inversions` of them and the last median is strictly
/// below the first; a grid with a single `M` passes if its median is finite.
pub fn trend_verdict(medians: &[f64], max_inversions: usize) -> (usize, bool) {
    let inversions = medians.windows(2).filter(|w| !(w[1] <= w[0])).count();
    let improved = match medians {
        [] => false,
        [only] => only.is_finite(),
        [first, .., last] => last < first,
    };
    (inversions, inversions <= max_inversions && improved)
}

pub fn consistency(cfg: &LoadedConfig, opts: &Options) -> Result<ConsistencyReport, CliError> {
    let c = &cfg.config;
    let sc = c.consistency.as_ref().ok_or_else(|| CliError::Config("consistency: section is required".into()))?;
    let sys = c.system()?;
    let truth = c.cost(&sys)?.q().clone();
    let noise = c.noise(&sys)?;
    let est = c.estimator_config()?;
    let ref_id = match &sc.reference {
        Some(id) => id.clone(),
        None => c.references.first().map(|r| r.id.clone()).ok_or_else(|| CliError::Config("reference: none configured".into()))?,
    };
    let pool: Option<Dataset> = match sc.mode {
        ConsistencyMode::Regenerate => None,
        ConsistencyMode::Subsample => {
            let ds = read_dataset(opts.dataset()?)?;
            Some(ds.filter(|t| t.ref_id() == ref_id))
        }
    };
    if let Some(pool) = &pool {
        let largest = sc.m_values.iter().copied().max().unwrap_or(0);
        if largest > pool.len() {
            return Err(CliError::Config(format!(
                "consistency.m_values: M = {largest} exceeds the {} trajectories of reference `{ref_id}` in the dataset",
                pool.len()
            )));
        }
    }

    let cases: Vec<(usize, u64)> = sc.m_values.iter().flat_map(|&m| sc.seeds.iter().map(move |&s| (m, s))).collect();
    let run_case = |&(m, s): &(usize, u64)| -> Result<ConsistencyRow, CliError> {
        let stream = seed::split(s, m as u64);
        let ds = match &pool {
            None => build_dataset(c, &sys, std::slice::from_ref(&ref_id), m, SimulationMode::ClosedLoop, false, stream)?,
            Some(pool) => {
                let mut rng = seed::rng(stream);
                let mut picked = rand::seq::index::sample(&mut rng, pool.len(), m).into_vec();
                picked.sort_unstable();
                let trs = picked.into_iter().map(|i| pool.trajectories()[i].clone()).collect();
                Dataset::new(pool.nu2(), pool.n(), pool.m(), trs)?
            }
        };
        let refs = dataset_references(c, &sys, &ds)?;
        let sol = ioc::solve_ioc(&ds, &refs, &sys, &noise, &est)?;
        let status = if sol.feasibility.is_feasible() { sol.status.to_string() } else { format!("{}_infeasible_point", sol.status) };
        let relative_error = (&sol.q_est - &truth).norm() / truth.norm();
        log::info!("M = {m}, seed = {s}: relative error {relative_error:.3e} ({status})");
        Ok(ConsistencyRow { m, seed: s, relative_error, status })
    };
    // Every case owns its seed stream, so the parallel map is order independent.
    let rows = cases.par_iter().map(run_case).collect::<Result<Vec<_>, _>>()?;

    let medians: Vec<(usize, f64)> = sc
        .m_values
        .iter()
        .map(|&m| {
            let errs: Vec<f64> = rows.iter().filter(|r| r.m == m).map(|r| r.relative_error).collect();
            (m, median(&errs))
        })
        .collect();
    let meds: Vec<f64> = medians.iter().map(|(_, v)| *v).collect();
    let (inversions, passed) = trend_verdict(&meds, sc.max_inversions);

    ensure_dir(&opts.out)?;
    let header = |h: &[&str]| h.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    let mut per_case = Csv::create(opts.out.join("consistency.csv"), &header(&["m", "seed", "relative_error", "status"]))?;
    for r in &rows {
        per_case.row(&[r.m.to_string(), r.seed.to_string(), num(r.relative_error), r.status.clone()])?;
    }
    let mut summary = Csv::create(opts.out.join("summary.csv"), &header(&["m", "median_relative_error"]))?;
    for (m, v) in &medians {
        summary.row(&[m.to_string(), num(*v)])?;
    }
    let mut outputs = vec![per_case.finish()?, summary.finish()?];
    let summary_json = opts.out.join("summary.json");
    write_json(
        &summary_json,
        &json!({
            "reference": ref_id,
            "medians": medians.iter().map(|(m, v)| json!({ "m": m, "median_relative_error": v })).collect::<Vec<_>>(),
            "inversions": inversions,
            "max_inversions": sc.max_inversions,
            "passed": passed,
        }),
    )?;
    outputs.push(summary_json);
    let inputs: Vec<&std::path::Path> = match sc.mode {
        ConsistencyMode::Subsample => vec![opts.dataset()?.as_path()],
        ConsistencyMode::Regenerate => vec![],
    };
    let details = json!({ "cases": rows.len(), "inversions": inversions, "passed": passed });
    write_manifest(&opts.out, "consistency", cfg, opts.seed, &inputs, &outputs, details)?;
    if !passed {
        log::warn!("median error does not decrease with M: {inversions} inversions, medians {medians:?}");
    }
    let report = ConsistencyReport { rows, medians, inversions, passed, outputs };
    Ok(report)
}
