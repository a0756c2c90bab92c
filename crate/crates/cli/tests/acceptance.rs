//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use common::*;
use lqt_ioc::conic::{
    project, smat, svec, svec_unchecked, Backend, Cone, ConicBackend, ConicProgram, IpmOptions, SolveStatus,
    SolverOptions, SparseMatrix,
};
use lqt_ioc::data::{self, synth_dataset, HorizonDistribution, NoiseEstimationConfig, ReferenceOffset};
use lqt_ioc::ioc::{evaluate_objective, feasibility_check, references, solve_ioc, Candidate, EstimatorConfig};
use lqt_ioc::linalg::Mat;
use lqt_ioc::lq::{self, CostParams, NoiseModel};
use lqt_ioc::oracle::{direct_search_estimator, qp_forward_solve, SearchGrid};
use lqt_ioc::seed;
use lqt_ioc_cli::commands::build_dataset;
use lqt_ioc_cli::config::{self, LoadedConfig, SimulationMode};
use lqt_ioc_cli::{CliError, Options};
use rand::Rng;
use tempfile::TempDir;

type Outcome = Result<String, String>;

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(start: Instant, limit: Duration) -> Result<(), String> {
    let spent = start.elapsed();
    check(spent <= limit, || format!("took {:.1}s, limit {}s", spent.as_secs_f64(), limit.as_secs()))
}

fn cli(e: CliError) -> String {
    e.to_string()
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn load_text(dir: &Path, name: &str, text: &str) -> LoadedConfig {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    config::load(&p).unwrap()
}

fn opts(out: PathBuf, seed: u64, dataset: Option<PathBuf>, solution: Option<PathBuf>) -> Options {
    Options { out, seed, dataset, solution }
}

fn forward_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = seed::rng(1001);
    let mut worst = 0.0f64;
    for case in 0..200 {
        let n = rng.random_range(1..=4);
        let m = rng.random_range(1..=n.min(2));
        let nu2 = rng.random_range(2..=20);
        let horizon = rng.random_range(1..=nu2);
        let sys = random_system(&mut rng, n, m);
        let cost = CostParams::new(random_psd(&mut rng, n) * rng.random_range(0.1..10.0)).unwrap();
        let r = random_reference(&mut rng, "r", n, nu2);
        let x0 = gaussian_vec(&mut rng, n);
        let qp = qp_forward_solve(&sys, &cost, &r, &x0, horizon).map_err(|e| format!("case {case}: {e}"))?;
        let bundle = lq::riccati(&sys, &cost, &r).unwrap();
        let ric = lq::simulate_trajectory(&sys, &bundle, &x0, horizon, &NoiseModel::zero(m), 0).unwrap();
        let scale = ric.states().iter().map(|x| x.norm()).fold(f64::MIN_POSITIVE, f64::max);
        for (a, b) in qp.states().iter().zip(ric.states()) {
            worst = worst.max((a - b).norm() / scale);
        }
    }
    check(worst <= 1e-8, || format!("worst relative state error {worst:.3e}"))?;
    within(start, Duration::from_secs(60))?;
    Ok(format!("200 instances, worst relative error {worst:.2e}"))
}

fn truth_certificate() -> Outcome {
    let start = Instant::now();
    let mut rng = seed::rng(2002);
    let cfg = EstimatorConfig { phi: 1e9, ..EstimatorConfig::default() };
    let (mut min_eig, mut max_schur) = (f64::INFINITY, 0.0f64);
    for case in 0..50 {
        let n = rng.random_range(1..=4);
        let m = rng.random_range(1..=n.min(2));
        let nu2 = rng.random_range(n + 1..=20);
        let sys = random_system(&mut rng, n, m);
        let q = random_psd(&mut rng, n);
        let refs = references([random_reference(&mut rng, "r", n, nu2)]);
        let cert = Candidate::certificate(&sys, &CostParams::new(q).unwrap(), &refs).unwrap();
        let rep = feasibility_check(&cert, &sys, &refs, &cfg).map_err(|e| format!("case {case}: {e}"))?;
        min_eig = min_eig.min(rep.min_h_eig());
        max_schur = max_schur.max(rep.max_schur_norm());
    }
    check(min_eig >= -1e-8 && max_schur <= 1e-8, || {
        format!("min H eigenvalue {min_eig:.3e}, max Schur norm {max_schur:.3e}")
    })?;
    within(start, Duration::from_secs(60))?;
    Ok(format!("50 instances, min H eigenvalue {min_eig:.2e}, max Schur norm {max_schur:.2e}"))
}

fn lower_bound() -> Outcome {
    let start = Instant::now();
    let sys = device();
    let cfg = EstimatorConfig { phi: 1e9, ..EstimatorConfig::default() };
    let noise = NoiseModel::zero(1);
    let mut rng = seed::rng(3003);
    let mut worst_gap = f64::INFINITY;
    for instance in 0..3u64 {
        let q = random_psd(&mut rng, 2) * 0.05 + Mat::identity(2, 2) * 1e-3;
        let r = training_reference(&sys, 40);
        let ds = synth_dataset(
            &sys,
            &CostParams::new(q.clone()).unwrap(),
            &r,
            &HorizonDistribution::uniform(20, 40).unwrap(),
            &ReferenceOffset::position_only(0.5),
            &noise,
            30,
            instance,
        )
        .unwrap();
        let refs = references([r]);
        let truth = Candidate::certificate(&sys, &CostParams::new(q).unwrap(), &refs).unwrap();
        let v_truth = evaluate_objective(&truth, &ds, &refs, &sys, &noise).unwrap();
        let mut pool = vec![truth];
        for k in 0..100 {
            let point = if k % 2 == 0 {
                let qk = random_psd(&mut rng, 2) * rng.random_range(1e-3..1.0);
                let mut c = Candidate::certificate(&sys, &CostParams::new(qk).unwrap(), &refs).unwrap();
                for xi in &mut c.chains[0].xi {
                    *xi += rng.random_range(0.0..1e-3);
                }
                c
            } else {
                let i = rng.random_range(0..pool.len());
                let j = rng.random_range(0..pool.len());
                pool[i].blend(&pool[j], rng.random_range(0.0..1.0)).unwrap()
            };
            let feasible = feasibility_check(&point, &sys, &refs, &cfg).unwrap().is_feasible();
            check(feasible, || format!("instance {instance}, point {k} is not feasible"))?;
            let v = evaluate_objective(&point, &ds, &refs, &sys, &noise).unwrap();
            worst_gap = worst_gap.min(v - v_truth);
            pool.push(point);
        }
    }
    check(worst_gap >= -1e-9, || format!("a feasible point beats the truth by {:.3e}", -worst_gap))?;
    within(start, Duration::from_secs(120))?;
    Ok(format!("3 instances x 100 points, smallest excess {worst_gap:.2e}"))
}

fn exact_recovery() -> Outcome {
    let start = Instant::now();
    let sys = device();
    let q = Mat::identity(2, 2) * 0.01;
    let r = training_reference(&sys, 20);
    let ds = excited_dataset(&sys, &q, &r, 25, 7);
    let refs = references([r]);
    let sol = solve_ioc(&ds, &refs, &sys, &NoiseModel::zero(1), &EstimatorConfig::default()).map_err(|e| e.to_string())?;
    let excitation = sol.excitation.unwrap_or(0.0);
    check(excitation > 0.0, || format!("second-moment matrix is singular ({excitation:.2e})"))?;
    let err = (&sol.q_est - &q).norm() / q.norm();
    check(sol.status == SolveStatus::Optimal && err <= 1e-3, || format!("status {}, relative error {err:.3e}", sol.status))?;
    within(start, Duration::from_secs(120))?;
    Ok(format!("relative error {err:.2e}"))
}

fn consistency() -> Outcome {
    let start = Instant::now();
    let dir = TempDir::new().unwrap();
    let cfg = config::load(&configs().join("training.toml")).map_err(cli)?;
    let sc = cfg.config.consistency.as_ref().unwrap();
    check(sc.m_values == [50, 200, 1000, 2000] && sc.seeds.len() == 5, || "unexpected grid".into())?;
    let report = lqt_ioc_cli::consistency(&cfg, &opts(dir.path().into(), cfg.config.seed, None, None)).map_err(cli)?;
    let medians = report.medians.iter().map(|(m, v)| format!("{m}:{v:.3e}")).collect::<Vec<_>>().join(" ");
    check(report.passed, || format!("trend failed, {} inversions, medians {medians}", report.inversions))?;
    within(start, Duration::from_secs(1800))?;
    Ok(format!("medians {medians}, {} inversion(s)", report.inversions))
}

fn noise_estimation() -> Outcome {
    let start = Instant::now();
    let cfg = config::load(&configs().join("steady.toml")).map_err(cli)?.config;
    let sys = cfg.system().map_err(cli)?;
    let truth = 6.8062e-4;
    let est_cfg = NoiseEstimationConfig { cut_in: 0, min_samples: 10 };
    let mut medians = Vec::new();
    for (trajectories, limit) in [(100usize, 0.10), (1000, 0.03)] {
        let mut errs = Vec::new();
        for s in 1..=10u64 {
            let ds = build_dataset(&cfg, &sys, &["steady".to_string()], trajectories, SimulationMode::Steady, false, s)
                .map_err(cli)?;
            let est = data::estimate_noise_covariance(&ds, &sys, &est_cfg).map_err(|e| e.to_string())?;
            check(est.samples == trajectories * 100, || format!("{} samples", est.samples))?;
            errs.push((est.model.sigma_w()[(0, 0)] - truth).abs() / truth);
        }
        errs.sort_by(f64::total_cmp);
        let med = 0.5 * (errs[4] + errs[5]);
        check(med <= limit, || format!("{} samples: median relative error {med:.3e}", trajectories * 100))?;
        medians.push(format!("{} samples: {med:.2e}", trajectories * 100));
    }
    within(start, Duration::from_secs(120))?;
    Ok(medians.join(", "))
}

fn prediction() -> Outcome {
    let start = Instant::now();
    let dir = TempDir::new().unwrap();
    let base = fs::read_to_string(configs().join("validation.toml")).unwrap();
    let sol = dir.path().join("q_est.json");
    fs::write(&sol, r#"{"q_est": [[0.0043, 0.0017], [0.0017, 0.0007]]}"#).unwrap();
    let mut worst_clean = 0.0f64;
    let mut noisy = Vec::new();
    for (label, text) in [("clean", base.clone()), ("noisy", format!("{base}\n[noise]\nsigma_w = [[6.8062e-4]]\n"))] {
        let cfg = load_text(dir.path(), &format!("{label}.toml"), &text);
        let sim = dir.path().join(format!("{label}-sim"));
        let ds = lqt_ioc_cli::simulate(&cfg, &opts(sim, cfg.config.seed, None, None)).map_err(cli)?.dataset;
        let out = dir.path().join(format!("{label}-pred"));
        let report = lqt_ioc_cli::predict(&cfg, &opts(out.clone(), cfg.config.seed, Some(ds), Some(sol.clone()))).map_err(cli)?;
        check(report.groups.len() == 4, || format!("{label}: {} groups", report.groups.len()))?;
        check(out.join("predict_cos_N112.csv").is_file() && out.join("predict_ramp_N102.csv").is_file(), || {
            format!("{label}: per-group files missing")
        })?;
        for g in &report.groups {
            if label == "clean" {
                worst_clean = worst_clean.max(g.rmse);
            } else {
                check(g.rmse.is_finite(), || format!("{} N = {}: rmse {}", g.ref_id, g.horizon, g.rmse))?;
                noisy.push(format!("{}/{}:{:.2e}", g.ref_id, g.horizon, g.rmse));
            }
        }
    }
    check(worst_clean <= 1e-8, || format!("noiseless rmse {worst_clean:.3e}"))?;
    within(start, Duration::from_secs(120))?;
    Ok(format!("noiseless rmse {worst_clean:.2e}; noisy {}", noisy.join(" ")))
}

fn direct_search_agreement() -> Outcome {
    let start = Instant::now();
    let sys = device();
    let mut worst = Vec::new();
    for (k, c) in [0.004, 0.01, 0.03].into_iter().enumerate() {
        let q = Mat::identity(2, 2) * c;
        let r = training_reference(&sys, 20);
        let ds = excited_dataset(&sys, &q, &r, 25, 40 + k as u64);
        let refs = references([r]);
        let noise = NoiseModel::zero(1);
        // the grid straddles the truth without containing it
        let spacing = c / 8.0;
        let values: Vec<f64> = (0..16).map(|i| c * 0.5 + spacing * (i as f64 + 0.3)).collect();
        let ds_res = direct_search_estimator(&ds, &sys, &refs, &noise, &SearchGrid::Scalar { n: 2, values })
            .map_err(|e| e.to_string())?;
        let sdp = solve_ioc(&ds, &refs, &sys, &noise, &EstimatorConfig::default()).map_err(|e| e.to_string())?;
        let gap = (&ds_res.q - &sdp.q_est).amax();
        let allowed = spacing.max(1e-3);
        check(gap <= allowed, || format!("c = {c}: direct search and SDP differ by {gap:.3e} > {allowed:.3e}"))?;
        worst.push(format!("c={c}: {gap:.2e}"));
    }
    within(start, Duration::from_secs(300))?;
    Ok(worst.join(", "))
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn solver_suite() -> Outcome {
    let start = Instant::now();
    let mut rng = seed::rng(9009);
    for case in 0..4000 {
        let cone = match case % 4 {
            0 => Cone::Zero(rng.random_range(1..6)),
            1 => Cone::Nonneg(rng.random_range(1..6)),
            2 => Cone::Soc(rng.random_range(1..6)),
            _ => Cone::Psd(rng.random_range(1..5)),
        };
        let d = cone.dim();
        let u: Vec<f64> = (0..d).map(|_| rng.random_range(-5.0..5.0)).collect();
        let v: Vec<f64> = (0..d).map(|_| rng.random_range(-5.0..5.0)).collect();
        let (mut pu, mut pv) = (u.clone(), v.clone());
        project(std::slice::from_ref(&cone), &mut pu).unwrap();
        project(std::slice::from_ref(&cone), &mut pv).unwrap();
        let mut ppu = pu.clone();
        project(std::slice::from_ref(&cone), &mut ppu).unwrap();
        check(dist(&pu, &ppu) <= 1e-12, || format!("{cone:?}: projection is not idempotent"))?;
        check(dist(&pu, &pv) <= dist(&u, &v) + 1e-12, || format!("{cone:?}: projection expands"))?;
    }
    for _ in 0..500 {
        let side = rng.random_range(1..7);
        let g = gaussian_mat(&mut rng, side, side);
        let a = (&g + g.transpose()) * 0.5;
        let back = smat(&svec(&a, 1e-12).unwrap()).unwrap();
        check((back - &a).amax() <= 1e-15 * a.amax().max(1.0), || "svec/smat round trip".into())?;
    }
    // min ⟨diag(1, 2), X⟩ s.t. tr X = 1, X ⪰ 0 has value 1 at X = e1 e1ᵀ
    let c = svec_unchecked(&Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]));
    let trace = svec_unchecked(&Mat::identity(2, 2));
    let mut trip: Vec<(usize, usize, f64)> = trace.iter().enumerate().map(|(j, &v)| (0, j, v)).collect();
    trip.extend((0..3).map(|j| (1 + j, j, -1.0)));
    let a = SparseMatrix::from_triplets(4, 3, &trip).unwrap();
    let p = ConicProgram::new(c, a, vec![1.0, 0.0, 0.0, 0.0], vec![Cone::Zero(1), Cone::Psd(2)]).unwrap();
    let want = Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
    for backend in [Backend::InteriorPoint(IpmOptions::default()), Backend::Admm(SolverOptions::default())] {
        let sol = backend.solve(&p).map_err(|e| e.to_string())?;
        let x = smat(&sol.x).unwrap();
        check(
            sol.status == SolveStatus::Optimal && (sol.objective - 1.0).abs() <= 1e-6 && (x - &want).amax() <= 1e-6,
            || format!("{backend:?}: status {}, objective {}", sol.status, sol.objective),
        )?;
    }
    within(start, Duration::from_secs(60))?;
    Ok("4000 projections, 500 round trips, minimal-eigenvalue SDP on both backends".into())
}

fn tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn run_bin(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_lqt-ioc")).args(args).output().map_err(|e| e.to_string())?;
    check(out.status.success(), || format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)))
}

const SMALL: &str = r#"
seed = 17

[system]
model = "rotating_mass"
mass = 0.2
length = 0.255
dt = 0.05

[[reference]]
id = "train"
nu2 = 30
x1 = [0.0, -0.5]
input = { kind = "sin", amplitude = 0.01, omega = 0.07853981633974483 }

[[reference]]
id = "steady"
nu2 = 30
x1 = [0.0, 0.2]

[horizon]
nu1 = 20

[init]
half_width = [0.5235987755982988, 0.0]
anchored = [true, false]

[cost]
q = [[0.01, 0.0], [0.0, 0.01]]

[noise]
sigma_w = [[6.8062e-4]]

[simulate]
trajectories = 40
references = ["train"]

[consistency]
m_values = [20, 40]
seeds = [1, 2]
"#;

fn determinism() -> Outcome {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("small.toml");
    fs::write(&cfg, SMALL).unwrap();
    let steady_cfg = dir.path().join("steady.toml");
    fs::write(&steady_cfg, SMALL.replace("references = [\"train\"]", "references = [\"steady\"]\nmode = \"steady\"")).unwrap();
    let c = cfg.to_str().unwrap();
    let sc = steady_cfg.to_str().unwrap();
    let mut compared = 0;
    let roots = [dir.path().join("a"), dir.path().join("b")];
    for root in &roots {
        let r = |p: &str| root.join(p).to_str().unwrap().to_string();
        run_bin(&["simulate", "--config", c, "--out", &r("sim")])?;
        run_bin(&["estimate", "--config", c, "--dataset", &r("sim/dataset.jsonl"), "--out", &r("est")])?;
        run_bin(&["consistency", "--config", c, "--out", &r("cons")])?;
        run_bin(&[
            "predict",
            "--config",
            c,
            "--dataset",
            &r("sim/dataset.jsonl"),
            "--solution",
            &r("est/solution.json"),
            "--out",
            &r("pred"),
        ])?;
        run_bin(&["simulate", "--config", sc, "--out", &r("steady")])?;
        run_bin(&["noise", "--config", sc, "--dataset", &r("steady/dataset.jsonl"), "--out", &r("noise")])?;
    }
    for sub in ["sim", "est", "cons", "pred", "steady", "noise"] {
        let (a, b) = (tree(&roots[0].join(sub)), tree(&roots[1].join(sub)));
        check(!a.is_empty() && a == b, || format!("`{sub}` outputs differ between runs"))?;
        compared += a.len();
    }
    Ok(format!("6 runs, {compared} files byte-identical"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("forward-oracle equivalence", forward_oracle),
        ("truth feasibility certificate", truth_certificate),
        ("empirical lower bound", lower_bound),
        ("exact recovery", exact_recovery),
        ("consistency at desk scale", consistency),
        ("noise-covariance estimation", noise_estimation),
        ("prediction round trip", prediction),
        ("direct search vs SDP", direct_search_agreement),
        ("solver unit suite", solver_suite),
        ("determinism", determinism),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = match panic::catch_unwind(AssertUnwindSafe(f)) {
            Ok(r) => r,
            Err(p) => Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into())),
        };
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS {name} ({secs:.1}s): {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} FAIL {name} ({secs:.1}s): {why}", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
