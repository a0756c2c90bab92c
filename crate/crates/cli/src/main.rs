use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lqt_ioc_cli::{config, CliError, Options};

#[derive(Parser)]
#[command(name = "lqt-ioc", version, about = "Inverse optimal control for LQ tracking with random horizons")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a trajectory dataset.
    Simulate(Common),
    /// Estimate Q from a dataset.
    Estimate(Common),
    /// Sweep the number of trajectories and check that the error decreases.
    Consistency(Common),
    /// Replay an estimate on validation data.
    Predict(Common),
    /// Estimate the process-noise covariance from steady data.
    Noise(Common),
}

#[derive(clap::Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    solution: Option<PathBuf>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (name, args) = match &cli.command {
        Command::Simulate(a) => ("simulate", a),
        Command::Estimate(a) => ("estimate", a),
        Command::Consistency(a) => ("consistency", a),
        Command::Predict(a) => ("predict", a),
        Command::Noise(a) => ("noise", a),
    };
    let cfg = config::load(&args.config)?;
    let opts = Options::resolve(&cfg.config, args.out.clone(), args.seed, args.dataset.clone(), args.solution.clone())?;
    log::info!("{name}: writing to {}", opts.out.display());
    match cli.command {
        Command::Simulate(_) => {
            let r = lqt_ioc_cli::simulate(&cfg, &opts)?;
            println!("{}", r.dataset.display());
        }
        Command::Estimate(_) => {
            let r = lqt_ioc_cli::estimate(&cfg, &opts)?;
            println!("{}", r.path.display());
        }
        Command::Consistency(_) => {
            let r = lqt_ioc_cli::consistency(&cfg, &opts)?;
            for (m, v) in &r.medians {
                println!("M = {m}: median relative error {v:.6e}");
            }
        }
        Command::Predict(_) => {
            let r = lqt_ioc_cli::predict(&cfg, &opts)?;
            for g in &r.groups {
                println!("{} N = {}: rmse {:.6e}", g.ref_id, g.horizon, g.rmse);
            }
        }
        Command::Noise(_) => {
            let r = lqt_ioc_cli::noise(&cfg, &opts)?;
            println!("{}", r.path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
