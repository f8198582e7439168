use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rsbandit::harness::{aggregate, emit_csv, run_experiment_in, Environment, EnvironmentSpec};
use rsbandit::{Algorithm, Error, ExperimentConfig};

#[derive(Parser)]
#[command(name = "rsbandit", version, about = "Rarely-switching linear contextual bandit experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthetic linear bandit with unit-norm arms and sphere-uniform contexts.
    Simulate(SimulateArgs),
    /// Two-arm IHDP task read from a CSV file.
    Ihdp(IhdpArgs),
    /// Repeat a run for several values of one hyperparameter.
    Sweep(SweepArgs),
}

#[derive(Subcommand, Clone)]
enum RunCommand {
    Simulate(SimulateArgs),
    Ihdp(IhdpArgs),
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Algorithm ids, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    algo: Vec<String>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Gradient steps per boundary optimization.
    #[arg(long)]
    n_iter: Option<usize>,
    /// Initial gradient step.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Angle tolerance below which boundary changes are ignored.
    #[arg(long)]
    delta_tol: Option<f64>,
    #[arg(long)]
    clucb_alpha: Option<f64>,
    /// Determinant growth factor minus one for rs_linucb recomputes.
    #[arg(long)]
    rs_linucb_c: Option<f64>,
    /// Contexts per Monte Carlo evaluation of a policy change.
    #[arg(long)]
    mc_samples: Option<usize>,
    /// Factor on the data-dependent part of the confidence radius.
    #[arg(long)]
    radius_noise_scale: Option<f64>,
}

#[derive(Args, Clone)]
struct SimulateArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, default_value_t = 4)]
    arms: usize,
    #[arg(long, default_value_t = 5)]
    dim: usize,
    #[arg(long, default_value_t = 10_000)]
    rounds: usize,
}

#[derive(Args, Clone)]
struct IhdpArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    data: PathBuf,
    /// Rounds per realization; subjects repeat in file order past the end.
    #[arg(long)]
    rounds: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepParam {
    Lambda,
    #[value(name = "delta_tol")]
    DeltaTol,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, value_enum)]
    param: SweepParam,
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<f64>,
    #[command(subcommand)]
    run: RunCommand,
}

fn apply_common(cfg: &mut ExperimentConfig, c: &CommonArgs) {
    let set = |dst: &mut f64, v: Option<f64>| {
        if let Some(v) = v {
            *dst = v;
        }
    };
    if let Some(r) = c.reps {
        cfg.replications = r;
    }
    set(&mut cfg.lambda, c.lambda);
    set(&mut cfg.delta, c.delta);
    set(&mut cfg.sigma, c.sigma);
    set(&mut cfg.optimizer.epsilon, c.epsilon);
    set(&mut cfg.optimizer.tolerance_delta, c.delta_tol);
    set(&mut cfg.clucb_alpha, c.clucb_alpha);
    set(&mut cfg.rs_linucb_c, c.rs_linucb_c);
    set(&mut cfg.radius_noise_scale, c.radius_noise_scale);
    if let Some(n) = c.n_iter {
        cfg.optimizer.n_iter = n;
    }
    if let Some(n) = c.mc_samples {
        cfg.mc_samples = n;
    }
    cfg.seed = c.seed;
    cfg.output_dir = Some(c.out.clone());
}

fn base_config(run: &RunCommand) -> (ExperimentConfig, &CommonArgs) {
    match run {
        RunCommand::Simulate(a) => {
            let mut cfg = ExperimentConfig {
                arms: a.arms,
                dim: a.dim,
                rounds: a.rounds,
                ..ExperimentConfig::default()
            };
            apply_common(&mut cfg, &a.common);
            (cfg, &a.common)
        }
        RunCommand::Ihdp(a) => {
            let mut cfg = ExperimentConfig::ihdp(&a.data);
            if let Some(r) = a.rounds {
                cfg.rounds = r;
            }
            apply_common(&mut cfg, &a.common);
            (cfg, &a.common)
        }
    }
}

fn parse_algorithms(ids: &[String]) -> Result<Vec<Algorithm>, Error> {
    ids.iter().map(|s| s.trim().parse()).collect()
}

/// Runs every requested algorithm on one environment and writes the CSV files.
fn execute(cfg: &ExperimentConfig, algorithms: &[Algorithm], env: &Environment) -> Result<(), Error> {
    let mut summaries = Vec::with_capacity(algorithms.len());
    for &algorithm in algorithms {
        let cfg = ExperimentConfig {
            algorithm,
            ..cfg.clone()
        };
        let runs = run_experiment_in(&cfg, env)?;
        let s = aggregate(&runs)?;
        println!(
            "{:<22} changes {:>8.2}  per-step regret {:.5}  below baseline {:.4}  improving {}",
            algorithm.id(),
            s.total_changes.value,
            s.final_per_step_regret.value,
            s.below_baseline_fraction.value,
            s.improving_change_fraction
                .map_or_else(|| "-".to_string(), |iv| format!("{:.3}", iv.value)),
        );
        summaries.push(s);
    }
    if let Some(dir) = &cfg.output_dir {
        emit_csv(&summaries, dir)?;
    }
    Ok(())
}

fn prepare(run: &RunCommand) -> Result<(ExperimentConfig, Vec<Algorithm>, Environment), Error> {
    let (cfg, common) = base_config(run);
    let algorithms = parse_algorithms(&common.algo)?;
    for &algorithm in &algorithms {
        ExperimentConfig {
            algorithm,
            ..cfg.clone()
        }
        .validate()?;
    }
    if let EnvironmentSpec::Ihdp { path } = &cfg.environment {
        if !path.is_file() {
            return Err(Error::Config(format!("IHDP data file {} not found", path.display())));
        }
    }
    let env = Environment::load(&cfg.environment)?;
    Ok((cfg, algorithms, env))
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Simulate(a) => {
            let (cfg, algorithms, env) = prepare(&RunCommand::Simulate(a))?;
            execute(&cfg, &algorithms, &env)
        }
        Command::Ihdp(a) => {
            let (cfg, algorithms, env) = prepare(&RunCommand::Ihdp(a))?;
            execute(&cfg, &algorithms, &env)
        }
        Command::Sweep(s) => {
            let (base, algorithms, env) = prepare(&s.run)?;
            let out = base.output_dir.clone().unwrap_or_default();
            for &value in &s.values {
                let mut cfg = base.clone();
                let name = match s.param {
                    SweepParam::Lambda => {
                        cfg.lambda = value;
                        "lambda"
                    }
                    SweepParam::DeltaTol => {
                        cfg.optimizer.tolerance_delta = value;
                        "delta_tol"
                    }
                };
                cfg.output_dir = Some(out.join(format!("{name}={value}")));
                println!("# {name} = {value}");
                for &algorithm in &algorithms {
                    ExperimentConfig { algorithm, ..cfg.clone() }.validate()?;
                }
                execute(&cfg, &algorithms, &env)?;
            }
            Ok(())
        }
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::RejectedInput(_) | Error::DimensionMismatch { .. } => 2,
        Error::Csv { source, .. } if source.is_io_error() => 1,
        Error::Format { .. } | Error::Csv { .. } => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
