use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qmetro_cli::config::{load_config, Experiment, RunConfig};
use qmetro_cli::gradcheck::{require_all_passed, run_grad_check};
use qmetro_cli::reference::{crossover_line, default_reference_grid, reference_curves, write_reference_csv};
use qmetro_cli::sweep::{run_sweep, verify_params, write_outputs};
use qmetro_cli::{CliError, Result, EXIT_NUMERICAL, EXIT_VALIDATION};

/// Round-trip tolerance on re-evaluated best costs.
const ROUND_TRIP_TOL: f64 = 1e-12;

#[derive(Parser)]
#[command(name = "qmetro", version, about = "Variational multi-parameter sensing sweeps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Three-qubit Ramsey sweep over the dephasing probability.
    Ramsey(Common),
    /// NV-center magnetometry sweep over the gate depolarization.
    Nv(Common),
    /// Compare parameter-shift and finite-difference derivatives.
    GradCheck {
        #[command(flatten)]
        common: Common,
        /// Model to check when no config is given.
        #[arg(long, value_enum, default_value = "ramsey")]
        experiment: ExperimentArg,
    },
    /// Closed-form GHZ and standard Ramsey costs on a grid of p.
    ReferenceCurves(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config restart count.
    #[arg(long)]
    restarts: Option<usize>,
    /// Worker threads, 0 = one per core.
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum ExperimentArg {
    Ramsey,
    Nv,
}

impl From<ExperimentArg> for Experiment {
    fn from(e: ExperimentArg) -> Self {
        match e {
            ExperimentArg::Ramsey => Experiment::Ramsey,
            ExperimentArg::Nv => Experiment::Nv,
        }
    }
}

fn resolve(common: &Common, experiment: Experiment) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => load_config(p)?,
        None => RunConfig::default_for(experiment),
    };
    if cfg.experiment != experiment {
        return Err(CliError::Validation(format!(
            "field `experiment`: config is for `{}` but the subcommand is `{}`",
            cfg.experiment.name(),
            experiment.name()
        )));
    }
    if let Some(s) = common.seed {
        cfg.optimizer.seed = s;
    }
    if let Some(r) = common.restarts {
        cfg.optimizer.restarts = r;
    }
    cfg.optimizer
        .validate()
        .map_err(|e| CliError::Validation(format!("--restarts: {e}")))?;
    if common.out.is_some() {
        cfg.out = common.out.clone();
    }
    Ok(cfg)
}

fn init_threads(n: usize) -> Result<()> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Validation(format!("--threads: {e}")))
}

fn default_out(name: &str) -> PathBuf {
    PathBuf::from(format!("{name}.csv"))
}

fn sweep(common: &Common, experiment: Experiment) -> Result<()> {
    let cfg = resolve(common, experiment)?;
    let out = cfg.out.clone().unwrap_or_else(|| default_out(experiment.name()));
    let result = run_sweep(&cfg)?;
    let sidecar = write_outputs(&out, &result)?;
    let drift = verify_params(&result.params)?;
    if drift > ROUND_TRIP_TOL {
        return Err(CliError::Numerical(format!(
            "re-evaluating the dumped parameters moved a cost by {drift:e}"
        )));
    }
    eprintln!("wrote {} and {}", out.display(), sidecar.display());
    Ok(())
}

fn grad_check(common: &Common, experiment: Experiment) -> Result<()> {
    let experiment = match &common.config {
        Some(p) => load_config(p)?.experiment,
        None => experiment,
    };
    let cfg = resolve(common, experiment)?;
    let checks = run_grad_check(&cfg)?;
    for c in &checks {
        for line in c.lines() {
            println!("{line}");
        }
    }
    require_all_passed(&checks)
}

fn reference(common: &Common) -> Result<()> {
    let grid = match &common.config {
        Some(_) => resolve(common, Experiment::Ramsey)?.grid,
        None => default_reference_grid(),
    };
    let out = common.out.clone().unwrap_or_else(|| default_out("reference_curves"));
    let rows = reference_curves(&grid)?;
    write_reference_csv(&out, &rows)?;
    eprintln!("{}", crossover_line());
    eprintln!("wrote {}", Path::new(&out).display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let common = match &cli.command {
        Command::Ramsey(c) | Command::Nv(c) | Command::ReferenceCurves(c) => c,
        Command::GradCheck { common, .. } => common,
    };
    init_threads(common.threads)?;
    match &cli.command {
        Command::Ramsey(c) => sweep(c, Experiment::Ramsey),
        Command::Nv(c) => sweep(c, Experiment::Nv),
        Command::GradCheck { common, experiment } => grad_check(common, (*experiment).into()),
        Command::ReferenceCurves(c) => reference(c),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_VALIDATION as u8)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            debug_assert!(matches!(e.exit_code(), EXIT_VALIDATION | EXIT_NUMERICAL));
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
