//! Grid sweeps: one optimized (or fixed) bound per grid value and ansatz.

use std::path::{Path, PathBuf};
use std::time::Instant;

use qmetro::experiments::{build_nv, build_ramsey, ramsey_reference_costs, NvScenario, RamseyScenario, Setup};
use qmetro::optimize::{descend, multi_restart_with_seeds, RestartSummary, Update};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Ansatz, Experiment, RunConfig, SCHEMA_VERSION};
use crate::{point_seed, CliError, Result};

pub const CSV_HEADER: [&str; 10] = [
    "experiment",
    "noise_value",
    "ansatz",
    "restart_count",
    "best_cost",
    "ghz_reference_cost",
    "local_reference_cost",
    "seed",
    "steps_used",
    "wall_time",
];

#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    pub experiment: Experiment,
    pub noise_value: f64,
    pub ansatz: Ansatz,
    /// Descents run at this point, the warm start included; zero for fixed
    /// reference circuits.
    pub restart_count: usize,
    pub best_cost: f64,
    pub ghz_reference_cost: Option<f64>,
    pub local_reference_cost: Option<f64>,
    pub seed: u64,
    pub steps_used: usize,
    /// Seconds.
    pub wall_time: f64,
}

impl ResultRow {
    fn record(&self) -> [String; 10] {
        let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        [
            self.experiment.name().to_string(),
            self.noise_value.to_string(),
            self.ansatz.name().to_string(),
            self.restart_count.to_string(),
            self.best_cost.to_string(),
            opt(self.ghz_reference_cost),
            opt(self.local_reference_cost),
            self.seed.to_string(),
            self.steps_used.to_string(),
            format!("{:.3}", self.wall_time),
        ]
    }
}

/// Best parameters found at one sweep point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointParams {
    pub noise_value: f64,
    pub ansatz: String,
    pub seed: u64,
    pub best_cost: f64,
    pub theta: Vec<f64>,
    pub mu: Vec<f64>,
    /// Final cost of every descent in restart order, the warm start last.
    pub restart_costs: Vec<f64>,
}

/// Sidecar written next to the CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsFile {
    pub schema_version: u32,
    pub experiment: Experiment,
    pub seed: u64,
    pub restarts: usize,
    pub steps: usize,
    pub step_size: f64,
    pub backoff: Option<f64>,
    pub persistent_backoff: bool,
    pub log_cost: bool,
    pub update: Update,
    pub warm_start: bool,
    /// NV only.
    pub encoding_dephasing: Option<f64>,
    /// Weighting matrix of the bound, row-major.
    pub weights: Vec<Vec<f64>>,
    pub points: Vec<PointParams>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepOutput {
    pub rows: Vec<ResultRow>,
    pub params: ParamsFile,
}

pub fn build_setup(experiment: Experiment, noise_value: f64, ansatz: Ansatz, encoding_dephasing: f64) -> Result<Setup> {
    let setup = match (experiment, ansatz) {
        (Experiment::Ramsey, Ansatz::Ramsey(a)) => build_ramsey(&RamseyScenario {
            dephasing: noise_value,
            ansatz: a,
        })?,
        (Experiment::Nv, Ansatz::Nv(prep)) => build_nv(&NvScenario {
            encoding_dephasing,
            ..NvScenario::ground_truth(noise_value, prep)
        })?,
        _ => {
            return Err(CliError::Validation(format!(
                "ansatz `{}` does not belong to the {} experiment",
                ansatz.name(),
                experiment.name()
            )))
        }
    };
    Ok(setup)
}

fn random_restarts(cfg: &RunConfig, setup: &Setup, seed: u64) -> Result<RestartSummary> {
    let seeds: Vec<u64> = (0..cfg.optimizer.restarts as u64).map(|k| seed.wrapping_add(k)).collect();
    Ok(multi_restart_with_seeds(&setup.objective(), &cfg.optimizer, &seeds)?)
}

/// Random restarts at zero noise; their best parameters seed the warm start
/// at every grid value.
fn anchor(cfg: &RunConfig, ansatz: Ansatz) -> Result<RestartSummary> {
    let setup = build_setup(cfg.experiment, 0.0, ansatz, cfg.encoding_dephasing)?;
    random_restarts(cfg, &setup, point_seed(cfg.seed(), 0.0, ansatz.tag()))
}

fn run_point(
    cfg: &RunConfig,
    noise_value: f64,
    ansatz: Ansatz,
    anchor: Option<&RestartSummary>,
) -> Result<(ResultRow, PointParams)> {
    let start = Instant::now();
    let setup = build_setup(cfg.experiment, noise_value, ansatz, cfg.encoding_dephasing)?;
    let seed = point_seed(cfg.seed(), noise_value, ansatz.tag());
    let (best_cost, theta, mu, restart_costs, steps_used) = if ansatz.is_fixed() {
        let c = setup.cost_at(&[], &[])?;
        (c, vec![], vec![], vec![], 0)
    } else {
        // the anchor is exactly the random part of the zero-noise point
        let mut summary = match anchor {
            Some(a) if noise_value == 0.0 => a.clone(),
            _ => random_restarts(cfg, &setup, seed)?,
        };
        if let Some(a) = anchor {
            let mut warm = descend(&setup.objective(), a.best.params.clone(), &cfg.optimizer)?;
            warm.restart = summary.final_costs.len();
            warm.seed = a.best.seed;
            summary.final_costs.push(warm.final_cost);
            if warm.final_cost < summary.best.final_cost {
                summary.best = warm;
            }
        }
        let best = summary.best;
        if let Some(abort) = &best.aborted {
            eprintln!(
                "warning: best restart at {} = {noise_value} ({}) stopped early at step {}: {}",
                cfg.experiment.name(),
                ansatz.name(),
                abort.step,
                abort.reason
            );
        }
        let (theta, mu) = best.params.split_at(setup.n_theta());
        (
            best.final_cost,
            theta.to_vec(),
            mu.to_vec(),
            summary.final_costs,
            best.steps_used(),
        )
    };
    let restart_count = restart_costs.len();
    if !best_cost.is_finite() {
        return Err(CliError::Numerical(format!(
            "non-finite cost at {noise_value} ({})",
            ansatz.name()
        )));
    }
    let (ghz, local) = match cfg.experiment {
        Experiment::Ramsey => ramsey_reference_costs(noise_value)
            .map(|(g, l)| (Some(g), Some(l)))
            .unwrap_or((None, None)),
        Experiment::Nv => (None, None),
    };
    let wall_time = start.elapsed().as_secs_f64();
    eprintln!(
        "{} {} = {noise_value} {}: best cost {best_cost} ({wall_time:.1}s)",
        cfg.experiment.name(),
        if cfg.experiment == Experiment::Ramsey { "p" } else { "p_g" },
        ansatz.name()
    );
    let row = ResultRow {
        experiment: cfg.experiment,
        noise_value,
        ansatz,
        restart_count,
        best_cost,
        ghz_reference_cost: ghz,
        local_reference_cost: local,
        seed,
        steps_used,
        wall_time,
    };
    let params = PointParams {
        noise_value,
        ansatz: ansatz.name().to_string(),
        seed,
        best_cost,
        theta,
        mu,
        restart_costs,
    };
    Ok((row, params))
}

/// Runs every (grid value, ansatz) pair. Rows come back ordered by grid
/// value, then ansatz, whatever order the workers finish in. A point's
/// result depends only on its own value, its ansatz and the seed.
pub fn run_sweep(cfg: &RunConfig) -> Result<SweepOutput> {
    let jobs: Vec<(f64, Ansatz)> = cfg
        .grid
        .iter()
        .flat_map(|&v| cfg.ansatz.iter().map(move |&a| (v, a)))
        .collect();
    let anchors: Vec<(Ansatz, RestartSummary)> = if cfg.warm_start {
        cfg.ansatz
            .par_iter()
            .filter(|a| !a.is_fixed())
            .map(|&a| Ok((a, anchor(cfg, a)?)))
            .collect::<Result<_>>()?
    } else {
        Vec::new()
    };
    let anchor_for = |a: Ansatz| anchors.iter().find(|(x, _)| *x == a).map(|(_, s)| s);
    let results: Vec<(ResultRow, PointParams)> = jobs
        .par_iter()
        .map(|&(v, a)| run_point(cfg, v, a, anchor_for(a)))
        .collect::<Result<_>>()?;
    let (rows, points): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let weights = build_setup(cfg.experiment, cfg.grid[0], cfg.ansatz[0], cfg.encoding_dephasing)?
        .cost
        .weights()
        .row_iter()
        .map(|r| r.iter().copied().collect())
        .collect();
    Ok(SweepOutput {
        rows,
        params: ParamsFile {
            schema_version: SCHEMA_VERSION,
            experiment: cfg.experiment,
            seed: cfg.seed(),
            restarts: cfg.optimizer.restarts,
            steps: cfg.optimizer.steps,
            step_size: cfg.optimizer.step_size,
            backoff: cfg.optimizer.backoff,
            persistent_backoff: cfg.optimizer.persistent_backoff,
            log_cost: cfg.optimizer.log_cost,
            update: cfg.optimizer.update,
            warm_start: cfg.warm_start,
            encoding_dephasing: (cfg.experiment == Experiment::Nv).then_some(cfg.encoding_dephasing),
            weights,
            points,
        },
    })
}

/// `results.csv` → `results.params.json`.
pub fn params_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("params.json")
}

pub fn write_csv(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::io(path, e.into()))?;
    w.write_record(CSV_HEADER).map_err(|e| CliError::io(path, e.into()))?;
    for row in rows {
        w.write_record(row.record()).map_err(|e| CliError::io(path, e.into()))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn write_params(path: &Path, params: &ParamsFile) -> Result<()> {
    let text = serde_json::to_string_pretty(params).expect("params serialize");
    std::fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
}

pub fn read_params(path: &Path) -> Result<ParamsFile> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

/// Writes the CSV and its parameter sidecar; returns the sidecar path.
pub fn write_outputs(csv_path: &Path, out: &SweepOutput) -> Result<PathBuf> {
    write_csv(csv_path, &out.rows)?;
    let p = params_path(csv_path);
    write_params(&p, &out.params)?;
    Ok(p)
}

/// Largest `|cost(θ, μ) − best_cost|` over the dumped points, re-evaluated from scratch.
pub fn verify_params(params: &ParamsFile) -> Result<f64> {
    let eps = params.encoding_dephasing.unwrap_or(qmetro::experiments::NV_ENCODING_DEPHASING);
    let mut worst = 0.0f64;
    for p in &params.points {
        let ansatz = Ansatz::parse(params.experiment, &p.ansatz)?;
        let setup = build_setup(params.experiment, p.noise_value, ansatz, eps)?;
        let c = setup.cost_at(&p.theta, &p.mu)?;
        worst = worst.max((c - p.best_cost).abs());
    }
    Ok(worst)
}
