//! Gradient descent (plain or Adam) with optional step backoff,
//! cost-relative steps and seeded restarts.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuits::MetrologyModel;
use crate::error::{Error, Result};
use crate::fisher::{cost_gradient, model_cost, CostConfig, Reparam};

pub const DEFAULT_STEPS: usize = 1000;
pub const DEFAULT_BACKOFF: f64 = 0.7;
pub const DEFAULT_RESTARTS: usize = 8;
pub const RAMSEY_STEP_SIZE: f64 = 0.05;
pub const NV_STEP_SIZE: f64 = 0.01;

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPSILON: f64 = 1e-12;

/// How a gradient becomes a step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Update {
    /// `x − η∇C`.
    #[default]
    Gradient,
    /// Bias-corrected Adam moments with learning rate `η`. Ill-conditioned
    /// optima (the GHZ family in particular) are reached far more reliably
    /// than with a fixed-size step.
    Adam,
}

/// Something to minimize.
pub trait Objective {
    fn dim(&self) -> usize;
    fn cost(&self, x: &[f64]) -> Result<f64>;
    fn cost_and_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>)>;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub steps: usize,
    pub step_size: f64,
    /// Factor applied to the step size after a rejected proposal; `None`
    /// accepts every proposal.
    pub backoff: Option<f64>,
    /// Keep the shrunken step size after an accepted step instead of
    /// returning to `step_size`.
    #[serde(default)]
    pub persistent_backoff: bool,
    /// Step along `−∇C / C` (descent on `ln C`) so the step size is relative
    /// to the cost, which spans orders of magnitude across a noise sweep.
    /// Needs a positive cost.
    #[serde(default)]
    pub log_cost: bool,
    #[serde(default)]
    pub update: Update,
    pub restarts: usize,
    pub seed: u64,
}

impl OptimizerConfig {
    /// Adam on `ln C`, every proposal taken.
    pub fn ramsey(seed: u64) -> Self {
        Self {
            steps: DEFAULT_STEPS,
            step_size: RAMSEY_STEP_SIZE,
            backoff: None,
            persistent_backoff: false,
            log_cost: true,
            update: Update::Adam,
            restarts: DEFAULT_RESTARTS,
            seed,
        }
    }

    /// Absolute step with backoff.
    pub fn nv(seed: u64) -> Self {
        Self {
            steps: DEFAULT_STEPS,
            step_size: NV_STEP_SIZE,
            backoff: Some(DEFAULT_BACKOFF),
            persistent_backoff: false,
            log_cost: false,
            update: Update::Gradient,
            restarts: DEFAULT_RESTARTS,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::InvalidInput("steps must be at least 1".into()));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::InvalidInput(format!("step size must be positive, got {}", self.step_size)));
        }
        if let Some(b) = self.backoff {
            if !(b > 0.0 && b < 1.0) {
                return Err(Error::InvalidInput(format!("backoff must lie in (0, 1), got {b}")));
            }
        }
        if self.update == Update::Adam && self.backoff.is_some() {
            return Err(Error::InvalidInput("adam updates take every step; drop the backoff".into()));
        }
        if self.restarts == 0 {
            return Err(Error::InvalidInput("restarts must be at least 1".into()));
        }
        Ok(())
    }
}

/// Why a run ended before its step budget.
#[derive(Clone, Debug, PartialEq)]
pub struct Abort {
    pub step: usize,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptTrace {
    pub initial_cost: f64,
    /// Current cost after each step; unchanged on rejected steps.
    pub costs: Vec<f64>,
    pub accepted: Vec<bool>,
    pub params: Vec<f64>,
    pub final_cost: f64,
    pub final_step_size: f64,
    pub restart: usize,
    pub seed: u64,
    pub aborted: Option<Abort>,
}

impl OptTrace {
    pub fn steps_used(&self) -> usize {
        self.costs.len()
    }
}

/// I.i.d. uniform draws on `[0, 2π)`.
pub fn random_init(n_params: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_params).map(|_| rng.gen_range(0.0..TAU)).collect()
}

/// Runs the step budget from `init`.
///
/// A proposal `x − η∇C` that raises the cost is rejected and shrinks `η`;
/// the retry uses up a step. Once a step is accepted `η` goes back to
/// `step_size` unless the backoff is persistent. A non-finite value or
/// model error stops the run and is reported in [`OptTrace::aborted`] along
/// with the trace so far.
pub fn descend(objective: &impl Objective, init: Vec<f64>, cfg: &OptimizerConfig) -> Result<OptTrace> {
    cfg.validate()?;
    if init.len() != objective.dim() {
        return Err(Error::DimensionMismatch {
            expected: objective.dim(),
            found: init.len(),
        });
    }
    let (mut cost, mut grad) = objective.cost_and_gradient(&init)?;
    if !cost.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::Numerical("non-finite cost or gradient at the initial point".into()));
    }
    let mut trace = OptTrace {
        initial_cost: cost,
        costs: Vec::with_capacity(cfg.steps),
        accepted: Vec::with_capacity(cfg.steps),
        params: init,
        final_cost: cost,
        final_step_size: cfg.step_size,
        restart: 0,
        seed: 0,
        aborted: None,
    };
    let mut eta = cfg.step_size;
    let n = trace.params.len();
    let mut proposal = vec![0.0; n];
    let (mut m, mut v) = (vec![0.0; n], vec![0.0; n]);
    for step in 0..cfg.steps {
        let abort = |reason: String, trace: &mut OptTrace| trace.aborted = Some(Abort { step, reason });
        let scale = if cfg.log_cost {
            if cost <= 0.0 {
                abort(format!("relative step needs a positive cost, got {cost}"), &mut trace);
                break;
            }
            1.0 / cost
        } else {
            1.0
        };
        match cfg.update {
            Update::Gradient => {
                for ((p, x), g) in proposal.iter_mut().zip(&trace.params).zip(&grad) {
                    *p = x - eta * scale * g;
                }
            }
            Update::Adam => {
                let t = (step + 1) as i32;
                let (c1, c2) = (1.0 - ADAM_BETA1.powi(t), 1.0 - ADAM_BETA2.powi(t));
                for i in 0..n {
                    let g = scale * grad[i];
                    m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g;
                    v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g * g;
                    proposal[i] = trace.params[i] - eta * (m[i] / c1) / ((v[i] / c2).sqrt() + ADAM_EPSILON);
                }
            }
        }
        if let Some(factor) = cfg.backoff {
            let candidate = match objective.cost(&proposal) {
                Ok(c) if c.is_finite() => c,
                Ok(c) => {
                    abort(format!("cost evaluated to {c}"), &mut trace);
                    break;
                }
                Err(e) => {
                    abort(e.to_string(), &mut trace);
                    break;
                }
            };
            if candidate > cost {
                eta *= factor;
                trace.costs.push(cost);
                trace.accepted.push(false);
                continue;
            }
        }
        match objective.cost_and_gradient(&proposal) {
            Ok((c, g)) if c.is_finite() && g.iter().all(|x| x.is_finite()) => {
                std::mem::swap(&mut trace.params, &mut proposal);
                cost = c;
                grad = g;
                if !cfg.persistent_backoff {
                    eta = cfg.step_size;
                }
            }
            Ok(_) => {
                abort("non-finite cost or gradient".into(), &mut trace);
                break;
            }
            Err(e) => {
                abort(e.to_string(), &mut trace);
                break;
            }
        }
        trace.costs.push(cost);
        trace.accepted.push(true);
    }
    trace.final_cost = cost;
    trace.final_step_size = eta;
    Ok(trace)
}

/// Best of several independent runs.
#[derive(Clone, Debug, PartialEq)]
pub struct RestartSummary {
    pub best: OptTrace,
    /// Final cost of every restart, in restart order.
    pub final_costs: Vec<f64>,
}

/// Runs `cfg.restarts` descents from `random_init(dim, seed + k)` in parallel
/// and keeps the lowest final cost (ties go to the lower restart index).
pub fn multi_restart(objective: &(impl Objective + Sync), cfg: &OptimizerConfig) -> Result<RestartSummary> {
    let seeds: Vec<u64> = (0..cfg.restarts as u64).map(|k| cfg.seed.wrapping_add(k)).collect();
    multi_restart_with_seeds(objective, cfg, &seeds)
}

/// As [`multi_restart`] with explicit per-restart seeds.
pub fn multi_restart_with_seeds(
    objective: &(impl Objective + Sync),
    cfg: &OptimizerConfig,
    seeds: &[u64],
) -> Result<RestartSummary> {
    cfg.validate()?;
    if seeds.is_empty() {
        return Err(Error::InvalidInput("at least one restart seed is required".into()));
    }
    let traces: Vec<OptTrace> = seeds
        .par_iter()
        .enumerate()
        .map(|(k, &seed)| {
            let mut t = descend(objective, random_init(objective.dim(), seed), cfg)?;
            t.restart = k;
            t.seed = seed;
            Ok(t)
        })
        .collect::<Result<_>>()?;
    let final_costs: Vec<f64> = traces.iter().map(|t| t.final_cost).collect();
    let best = traces
        .into_iter()
        .reduce(|a, b| if b.final_cost < a.final_cost { b } else { a })
        .expect("nonempty");
    Ok(RestartSummary { best, final_costs })
}

/// Weighted Cramér-Rao cost over `x = (θ, μ)` at fixed phases.
#[derive(Clone, Copy, Debug)]
pub struct CrbObjective<'a> {
    pub model: &'a MetrologyModel,
    pub phases: &'a [f64],
    pub reparam: &'a Reparam,
    pub cost: &'a CostConfig,
}

impl CrbObjective<'_> {
    pub fn split<'x>(&self, x: &'x [f64]) -> (&'x [f64], &'x [f64]) {
        x.split_at(self.model.prep().n_params())
    }
}

impl Objective for CrbObjective<'_> {
    fn dim(&self) -> usize {
        self.model.prep().n_params() + self.model.povm().rotation().n_params()
    }

    fn cost(&self, x: &[f64]) -> Result<f64> {
        let (theta, mu) = self.split(x);
        model_cost(self.model, theta, self.phases, mu, self.reparam, self.cost)
    }

    fn cost_and_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (theta, mu) = self.split(x);
        let g = cost_gradient(self.model, theta, self.phases, mu, self.reparam, self.cost)?;
        let mut grad = g.theta;
        grad.extend(g.mu);
        Ok((g.cost, grad))
    }
}
