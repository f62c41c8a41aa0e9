//! Closed-form dephasing reference curves next to their simulated values.

use std::path::Path;

use qmetro::experiments::{ghz_ramsey_crossover, ramsey_reference_costs, RamseyAnsatz};

use crate::config::{Ansatz, Experiment};
use crate::sweep::build_setup;
use crate::{CliError, Result};

pub const REFERENCE_HEADER: [&str; 5] = ["p", "ghz_cost", "local_cost", "ghz_simulated", "local_simulated"];

#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceRow {
    pub p: f64,
    pub ghz_cost: f64,
    pub local_cost: f64,
    pub ghz_simulated: f64,
    pub local_simulated: f64,
}

/// `p = 0, 0.01, …, 0.49`.
pub fn default_reference_grid() -> Vec<f64> {
    (0..50).map(|i| i as f64 / 100.0).collect()
}

pub fn reference_curves(grid: &[f64]) -> Result<Vec<ReferenceRow>> {
    if grid.is_empty() {
        return Err(CliError::Validation("field `grid`: must contain at least one value".into()));
    }
    grid.iter()
        .map(|&p| {
            let (ghz_cost, local_cost) = ramsey_reference_costs(p)?;
            let sim = |a| build_setup(Experiment::Ramsey, p, Ansatz::Ramsey(a), 0.0)?.cost_at(&[], &[]).map_err(CliError::from);
            Ok(ReferenceRow {
                p,
                ghz_cost,
                local_cost,
                ghz_simulated: sim(RamseyAnsatz::GhzReference)?,
                local_simulated: sim(RamseyAnsatz::LocalReference)?,
            })
        })
        .collect()
}

pub fn crossover_line() -> String {
    format!("ghz/local crossover at p = {}", ghz_ramsey_crossover())
}

pub fn write_reference_csv(path: &Path, rows: &[ReferenceRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::io(path, e.into()))?;
    w.write_record(REFERENCE_HEADER).map_err(|e| CliError::io(path, e.into()))?;
    for r in rows {
        w.write_record([r.p, r.ghz_cost, r.local_cost, r.ghz_simulated, r.local_simulated].map(|x| x.to_string()))
            .map_err(|e| CliError::io(path, e.into()))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}
