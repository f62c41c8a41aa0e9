//! Parameter-shift derivatives against central differences.

use qmetro::circuits::{Gate, Slot};
use qmetro::gradients::{evaluation_count_audit, shift_grad_probs, FD_STEP};
use qmetro::optimize::random_init;
use qmetro::MetrologyModel;

use crate::config::RunConfig;
use crate::sweep::build_setup;
use crate::{point_seed, CliError, Result};

/// Largest tolerated `|shift − FD|` on any probability derivative.
pub const GRAD_CHECK_TOL: f64 = 1e-6;

const SLOTS: [Slot; 3] = [Slot::Prep, Slot::Encoding, Slot::Measurement];

#[derive(Clone, Debug, PartialEq)]
pub struct SlotCheck {
    pub slot: Slot,
    pub n_params: usize,
    /// `None` when the slot has a gate without a shift rule.
    pub max_abs_err: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelCheck {
    pub label: String,
    pub slots: Vec<SlotCheck>,
    /// One entry per parametrized gate that has no shift constant.
    pub unsupported: Vec<String>,
    /// Circuit evaluations behind one phase-derivative jet; `None` if unsupported.
    pub audit: Option<usize>,
}

impl ModelCheck {
    pub fn passed(&self) -> bool {
        self.unsupported.is_empty()
            && self
                .slots
                .iter()
                .all(|s| s.max_abs_err.is_some_and(|e| e <= GRAD_CHECK_TOL))
    }

    pub fn lines(&self) -> Vec<String> {
        let mut out = Vec::new();
        for s in &self.slots {
            let err = match s.max_abs_err {
                Some(e) => format!("{e:.3e}"),
                None => "unsupported".to_string(),
            };
            out.push(format!("{} {:?} ({} params): max |shift - fd| = {err}", self.label, s.slot, s.n_params));
        }
        for u in &self.unsupported {
            out.push(format!("{} unsupported gate: {u}", self.label));
        }
        if let Some(a) = self.audit {
            out.push(format!("{} phase-derivative evaluations: {a}", self.label));
        }
        out.push(format!("{} {}", self.label, if self.passed() { "PASS" } else { "FAIL" }));
        out
    }
}

fn unsupported_gates(model: &MetrologyModel, slot: Slot) -> Vec<String> {
    model
        .circuit(slot)
        .gates()
        .iter()
        .enumerate()
        .filter(|(_, g)| match g {
            Gate::Rotation(r) => g.param().is_some() && r.shift_const().is_none(),
            _ => false,
        })
        .map(|(i, g)| format!("{slot:?} gate {i}: {g}"))
        .collect()
}

fn fd_grad_probs(model: &MetrologyModel, theta: &[f64], phi: &[f64], mu: &[f64], slot: Slot) -> Result<Vec<Vec<f64>>> {
    let base = match slot {
        Slot::Prep => theta,
        Slot::Encoding => phi,
        Slot::Measurement => mu,
    };
    let mut rows = Vec::with_capacity(base.len());
    for i in 0..base.len() {
        let eval = |x: f64| -> Result<Vec<f64>> {
            let mut v = base.to_vec();
            v[i] = x;
            let p = match slot {
                Slot::Prep => model.probabilities(&v, phi, mu),
                Slot::Encoding => model.probabilities(theta, &v, mu),
                Slot::Measurement => model.probabilities(theta, phi, &v),
            }?;
            Ok(p)
        };
        let up = eval(base[i] + FD_STEP)?;
        let down = eval(base[i] - FD_STEP)?;
        rows.push(up.iter().zip(&down).map(|(u, d)| (u - d) / (2.0 * FD_STEP)).collect());
    }
    Ok(rows)
}

/// Compares shift-rule and finite-difference probability derivatives on every slot.
pub fn grad_check_model(
    label: &str,
    model: &MetrologyModel,
    theta: &[f64],
    phi: &[f64],
    mu: &[f64],
) -> Result<ModelCheck> {
    let mut slots = Vec::new();
    let mut unsupported = Vec::new();
    for slot in SLOTS {
        let bad = unsupported_gates(model, slot);
        let max_abs_err = if bad.is_empty() {
            let shift = shift_grad_probs(model, theta, phi, mu, slot)?;
            let fd = fd_grad_probs(model, theta, phi, mu, slot)?;
            let mut worst = 0.0f64;
            for (i, row) in fd.iter().enumerate() {
                for (l, v) in row.iter().enumerate() {
                    worst = worst.max((shift[(i, l)] - v).abs());
                }
            }
            if !worst.is_finite() {
                return Err(CliError::Numerical(format!("{label}: non-finite derivative in {slot:?}")));
            }
            Some(worst)
        } else {
            None
        };
        unsupported.extend(bad);
        slots.push(SlotCheck {
            slot,
            n_params: model.param_count(slot),
            max_abs_err,
        });
    }
    let audit = if unsupported.is_empty() {
        Some(evaluation_count_audit(model)?)
    } else {
        None
    };
    Ok(ModelCheck {
        label: label.to_string(),
        slots,
        unsupported,
        audit,
    })
}

/// Checks every configured ansatz at the first grid value, once at the
/// origin and once at a seeded random point.
pub fn run_grad_check(cfg: &RunConfig) -> Result<Vec<ModelCheck>> {
    let value = cfg.grid[0];
    let mut out = Vec::new();
    for &ansatz in &cfg.ansatz {
        let setup = build_setup(cfg.experiment, value, ansatz, cfg.encoding_dephasing)?;
        let (nt, nm) = (setup.n_theta(), setup.n_mu());
        let x = random_init(nt + nm, point_seed(cfg.seed(), value, ansatz.tag()));
        for (tag, theta, mu) in [
            ("origin", vec![0.0; nt], vec![0.0; nm]),
            ("random", x[..nt].to_vec(), x[nt..].to_vec()),
        ] {
            let label = format!("{} {} @ {value} [{tag}]", cfg.experiment.name(), ansatz.name());
            out.push(grad_check_model(&label, &setup.model, &theta, &setup.phases, &mu)?);
        }
    }
    Ok(out)
}

/// `Err(Numerical)` naming the failures if any check failed.
pub fn require_all_passed(checks: &[ModelCheck]) -> Result<()> {
    let failed: Vec<&str> = checks.iter().filter(|c| !c.passed()).map(|c| c.label.as_str()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Numerical(format!(
            "{} of {} gradient checks failed: {}",
            failed.len(),
            checks.len(),
            failed.join("; ")
        )))
    }
}
