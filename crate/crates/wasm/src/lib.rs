//! Browser bindings for the demo page in `www/`.
//!
//! Every export is a thin wrapper over a plain function so the numbers can
//! be tested natively. Curves come back flattened, one row after another.

use std::f64::consts::{FRAC_PI_2, TAU};

use qmetro::channels::dephasing;
use qmetro::circuits::local_z_encoding;
use qmetro::experiments::{ghz_ramsey_crossover, nv_jacobian, nv_phases, nv_unit_phases_at, ramsey_reference_costs, NvGeometry};
use qmetro::fisher::{condition_number, model_cfim};
use qmetro::{MetrologyModel, ParamCircuit, Povm};
use wasm_bindgen::prelude::*;

/// `[p, ghz_cost, local_cost]` rows for `n` values of `p` in `[0, p_max]`.
pub fn reference_rows(p_max: f64, n: usize) -> Result<Vec<f64>, String> {
    if !(0.0..0.5).contains(&p_max) {
        return Err(format!("p_max must lie in [0, 0.5), got {p_max}"));
    }
    if n < 2 {
        return Err("need at least two points".into());
    }
    let mut out = Vec::with_capacity(3 * n);
    for i in 0..n {
        let p = p_max * i as f64 / (n - 1) as f64;
        let (ghz, local) = ramsey_reference_costs(p).map_err(|e| e.to_string())?;
        out.extend([p, ghz, local]);
    }
    Ok(out)
}

/// One qubit prepared on the equator, dephased, read out in the X basis.
fn fringe_model(p: f64) -> qmetro::Result<MetrologyModel> {
    let mut prep = ParamCircuit::new(1, 0);
    prep.fixed_rotation("Y", &[0], FRAC_PI_2)?;
    let mut readout = ParamCircuit::new(1, 0);
    readout.fixed_rotation("Y", &[0], -FRAC_PI_2)?;
    MetrologyModel::new(prep, local_z_encoding(1)?, vec![dephasing(p, 0)?.into()], Povm::new(readout))
}

/// `[φ, P(0), F(φ)]` rows over one fringe period at dephasing `p`.
pub fn fringe_rows(p: f64, n: usize) -> Result<Vec<f64>, String> {
    if n < 2 {
        return Err("need at least two points".into());
    }
    let model = fringe_model(p).map_err(|e| e.to_string())?;
    let mut out = Vec::with_capacity(3 * n);
    for i in 0..n {
        let phi = TAU * i as f64 / (n - 1) as f64;
        let probs = model.probabilities(&[], &[phi], &[]).map_err(|e| e.to_string())?;
        let fisher = model_cfim(&model, &[], &[phi], &[]).map_err(|e| e.to_string())?;
        out.extend([phi, probs[0], fisher.data()[(0, 0)]]);
    }
    Ok(out)
}

/// `[φ₁, φ₂, φ₃, cond J]` for the reference centers with the target moved to
/// `(x, y, z)`. Phases use the coupling fixed by the original target.
pub fn nv_target_summary(x: f64, y: f64, z: f64) -> Result<Vec<f64>, String> {
    let truth = NvGeometry::ground_truth();
    let scale = nv_phases(&truth).map_err(|e| e.to_string())?.scale;
    let g = truth.with_target([x, y, z]);
    g.validate().map_err(|e| e.to_string())?;
    let jac = nv_jacobian(&g).map_err(|e| e.to_string())?;
    let unit = nv_unit_phases_at(&g, [x, y, z]);
    let mut out: Vec<f64> = unit.iter().map(|u| u * scale).collect();
    out.push(condition_number(&jac));
    Ok(out)
}

#[wasm_bindgen(js_name = referenceCurves)]
pub fn reference_curves(p_max: f64, n: usize) -> Result<Vec<f64>, JsError> {
    reference_rows(p_max, n).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn crossover() -> f64 {
    ghz_ramsey_crossover()
}

#[wasm_bindgen]
pub fn fringe(p: f64, n: usize) -> Result<Vec<f64>, JsError> {
    fringe_rows(p, n).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = nvTarget)]
pub fn nv_target(x: f64, y: f64, z: f64) -> Result<Vec<f64>, JsError> {
    nv_target_summary(x, y, z).map_err(|e| JsError::new(&e))
}
