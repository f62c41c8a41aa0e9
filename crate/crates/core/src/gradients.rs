//! Analytic derivatives of outcome probabilities.
//!
//! Every parametrized gate here is a rotation `exp(-i x G)` whose generator
//! has two distinct eigenvalues `λ₁, λ₂`. With `r = |λ₁ − λ₂|/2`,
//!
//! ```text
//! ∂ₓ f(x) = r [f(x + π/(4r)) − f(x − π/(4r))]
//! ```
//!
//! holds exactly, and stays exact when parameter-independent channels are
//! interleaved anywhere in the circuit. Gates carry their own `r`; a gate
//! whose angle is `scale · param` contributes `scale · r [...]` to the
//! parameter derivative.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::channels::{Channel, ConvexChannel};
use crate::circuits::{Gate, GateShift, MetrologyModel, ParamCircuit, Slot};
use crate::error::{Error, Result};
use crate::fisher::{FisherMatrix, DROP_THRESHOLD};
use crate::qalg::{expectation, CMatrix, DensityMatrix, HermitianOp, C64};

/// Default finite-difference step for validation.
pub const FD_STEP: f64 = 1e-5;

/// `∂ₓ 𝓝(x) = Σ_j c_j 𝓝(x + s_j)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ShiftRule {
    terms: Vec<(f64, f64)>,
}

impl ShiftRule {
    /// Two-term rule for generators with eigenvalue gap `2r`.
    pub fn two_term(r: f64) -> Self {
        let s = PI / (4.0 * r);
        Self {
            terms: vec![(r, s), (-r, -s)],
        }
    }

    /// `(coefficient, shift)` pairs.
    pub fn terms(&self) -> &[(f64, f64)] {
        &self.terms
    }
}

/// One shifted evaluation contributing to a parameter derivative.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct ShiftTerm {
    pub param: usize,
    pub coef: f64,
    pub shift: GateShift,
}

/// All shifted evaluations needed to differentiate `circuit` in each of its parameters.
pub(crate) fn shift_terms(circuit: &ParamCircuit) -> Result<Vec<ShiftTerm>> {
    let mut out = Vec::new();
    for (gate_idx, gate) in circuit.gates().iter().enumerate() {
        let Some((param, scale)) = gate.param() else {
            continue;
        };
        let Gate::Rotation(rot) = gate else { unreachable!() };
        let r = rot.shift_const().ok_or_else(|| Error::UnsupportedGate(gate.to_string()))?;
        for &(c, s) in ShiftRule::two_term(r).terms() {
            out.push(ShiftTerm {
                param,
                coef: scale * c,
                shift: GateShift { gate: gate_idx, delta: s },
            });
        }
    }
    Ok(out)
}

/// `∂p_l/∂x` for every parameter `x` of `slot`; rows are parameters, columns outcomes.
pub fn shift_grad_probs(
    model: &MetrologyModel,
    theta: &[f64],
    phi: &[f64],
    mu: &[f64],
    slot: Slot,
) -> Result<DMatrix<f64>> {
    model.check_lengths(theta, phi, mu)?;
    let terms = shift_terms(model.circuit(slot))?;
    let mut grad = DMatrix::zeros(model.param_count(slot), model.n_outcomes());
    // reuse the unshifted upstream state where possible
    let rho0 = (slot != Slot::Prep).then(|| model.prepared_raw(theta, None));
    let rho1 = (slot == Slot::Measurement).then(|| model.encoded_raw(rho0.as_ref().unwrap(), phi, None));
    for t in terms {
        let probs = match slot {
            Slot::Prep => {
                let rho = model.prepared_raw(theta, Some(t.shift));
                model.measured_probs(&model.encoded_raw(&rho, phi, None), mu, None)?
            }
            Slot::Encoding => {
                let rho = model.encoded_raw(rho0.as_ref().unwrap(), phi, Some(t.shift));
                model.measured_probs(&rho, mu, None)?
            }
            Slot::Measurement => model.measured_probs(rho1.as_ref().unwrap(), mu, Some(t.shift))?,
        };
        for (l, p) in probs.iter().enumerate() {
            grad[(t.param, l)] += t.coef * p;
        }
    }
    Ok(grad)
}

/// Probabilities and their phase derivatives at one `(θ, μ)`, assembled from
/// the base evaluation and two shifted evaluations per encoding gate.
#[derive(Clone, Debug)]
pub(crate) struct PhaseJet {
    pub probs: Vec<f64>,
    /// `d × L`
    pub dprobs: DMatrix<f64>,
    pub evaluations: usize,
}

/// The encoding-side evaluation points: base first, then the shift terms.
pub(crate) struct EncodingPlan {
    terms: Vec<ShiftTerm>,
    d: usize,
}

impl EncodingPlan {
    pub fn new(model: &MetrologyModel) -> Result<Self> {
        Ok(Self {
            terms: shift_terms(model.encoding())?,
            d: model.phase_count(),
        })
    }

    /// Noisy encoded states at every evaluation point.
    pub fn encode(&self, model: &MetrologyModel, rho: &CMatrix, phi: &[f64]) -> Vec<CMatrix> {
        std::iter::once(None)
            .chain(self.terms.iter().map(|t| Some(t.shift)))
            .map(|shift| model.encoded_raw(rho, phi, shift))
            .collect()
    }

    pub fn jet(
        &self,
        model: &MetrologyModel,
        states: &[CMatrix],
        mu: &[f64],
        shift: Option<GateShift>,
    ) -> Result<PhaseJet> {
        let probs = model.measured_probs(&states[0], mu, shift)?;
        let mut dprobs = DMatrix::zeros(self.d, probs.len());
        for (t, state) in self.terms.iter().zip(&states[1..]) {
            let shifted = model.measured_probs(state, mu, shift)?;
            for (l, p) in shifted.iter().enumerate() {
                dprobs[(t.param, l)] += t.coef * p;
            }
        }
        Ok(PhaseJet {
            probs,
            dprobs,
            evaluations: states.len(),
        })
    }
}

pub(crate) fn phase_jet(model: &MetrologyModel, theta: &[f64], phi: &[f64], mu: &[f64]) -> Result<PhaseJet> {
    model.check_lengths(theta, phi, mu)?;
    let plan = EncodingPlan::new(model)?;
    let rho = model.prepared_raw(theta, None);
    let states = plan.encode(model, &rho, phi);
    plan.jet(model, &states, mu, None)
}

/// Number of distinct circuit evaluations the probability-derivative CFIM
/// uses over the phase slot (`2d + 1` when each phase drives one gate).
pub fn evaluation_count_audit(model: &MetrologyModel) -> Result<usize> {
    let theta = vec![0.0; model.param_count(Slot::Prep)];
    let phi = vec![0.0; model.phase_count()];
    let mu = vec![0.0; model.param_count(Slot::Measurement)];
    Ok(phase_jet(model, &theta, &phi, &mu)?.evaluations)
}

/// Two-point derivative of a convex channel in its mixing probability:
/// `(𝓝(q₁)[ρ] − 𝓝(q₂)[ρ]) / (q₁ − q₂)`.
pub fn convex_channel_grad(rho: &DensityMatrix, channel: &ConvexChannel, q1: f64, q2: f64) -> Result<CMatrix> {
    if q1 == q2 {
        return Err(Error::InvalidInput("convex shift points must differ".into()));
    }
    let a = crate::channels::apply(&Channel::Convex(channel.with_p(q1)?), rho)?;
    let b = crate::channels::apply(&Channel::Convex(channel.with_p(q2)?), rho)?;
    Ok((a.data() - b.data()) / C64::new(q1 - q2, 0.0))
}

/// `Δ_l^j = −i[Π'_l, 𝓗_j]`, indexed `[j][l]`.
pub fn derivative_operators(model: &MetrologyModel, mu: &[f64]) -> Result<Vec<Vec<HermitianOp>>> {
    let noisy = model.noisy_povm(mu)?;
    let minus_i = C64::new(0.0, -1.0);
    Ok(model
        .generators()
        .iter()
        .map(|h| {
            noisy
                .iter()
                .map(|pi| {
                    let (p, g) = (pi.data(), h.data());
                    HermitianOp::new((p * g - g * p) * minus_i).expect("commutator of Hermitians times -i is Hermitian")
                })
                .collect()
        })
        .collect())
}

/// CFIM from expectation values on the noise-free encoded state:
/// `Σ_l ⟨Δ_l^j⟩⟨Δ_l^k⟩ / ⟨Π'_l⟩`.
pub fn cfim_via_expectations(model: &MetrologyModel, theta: &[f64], phi: &[f64], mu: &[f64]) -> Result<FisherMatrix> {
    model.check_lengths(theta, phi, mu)?;
    let rho = model.encode_unitary(&model.prepare(theta)?, phi)?;
    let noisy = model.noisy_povm(mu)?;
    let deltas = derivative_operators(model, mu)?;
    let d = model.phase_count();
    let mut fisher = DMatrix::zeros(d, d);
    for (l, pi) in noisy.iter().enumerate() {
        let p = expectation(&rho, pi)?;
        if p < DROP_THRESHOLD {
            continue;
        }
        let e: Vec<f64> = deltas
            .iter()
            .map(|row| expectation(&rho, &row[l]))
            .collect::<Result<_>>()?;
        for j in 0..d {
            for k in 0..d {
                fisher[(j, k)] += e[j] * e[k] / p;
            }
        }
    }
    FisherMatrix::new(fisher)
}

/// Central differences `(f(x + h e_i) − f(x − h e_i)) / 2h`.
pub fn finite_diff_grad(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    assert!(h > 0.0, "finite-difference step must be positive");
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}
