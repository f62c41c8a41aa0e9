//! The two sensing scenarios: Ramsey average-phase estimation under local
//! dephasing, and trilateration of a target spin with three NV centers.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, FRAC_PI_3, FRAC_PI_6, PI};

use nalgebra::{DMatrix, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channels::{dephasing, depolarizing};
use crate::circuits::{zyz_layer, MetrologyModel, ParamCircuit, Povm};
use crate::error::{Error, Result};
use crate::fisher::{condition_number, model_cost, CostConfig, Reparam, MAX_CONDITION};
use crate::optimize::CrbObjective;
use crate::qalg::{CMatrix, C64};

/// Phase imprinted on each Ramsey qubit.
pub const RAMSEY_PHASE: f64 = FRAC_PI_6;
/// NV encoding dephasing probability.
pub const NV_ENCODING_DEPHASING: f64 = 0.1;
/// Total phase accumulated by the three NV centers.
pub const NV_TOTAL_PHASE: f64 = FRAC_PI_2;

const AXIS_NORM_TOL: f64 = 1e-12;
const DEGENERATE_PHASE_TOL: f64 = 1e-9;

/// Everything needed to evaluate and optimize one scenario.
#[derive(Clone, Debug)]
pub struct Setup {
    pub model: MetrologyModel,
    pub phases: Vec<f64>,
    pub reparam: Reparam,
    pub cost: CostConfig,
}

impl Setup {
    pub fn n_theta(&self) -> usize {
        self.model.prep().n_params()
    }

    pub fn n_mu(&self) -> usize {
        self.model.povm().rotation().n_params()
    }

    pub fn objective(&self) -> CrbObjective<'_> {
        CrbObjective {
            model: &self.model,
            phases: &self.phases,
            reparam: &self.reparam,
            cost: &self.cost,
        }
    }

    pub fn cost_at(&self, theta: &[f64], mu: &[f64]) -> Result<f64> {
        model_cost(&self.model, theta, &self.phases, mu, &self.reparam, &self.cost)
    }
}

// ---------------------------------------------------------------------------
// Ramsey

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RamseyAnsatz {
    /// 14-parameter preparation, `R_Z R_Y R_Z` measurement on each qubit.
    Full,
    /// Fixed GHZ probe read out in the Hadamard basis.
    GhzReference,
    /// Fixed `|+⟩` probes read out at the fringe point of maximal slope.
    LocalReference,
}

impl RamseyAnsatz {
    pub fn name(self) -> &'static str {
        match self {
            Self::Full => "full",
            Self::GhzReference => "ghz_reference",
            Self::LocalReference => "local_reference",
        }
    }

    pub fn is_fixed(self) -> bool {
        self != Self::Full
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RamseyScenario {
    pub dephasing: f64,
    pub ansatz: RamseyAnsatz,
}

/// The 14-parameter three-qubit preparation.
pub fn ramsey_preparation() -> Result<ParamCircuit> {
    let mut c = ParamCircuit::new(3, 14);
    for q in 0..3 {
        c.rotation("X", &[q], 2 * q)?.rotation("Y", &[q], 2 * q + 1)?;
    }
    for (k, pair) in [[1, 2], [0, 1], [0, 2]].iter().enumerate() {
        c.rotation("XX", pair, 6 + 2 * k)?.rotation("XY", pair, 7 + 2 * k)?;
    }
    c.rotation("XXX", &[0, 1, 2], 12)?.rotation("XXY", &[0, 1, 2], 13)?;
    Ok(c)
}

fn hadamard() -> CMatrix {
    CMatrix::from_element(2, 2, C64::new(FRAC_1_SQRT_2, 0.0)).map_with_location(|r, c, v| {
        if r == 1 && c == 1 {
            -v
        } else {
            v
        }
    })
}

fn cnot() -> CMatrix {
    let mut m = CMatrix::zeros(4, 4);
    for (r, c) in [(0, 0), (1, 1), (2, 3), (3, 2)] {
        m[(r, c)] = C64::new(1.0, 0.0);
    }
    m
}

fn ghz_preparation() -> Result<ParamCircuit> {
    let mut c = ParamCircuit::new(3, 0);
    c.unitary(hadamard(), &[0], "H")?
        .unitary(cnot(), &[0, 1], "CNOT")?
        .unitary(cnot(), &[1, 2], "CNOT")?;
    Ok(c)
}

fn hadamard_readout() -> Result<ParamCircuit> {
    let mut c = ParamCircuit::new(3, 0);
    for q in 0..3 {
        c.unitary(hadamard(), &[q], "H")?;
    }
    Ok(c)
}

fn plus_preparation() -> Result<ParamCircuit> {
    let mut c = ParamCircuit::new(3, 0);
    for q in 0..3 {
        c.fixed_rotation("Y", &[q], FRAC_PI_2)?;
    }
    Ok(c)
}

/// Rotates the encoded `|+⟩` fringe by a further π/3 so it is read out at
/// total phase π/2, then measures `X`.
fn fringe_readout() -> Result<ParamCircuit> {
    let mut c = ParamCircuit::new(3, 0);
    for q in 0..3 {
        c.fixed_rotation("Z", &[q], FRAC_PI_3)?.fixed_rotation("Y", &[q], -FRAC_PI_2)?;
    }
    Ok(c)
}

/// Target map: the average phase, completed by two rows orthogonal to it.
pub fn average_phase_targets() -> DMatrix<f64> {
    DMatrix::from_row_slice(3, 3, &[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 1.0, -1.0, 0.0, 1.0, 1.0, -2.0])
}

/// `B = M⁻¹` for a completed average-phase map `M`; the first row of `M` must be the average.
pub fn average_phase_reparam(completion: &DMatrix<f64>) -> Result<Reparam> {
    if completion.shape() != (2, 3) {
        return Err(Error::InvalidInput("completion must have two rows of three entries".into()));
    }
    let mut m = DMatrix::from_element(3, 3, 1.0 / 3.0);
    m.view_mut((1, 0), (2, 3)).copy_from(completion);
    Reparam::from_linear_targets(m)
}

pub fn build_ramsey(s: &RamseyScenario) -> Result<Setup> {
    if !(0.0..=0.5).contains(&s.dephasing) {
        return Err(Error::InvalidInput(format!("dephasing probability {} outside [0, 0.5]", s.dephasing)));
    }
    let (prep, readout) = match s.ansatz {
        RamseyAnsatz::Full => (ramsey_preparation()?, zyz_layer(3)?),
        RamseyAnsatz::GhzReference => (ghz_preparation()?, hadamard_readout()?),
        RamseyAnsatz::LocalReference => (plus_preparation()?, fringe_readout()?),
    };
    let noise = (0..3)
        .map(|q| dephasing(s.dephasing, q).map(Into::into))
        .collect::<Result<Vec<_>>>()?;
    let model = MetrologyModel::new(prep, crate::circuits::local_z_encoding(3)?, noise, Povm::new(readout))?;
    Ok(Setup {
        model,
        phases: vec![RAMSEY_PHASE; 3],
        reparam: Reparam::from_linear_targets(average_phase_targets())?,
        cost: CostConfig::first_component(3),
    })
}

/// Closed-form `(GHZ, standard Ramsey)` average-phase costs at dephasing `p`.
pub fn ramsey_reference_costs(p: f64) -> Result<(f64, f64)> {
    if !(0.0..0.5).contains(&p) {
        return Err(Error::InvalidInput(format!("dephasing probability {p} outside [0, 0.5)")));
    }
    let v = 1.0 - 2.0 * p;
    Ok((v.powi(-6) / 9.0, v.powi(-2) / 3.0))
}

/// Dephasing at which the GHZ and standard Ramsey bounds coincide.
pub fn ghz_ramsey_crossover() -> f64 {
    (1.0 - 3f64.powf(-0.25)) / 2.0
}

// ---------------------------------------------------------------------------
// NV trilateration

/// Positions are unit-free; axes are unit vectors.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NvGeometry {
    pub nv_positions: [[f64; 3]; 3],
    pub nv_axes: [[f64; 3]; 3],
    pub target: [f64; 3],
    pub field_axis: [f64; 3],
}

/// `(sin θ cos φ, sin θ sin φ, cos θ)`.
pub fn spherical_axis(theta: f64, phi: f64) -> [f64; 3] {
    [theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()]
}

fn v3(a: [f64; 3]) -> Vector3<f64> {
    Vector3::from(a)
}

impl NvGeometry {
    pub fn new(
        nv_positions: [[f64; 3]; 3],
        nv_axes: [[f64; 3]; 3],
        target: [f64; 3],
        field_axis: [f64; 3],
    ) -> Result<Self> {
        let g = Self {
            nv_positions,
            nv_axes,
            target,
            field_axis,
        };
        g.validate()?;
        Ok(g)
    }

    /// Ground truth of the trilateration experiment.
    pub fn ground_truth() -> Self {
        Self {
            nv_positions: [[0.0, 0.0, 0.0], [1.0, 2.0, 3.0], [4.0, 1.0, 1.0]],
            nv_axes: [
                spherical_axis(0.3 * PI, 0.25 * PI),
                spherical_axis(0.7 * PI, -0.15 * PI),
                spherical_axis(-0.2 * PI, 1.2 * PI),
            ],
            target: [2.0, 0.0, 2.0],
            field_axis: spherical_axis(0.0, 0.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = self
            .nv_positions
            .iter()
            .chain(&self.nv_axes)
            .chain([&self.target, &self.field_axis]);
        if all.flatten().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("non-finite geometry entry".into()));
        }
        for a in self.nv_axes.iter().chain([&self.field_axis]) {
            let n = v3(*a).norm();
            if (n - 1.0).abs() > AXIS_NORM_TOL {
                return Err(Error::InvalidInput(format!("axis {a:?} has norm {n}")));
            }
        }
        for p in &self.nv_positions {
            if (v3(self.target) - v3(*p)).norm() == 0.0 {
                return Err(Error::Degenerate(format!("target coincides with the NV center at {p:?}")));
            }
        }
        Ok(())
    }

    /// Same geometry with every position shifted by `offset`.
    pub fn translated(&self, offset: [f64; 3]) -> Self {
        let add = |p: [f64; 3]| [p[0] + offset[0], p[1] + offset[1], p[2] + offset[2]];
        Self {
            nv_positions: self.nv_positions.map(add),
            target: add(self.target),
            ..*self
        }
    }

    /// Same geometry with the target moved to `target`.
    pub fn with_target(&self, target: [f64; 3]) -> Self {
        Self { target, ..*self }
    }
}

/// Phases with the coupling constant set to one, for a target at `position`.
pub fn nv_unit_phases_at(g: &NvGeometry, position: [f64; 3]) -> [f64; 3] {
    let b = v3(g.field_axis);
    std::array::from_fn(|j| {
        let d = v3(position) - v3(g.nv_positions[j]);
        let r = d.norm();
        let e = d / r;
        let n = v3(g.nv_axes[j]);
        (n.dot(&b) - n.dot(&e) * b.dot(&e)) / (r * r * r)
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NvPhases {
    pub phases: [f64; 3],
    pub unit_phases: [f64; 3],
    /// Factor turning unit phases into phases summing to π/2.
    pub scale: f64,
}

pub fn nv_phases(g: &NvGeometry) -> Result<NvPhases> {
    g.validate()?;
    let unit = nv_unit_phases_at(g, g.target);
    let total: f64 = unit.iter().sum();
    if total.abs() < DEGENERATE_PHASE_TOL {
        return Err(Error::Degenerate(format!("unit phases sum to {total:e}")));
    }
    let scale = NV_TOTAL_PHASE / total;
    Ok(NvPhases {
        phases: unit.map(|x| x * scale),
        unit_phases: unit,
        scale,
    })
}

/// `∂φ_j/∂r_k` at the target, with the phase scale held at its ground-truth value.
pub fn nv_jacobian(g: &NvGeometry) -> Result<DMatrix<f64>> {
    let scale = nv_phases(g)?.scale;
    let b = v3(g.field_axis);
    let mut jac = DMatrix::zeros(3, 3);
    for j in 0..3 {
        let d = v3(g.target) - v3(g.nv_positions[j]);
        let r = d.norm();
        let n = v3(g.nv_axes[j]);
        let (nd, bd) = (n.dot(&d), b.dot(&d));
        let r5 = r.powi(5);
        let grad = d * (-3.0 * n.dot(&b) / r5 + 5.0 * nd * bd / r.powi(7)) - (n * bd + b * nd) / r5;
        for k in 0..3 {
            jac[(j, k)] = scale * grad[k];
        }
    }
    let cond = condition_number(&jac);
    if !(cond <= MAX_CONDITION) {
        return Err(Error::Degenerate(format!("Jacobian condition number {cond:e}")));
    }
    Ok(jac)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NvPrep {
    Local,
    ShallowEntangled,
}

impl NvPrep {
    pub fn name(self) -> &'static str {
        match self {
            Self::Local => "local",
            Self::ShallowEntangled => "shallow_entangled",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NvScenario {
    pub geometry: NvGeometry,
    pub encoding_dephasing: f64,
    pub gate_depolarizing: f64,
    pub prep: NvPrep,
}

impl NvScenario {
    /// Reference geometry at encoding dephasing 0.1.
    pub fn ground_truth(gate_depolarizing: f64, prep: NvPrep) -> Self {
        Self {
            geometry: NvGeometry::ground_truth(),
            encoding_dephasing: NV_ENCODING_DEPHASING,
            gate_depolarizing,
            prep,
        }
    }
}

/// `R_Z R_Y R_Z` on `qubit` using parameters `first..first + 3`, then gate noise.
fn push_local_unitary(c: &mut ParamCircuit, qubit: usize, first: usize, p_g: f64) -> Result<()> {
    c.rotation("Z", &[qubit], first)?
        .rotation("Y", &[qubit], first + 1)?
        .rotation("Z", &[qubit], first + 2)?;
    if p_g > 0.0 {
        c.channel(depolarizing(p_g, &[qubit])?)?;
    }
    Ok(())
}

/// Controlled-`R_X` followed by gate noise on each of its wires.
fn push_entangler(c: &mut ParamCircuit, control: usize, target: usize, index: usize, p_g: f64) -> Result<()> {
    c.controlled_rx(control, target, index)?;
    if p_g > 0.0 {
        c.channel(depolarizing(p_g, &[control])?)?
            .channel(depolarizing(p_g, &[target])?)?;
    }
    Ok(())
}

pub fn build_nv(s: &NvScenario) -> Result<Setup> {
    if !(0.0..=1.0).contains(&s.encoding_dephasing) {
        return Err(Error::InvalidInput(format!(
            "encoding dephasing {} outside [0, 1]",
            s.encoding_dephasing
        )));
    }
    if !(0.0..=1.0).contains(&s.gate_depolarizing) {
        return Err(Error::InvalidInput(format!(
            "gate depolarization {} outside [0, 1]",
            s.gate_depolarizing
        )));
    }
    let g = &s.geometry;
    let phases = nv_phases(g)?;
    let jacobian = nv_jacobian(g)?;
    let p_g = s.gate_depolarizing;

    let n_theta = match s.prep {
        NvPrep::Local => 9,
        NvPrep::ShallowEntangled => 11,
    };
    let mut prep = ParamCircuit::new(3, n_theta);
    for q in 0..3 {
        push_local_unitary(&mut prep, q, 3 * q, p_g)?;
    }
    if s.prep == NvPrep::ShallowEntangled {
        push_entangler(&mut prep, 0, 1, 9, p_g)?;
        push_entangler(&mut prep, 1, 2, 10, p_g)?;
    }

    let mut encoding = ParamCircuit::new(3, 3);
    for (j, axis) in g.nv_axes.iter().enumerate() {
        encoding.axis_rotation(*axis, j, j)?;
    }
    let noise = (0..3)
        .map(|q| dephasing(s.encoding_dephasing, q).map(Into::into))
        .collect::<Result<Vec<_>>>()?;

    let mut readout = ParamCircuit::new(3, 9);
    for q in 0..3 {
        push_local_unitary(&mut readout, q, 3 * q, p_g)?;
    }

    Ok(Setup {
        model: MetrologyModel::new(prep, encoding, noise, Povm::new(readout))?,
        phases: phases.phases.to_vec(),
        reparam: Reparam::new(jacobian)?,
        cost: CostConfig::identity(3),
    })
}

// ---------------------------------------------------------------------------
// Random instances

/// A model together with a parameter point.
#[derive(Clone, Debug)]
pub struct RandomInstance {
    pub model: MetrologyModel,
    pub theta: Vec<f64>,
    pub phi: Vec<f64>,
    pub mu: Vec<f64>,
}

fn random_word(rng: &mut ChaCha8Rng, letters: &[char], len: usize) -> String {
    (0..len).map(|_| letters[rng.gen_range(0..letters.len())]).collect()
}

fn random_qubits(rng: &mut ChaCha8Rng, n_qubits: usize, len: usize) -> Vec<usize> {
    rand::seq::index::sample(rng, n_qubits, len).into_vec()
}

/// Seeded random noisy model: Pauli rotations (some sharing parameters),
/// a controlled rotation, dephasing and depolarizing layers in the
/// preparation, commuting `Z`-type encoding gates (some phases driving two)
/// followed by dephasing and depolarizing noise, and a noisy `R_Z R_Y R_Z`
/// readout.
pub fn random_instance(n_qubits: usize, seed: u64) -> Result<RandomInstance> {
    random_instance_with(n_qubits, seed, true)
}

/// Same circuit family without any channels before the readout, so the
/// encoded probe is pure.
pub fn random_pure_instance(n_qubits: usize, seed: u64) -> Result<RandomInstance> {
    random_instance_with(n_qubits, seed, false)
}

fn random_instance_with(n_qubits: usize, seed: u64, noisy: bool) -> Result<RandomInstance> {
    use crate::channels::Channel;
    use crate::circuits::{Angle, Gate, Generator, Rotation};

    if n_qubits < 2 {
        return Err(Error::InvalidInput("random instances need at least two qubits".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_theta = 2 * n_qubits + 2;
    let mut prep = ParamCircuit::new(n_qubits, n_theta);
    let maybe = |c: &mut ParamCircuit, ch: crate::channels::ConvexChannel| -> Result<()> {
        if noisy {
            c.channel(ch)?;
        }
        Ok(())
    };
    for q in 0..n_qubits {
        prep.rotation("Y", &[q], q)?;
    }
    maybe(&mut prep, depolarizing(rng.gen_range(0.0..0.2), &[0, 1])?)?;
    for k in n_qubits..n_theta - 1 {
        let len = rng.gen_range(1..=n_qubits.min(3));
        let qubits = random_qubits(&mut rng, n_qubits, len);
        prep.rotation(&random_word(&mut rng, &['X', 'Y', 'Z'], len), &qubits, k)?;
        if rng.gen_bool(0.5) {
            let q = rng.gen_range(0..n_qubits);
            maybe(&mut prep, dephasing(rng.gen_range(0.0..0.3), q)?)?;
        }
    }
    let pair = random_qubits(&mut rng, n_qubits, 2);
    prep.controlled_rx(pair[0], pair[1], n_theta - 1)?;
    let shared = random_qubits(&mut rng, n_qubits, 1);
    prep.push(Gate::Rotation(Rotation::new(
        Generator::pauli("X".parse()?)?,
        shared,
        Angle::Param { index: 0, scale: -0.7 },
    )?))?;
    maybe(&mut prep, depolarizing(rng.gen_range(0.0..0.2), &[rng.gen_range(0..n_qubits)])?)?;

    let mut encoding = ParamCircuit::new(n_qubits, n_qubits);
    for j in 0..n_qubits {
        encoding.rotation("Z", &[j], j)?;
        if rng.gen_bool(0.5) {
            let other = (j + rng.gen_range(1..n_qubits)) % n_qubits;
            encoding.push(Gate::Rotation(Rotation::new(
                Generator::pauli("ZZ".parse()?)?,
                vec![j, other],
                Angle::Param {
                    index: j,
                    scale: rng.gen_range(0.2..0.8),
                },
            )?))?;
        }
    }
    let mut noise: Vec<Channel> = Vec::new();
    for q in 0..n_qubits {
        noise.push(dephasing(rng.gen_range(0.0..0.3), q)?.into());
    }
    noise.push(depolarizing(rng.gen_range(0.0..0.15), &[n_qubits - 2, n_qubits - 1])?.into());
    if !noisy {
        noise.clear();
    }

    let mut readout = zyz_layer(n_qubits)?;
    readout.channel(depolarizing(rng.gen_range(0.0..0.1), &[0])?)?;
    let model = MetrologyModel::new(prep, encoding, noise, Povm::new(readout))?;
    let mut draw = |n: usize| (0..n).map(|_| rng.gen_range(0.0..std::f64::consts::TAU)).collect::<Vec<_>>();
    Ok(RandomInstance {
        theta: draw(n_theta),
        phi: draw(n_qubits),
        mu: draw(3 * n_qubits),
        model,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn ramsey_zero_parameters_keep_ground_state() {
        let s = build_ramsey(&RamseyScenario {
            dephasing: 0.0,
            ansatz: RamseyAnsatz::Full,
        })
        .unwrap();
        let p = s.model.probabilities(&[0.0; 14], &s.phases, &[0.0; 9]).unwrap();
        assert_abs_diff_eq!(p[0], 1.0, epsilon = 1e-14);
        assert_eq!((s.n_theta(), s.n_mu()), (14, 9));
    }

    #[test]
    fn reference_costs() {
        let (g, l) = ramsey_reference_costs(0.0).unwrap();
        assert_abs_diff_eq!(g, 1.0 / 9.0, epsilon = 1e-15);
        assert_abs_diff_eq!(l, 1.0 / 3.0, epsilon = 1e-15);
        let (g, l) = ramsey_reference_costs(0.25).unwrap();
        assert_abs_diff_eq!(g, 64.0 / 9.0, epsilon = 1e-12);
        assert_abs_diff_eq!(l, 4.0 / 3.0, epsilon = 1e-12);
        assert!(ramsey_reference_costs(0.5).is_err());
        let p = ghz_ramsey_crossover();
        let (g, l) = ramsey_reference_costs(p).unwrap();
        assert_abs_diff_eq!(g, l, epsilon = 1e-12);
        assert_abs_diff_eq!(p, 0.1201, epsilon = 1e-4);
        assert_abs_diff_eq!((1.0 - 2.0 * p).powi(4), 1.0 / 3.0, epsilon = 1e-14);
    }

    #[test]
    fn simulated_references_at_zero_noise() {
        for (ansatz, expected) in [(RamseyAnsatz::GhzReference, 1.0 / 9.0), (RamseyAnsatz::LocalReference, 1.0 / 3.0)] {
            let s = build_ramsey(&RamseyScenario { dephasing: 0.0, ansatz }).unwrap();
            assert_abs_diff_eq!(s.cost_at(&[], &[]).unwrap(), expected, epsilon = 1e-9);
        }
    }

    #[test]
    fn ground_truth_axes() {
        let g = NvGeometry::ground_truth();
        assert_eq!(g.field_axis, [0.0, 0.0, 1.0]);
        g.validate().unwrap();
        let ph = nv_phases(&g).unwrap();
        assert_abs_diff_eq!(ph.phases.iter().sum::<f64>(), FRAC_PI_2, epsilon = 1e-12);
    }

    #[test]
    fn null_dipole_factor() {
        // n ∥ e ∥ b makes the bracket vanish for the first center
        let mut g = NvGeometry::ground_truth();
        g.nv_axes[0] = [0.0, 0.0, 1.0];
        g.nv_positions[0] = [2.0, 0.0, 0.0];
        let unit = nv_unit_phases_at(&g, g.target);
        assert_abs_diff_eq!(unit[0], 0.0, epsilon = 1e-16);
        assert_abs_diff_eq!(nv_phases(&g).unwrap().phases[0], 0.0, epsilon = 1e-16);
    }

    #[test]
    fn scaling_distances_leaves_phases() {
        let g = NvGeometry::ground_truth();
        let mut far = g;
        for (p, q) in far.nv_positions.iter_mut().zip(&g.nv_positions) {
            for k in 0..3 {
                p[k] = g.target[k] + 2.0 * (q[k] - g.target[k]);
            }
        }
        let (a, b) = (nv_phases(&g).unwrap(), nv_phases(&far).unwrap());
        for j in 0..3 {
            assert_abs_diff_eq!(b.unit_phases[j], a.unit_phases[j] / 8.0, epsilon = 1e-15);
            assert_abs_diff_eq!(b.phases[j], a.phases[j], epsilon = 1e-14);
        }
    }

    #[test]
    fn degenerate_geometry_rejected() {
        let mut g = NvGeometry::ground_truth();
        g.target = g.nv_positions[1];
        assert!(matches!(nv_phases(&g), Err(Error::Degenerate(_))));
        g = NvGeometry::ground_truth();
        g.nv_axes[0] = [1.0, 1.0, 0.0];
        assert!(g.validate().is_err());
    }

    #[test]
    fn nv_builders() {
        for (prep, n) in [(NvPrep::Local, 9), (NvPrep::ShallowEntangled, 11)] {
            let s = build_nv(&NvScenario::ground_truth(0.05, prep)).unwrap();
            assert_eq!((s.n_theta(), s.n_mu()), (n, 9));
            assert_eq!(s.cost.weights(), &DMatrix::identity(3, 3));
        }
    }
}
