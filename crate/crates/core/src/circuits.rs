//! Parametrized circuits, POVMs and the sensing pipeline
//! `ρ₀(θ) → U(φ) → 𝓝 → M(μ) → computational-basis readout`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::channels::Channel;
use crate::error::{Error, Result};
use crate::qalg::{
    check_qubits, embed, hermitian_deviation, involution_rotation, max_abs, pauli_matrix, unitary_deviation,
    CMatrix, DensityMatrix, HermitianOp, LocalLayout, Pauli, PauliMask, PauliWord, C64, UNITARY_TOL,
};

/// Tolerance for `Σ p_l = 1`.
pub const NORMALIZATION_TOL: f64 = 1e-10;
/// Probabilities down to `-NEGATIVE_PROB_TOL` are clamped to zero; below that is an error.
pub const NEGATIVE_PROB_TOL: f64 = 1e-12;
/// Tolerance for the pairwise commutation check on encoding generators.
pub const COMMUTATION_TOL: f64 = 1e-10;

/// Which parameter vector a gate reads from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Slot {
    /// Preparation parameters `θ`.
    Prep,
    /// Encoded phases `φ`.
    Encoding,
    /// Measurement parameters `μ`.
    Measurement,
}

impl fmt::Display for Slot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Slot::Prep => "theta",
            Slot::Encoding => "phi",
            Slot::Measurement => "mu",
        })
    }
}

// ---------------------------------------------------------------------------
// Generators

#[derive(Clone, Debug, PartialEq)]
pub enum GeneratorKind {
    /// `P/2` for a Pauli word `P`.
    Pauli(PauliWord),
    /// `(n·σ)/2` for a unit vector `n`.
    Axis([f64; 3]),
    /// Arbitrary Hermitian `G`.
    Custom,
}

/// Hermitian generator `G` of a rotation `exp(-i x G)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Generator {
    kind: GeneratorKind,
    matrix: CMatrix,
    // 2G when (2G)² = I
    involution: Option<CMatrix>,
    // spectral decomposition for custom generators
    spectrum: Option<(Vec<f64>, CMatrix)>,
}

impl Generator {
    pub fn pauli(word: PauliWord) -> Result<Self> {
        let p = pauli_matrix(&word)?.into_data();
        Ok(Self {
            kind: GeneratorKind::Pauli(word),
            matrix: &p * C64::new(0.5, 0.0),
            involution: Some(p),
            spectrum: None,
        })
    }

    pub fn axis(n: [f64; 3]) -> Result<Self> {
        let norm = n.iter().map(|c| c * c).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput(format!("rotation axis has norm {norm}")));
        }
        let sigma = Pauli::X.matrix() * C64::new(n[0], 0.0)
            + Pauli::Y.matrix() * C64::new(n[1], 0.0)
            + Pauli::Z.matrix() * C64::new(n[2], 0.0);
        Ok(Self {
            kind: GeneratorKind::Axis(n),
            matrix: &sigma * C64::new(0.5, 0.0),
            involution: Some(sigma),
            spectrum: None,
        })
    }

    pub fn custom(matrix: CMatrix) -> Result<Self> {
        let h = HermitianOp::new(matrix)?.into_data();
        let eig = h.clone().symmetric_eigen();
        let values = eig.eigenvalues.iter().copied().collect();
        Ok(Self {
            kind: GeneratorKind::Custom,
            matrix: h,
            involution: None,
            spectrum: Some((values, eig.eigenvectors)),
        })
    }

    pub fn kind(&self) -> &GeneratorKind {
        &self.kind
    }

    /// The local matrix `G`.
    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn n_qubits(&self) -> usize {
        self.matrix.nrows().trailing_zeros() as usize
    }

    /// `r = |λ₁ − λ₂|/2` when the spectrum has exactly two distinct values.
    pub fn natural_shift_const(&self) -> Option<f64> {
        if self.involution.is_some() {
            return Some(0.5);
        }
        let (values, _) = self.spectrum.as_ref()?;
        let mut distinct: Vec<f64> = Vec::new();
        for &v in values {
            if !distinct.iter().any(|d| (d - v).abs() < 1e-9) {
                distinct.push(v);
            }
        }
        match distinct.as_slice() {
            [a, b] => Some((a - b).abs() / 2.0),
            _ => None,
        }
    }

    /// `exp(-i x G)`.
    pub fn unitary(&self, x: f64) -> CMatrix {
        if let Some(sigma) = &self.involution {
            return involution_rotation(sigma, x);
        }
        let (values, vectors) = self.spectrum.as_ref().expect("custom generator carries its spectrum");
        let phases = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            values.len(),
            values.iter().map(|&l| C64::new(0.0, -x * l).exp()),
        ));
        vectors * phases * vectors.adjoint()
    }
}

impl fmt::Display for Generator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            GeneratorKind::Pauli(w) => write!(f, "{w}"),
            GeneratorKind::Axis(n) => write!(f, "axis({:.4}, {:.4}, {:.4})", n[0], n[1], n[2]),
            GeneratorKind::Custom => write!(f, "custom"),
        }
    }
}

// ---------------------------------------------------------------------------
// Gates

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Angle {
    Fixed(f64),
    /// `scale · params[index]`.
    Param { index: usize, scale: f64 },
}

/// `exp(-i x G)` on a subset of qubits.
#[derive(Clone, Debug, PartialEq)]
pub struct Rotation {
    generator: Generator,
    qubits: Vec<usize>,
    angle: Angle,
    shift_const: Option<f64>,
}

impl Rotation {
    pub fn new(generator: Generator, qubits: Vec<usize>, angle: Angle) -> Result<Self> {
        if generator.n_qubits() != qubits.len() {
            return Err(Error::DimensionMismatch {
                expected: generator.n_qubits(),
                found: qubits.len(),
            });
        }
        let shift_const = generator.natural_shift_const();
        Ok(Self {
            generator,
            qubits,
            angle,
            shift_const,
        })
    }

    pub fn generator(&self) -> &Generator {
        &self.generator
    }

    pub fn qubits(&self) -> &[usize] {
        &self.qubits
    }

    pub fn angle(&self) -> Angle {
        self.angle
    }

    /// Shift constant `r` used by the two-term parameter-shift rule.
    pub fn shift_const(&self) -> Option<f64> {
        self.shift_const
    }

    /// Replaces the shift constant; only meaningful for negative controls.
    pub fn set_shift_const(&mut self, r: Option<f64>) {
        self.shift_const = r;
    }

    fn value(&self, params: &[f64]) -> f64 {
        match self.angle {
            Angle::Fixed(x) => x,
            Angle::Param { index, scale } => scale * params[index],
        }
    }

    fn apply(&self, rho: &mut CMatrix, n_qubits: usize, x: f64) {
        if let GeneratorKind::Pauli(word) = &self.generator.kind {
            PauliMask::new(word, &self.qubits, n_qubits).rotate(rho, x);
        } else {
            LocalLayout::new(&self.qubits, n_qubits).conjugate(rho, &self.generator.unitary(x));
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Gate {
    Rotation(Rotation),
    Unitary { matrix: CMatrix, qubits: Vec<usize>, label: String },
    Channel(Channel),
}

impl Gate {
    pub fn qubits(&self) -> &[usize] {
        match self {
            Gate::Rotation(r) => &r.qubits,
            Gate::Unitary { qubits, .. } => qubits,
            Gate::Channel(c) => c.qubits(),
        }
    }

    /// Parameter index and scale when the gate is parametrized.
    pub fn param(&self) -> Option<(usize, f64)> {
        match self {
            Gate::Rotation(Rotation {
                angle: Angle::Param { index, scale },
                ..
            }) => Some((*index, *scale)),
            _ => None,
        }
    }
}

impl fmt::Display for Gate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Gate::Rotation(r) => {
                write!(f, "R[{}] on {:?}", r.generator, r.qubits)?;
                match r.angle {
                    Angle::Fixed(x) => write!(f, " at {x}"),
                    Angle::Param { index, scale } => write!(f, " param {index} x {scale}"),
                }
            }
            Gate::Unitary { label, qubits, .. } => write!(f, "{label} on {qubits:?}"),
            Gate::Channel(c) => write!(f, "channel on {:?}", c.qubits()),
        }
    }
}

/// Offset added to one gate's angle, used by the shift rules.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct GateShift {
    pub gate: usize,
    pub delta: f64,
}

// ---------------------------------------------------------------------------
// Circuits

#[derive(Clone, Debug, PartialEq)]
pub struct ParamCircuit {
    n_qubits: usize,
    n_params: usize,
    gates: Vec<Gate>,
}

impl ParamCircuit {
    pub fn new(n_qubits: usize, n_params: usize) -> Self {
        Self {
            n_qubits,
            n_params,
            gates: Vec::new(),
        }
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn push(&mut self, gate: Gate) -> Result<&mut Self> {
        check_qubits(gate.qubits(), self.n_qubits)?;
        match &gate {
            Gate::Rotation(r) => {
                if let Angle::Param { index, .. } = r.angle {
                    if index >= self.n_params {
                        return Err(Error::InvalidInput(format!(
                            "parameter index {index} out of range for {} parameters",
                            self.n_params
                        )));
                    }
                }
                if let Some(r) = r.shift_const {
                    if r <= 0.0 {
                        return Err(Error::InvalidInput(format!("shift constant {r} must be positive")));
                    }
                }
            }
            Gate::Unitary { matrix, qubits, .. } => {
                if matrix.nrows() != 1 << qubits.len() {
                    return Err(Error::DimensionMismatch {
                        expected: 1 << qubits.len(),
                        found: matrix.nrows(),
                    });
                }
                let dev = unitary_deviation(matrix);
                if dev > UNITARY_TOL {
                    return Err(Error::NotUnitary(dev));
                }
            }
            Gate::Channel(_) => {}
        }
        self.gates.push(gate);
        Ok(self)
    }

    /// `R_P(params[index])` for a Pauli word given as text, e.g. `"XY"`.
    pub fn rotation(&mut self, word: &str, qubits: &[usize], index: usize) -> Result<&mut Self> {
        let rot = Rotation::new(
            Generator::pauli(word.parse()?)?,
            qubits.to_vec(),
            Angle::Param { index, scale: 1.0 },
        )?;
        self.push(Gate::Rotation(rot))
    }

    /// `R_P(angle)` with a fixed angle.
    pub fn fixed_rotation(&mut self, word: &str, qubits: &[usize], angle: f64) -> Result<&mut Self> {
        let rot = Rotation::new(Generator::pauli(word.parse()?)?, qubits.to_vec(), Angle::Fixed(angle))?;
        self.push(Gate::Rotation(rot))
    }

    /// `exp(-i params[index] (n·σ)/2)` on one qubit.
    pub fn axis_rotation(&mut self, axis: [f64; 3], qubit: usize, index: usize) -> Result<&mut Self> {
        let rot = Rotation::new(Generator::axis(axis)?, vec![qubit], Angle::Param { index, scale: 1.0 })?;
        self.push(Gate::Rotation(rot))
    }

    /// Controlled `R_X(params[index])`, written as the commuting product
    /// `R_IX(θ/2) R_ZX(−θ/2)` so both factors keep a two-term shift rule.
    pub fn controlled_rx(&mut self, control: usize, target: usize, index: usize) -> Result<&mut Self> {
        for (word, scale) in [("IX", 0.5), ("ZX", -0.5)] {
            let rot = Rotation::new(
                Generator::pauli(word.parse()?)?,
                vec![control, target],
                Angle::Param { index, scale },
            )?;
            self.push(Gate::Rotation(rot))?;
        }
        Ok(self)
    }

    pub fn unitary(&mut self, matrix: CMatrix, qubits: &[usize], label: &str) -> Result<&mut Self> {
        self.push(Gate::Unitary {
            matrix,
            qubits: qubits.to_vec(),
            label: label.to_string(),
        })
    }

    pub fn channel(&mut self, channel: impl Into<Channel>) -> Result<&mut Self> {
        self.push(Gate::Channel(channel.into()))
    }

    /// Overrides the shift constant of a rotation gate.
    pub fn set_shift_const(&mut self, gate: usize, r: Option<f64>) -> Result<()> {
        match self.gates.get_mut(gate) {
            Some(Gate::Rotation(rot)) => {
                rot.set_shift_const(r);
                Ok(())
            }
            _ => Err(Error::InvalidInput(format!("gate {gate} is not a rotation"))),
        }
    }

    fn check_params(&self, params: &[f64]) -> Result<()> {
        if params.len() != self.n_params {
            return Err(Error::DimensionMismatch {
                expected: self.n_params,
                found: params.len(),
            });
        }
        Ok(())
    }

    pub(crate) fn run_raw(&self, rho: &mut CMatrix, params: &[f64], shift: Option<GateShift>) {
        for (i, gate) in self.gates.iter().enumerate() {
            match gate {
                Gate::Rotation(r) => {
                    let mut x = r.value(params);
                    if let Some(s) = shift.filter(|s| s.gate == i) {
                        x += s.delta;
                    }
                    r.apply(rho, self.n_qubits, x);
                }
                Gate::Unitary { matrix, qubits, .. } => {
                    LocalLayout::new(qubits, self.n_qubits).conjugate(rho, matrix);
                }
                Gate::Channel(c) => *rho = c.apply_raw(rho, self.n_qubits),
            }
        }
    }

    /// Heisenberg picture: the adjoint of the whole circuit applied to `op`.
    pub(crate) fn run_adjoint_raw(&self, op: &mut CMatrix, params: &[f64], shift: Option<GateShift>) {
        for (i, gate) in self.gates.iter().enumerate().rev() {
            match gate {
                Gate::Rotation(r) => {
                    let mut x = r.value(params);
                    if let Some(s) = shift.filter(|s| s.gate == i) {
                        x += s.delta;
                    }
                    r.apply(op, self.n_qubits, -x);
                }
                Gate::Unitary { matrix, qubits, .. } => {
                    LocalLayout::new(qubits, self.n_qubits).conjugate(op, &matrix.adjoint());
                }
                Gate::Channel(c) => *op = c.adjoint_raw(op, self.n_qubits),
            }
        }
    }

    /// Runs the circuit on a density matrix.
    pub fn run(&self, rho: &DensityMatrix, params: &[f64]) -> Result<DensityMatrix> {
        self.check_params(params)?;
        if rho.n_qubits() != self.n_qubits {
            return Err(Error::DimensionMismatch {
                expected: self.n_qubits,
                found: rho.n_qubits(),
            });
        }
        let mut data = rho.data().clone();
        self.run_raw(&mut data, params, None);
        Ok(DensityMatrix::from_raw(self.n_qubits, data))
    }
}

// ---------------------------------------------------------------------------
// POVM

/// Local-unitary (possibly noisy) rotation followed by computational-basis
/// readout: `Π_l(μ) = M†[|l⟩⟨l|]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Povm {
    rotation: ParamCircuit,
}

impl Povm {
    pub fn new(rotation: ParamCircuit) -> Self {
        Self { rotation }
    }

    pub fn rotation(&self) -> &ParamCircuit {
        &self.rotation
    }

    pub fn n_outcomes(&self) -> usize {
        1 << self.rotation.n_qubits
    }

    pub fn elements(&self, mu: &[f64]) -> Result<Vec<HermitianOp>> {
        self.rotation.check_params(mu)?;
        let n = self.rotation.n_qubits;
        let dim = 1 << n;
        Ok((0..dim)
            .map(|l| {
                let mut op = CMatrix::zeros(dim, dim);
                op[(l, l)] = C64::new(1.0, 0.0);
                self.rotation.run_adjoint_raw(&mut op, mu, None);
                HermitianOp::from_raw(n, op)
            })
            .collect())
    }
}

// ---------------------------------------------------------------------------
// Model

/// Preparation `P(θ)`, commuting encoding `U(φ)`, parameter-independent
/// noise `𝓝`, and measurement `M(μ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MetrologyModel {
    n_qubits: usize,
    prep: ParamCircuit,
    encoding: ParamCircuit,
    noise: Vec<Channel>,
    povm: Povm,
    generators: Vec<HermitianOp>,
}

impl MetrologyModel {
    pub fn new(prep: ParamCircuit, encoding: ParamCircuit, noise: Vec<Channel>, povm: Povm) -> Result<Self> {
        let n_qubits = prep.n_qubits;
        for c in [&encoding, povm.rotation()] {
            if c.n_qubits != n_qubits {
                return Err(Error::DimensionMismatch {
                    expected: n_qubits,
                    found: c.n_qubits,
                });
            }
        }
        for ch in &noise {
            ch.check_register(n_qubits)?;
        }
        let d = encoding.n_params;
        let mut generators = vec![CMatrix::zeros(1 << n_qubits, 1 << n_qubits); d];
        let mut gate_generators = Vec::new();
        for gate in &encoding.gates {
            let Gate::Rotation(rot) = gate else {
                return Err(Error::InvalidInput(format!(
                    "encoding may only contain parametrized rotations, found {gate}"
                )));
            };
            let Angle::Param { index, scale } = rot.angle else {
                return Err(Error::InvalidInput(format!("encoding gate {gate} is not parametrized")));
            };
            let full = embed(rot.generator.matrix(), &rot.qubits, n_qubits)?;
            generators[index] += &full * C64::new(scale, 0.0);
            gate_generators.push(full);
        }
        for (j, g) in generators.iter().enumerate() {
            if max_abs(g) == 0.0 {
                return Err(Error::InvalidInput(format!("phase {j} has no encoding gate")));
            }
        }
        for a in 0..gate_generators.len() {
            for b in a + 1..gate_generators.len() {
                let (ga, gb) = (&gate_generators[a], &gate_generators[b]);
                let comm = max_abs(&(ga * gb - gb * ga));
                if comm > COMMUTATION_TOL {
                    return Err(Error::NonCommutingGenerators(comm));
                }
            }
        }
        let generators = generators
            .into_iter()
            .map(|g| {
                debug_assert!(hermitian_deviation(&g) < 1e-12);
                HermitianOp::from_raw(n_qubits, g)
            })
            .collect();
        Ok(Self {
            n_qubits,
            prep,
            encoding,
            noise,
            povm,
            generators,
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    /// Number of encoded phases `d`.
    pub fn phase_count(&self) -> usize {
        self.encoding.n_params
    }

    pub fn n_outcomes(&self) -> usize {
        1 << self.n_qubits
    }

    pub fn param_count(&self, slot: Slot) -> usize {
        self.circuit(slot).n_params
    }

    pub fn prep(&self) -> &ParamCircuit {
        &self.prep
    }

    pub fn encoding(&self) -> &ParamCircuit {
        &self.encoding
    }

    pub fn noise(&self) -> &[Channel] {
        &self.noise
    }

    pub fn povm(&self) -> &Povm {
        &self.povm
    }

    pub fn circuit(&self, slot: Slot) -> &ParamCircuit {
        match slot {
            Slot::Prep => &self.prep,
            Slot::Encoding => &self.encoding,
            Slot::Measurement => &self.povm.rotation,
        }
    }

    /// Same model with one circuit replaced.
    pub fn with_circuit(&self, slot: Slot, circuit: ParamCircuit) -> Result<Self> {
        let mut prep = self.prep.clone();
        let mut encoding = self.encoding.clone();
        let mut measure = self.povm.rotation.clone();
        match slot {
            Slot::Prep => prep = circuit,
            Slot::Encoding => encoding = circuit,
            Slot::Measurement => measure = circuit,
        }
        Self::new(prep, encoding, self.noise.clone(), Povm::new(measure))
    }

    /// Encoding generators `𝓗_j` on the full register.
    pub fn generators(&self) -> &[HermitianOp] {
        &self.generators
    }

    /// `ρ₀(θ)`: the preparation circuit applied to `|0…0⟩`.
    pub fn prepare(&self, theta: &[f64]) -> Result<DensityMatrix> {
        self.prep.check_params(theta)?;
        Ok(DensityMatrix::from_raw(self.n_qubits, self.prepared_raw(theta, None)))
    }

    /// `𝓝[U(φ) ρ U†(φ)]`.
    pub fn encode(&self, rho: &DensityMatrix, phi: &[f64]) -> Result<DensityMatrix> {
        self.encoding.check_params(phi)?;
        self.check_state(rho)?;
        Ok(DensityMatrix::from_raw(self.n_qubits, self.encoded_raw(rho.data(), phi, None)))
    }

    /// `U(φ) ρ U†(φ)` without the noise channel.
    pub fn encode_unitary(&self, rho: &DensityMatrix, phi: &[f64]) -> Result<DensityMatrix> {
        self.encoding.check_params(phi)?;
        self.check_state(rho)?;
        let mut data = rho.data().clone();
        self.encoding.run_raw(&mut data, phi, None);
        Ok(DensityMatrix::from_raw(self.n_qubits, data))
    }

    /// `p_l = Tr{Π_l(μ) ρ(θ, φ)}`.
    pub fn probabilities(&self, theta: &[f64], phi: &[f64], mu: &[f64]) -> Result<Vec<f64>> {
        self.check_lengths(theta, phi, mu)?;
        let rho = self.prepared_raw(theta, None);
        let rho = self.encoded_raw(&rho, phi, None);
        self.measured_probs(&rho, mu, None)
    }

    /// `Π'_l = 𝓝†[Π_l(μ)]`.
    pub fn noisy_povm(&self, mu: &[f64]) -> Result<Vec<HermitianOp>> {
        let elements = self.povm.elements(mu)?;
        Ok(elements
            .into_iter()
            .map(|e| {
                let mut op = e.into_data();
                for ch in self.noise.iter().rev() {
                    op = ch.adjoint_raw(&op, self.n_qubits);
                }
                HermitianOp::from_raw(self.n_qubits, op)
            })
            .collect())
    }

    fn check_state(&self, rho: &DensityMatrix) -> Result<()> {
        if rho.n_qubits() != self.n_qubits {
            return Err(Error::DimensionMismatch {
                expected: self.n_qubits,
                found: rho.n_qubits(),
            });
        }
        Ok(())
    }

    pub(crate) fn check_lengths(&self, theta: &[f64], phi: &[f64], mu: &[f64]) -> Result<()> {
        self.prep.check_params(theta)?;
        self.encoding.check_params(phi)?;
        self.povm.rotation.check_params(mu)
    }

    pub(crate) fn prepared_raw(&self, theta: &[f64], shift: Option<GateShift>) -> CMatrix {
        let mut rho = DensityMatrix::zero_state(self.n_qubits).into_data();
        self.prep.run_raw(&mut rho, theta, shift);
        rho
    }

    pub(crate) fn encoded_raw(&self, rho: &CMatrix, phi: &[f64], shift: Option<GateShift>) -> CMatrix {
        let mut out = rho.clone();
        self.encoding.run_raw(&mut out, phi, shift);
        for ch in &self.noise {
            out = ch.apply_raw(&out, self.n_qubits);
        }
        out
    }

    pub(crate) fn measured_probs(&self, rho: &CMatrix, mu: &[f64], shift: Option<GateShift>) -> Result<Vec<f64>> {
        let mut out = rho.clone();
        self.povm.rotation.run_raw(&mut out, mu, shift);
        diagonal_probabilities(&out)
    }
}

/// Readout distribution from the diagonal, with the normalization and
/// negativity checks applied.
pub(crate) fn diagonal_probabilities(rho: &CMatrix) -> Result<Vec<f64>> {
    let mut probs: Vec<f64> = (0..rho.nrows()).map(|l| rho[(l, l)].re).collect();
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > NORMALIZATION_TOL {
        return Err(Error::Numerical(format!("outcome probabilities sum to {total}")));
    }
    for p in &mut probs {
        if *p < -NEGATIVE_PROB_TOL || p.is_nan() {
            return Err(Error::InvalidProbability(*p));
        }
        if *p < 0.0 {
            *p = 0.0;
        }
    }
    Ok(probs)
}

/// Measurement circuit `R_Z R_Y R_Z` on every qubit, parameters consumed
/// three per qubit in circuit order.
pub fn zyz_layer(n_qubits: usize) -> Result<ParamCircuit> {
    let mut c = ParamCircuit::new(n_qubits, 3 * n_qubits);
    for q in 0..n_qubits {
        c.rotation("Z", &[q], 3 * q)?
            .rotation("Y", &[q], 3 * q + 1)?
            .rotation("Z", &[q], 3 * q + 2)?;
    }
    Ok(c)
}

/// `R_Z(φ_j)` on qubit `j`, one phase per qubit.
pub fn local_z_encoding(n_qubits: usize) -> Result<ParamCircuit> {
    let mut c = ParamCircuit::new(n_qubits, n_qubits);
    for q in 0..n_qubits {
        c.rotation("Z", &[q], q)?;
    }
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::dephasing;
    use crate::qalg::{pauli_rotation, CVector};
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, FRAC_PI_6, PI};

    fn one_qubit_model(p: f64, x_basis: bool) -> MetrologyModel {
        let mut prep = ParamCircuit::new(1, 0);
        prep.fixed_rotation("Y", &[0], FRAC_PI_2).unwrap();
        let mut meas = ParamCircuit::new(1, 0);
        if x_basis {
            meas.fixed_rotation("Y", &[0], -FRAC_PI_2).unwrap();
        }
        MetrologyModel::new(
            prep,
            local_z_encoding(1).unwrap(),
            vec![dephasing(p, 0).unwrap().into()],
            Povm::new(meas),
        )
        .unwrap()
    }

    #[test]
    fn encode_half_turn_maps_plus_to_minus() {
        let model = one_qubit_model(0.0, true);
        let plus = model.prepare(&[]).unwrap();
        assert_abs_diff_eq!(plus.data()[(0, 1)].re, 0.5, epsilon = 1e-15);
        let minus = model.encode(&plus, &[PI]).unwrap();
        assert_abs_diff_eq!(minus.data()[(0, 1)].re, -0.5, epsilon = 1e-15);
        let same = model.encode(&plus, &[0.0]).unwrap();
        assert!(max_abs(&(same.data() - plus.data())) < 1e-15);
    }

    #[test]
    fn probabilities_of_mixed_state_are_uniform() {
        let mut prep = ParamCircuit::new(3, 0);
        for q in 0..3 {
            prep.channel(crate::channels::depolarizing(0.75, &[q]).unwrap()).unwrap();
        }
        let model = MetrologyModel::new(prep, local_z_encoding(3).unwrap(), vec![], Povm::new(zyz_layer(3).unwrap()))
            .unwrap();
        let mu = [0.3, 1.1, -0.4, 2.0, 0.1, 0.9, 1.3, 0.2, 0.7];
        let probs = model.probabilities(&[], &[0.1, 0.2, 0.3], &mu).unwrap();
        for p in probs {
            assert_abs_diff_eq!(p, 0.125, epsilon = 1e-14);
        }
    }

    #[test]
    fn zero_state_reads_zero() {
        let model = MetrologyModel::new(
            ParamCircuit::new(3, 0),
            local_z_encoding(3).unwrap(),
            vec![],
            Povm::new(zyz_layer(3).unwrap()),
        )
        .unwrap();
        let probs = model.probabilities(&[], &[0.4, 0.5, 0.6], &[0.0; 9]).unwrap();
        assert_abs_diff_eq!(probs[0], 1.0, epsilon = 1e-15);
        assert!(probs[1..].iter().all(|&p| p.abs() < 1e-15));
    }

    #[test]
    fn parameter_length_mismatch() {
        let model = one_qubit_model(0.0, true);
        assert!(matches!(model.probabilities(&[0.1], &[0.0], &[]), Err(Error::DimensionMismatch { .. })));
        assert!(model.prepare(&[1.0]).is_err());
    }

    #[test]
    fn noisy_povm_under_dephasing() {
        let p = 0.2;
        let model = one_qubit_model(p, true);
        let elements = model.noisy_povm(&[]).unwrap();
        // R_Y(-π/2) readout: Π_0 = |+⟩⟨+|, Π_1 = |−⟩⟨−|
        let x = Pauli::X.matrix();
        let id = CMatrix::identity(2, 2);
        let expect_plus = (&id + &x * C64::new(1.0 - 2.0 * p, 0.0)) * C64::new(0.5, 0.0);
        let expect_minus = (&id - &x * C64::new(1.0 - 2.0 * p, 0.0)) * C64::new(0.5, 0.0);
        assert!(max_abs(&(elements[0].data() - expect_plus)) < 1e-15);
        assert!(max_abs(&(elements[1].data() - expect_minus)) < 1e-15);

        let noiseless = one_qubit_model(0.0, true);
        let a = noiseless.noisy_povm(&[]).unwrap();
        let b = noiseless.povm().elements(&[]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn non_commuting_encoding_rejected() {
        let mut enc = ParamCircuit::new(1, 2);
        enc.rotation("Z", &[0], 0).unwrap().rotation("X", &[0], 1).unwrap();
        let err = MetrologyModel::new(ParamCircuit::new(1, 0), enc, vec![], Povm::new(ParamCircuit::new(1, 0)));
        assert!(matches!(err, Err(Error::NonCommutingGenerators(_))));
    }

    #[test]
    fn controlled_rx_matches_block_matrix() {
        let theta = 0.913;
        let mut c = ParamCircuit::new(2, 1);
        c.controlled_rx(0, 1, 0).unwrap();
        let psi = CVector::from_iterator(4, (0..4).map(|k| C64::new(0.5 + k as f64, 0.1 * k as f64)));
        let psi = &psi / C64::new(psi.norm(), 0.0);
        let rho = DensityMatrix::from_state_vector(&psi).unwrap();
        let out = c.run(&rho, &[theta]).unwrap();
        let mut u = CMatrix::identity(4, 4);
        let rx = pauli_rotation(&"X".parse().unwrap(), theta).unwrap();
        u.view_mut((2, 2), (2, 2)).copy_from(&rx);
        let oracle = &u * rho.data() * u.adjoint();
        assert!(max_abs(&(out.data() - oracle)) < 1e-14);
    }

    #[test]
    fn custom_generator_shift_constant() {
        let g = Generator::custom(Pauli::Z.matrix() * C64::new(1.5, 0.0)).unwrap();
        assert_abs_diff_eq!(g.natural_shift_const().unwrap(), 1.5);
        // three distinct eigenvalues: no two-term rule
        let mut m = CMatrix::zeros(4, 4);
        m[(1, 1)] = C64::new(0.5, 0.0);
        m[(2, 2)] = C64::new(-0.5, 0.0);
        let g3 = Generator::custom(m).unwrap();
        assert!(g3.natural_shift_const().is_none());
        assert!(Generator::axis([1.0, 1.0, 0.0]).is_err());
    }

    #[test]
    fn ghz_encoding_relative_phase() {
        let mut psi = CVector::zeros(8);
        psi[0] = C64::new(FRAC_1_SQRT_2, 0.0);
        psi[7] = C64::new(FRAC_1_SQRT_2, 0.0);
        let ghz = DensityMatrix::from_state_vector(&psi).unwrap();
        let model = MetrologyModel::new(
            ParamCircuit::new(3, 0),
            local_z_encoding(3).unwrap(),
            (0..3).map(|q| dephasing(0.0, q).unwrap().into()).collect(),
            Povm::new(ParamCircuit::new(3, 0)),
        )
        .unwrap();
        let out = model.encode(&ghz, &[FRAC_PI_6; 3]).unwrap();
        // ρ_{0,7} = ½ e^{-iΣφ} with Σφ = π/2
        let c = out.data()[(0, 7)];
        assert_abs_diff_eq!(c.norm(), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(c.arg(), -FRAC_PI_2, epsilon = 1e-14);
    }
}
