//! Dense complex linear algebra on n-qubit registers.
//!
//! Basis ordering is big-endian: qubit 0 is the most significant bit of a
//! computational basis index, so `|q0 q1 … q(n-1)⟩` has index
//! `Σ q_k 2^(n-1-k)` and Kronecker products list qubit 0 first.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

pub const HERMITIAN_TOL: f64 = 1e-10;
pub const TRACE_TOL: f64 = 1e-10;
pub const PSD_TOL: f64 = 1e-9;
pub const UNITARY_TOL: f64 = 1e-10;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);
const I: C64 = C64::new(0.0, 1.0);

/// Largest elementwise modulus of `a - a†`.
pub fn hermitian_deviation(a: &CMatrix) -> f64 {
    let n = a.nrows();
    let mut dev = 0.0f64;
    for i in 0..n {
        for j in i..n {
            dev = dev.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    dev
}

/// Largest elementwise modulus of `u† u - 1`.
pub fn unitary_deviation(u: &CMatrix) -> f64 {
    let prod = u.adjoint() * u;
    let n = u.nrows();
    let mut dev = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let target = if i == j { ONE } else { ZERO };
            dev = dev.max((prod[(i, j)] - target).norm());
        }
    }
    dev
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn hermitian_eigenvalues(a: &CMatrix) -> Vec<f64> {
    let mut ev: Vec<f64> = a.clone().symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|x, y| x.total_cmp(y));
    ev
}

/// Largest elementwise modulus of a complex matrix.
pub fn max_abs(a: &CMatrix) -> f64 {
    a.iter().fold(0.0f64, |m, z| m.max(z.norm()))
}

fn qubits_for_dim(dim: usize) -> Result<usize> {
    if dim < 2 || !dim.is_power_of_two() {
        return Err(Error::InvalidInput(format!(
            "dimension {dim} is not a power of two ≥ 2"
        )));
    }
    Ok(dim.trailing_zeros() as usize)
}

fn check_square(a: &CMatrix) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::InvalidInput(format!(
            "matrix is not square: {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Pauli words

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub fn matrix(self) -> CMatrix {
        match self {
            Pauli::I => CMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, ONE]),
            Pauli::X => CMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO]),
            Pauli::Y => CMatrix::from_row_slice(2, 2, &[ZERO, -I, I, ZERO]),
            Pauli::Z => CMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE]),
        }
    }

    fn has_x(self) -> bool {
        matches!(self, Pauli::X | Pauli::Y)
    }

    fn has_z(self) -> bool {
        matches!(self, Pauli::Z | Pauli::Y)
    }
}

impl TryFrom<char> for Pauli {
    type Error = Error;

    fn try_from(c: char) -> Result<Self> {
        match c.to_ascii_uppercase() {
            'I' => Ok(Pauli::I),
            'X' => Ok(Pauli::X),
            'Y' => Ok(Pauli::Y),
            'Z' => Ok(Pauli::Z),
            other => Err(Error::InvalidInput(format!("unknown Pauli letter {other:?}"))),
        }
    }
}

/// A tensor product of single-qubit Pauli letters, one per qubit.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PauliWord(Vec<Pauli>);

impl PauliWord {
    pub fn new(letters: Vec<Pauli>) -> Result<Self> {
        if letters.is_empty() {
            return Err(Error::InvalidInput("empty Pauli word".into()));
        }
        Ok(Self(letters))
    }

    /// The global identity on `n` qubits.
    pub fn identity(n: usize) -> Result<Self> {
        Self::new(vec![Pauli::I; n])
    }

    pub fn letters(&self) -> &[Pauli] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_identity(&self) -> bool {
        self.0.iter().all(|&p| p == Pauli::I)
    }

    /// All 4^k words on `k` qubits, identity first, in lexicographic order I < X < Y < Z.
    pub fn all(k: usize) -> Vec<PauliWord> {
        const LETTERS: [Pauli; 4] = [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z];
        (0..4usize.pow(k as u32))
            .map(|mut code| {
                let mut letters = vec![Pauli::I; k];
                for slot in letters.iter_mut().rev() {
                    *slot = LETTERS[code % 4];
                    code /= 4;
                }
                PauliWord(letters)
            })
            .collect()
    }
}

impl FromStr for PauliWord {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let letters = s.chars().map(Pauli::try_from).collect::<Result<Vec<_>>>()?;
        Self::new(letters)
    }
}

impl fmt::Display for PauliWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in &self.0 {
            let c = match p {
                Pauli::I => 'I',
                Pauli::X => 'X',
                Pauli::Y => 'Y',
                Pauli::Z => 'Z',
            };
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

/// Kronecker expansion of a Pauli word; qubit 0 is the leftmost factor.
pub fn pauli_matrix(word: &PauliWord) -> Result<HermitianOp> {
    if word.is_empty() {
        return Err(Error::InvalidInput("empty Pauli word".into()));
    }
    let mut m = CMatrix::from_element(1, 1, ONE);
    for p in word.letters() {
        m = m.kronecker(&p.matrix());
    }
    Ok(HermitianOp {
        n_qubits: word.len(),
        data: m,
    })
}

/// `R_P(θ) = exp(-iθP/2) = cos(θ/2) I - i sin(θ/2) P`.
pub fn pauli_rotation(word: &PauliWord, angle: f64) -> Result<CMatrix> {
    let p = pauli_matrix(word)?.data;
    Ok(involution_rotation(&p, angle))
}

/// `cos(θ/2) I - i sin(θ/2) σ` for an involution `σ² = I`.
pub(crate) fn involution_rotation(sigma: &CMatrix, angle: f64) -> CMatrix {
    let (s, c) = (angle / 2.0).sin_cos();
    let dim = sigma.nrows();
    CMatrix::identity(dim, dim) * C64::new(c, 0.0) - sigma * C64::new(0.0, s)
}

/// Pauli word laid out on a register as bit masks: `P|b⟩ = phase(b) |b ⊕ x⟩`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct PauliMask {
    x: usize,
    z: usize,
    y_count: u32,
}

impl PauliMask {
    pub(crate) fn new(word: &PauliWord, qubits: &[usize], n_qubits: usize) -> Self {
        let mut x = 0;
        let mut z = 0;
        let mut y_count = 0;
        for (&p, &q) in word.letters().iter().zip(qubits) {
            let bit = 1usize << (n_qubits - 1 - q);
            if p.has_x() {
                x |= bit;
            }
            if p.has_z() {
                z |= bit;
            }
            if p == Pauli::Y {
                y_count += 1;
            }
        }
        Self { x, z, y_count }
    }

    #[inline]
    fn phase(&self, b: usize) -> C64 {
        let base = match self.y_count % 4 {
            0 => ONE,
            1 => I,
            2 => -ONE,
            _ => -I,
        };
        if (b & self.z).count_ones() % 2 == 1 {
            -base
        } else {
            base
        }
    }

    /// `ρ ↦ c² ρ + s² PρP + ics(ρP − Pρ)`, i.e. conjugation by `exp(-iθP/2)`.
    pub(crate) fn rotate(&self, rho: &mut CMatrix, angle: f64) {
        let (s, c) = (angle / 2.0).sin_cos();
        let dim = rho.nrows();
        let src = rho.clone();
        let ph: Vec<C64> = (0..dim).map(|b| self.phase(b)).collect();
        let cc = c * c;
        let ss = s * s;
        let ics = C64::new(0.0, c * s);
        for b in 0..dim {
            let bx = b ^ self.x;
            for a in 0..dim {
                let ax = a ^ self.x;
                let conj = ph[ax] * src[(ax, bx)] * ph[b];
                let cross = src[(a, bx)] * ph[b] - ph[ax] * src[(ax, b)];
                rho[(a, b)] = src[(a, b)] * cc + conj * ss + cross * ics;
            }
        }
    }

    /// `ρ ↦ Σ w_k P_k ρ P_k` accumulated into `out`.
    pub(crate) fn conjugate_into(&self, rho: &CMatrix, weight: f64, out: &mut CMatrix) {
        let dim = rho.nrows();
        for b in 0..dim {
            let bx = b ^ self.x;
            let pb = self.phase(b) * weight;
            for a in 0..dim {
                let ax = a ^ self.x;
                out[(a, b)] += self.phase(ax) * rho[(ax, bx)] * pb;
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Local operator application

/// Full-register indices of the basis states touched by an operator on `qubits`.
pub(crate) struct LocalLayout {
    offsets: Vec<usize>,
    bases: Vec<usize>,
}

impl LocalLayout {
    pub(crate) fn new(qubits: &[usize], n_qubits: usize) -> Self {
        let k = qubits.len();
        let bits: Vec<usize> = qubits.iter().map(|&q| 1usize << (n_qubits - 1 - q)).collect();
        let mask: usize = bits.iter().sum();
        let offsets = (0..1usize << k)
            .map(|t| {
                bits.iter()
                    .enumerate()
                    .filter(|(i, _)| (t >> (k - 1 - i)) & 1 == 1)
                    .map(|(_, b)| b)
                    .sum()
            })
            .collect();
        let bases = (0..1usize << n_qubits).filter(|a| a & mask == 0).collect();
        Self { offsets, bases }
    }

    /// `ρ ← U ρ` with `U` acting on the layout's qubits.
    pub(crate) fn apply_left(&self, rho: &mut CMatrix, u: &CMatrix) {
        let m = self.offsets.len();
        let mut buf = vec![ZERO; m];
        for col in 0..rho.ncols() {
            for &base in &self.bases {
                for t in 0..m {
                    buf[t] = rho[(base + self.offsets[t], col)];
                }
                for s in 0..m {
                    let mut acc = ZERO;
                    for t in 0..m {
                        acc += u[(s, t)] * buf[t];
                    }
                    rho[(base + self.offsets[s], col)] = acc;
                }
            }
        }
    }

    /// `ρ ← ρ U†` with `U` acting on the layout's qubits.
    pub(crate) fn apply_right_adjoint(&self, rho: &mut CMatrix, u: &CMatrix) {
        let m = self.offsets.len();
        let mut buf = vec![ZERO; m];
        for row in 0..rho.nrows() {
            for &base in &self.bases {
                for t in 0..m {
                    buf[t] = rho[(row, base + self.offsets[t])];
                }
                for s in 0..m {
                    let mut acc = ZERO;
                    for t in 0..m {
                        acc += buf[t] * u[(s, t)].conj();
                    }
                    rho[(row, base + self.offsets[s])] = acc;
                }
            }
        }
    }

    /// `ρ ← U ρ U†`.
    pub(crate) fn conjugate(&self, rho: &mut CMatrix, u: &CMatrix) {
        self.apply_left(rho, u);
        self.apply_right_adjoint(rho, u);
    }
}

/// Embeds a local operator on `qubits` into the full `n_qubits` register.
pub fn embed(op: &CMatrix, qubits: &[usize], n_qubits: usize) -> Result<CMatrix> {
    check_square(op)?;
    if op.nrows() != 1 << qubits.len() {
        return Err(Error::DimensionMismatch {
            expected: 1 << qubits.len(),
            found: op.nrows(),
        });
    }
    check_qubits(qubits, n_qubits)?;
    let mut full = CMatrix::identity(1 << n_qubits, 1 << n_qubits);
    LocalLayout::new(qubits, n_qubits).apply_left(&mut full, op);
    Ok(full)
}

pub(crate) fn check_qubits(qubits: &[usize], n_qubits: usize) -> Result<()> {
    if qubits.is_empty() {
        return Err(Error::InvalidInput("empty qubit list".into()));
    }
    for (i, &q) in qubits.iter().enumerate() {
        if q >= n_qubits {
            return Err(Error::QubitOutOfRange { index: q, n_qubits });
        }
        if qubits[..i].contains(&q) {
            return Err(Error::InvalidInput(format!("qubit {q} listed twice")));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// States and observables

/// Hermitian, unit-trace, positive semidefinite operator on `2^n` dimensions.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    n_qubits: usize,
    data: CMatrix,
}

impl DensityMatrix {
    pub fn new(data: CMatrix) -> Result<Self> {
        check_square(&data)?;
        let n_qubits = qubits_for_dim(data.nrows())?;
        let rho = Self { n_qubits, data };
        rho.validate()?;
        Ok(rho)
    }

    pub(crate) fn from_raw(n_qubits: usize, data: CMatrix) -> Self {
        debug_assert_eq!(data.nrows(), 1 << n_qubits);
        Self { n_qubits, data }
    }

    /// `|0…0⟩⟨0…0|`.
    pub fn zero_state(n_qubits: usize) -> Self {
        let dim = 1 << n_qubits;
        let mut data = CMatrix::zeros(dim, dim);
        data[(0, 0)] = ONE;
        Self { n_qubits, data }
    }

    pub fn maximally_mixed(n_qubits: usize) -> Self {
        let dim = 1 << n_qubits;
        Self {
            n_qubits,
            data: CMatrix::identity(dim, dim) / C64::new(dim as f64, 0.0),
        }
    }

    /// `|ψ⟩⟨ψ|` for a normalized state vector.
    pub fn from_state_vector(psi: &CVector) -> Result<Self> {
        let n_qubits = qubits_for_dim(psi.len())?;
        let norm = psi.norm();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidInput(format!("state vector norm {norm}")));
        }
        Ok(Self {
            n_qubits,
            data: psi * psi.adjoint(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        let dev = hermitian_deviation(&self.data);
        if dev > HERMITIAN_TOL {
            return Err(Error::NotHermitian(dev));
        }
        let tr = self.data.trace();
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return Err(Error::InvalidTrace(tr.re));
        }
        let min = self.min_eigenvalue();
        if min < -PSD_TOL {
            return Err(Error::NotPositive(min));
        }
        Ok(())
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn data(&self) -> &CMatrix {
        &self.data
    }

    pub fn into_data(self) -> CMatrix {
        self.data
    }

    pub fn min_eigenvalue(&self) -> f64 {
        hermitian_eigenvalues(&self.data)[0]
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        hermitian_eigenvalues(&self.data)
    }

    /// `Tr ρ²`.
    pub fn purity(&self) -> f64 {
        // Tr(ρ ρ) = Σ |ρ_ij|² for Hermitian ρ
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    /// The state vector of a pure state (global phase fixed by a real
    /// non-negative leading component).
    pub fn pure_state_vector(&self) -> Result<CVector> {
        let purity = self.purity();
        if (purity - 1.0).abs() > 1e-8 {
            return Err(Error::InvalidInput(format!("state is not pure (purity {purity})")));
        }
        let eig = self.data.clone().symmetric_eigen();
        let (idx, _) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .expect("nonempty spectrum");
        let mut psi: CVector = eig.eigenvectors.column(idx).into_owned();
        let lead = psi.iter().copied().max_by(|a, b| a.norm().total_cmp(&b.norm())).unwrap_or(ONE);
        let phase = lead.conj() / lead.norm();
        psi *= phase;
        Ok(psi)
    }
}

/// Hermitian operator on `2^n` dimensions: observables, POVM elements, generators.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianOp {
    n_qubits: usize,
    data: CMatrix,
}

impl HermitianOp {
    pub fn new(data: CMatrix) -> Result<Self> {
        check_square(&data)?;
        let n_qubits = qubits_for_dim(data.nrows())?;
        let dev = hermitian_deviation(&data);
        if dev > HERMITIAN_TOL {
            return Err(Error::NotHermitian(dev));
        }
        Ok(Self { n_qubits, data })
    }

    pub(crate) fn from_raw(n_qubits: usize, data: CMatrix) -> Self {
        Self { n_qubits, data }
    }

    pub fn identity(n_qubits: usize) -> Self {
        Self {
            n_qubits,
            data: CMatrix::identity(1 << n_qubits, 1 << n_qubits),
        }
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn data(&self) -> &CMatrix {
        &self.data
    }

    pub fn into_data(self) -> CMatrix {
        self.data
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        hermitian_eigenvalues(&self.data)
    }

    /// Number of eigenvalues above `tol`.
    pub fn rank(&self, tol: f64) -> usize {
        self.eigenvalues().iter().filter(|&&e| e.abs() > tol).count()
    }
}

/// `Re Tr(op · ρ)`.
pub fn expectation(rho: &DensityMatrix, op: &HermitianOp) -> Result<f64> {
    if rho.dim() != op.data.nrows() {
        return Err(Error::DimensionMismatch {
            expected: rho.dim(),
            found: op.data.nrows(),
        });
    }
    let tr = trace_product(&op.data, &rho.data);
    if tr.im.abs() > 1e-10 {
        return Err(Error::Numerical(format!(
            "expectation value has imaginary part {:e}",
            tr.im
        )));
    }
    Ok(tr.re)
}

/// `Tr(a · b)` without forming the product.
pub fn trace_product(a: &CMatrix, b: &CMatrix) -> C64 {
    let n = a.nrows();
    let mut acc = ZERO;
    for i in 0..n {
        for k in 0..n {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

/// `U ρ U†`.
pub fn conjugate_evolve(rho: &DensityMatrix, u: &CMatrix) -> Result<DensityMatrix> {
    if u.nrows() != rho.dim() || u.ncols() != rho.dim() {
        return Err(Error::DimensionMismatch {
            expected: rho.dim(),
            found: u.nrows(),
        });
    }
    let dev = unitary_deviation(u);
    if dev > UNITARY_TOL {
        return Err(Error::NotUnitary(dev));
    }
    Ok(DensityMatrix {
        n_qubits: rho.n_qubits,
        data: u * &rho.data * u.adjoint(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, PI};

    fn word(s: &str) -> PauliWord {
        s.parse().unwrap()
    }

    fn plus() -> DensityMatrix {
        let h = C64::new(0.5, 0.0);
        DensityMatrix::new(CMatrix::from_element(2, 2, h)).unwrap()
    }

    #[test]
    fn pauli_z_is_diagonal() {
        let z = pauli_matrix(&word("Z")).unwrap();
        assert_eq!(z.data()[(0, 0)], ONE);
        assert_eq!(z.data()[(1, 1)], -ONE);
        assert_eq!(z.data()[(0, 1)], ZERO);
    }

    #[test]
    fn pauli_identity_word() {
        let id = pauli_matrix(&word("II")).unwrap();
        assert_eq!(id.data(), &CMatrix::identity(4, 4));
    }

    #[test]
    fn pauli_xz_squares_to_identity() {
        let xz = pauli_matrix(&word("XZ")).unwrap().into_data();
        // X ⊗ Z by hand: [[0, Z], [Z, 0]]
        let mut expected = CMatrix::zeros(4, 4);
        expected[(0, 2)] = ONE;
        expected[(1, 3)] = -ONE;
        expected[(2, 0)] = ONE;
        expected[(3, 1)] = -ONE;
        assert_eq!(xz, expected);
        assert!(max_abs(&(&xz * &xz - CMatrix::identity(4, 4))) < 1e-15);
        assert_eq!(xz.trace(), ZERO);
    }

    #[test]
    fn empty_word_rejected() {
        assert!(PauliWord::new(vec![]).is_err());
        assert!("".parse::<PauliWord>().is_err());
        assert!("XQ".parse::<PauliWord>().is_err());
    }

    #[test]
    fn x_rotation_by_pi_flips() {
        let r = pauli_rotation(&word("X"), PI).unwrap();
        assert_abs_diff_eq!(r[(1, 0)].norm(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r[(1, 0)].im, -1.0, epsilon = 1e-15);
    }

    #[test]
    fn zero_rotation_is_identity() {
        let r = pauli_rotation(&word("Z"), 0.0).unwrap();
        assert_eq!(r, CMatrix::identity(2, 2));
    }

    #[test]
    fn xx_quarter_turn_matches_eigendecomposition() {
        // independent route: exp(-iθ/2 XX) = V diag(e^{-iθλ/2}) V†
        let xx = pauli_matrix(&word("XX")).unwrap().into_data();
        let eig = xx.clone().symmetric_eigen();
        let theta = FRAC_PI_2;
        let phases = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            4,
            eig.eigenvalues.iter().map(|&l| C64::new(0.0, -theta * l / 2.0).exp()),
        ));
        let oracle = &eig.eigenvectors * phases * eig.eigenvectors.adjoint();
        let r = pauli_rotation(&word("XX"), theta).unwrap();
        assert!(max_abs(&(&r - &oracle)) < 1e-12);
        let closed = (CMatrix::identity(4, 4) - &xx * I) * C64::new(FRAC_1_SQRT_2, 0.0);
        assert!(max_abs(&(&r - closed)) < 1e-12);
    }

    #[test]
    fn expectation_examples() {
        let zero = DensityMatrix::zero_state(1);
        let z = pauli_matrix(&word("Z")).unwrap();
        let x = pauli_matrix(&word("X")).unwrap();
        assert_abs_diff_eq!(expectation(&zero, &z).unwrap(), 1.0);
        assert_abs_diff_eq!(expectation(&DensityMatrix::maximally_mixed(1), &x).unwrap(), 0.0);
        assert_abs_diff_eq!(expectation(&plus(), &x).unwrap(), 1.0, epsilon = 1e-15);
        assert!(matches!(
            expectation(&DensityMatrix::zero_state(2), &x),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn conjugate_evolve_examples() {
        let zero = DensityMatrix::zero_state(1);
        let flipped = conjugate_evolve(&zero, &pauli_rotation(&word("X"), PI).unwrap()).unwrap();
        assert_abs_diff_eq!(flipped.data()[(1, 1)].re, 1.0, epsilon = 1e-15);

        let mixed = DensityMatrix::maximally_mixed(1);
        let u = pauli_rotation(&word("Y"), 0.37).unwrap();
        let out = conjugate_evolve(&mixed, &u).unwrap();
        assert!(max_abs(&(out.data() - mixed.data())) < 1e-15);

        // R_X(π/2)|0⟩ = (|0⟩ - i|1⟩)/√2, so ρ = [[1/2, i/2], [-i/2, 1/2]]
        let half = conjugate_evolve(&zero, &pauli_rotation(&word("X"), FRAC_PI_2).unwrap()).unwrap();
        let d = half.data();
        assert_abs_diff_eq!(d[(0, 0)].re, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(d[(1, 1)].re, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(d[(0, 1)].im, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(d[(1, 0)].im, -0.5, epsilon = 1e-15);

        let not_unitary = CMatrix::identity(2, 2) * C64::new(2.0, 0.0);
        assert!(matches!(conjugate_evolve(&zero, &not_unitary), Err(Error::NotUnitary(_))));
    }

    #[test]
    fn density_matrix_validation() {
        let bad_trace = CMatrix::identity(2, 2);
        assert!(matches!(DensityMatrix::new(bad_trace), Err(Error::InvalidTrace(_))));
        let mut not_psd = CMatrix::zeros(2, 2);
        not_psd[(0, 0)] = C64::new(1.5, 0.0);
        not_psd[(1, 1)] = C64::new(-0.5, 0.0);
        assert!(matches!(DensityMatrix::new(not_psd), Err(Error::NotPositive(_))));
        let mut not_herm = CMatrix::identity(2, 2) * C64::new(0.5, 0.0);
        not_herm[(0, 1)] = C64::new(0.1, 0.0);
        assert!(matches!(DensityMatrix::new(not_herm), Err(Error::NotHermitian(_))));
        assert!(DensityMatrix::new(CMatrix::identity(3, 3) / C64::new(3.0, 0.0)).is_err());
    }

    #[test]
    fn pure_state_vector_recovers_ghz() {
        let mut psi = CVector::zeros(8);
        psi[0] = C64::new(FRAC_1_SQRT_2, 0.0);
        psi[7] = C64::new(FRAC_1_SQRT_2, 0.0);
        let rho = DensityMatrix::from_state_vector(&psi).unwrap();
        let back = rho.pure_state_vector().unwrap();
        let overlap = psi.dotc(&back).norm();
        assert_abs_diff_eq!(overlap, 1.0, epsilon = 1e-12);
        assert!(DensityMatrix::maximally_mixed(1).pure_state_vector().is_err());
    }

    #[test]
    fn embed_matches_kronecker() {
        let x = Pauli::X.matrix();
        let full = embed(&x, &[1], 3).unwrap();
        let oracle = pauli_matrix(&word("IXI")).unwrap().into_data();
        assert_eq!(full, oracle);
        // reversed qubit order on a two-qubit operator
        let xz = pauli_matrix(&word("XZ")).unwrap().into_data();
        let full = embed(&xz, &[2, 0], 3).unwrap();
        let oracle = pauli_matrix(&word("ZIX")).unwrap().into_data();
        assert_eq!(full, oracle);
        assert!(embed(&x, &[3], 3).is_err());
        assert!(embed(&xz, &[1, 1], 3).is_err());
    }

    #[test]
    fn mask_rotation_matches_dense() {
        let psi = CVector::from_iterator(8, (0..8).map(|k| C64::new(k as f64 + 1.0, 0.3 * k as f64)));
        let psi = &psi / C64::new(psi.norm(), 0.0);
        let rho = DensityMatrix::from_state_vector(&psi).unwrap();
        for (w, qs) in [("XY", vec![0, 2]), ("ZXY", vec![1, 2, 0]), ("Y", vec![1])] {
            let word = word(w);
            let mut fast = rho.data().clone();
            PauliMask::new(&word, &qs, 3).rotate(&mut fast, 0.813);
            let u = embed(&pauli_rotation(&word, 0.813).unwrap(), &qs, 3).unwrap();
            let dense = conjugate_evolve(&rho, &u).unwrap();
            assert!(max_abs(&(&fast - dense.data())) < 1e-14, "{w}");
        }
    }

    #[test]
    fn all_words_enumerates() {
        let words = PauliWord::all(2);
        assert_eq!(words.len(), 16);
        assert!(words[0].is_identity());
        assert_eq!(words[1].to_string(), "IX");
    }
}
