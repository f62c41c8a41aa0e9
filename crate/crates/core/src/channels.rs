//! Completely positive trace-preserving maps in Kraus form, convex mixtures
//! of two such maps, and their adjoints.
//!
//! A channel stores the qubits it acts on; it is embedded by identity on the
//! rest of the register when applied.

use nalgebra::Complex;

use crate::error::{Error, Result};
use crate::qalg::{
    check_qubits, max_abs, unitary_deviation, CMatrix, DensityMatrix, HermitianOp, LocalLayout,
    PauliMask, PauliWord, C64, UNITARY_TOL,
};

pub const COMPLETENESS_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct KrausChannel {
    kraus_ops: Vec<CMatrix>,
    qubits: Vec<usize>,
    // Σ w_k P_k ρ P_k representation when the channel is a Pauli mixture
    pauli_form: Option<Vec<(f64, PauliWord)>>,
}

impl KrausChannel {
    pub fn new(kraus_ops: Vec<CMatrix>, qubits: Vec<usize>) -> Result<Self> {
        if kraus_ops.is_empty() {
            return Err(Error::InvalidInput("channel without Kraus operators".into()));
        }
        let dim = 1usize << qubits.len();
        for k in &kraus_ops {
            if k.nrows() != dim || k.ncols() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: k.nrows(),
                });
            }
        }
        let sum = kraus_ops
            .iter()
            .fold(CMatrix::zeros(dim, dim), |acc, k| acc + k.adjoint() * k);
        let dev = max_abs(&(sum - CMatrix::identity(dim, dim)));
        if dev > COMPLETENESS_TOL {
            return Err(Error::Incomplete(dev));
        }
        Ok(Self {
            kraus_ops,
            qubits,
            pauli_form: None,
        })
    }

    pub fn identity(qubits: Vec<usize>) -> Self {
        let dim = 1usize << qubits.len();
        Self {
            kraus_ops: vec![CMatrix::identity(dim, dim)],
            pauli_form: Some(vec![(
                1.0,
                PauliWord::identity(qubits.len()).expect("nonempty qubit list"),
            )]),
            qubits,
        }
    }

    /// `ρ ↦ Σ w_k P_k ρ P_k` with non-negative weights summing to one.
    pub fn pauli_mixture(terms: Vec<(f64, PauliWord)>, qubits: Vec<usize>) -> Result<Self> {
        let total: f64 = terms.iter().map(|(w, _)| w).sum();
        if terms.iter().any(|(w, _)| *w < 0.0) || (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput(format!(
                "Pauli mixture weights must be non-negative and sum to 1 (sum {total})"
            )));
        }
        for (_, w) in &terms {
            if w.len() != qubits.len() {
                return Err(Error::DimensionMismatch {
                    expected: qubits.len(),
                    found: w.len(),
                });
            }
        }
        let kraus_ops = terms
            .iter()
            .map(|(w, word)| {
                crate::qalg::pauli_matrix(word).map(|p| p.into_data() * Complex::new(w.sqrt(), 0.0))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            kraus_ops,
            qubits,
            pauli_form: Some(terms),
        })
    }

    pub fn kraus_ops(&self) -> &[CMatrix] {
        &self.kraus_ops
    }

    pub fn qubits(&self) -> &[usize] {
        &self.qubits
    }

    pub fn kraus_rank(&self) -> usize {
        self.kraus_ops.len()
    }

    fn apply_raw(&self, rho: &CMatrix, n_qubits: usize, adjoint: bool) -> CMatrix {
        let dim = rho.nrows();
        let mut out = CMatrix::zeros(dim, dim);
        if let Some(terms) = &self.pauli_form {
            // Pauli mixtures are self-adjoint
            for (w, word) in terms {
                if *w != 0.0 {
                    PauliMask::new(word, &self.qubits, n_qubits).conjugate_into(rho, *w, &mut out);
                }
            }
            return out;
        }
        let layout = LocalLayout::new(&self.qubits, n_qubits);
        for k in &self.kraus_ops {
            let mut term = rho.clone();
            if adjoint {
                layout.conjugate(&mut term, &k.adjoint());
            } else {
                layout.conjugate(&mut term, k);
            }
            out += term;
        }
        out
    }
}

/// `(1 − p)·branch_a + p·branch_b`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvexChannel {
    p: f64,
    branch_a: KrausChannel,
    branch_b: KrausChannel,
}

impl ConvexChannel {
    pub fn new(p: f64, branch_a: KrausChannel, branch_b: KrausChannel) -> Result<Self> {
        check_probability(p)?;
        if branch_a.qubits != branch_b.qubits {
            return Err(Error::InvalidInput(format!(
                "convex branches act on different qubits: {:?} vs {:?}",
                branch_a.qubits, branch_b.qubits
            )));
        }
        Ok(Self {
            p,
            branch_a,
            branch_b,
        })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    /// Same branches, different mixing probability.
    pub fn with_p(&self, p: f64) -> Result<Self> {
        Self::new(p, self.branch_a.clone(), self.branch_b.clone())
    }

    pub fn branch_a(&self) -> &KrausChannel {
        &self.branch_a
    }

    pub fn branch_b(&self) -> &KrausChannel {
        &self.branch_b
    }

    pub fn qubits(&self) -> &[usize] {
        &self.branch_a.qubits
    }

    fn apply_raw(&self, rho: &CMatrix, n_qubits: usize, adjoint: bool) -> CMatrix {
        let mut out = if self.p < 1.0 {
            self.branch_a.apply_raw(rho, n_qubits, adjoint) * C64::new(1.0 - self.p, 0.0)
        } else {
            CMatrix::zeros(rho.nrows(), rho.ncols())
        };
        if self.p > 0.0 {
            out += self.branch_b.apply_raw(rho, n_qubits, adjoint) * C64::new(self.p, 0.0);
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Channel {
    Kraus(KrausChannel),
    Convex(ConvexChannel),
}

impl From<KrausChannel> for Channel {
    fn from(c: KrausChannel) -> Self {
        Channel::Kraus(c)
    }
}

impl From<ConvexChannel> for Channel {
    fn from(c: ConvexChannel) -> Self {
        Channel::Convex(c)
    }
}

impl Channel {
    pub fn qubits(&self) -> &[usize] {
        match self {
            Channel::Kraus(k) => k.qubits(),
            Channel::Convex(c) => c.qubits(),
        }
    }

    pub(crate) fn apply_raw(&self, rho: &CMatrix, n_qubits: usize) -> CMatrix {
        match self {
            Channel::Kraus(k) => k.apply_raw(rho, n_qubits, false),
            Channel::Convex(c) => c.apply_raw(rho, n_qubits, false),
        }
    }

    pub(crate) fn adjoint_raw(&self, op: &CMatrix, n_qubits: usize) -> CMatrix {
        match self {
            Channel::Kraus(k) => k.apply_raw(op, n_qubits, true),
            Channel::Convex(c) => c.apply_raw(op, n_qubits, true),
        }
    }

    pub(crate) fn check_register(&self, n_qubits: usize) -> Result<()> {
        check_qubits(self.qubits(), n_qubits)
    }
}

/// `Σ_k K_k ρ K_k†`, or the convex mixture of the two branches.
pub fn apply(channel: &Channel, rho: &DensityMatrix) -> Result<DensityMatrix> {
    channel.check_register(rho.n_qubits())?;
    Ok(DensityMatrix::from_raw(
        rho.n_qubits(),
        channel.apply_raw(rho.data(), rho.n_qubits()),
    ))
}

/// Heisenberg-picture action `Σ_k K_k† op K_k`.
pub fn adjoint_apply(channel: &Channel, op: &HermitianOp) -> Result<HermitianOp> {
    channel.check_register(op.n_qubits())?;
    Ok(HermitianOp::from_raw(
        op.n_qubits(),
        channel.adjoint_raw(op.data(), op.n_qubits()),
    ))
}

fn check_probability(p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) || p.is_nan() {
        return Err(Error::InvalidProbability(p));
    }
    Ok(())
}

/// `(1 − p)ρ + p ZρZ` on one qubit.
pub fn dephasing(p: f64, qubit: usize) -> Result<ConvexChannel> {
    check_probability(p)?;
    let z = KrausChannel::pauli_mixture(vec![(1.0, "Z".parse()?)], vec![qubit])?;
    ConvexChannel::new(p, KrausChannel::identity(vec![qubit]), z)
}

/// Uniform Pauli twirl with total weight `p`: `(1 − p)ρ + p/(4^k − 1) Σ_{P≠I} PρP`
/// for `k ∈ {1, 2}` qubits.
pub fn depolarizing(p: f64, qubits: &[usize]) -> Result<ConvexChannel> {
    check_probability(p)?;
    let k = qubits.len();
    if k == 0 || k > 2 {
        return Err(Error::InvalidInput(format!(
            "depolarizing channel supports 1 or 2 qubits, got {k}"
        )));
    }
    let words: Vec<PauliWord> = PauliWord::all(k).into_iter().filter(|w| !w.is_identity()).collect();
    let w = 1.0 / words.len() as f64;
    let twirl = KrausChannel::pauli_mixture(words.into_iter().map(|p| (w, p)).collect(), qubits.to_vec())?;
    ConvexChannel::new(p, KrausChannel::identity(qubits.to_vec()), twirl)
}

/// `ρ ↦ Σ p_k U_k ρ U_k†` with Kraus operators `√p_k U_k`.
pub fn mixed_unitary(unitaries: Vec<CMatrix>, probs: Vec<f64>, qubits: Vec<usize>) -> Result<KrausChannel> {
    if unitaries.len() != probs.len() {
        return Err(Error::DimensionMismatch {
            expected: unitaries.len(),
            found: probs.len(),
        });
    }
    let total: f64 = probs.iter().sum();
    if probs.iter().any(|&p| p < 0.0) || (total - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidInput(format!(
            "mixing probabilities must be non-negative and sum to 1 (sum {total})"
        )));
    }
    for u in &unitaries {
        let dev = unitary_deviation(u);
        if dev > UNITARY_TOL {
            return Err(Error::NotUnitary(dev));
        }
    }
    let ops = unitaries
        .into_iter()
        .zip(&probs)
        .map(|(u, &p)| u * C64::new(p.sqrt(), 0.0))
        .collect();
    KrausChannel::new(ops, qubits)
}
