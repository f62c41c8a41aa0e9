//! Classical Fisher information and the weighted Cramér-Rao cost.
//!
//! The cost minimized throughout is `C = Tr{W (Bᵀ I_φ B + εI)⁻¹}` with
//! `B = ∂φ/∂f` mapping phase-space information onto the target quantities.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::circuits::{MetrologyModel, Slot};
use crate::error::{Error, Result};
use crate::gradients::{phase_jet, shift_terms, EncodingPlan, PhaseJet};
use crate::qalg::{CVector, HermitianOp, C64};

/// Regularization added to `I_f` before inversion.
pub const REGULARIZATION: f64 = 1e-10;
/// Outcomes less likely than this are left out of the CFIM sum.
pub const DROP_THRESHOLD: f64 = 1e-12;
/// Largest condition number accepted for a reparametrization Jacobian.
pub const MAX_CONDITION: f64 = 1e12;

const SYMMETRY_TOL: f64 = 1e-10;
const PSD_TOL: f64 = 1e-9;
const NEGATIVE_PROB_TOL: f64 = 1e-12;
const NORMALIZATION_TOL: f64 = 1e-10;

/// Real symmetric positive semidefinite `d × d` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct FisherMatrix {
    data: DMatrix<f64>,
}

impl FisherMatrix {
    /// Validates symmetry (1e-10) and positivity (eigenvalues ≥ −1e-9), then symmetrizes.
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        if !data.is_square() {
            return Err(Error::DimensionMismatch {
                expected: data.nrows(),
                found: data.ncols(),
            });
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numerical("non-finite Fisher matrix entry".into()));
        }
        let asym = (&data - data.transpose()).amax();
        if asym > SYMMETRY_TOL {
            return Err(Error::NotHermitian(asym));
        }
        let f = Self::from_raw(data);
        let min = f.min_eigenvalue();
        if min < -PSD_TOL {
            return Err(Error::NotPositive(min));
        }
        Ok(f)
    }

    pub(crate) fn from_raw(data: DMatrix<f64>) -> Self {
        let sym = (&data + data.transpose()) * 0.5;
        Self { data: sym }
    }

    pub fn zeros(d: usize) -> Self {
        Self {
            data: DMatrix::zeros(d, d),
        }
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_data(self) -> DMatrix<f64> {
        self.data
    }

    /// Ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        if self.dim() == 0 {
            return Vec::new();
        }
        let mut v: Vec<f64> = self.data.clone().symmetric_eigenvalues().iter().copied().collect();
        v.sort_by(f64::total_cmp);
        v
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().first().copied().unwrap_or(0.0)
    }
}

/// Jacobian `B = ∂φ/∂f`.
#[derive(Clone, Debug, PartialEq)]
pub struct Reparam {
    jacobian: DMatrix<f64>,
}

impl Reparam {
    /// Requires a finite, square, well-conditioned matrix.
    pub fn new(jacobian: DMatrix<f64>) -> Result<Self> {
        if !jacobian.is_square() {
            return Err(Error::DimensionMismatch {
                expected: jacobian.nrows(),
                found: jacobian.ncols(),
            });
        }
        if jacobian.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numerical("non-finite Jacobian entry".into()));
        }
        let cond = condition_number(&jacobian);
        if !(cond <= MAX_CONDITION) {
            return Err(Error::Degenerate(format!("Jacobian condition number {cond:e}")));
        }
        Ok(Self { jacobian })
    }

    pub fn identity(d: usize) -> Self {
        Self {
            jacobian: DMatrix::identity(d, d),
        }
    }

    /// `B = M⁻¹` for targets `f = M φ`.
    pub fn from_linear_targets(m: DMatrix<f64>) -> Result<Self> {
        if condition_number(&m) > MAX_CONDITION {
            return Err(Error::Degenerate("target map is singular".into()));
        }
        let inv = m
            .try_inverse()
            .ok_or_else(|| Error::Degenerate("target map is singular".into()))?;
        Self::new(inv)
    }

    pub fn dim(&self) -> usize {
        self.jacobian.nrows()
    }

    pub fn jacobian(&self) -> &DMatrix<f64> {
        &self.jacobian
    }
}

/// Ratio of extreme singular values; infinite for singular input.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 1.0;
    }
    let sv = m.clone().singular_values();
    let max = sv.max();
    let min = sv.min();
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Weighting, regularization and sample count of the scalar bound.
#[derive(Clone, Debug, PartialEq)]
pub struct CostConfig {
    weights: DMatrix<f64>,
    epsilon: f64,
    sample_count: u64,
}

impl CostConfig {
    pub fn new(weights: DMatrix<f64>, epsilon: f64, sample_count: u64) -> Result<Self> {
        if !weights.is_square() {
            return Err(Error::DimensionMismatch {
                expected: weights.nrows(),
                found: weights.ncols(),
            });
        }
        let w = FisherMatrix::new(weights).map_err(|e| Error::InvalidInput(format!("weights: {e}")))?;
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidInput(format!("regularization must be positive, got {epsilon}")));
        }
        if sample_count == 0 {
            return Err(Error::InvalidInput("sample count must be positive".into()));
        }
        Ok(Self {
            weights: w.into_data(),
            epsilon,
            sample_count,
        })
    }

    /// Default regularization, single sample.
    pub fn with_weights(weights: DMatrix<f64>) -> Result<Self> {
        Self::new(weights, REGULARIZATION, 1)
    }

    pub fn identity(d: usize) -> Self {
        Self {
            weights: DMatrix::identity(d, d),
            epsilon: REGULARIZATION,
            sample_count: 1,
        }
    }

    /// `W = diag(1, 0, …, 0)`.
    pub fn first_component(d: usize) -> Self {
        let mut w = DMatrix::zeros(d, d);
        w[(0, 0)] = 1.0;
        Self {
            weights: w,
            epsilon: REGULARIZATION,
            sample_count: 1,
        }
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn sample_count(&self) -> u64 {
        self.sample_count
    }

    pub fn dim(&self) -> usize {
        self.weights.nrows()
    }

    /// Bound on the weighted covariance after `n` samples.
    pub fn reported_bound(&self, cost: f64) -> f64 {
        cost / self.sample_count as f64
    }
}

/// `I_jk = Σ_l ∂_j p_l ∂_k p_l / p_l` with `dp` laid out `d × L`.
pub fn cfim(p: &[f64], dp: &DMatrix<f64>) -> Result<FisherMatrix> {
    if dp.ncols() != p.len() {
        return Err(Error::DimensionMismatch {
            expected: p.len(),
            found: dp.ncols(),
        });
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > NORMALIZATION_TOL {
        return Err(Error::InvalidInput(format!("probabilities sum to {total}")));
    }
    if let Some(&bad) = p.iter().find(|&&x| x < -NEGATIVE_PROB_TOL || x.is_nan()) {
        return Err(Error::InvalidProbability(bad));
    }
    Ok(FisherMatrix::from_raw(cfim_raw(p, dp)))
}

fn cfim_raw(p: &[f64], dp: &DMatrix<f64>) -> DMatrix<f64> {
    let d = dp.nrows();
    let mut out = DMatrix::zeros(d, d);
    for (l, &pl) in p.iter().enumerate() {
        if pl < DROP_THRESHOLD {
            continue;
        }
        let col = dp.column(l);
        out.ger(1.0 / pl, &col, &col, 1.0);
    }
    out
}

/// `I_f = Bᵀ I_φ B`.
pub fn reparametrize(i_phi: &FisherMatrix, b: &Reparam) -> Result<FisherMatrix> {
    if i_phi.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: i_phi.dim(),
            found: b.dim(),
        });
    }
    let j = b.jacobian();
    Ok(FisherMatrix::from_raw(j.transpose() * i_phi.data() * j))
}

/// `Tr{W (I_f + εI)⁻¹}`.
pub fn weighted_crb_cost(i_f: &FisherMatrix, cfg: &CostConfig) -> Result<f64> {
    if i_f.dim() != cfg.dim() {
        return Err(Error::DimensionMismatch {
            expected: cfg.dim(),
            found: i_f.dim(),
        });
    }
    let inv = regularized_inverse(i_f.data(), cfg.epsilon)?;
    let cost = (cfg.weights() * inv).trace();
    if !cost.is_finite() {
        return Err(Error::Numerical(format!("cost evaluated to {cost}")));
    }
    Ok(cost)
}

fn regularized_inverse(m: &DMatrix<f64>, epsilon: f64) -> Result<DMatrix<f64>> {
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical("non-finite Fisher matrix".into()));
    }
    let d = m.nrows();
    let a = m + DMatrix::identity(d, d) * epsilon;
    if let Some(ch) = a.clone().cholesky() {
        return Ok(ch.inverse());
    }
    a.try_inverse()
        .ok_or_else(|| Error::Numerical("regularized Fisher matrix is not invertible".into()))
}

/// Phase-space CFIM of the model at `(θ, φ, μ)` via parameter shifts.
pub fn model_cfim(model: &MetrologyModel, theta: &[f64], phi: &[f64], mu: &[f64]) -> Result<FisherMatrix> {
    let jet = phase_jet(model, theta, phi, mu)?;
    Ok(FisherMatrix::from_raw(cfim_raw(&jet.probs, &jet.dprobs)))
}

/// Weighted, reparametrized and regularized bound at `(θ, φ, μ)`.
pub fn model_cost(
    model: &MetrologyModel,
    theta: &[f64],
    phi: &[f64],
    mu: &[f64],
    b: &Reparam,
    cfg: &CostConfig,
) -> Result<f64> {
    let i_phi = model_cfim(model, theta, phi, mu)?;
    weighted_crb_cost(&reparametrize(&i_phi, b)?, cfg)
}

/// Cost together with its gradient in the preparation and measurement parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct CostGradient {
    pub cost: f64,
    pub theta: Vec<f64>,
    pub mu: Vec<f64>,
}

/// Contracts a shifted jet against the per-outcome weights of the base point.
struct Contraction {
    /// `u_{j,l} = Σ_k M_jk ∂_k p_l / p_l`, zero on dropped outcomes
    u: DMatrix<f64>,
    /// `q_l = Σ_jk M_jk ∂_j p_l ∂_k p_l / p_l²`
    q: Vec<f64>,
}

impl Contraction {
    /// `∂C` contribution of one shifted jet with coefficient `coef`.
    fn apply(&self, jet: &PhaseJet, coef: f64) -> f64 {
        let mut acc = 0.0;
        for l in 0..self.q.len() {
            let mut s = 0.0;
            for j in 0..self.u.nrows() {
                s += jet.dprobs[(j, l)] * self.u[(j, l)];
            }
            acc += 2.0 * s - self.q[l] * jet.probs[l];
        }
        -coef * acc
    }
}

/// `∂_v C = −Tr{A⁻¹WA⁻¹ Bᵀ (∂_v I_φ) B}` with nested parameter shifts.
///
/// The `2d + 1` encoded states at the base preparation are shared by every
/// measurement shift; each preparation shift re-encodes once.
pub fn cost_gradient(
    model: &MetrologyModel,
    theta: &[f64],
    phi: &[f64],
    mu: &[f64],
    b: &Reparam,
    cfg: &CostConfig,
) -> Result<CostGradient> {
    model.check_lengths(theta, phi, mu)?;
    if b.dim() != model.phase_count() || cfg.dim() != model.phase_count() {
        return Err(Error::DimensionMismatch {
            expected: model.phase_count(),
            found: b.dim().max(cfg.dim()),
        });
    }
    let plan = EncodingPlan::new(model)?;
    let prep_terms = shift_terms(model.circuit(Slot::Prep))?;
    let meas_terms = shift_terms(model.circuit(Slot::Measurement))?;

    let base_states = plan.encode(model, &model.prepared_raw(theta, None), phi);
    let base = plan.jet(model, &base_states, mu, None)?;
    let i_phi = cfim_raw(&base.probs, &base.dprobs);
    let bj = b.jacobian();
    let a_inv = regularized_inverse(&(bj.transpose() * &i_phi * bj), cfg.epsilon())?;
    let cost = (cfg.weights() * &a_inv).trace();
    if !cost.is_finite() {
        return Err(Error::Numerical(format!("cost evaluated to {cost}")));
    }
    let g = &a_inv * cfg.weights() * &a_inv;
    let m = bj * g * bj.transpose();

    let d = model.phase_count();
    let n_out = base.probs.len();
    let mut u = DMatrix::zeros(d, n_out);
    let mut q = vec![0.0; n_out];
    for l in 0..n_out {
        let pl = base.probs[l];
        if pl < DROP_THRESHOLD {
            continue;
        }
        let col: DVector<f64> = base.dprobs.column(l).into();
        let mc = &m * &col;
        q[l] = col.dot(&mc) / (pl * pl);
        u.set_column(l, &(mc / pl));
    }
    let contraction = Contraction { u, q };

    let mut grad_theta = vec![0.0; theta.len()];
    for t in prep_terms {
        let states = plan.encode(model, &model.prepared_raw(theta, Some(t.shift)), phi);
        let jet = plan.jet(model, &states, mu, None)?;
        grad_theta[t.param] += contraction.apply(&jet, t.coef);
    }
    let mut grad_mu = vec![0.0; mu.len()];
    for t in meas_terms {
        let jet = plan.jet(model, &base_states, mu, Some(t.shift))?;
        grad_mu[t.param] += contraction.apply(&jet, t.coef);
    }
    if grad_theta.iter().chain(&grad_mu).any(|x| !x.is_finite()) {
        return Err(Error::Numerical("non-finite cost gradient".into()));
    }
    Ok(CostGradient {
        cost,
        theta: grad_theta,
        mu: grad_mu,
    })
}

/// `4 (Re⟨𝓗_j 𝓗_k⟩ − ⟨𝓗_j⟩⟨𝓗_k⟩)` on a pure state.
pub fn qfim_pure(psi: &CVector, generators: &[HermitianOp]) -> Result<FisherMatrix> {
    let norm = psi.norm();
    if (norm - 1.0).abs() > NORMALIZATION_TOL {
        return Err(Error::InvalidTrace(norm * norm));
    }
    for h in generators {
        if h.data().nrows() != psi.len() {
            return Err(Error::DimensionMismatch {
                expected: psi.len(),
                found: h.data().nrows(),
            });
        }
    }
    let hpsi: Vec<CVector> = generators.iter().map(|h| h.data() * psi).collect();
    let means: Vec<f64> = hpsi.iter().map(|v| psi.dotc(v).re).collect();
    let d = generators.len();
    let mut f = DMatrix::zeros(d, d);
    for j in 0..d {
        for k in j..d {
            let second: C64 = hpsi[j].dotc(&hpsi[k]);
            let v = 4.0 * (second.re - means[j] * means[k]);
            f[(j, k)] = v;
            f[(k, j)] = v;
        }
    }
    FisherMatrix::new(f)
}

/// Monte-Carlo prior average of the CFIM.
#[derive(Clone, Debug, PartialEq)]
pub struct ExpectedFisher {
    pub mean: FisherMatrix,
    /// Elementwise standard error of the mean; zero for a single sample.
    pub std_err: DMatrix<f64>,
    pub n_samples: usize,
}

/// `E_φ[I_φ]` over `φ ~ prior`, drawn from a ChaCha8 stream seeded with `seed`.
pub fn van_trees_expected_cfim(
    model: &MetrologyModel,
    theta: &[f64],
    mu: &[f64],
    mut prior: impl FnMut(&mut ChaCha8Rng) -> Vec<f64>,
    n_samples: usize,
    seed: u64,
) -> Result<ExpectedFisher> {
    if n_samples == 0 {
        return Err(Error::InvalidInput("at least one prior sample is required".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = model.phase_count();
    // running mean and sum of squared deviations, elementwise
    let mut mean = DMatrix::zeros(d, d);
    let mut m2 = DMatrix::zeros(d, d);
    for k in 1..=n_samples {
        let phi = prior(&mut rng);
        if phi.len() != d {
            return Err(Error::InvalidInput(format!(
                "prior sampler returned {} phases, model has {d}",
                phi.len()
            )));
        }
        let f = model_cfim(model, theta, &phi, mu)?.into_data();
        let delta = &f - &mean;
        mean += &delta / k as f64;
        m2 += delta.component_mul(&(&f - &mean));
    }
    let n = n_samples as f64;
    let std_err = if n_samples > 1 {
        m2.map(|v| (v.max(0.0) / (n - 1.0) / n).sqrt())
    } else {
        DMatrix::zeros(d, d)
    };
    Ok(ExpectedFisher {
        mean: FisherMatrix::from_raw(mean),
        std_err,
        n_samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn fringe_cfim() {
        let s = std::f64::consts::FRAC_PI_2.sin();
        let dp = DMatrix::from_row_slice(1, 2, &[-s / 2.0, s / 2.0]);
        let f = cfim(&[0.5, 0.5], &dp).unwrap();
        assert_abs_diff_eq!(f.data()[(0, 0)], 1.0, epsilon = 1e-15);
        let z = cfim(&[0.5, 0.5], &DMatrix::zeros(2, 2)).unwrap();
        assert_eq!(z.data(), &DMatrix::zeros(2, 2));
        assert!(matches!(cfim(&[1.1, -0.1], &DMatrix::zeros(1, 2)), Err(Error::InvalidProbability(_))));
    }

    #[test]
    fn dropped_outcome_contributes_nothing() {
        let dp = DMatrix::from_row_slice(1, 3, &[0.1, -0.1, 0.0]);
        let f = cfim(&[0.5, 0.5, 0.0], &dp).unwrap();
        assert_abs_diff_eq!(f.data()[(0, 0)], 0.04, epsilon = 1e-15);
    }

    #[test]
    fn reparametrize_examples() {
        let i = FisherMatrix::new(DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0])).unwrap();
        assert_eq!(reparametrize(&i, &Reparam::identity(2)).unwrap(), i);
        let scaled = reparametrize(&i, &Reparam::new(DMatrix::identity(2, 2) * 3.0).unwrap()).unwrap();
        assert!((scaled.data() - i.data() * 9.0).amax() < 1e-14);
        assert!(reparametrize(&i, &Reparam::identity(3)).is_err());
    }

    #[test]
    fn singular_jacobian_rejected() {
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(matches!(Reparam::new(b), Err(Error::Degenerate(_))));
    }

    #[test]
    fn cost_examples() {
        let eye = FisherMatrix::new(DMatrix::identity(3, 3)).unwrap();
        assert_abs_diff_eq!(weighted_crb_cost(&eye, &CostConfig::identity(3)).unwrap(), 3.0, epsilon = 1e-9);
        let diag = FisherMatrix::new(DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 1.0]))).unwrap();
        assert_abs_diff_eq!(
            weighted_crb_cost(&diag, &CostConfig::first_component(2)).unwrap(),
            0.25,
            epsilon = 1e-9
        );
        // regularization keeps a zero matrix invertible
        let c = weighted_crb_cost(&FisherMatrix::zeros(2), &CostConfig::first_component(2)).unwrap();
        assert_abs_diff_eq!(c, 1.0 / REGULARIZATION, epsilon = 1.0);
    }

    #[test]
    fn cost_config_validation() {
        assert!(CostConfig::new(DMatrix::identity(2, 2), 0.0, 1).is_err());
        assert!(CostConfig::new(DMatrix::identity(2, 2), 1e-10, 0).is_err());
        assert!(CostConfig::new(-DMatrix::identity(2, 2), 1e-10, 1).is_err());
        let cfg = CostConfig::new(DMatrix::identity(2, 2), 1e-10, 4).unwrap();
        assert_abs_diff_eq!(cfg.reported_bound(2.0), 0.5);
    }

    #[test]
    fn qfim_examples() {
        let n = 3;
        let ghz = {
            let mut v = CVector::zeros(8);
            v[0] = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
            v[7] = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
            v
        };
        let gens: Vec<HermitianOp> = (0..n)
            .map(|j| {
                let mut w = vec!['I'; n];
                w[j] = 'Z';
                let word: crate::PauliWord = w.iter().collect::<String>().parse().unwrap();
                HermitianOp::new(crate::qalg::pauli_matrix(&word).unwrap().into_data() * C64::new(0.5, 0.0))
                    .unwrap()
            })
            .collect();
        let f = qfim_pure(&ghz, &gens).unwrap();
        assert!((f.data() - DMatrix::from_element(3, 3, 1.0)).amax() < 1e-12);

        let plus = CVector::from_element(8, C64::new(1.0 / 8f64.sqrt(), 0.0));
        let f = qfim_pure(&plus, &gens).unwrap();
        assert!((f.data() - DMatrix::identity(3, 3)).amax() < 1e-12);

        let mut zero = CVector::zeros(8);
        zero[0] = C64::new(1.0, 0.0);
        assert_abs_diff_eq!(qfim_pure(&zero, &gens).unwrap().data()[(0, 0)], 0.0, epsilon = 1e-15);
        assert!(qfim_pure(&(zero * C64::new(2.0, 0.0)), &gens).is_err());
    }
}
