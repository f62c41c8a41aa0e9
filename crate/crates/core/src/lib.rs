//! # qmetro
//!
//! Variational design of probe states and measurements for multi-parameter
//! quantum metrology on small noisy devices.
//!
//! The pipeline is the usual sensing chain: a parametrized preparation
//! circuit `P(θ)` produces a probe, a commuting unitary encoding `U(φ)`
//! imprints the unknown phases, a parameter-independent noise channel acts,
//! and a parametrized local measurement `M(μ)` is read out in the
//! computational basis. From the outcome distribution we build the classical
//! Fisher information matrix, reparametrize it onto the quantities of
//! interest and minimize the weighted Cramér-Rao bound `Tr{W (I_f + εI)⁻¹}`
//! over `θ` and `μ` with analytic parameter-shift gradients.
//!
//! Modules, bottom-up:
//!
//! - [`qalg`]: dense complex algebra, density matrices, Pauli words.
//! - [`channels`]: Kraus and convex channels with their adjoints.
//! - [`circuits`]: parametrized circuits, POVMs and [`MetrologyModel`].
//! - [`gradients`]: parameter-shift rules, derivative operators, audits.
//! - [`fisher`]: CFIM, reparametrization, cost, cost gradient, QFIM.
//! - [`optimize`]: gradient descent with backoff and restarts.
//! - [`experiments`]: the Ramsey and NV trilateration scenarios.

#![forbid(unsafe_code)]

pub mod channels;
pub mod circuits;
pub mod error;
pub mod experiments;
pub mod fisher;
pub mod gradients;
pub mod optimize;
pub mod qalg;

pub use circuits::{MetrologyModel, ParamCircuit, Povm};
pub use error::{Error, Result};
pub use fisher::{CostConfig, FisherMatrix, Reparam};
pub use qalg::{CMatrix, DensityMatrix, HermitianOp, Pauli, PauliWord, C64};
