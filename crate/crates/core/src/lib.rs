//! Random real-symmetric and complex-Hermitian matrices with prescribed
//! eigenvalues.
//!
//! The central object is the isospectral ensemble `A = U Λ U*` with `U`
//! Haar-distributed on the orthogonal or unitary group. The crate provides
//!
//! - [`linalg`]: self-adjoint matrix types, Schatten norms, coefficient
//!   frames, marginals and partial traces;
//! - [`samplers`]: Haar matrices (full and partial-row), sphere vectors,
//!   GUE/GOE, isospectral and induced-state ensembles, exchangeable-pair
//!   perturbations and invariant-ensemble eigenvalues;
//! - [`oracles`]: closed-form moments of Haar unitaries and of the uniform
//!   vector on the complex sphere;
//! - [`metrics`]: Wasserstein-1 and total-variation estimators, semicircle law;
//! - [`bounds`]: evaluated right-hand sides of the normal-approximation,
//!   semicircle and invariant-ensemble inequalities;
//! - [`experiments`]: deterministic end-to-end Monte Carlo scenario runners.

pub mod bounds;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod metrics;
pub mod oracles;
pub mod rng;
pub mod samplers;
pub mod stats;

pub use error::{Error, Result};
pub use linalg::{CoefficientFrame, EntrySelector, Field, HermitianMatrix, Spectrum};
pub use rng::RngStream;

/// Complex scalar used for all matrix storage.
pub type C64 = num_complex::Complex64;

/// Dense column-major complex matrix.
pub type CMatrix = nalgebra::DMatrix<C64>;
