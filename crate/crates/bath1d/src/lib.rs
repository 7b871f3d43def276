//! Steady-state collective emission of incoherently pumped two-level atoms
//! coupled to one-dimensional photonic reservoirs.
//!
//! Three reservoir geometries are supported, each defined by its coherent
//! (`J`) and dissipative (`Γ`) coupling matrices:
//!
//! - single-mode cavity: `J = 0`, `Γ_nm = Γ₁D` (one bright mode),
//! - ring cavity: `J = 0`, `Γ_nm = Γ₁D cos(k|z_n − z_m|)` (two bright modes),
//! - bidirectional waveguide: same `Γ`, plus `J_nm = (Γ₁D/2) sin(k|z_n − z_m|)`.
//!
//! The crate provides several solvers for the resulting driven-dissipative
//! spin dynamics, which cross-validate one another:
//!
//! - [`exact`]: dense Lindblad solver for small `N` (steady states, observables
//!   and two-time correlators via the quantum regression theorem),
//! - [`meanfield`]: factorized (classical dipole) equations with Kuramoto-type
//!   order parameters and synchronization diagnostics,
//! - [`twa`]: stochastic trajectories in the truncated Wigner approximation,
//!   for large-`N` ensembles, correlation matrices and emission spectra,
//! - [`superspin`]: cumulant equations for partially permutation-symmetric
//!   ring-cavity arrays, with closed-form thresholds,
//! - [`analysis`]: linewidth extraction, threshold scans, correlation-phase
//!   fits and collapses.
//!
//! All rates are expressed in units of `Γ₁D` unless stated otherwise, and all
//! positions in units of `1/k`.

pub mod analysis;
pub mod exact;
pub mod meanfield;
pub mod models;
pub mod superspin;
pub mod twa;

mod dynamics;

pub use models::{
    build_model, field_coefficients, jump_mode_decomposition, FieldCoefficients, FieldDirection,
    JumpMode, ModelKind, ReservoirModel,
};

/// Complex double, used throughout for coherences, fields and density matrices.
pub type C64 = num_complex::Complex64;
