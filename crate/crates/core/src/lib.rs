//! Numerical laboratory for the thermodynamics of a small fermionic system
//! driven while in contact with finite tight-binding reservoirs.
//!
//! The crate is organised around exact dense linear algebra at Fock-space
//! dimension `2^n` (n = mode count), plus a single-particle fast path for
//! quadratic models:
//!
//! - [`linalg`]: Hermitian eigendecomposition and everything derived from it
//!   (matrix exponential/logarithm, Kronecker products, partial traces).
//! - [`fock`]: Jordan–Wigner realisation of system + reservoir mode layouts,
//!   tight-binding model recipes, parity and gauge rotations.
//! - [`states`]: Gibbs/grand-canonical ensembles, the KMS boundary-condition
//!   check, von Neumann and relative entropies.
//! - [`schedule`]: time-dependent drives `W(t)` (stepwise and staircase).
//! - [`evolve`]: exact propagators for `H(t)`, interaction-picture cocycles,
//!   the Dyson series, and small-system unitaries.
//! - [`thermo`]: heat/work/mass-flow accounting with two independent heat
//!   formulas, heat currents, the MacLennan–Zubarev operator identity and the
//!   entropy-production growth diagnostic.
//! - [`process`]: stepwise and staircase protocol runs, Clausius verdicts,
//!   `O(1/N)` convergence studies, mixing and correlation-decay diagnostics.
//! - [`quad`]: correlation-matrix backend for quadratic models (hundreds of
//!   modes at single-particle cost), cross-validated against the Fock path.

extern crate blas_src;

pub mod error;
pub mod numeric;
pub mod linalg;
pub mod fock;
pub mod states;
pub mod schedule;
pub mod evolve;
pub mod thermo;
pub mod process;
pub mod quad;

pub use error::{CoreError, Result};
pub use linalg::{CMat, C64};
