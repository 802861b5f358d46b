//! Resonant normal forms for weakly nonlinear mode systems.
//!
//! The crate is organized around a single pipeline:
//!
//! 1. [`polyspace`] — exact sparse polynomial algebra over complex mode
//!    amplitudes with the canonical Poisson bracket. All algebraic
//!    identities (breathing-mode relations, closure brackets) are stated
//!    and verified here.
//! 2. [`reduction`] — the time-averaging step: interaction-picture
//!    frequency bookkeeping on an evenly spaced ladder, resonance
//!    selection, and order-by-order verification of breathing relations.
//! 3. [`couplings`] — construction and audit of the resonant coupling
//!    tensor `C[n,m,k,l]`: generation from mode-overlap integrals of two
//!    concrete PDEs, the beta-recursion identities, and recovery of the
//!    solvability parameter `G`.
//! 4. [`evolution`] — integration of the truncated resonant system in
//!    slow time with conserved-quantity monitoring.
//! 5. [`ansatz`] — the explicit three-parameter solution family,
//!    membership fitting, and periodic-return detection.
//! 6. [`nlsbench`] — full-PDE validation bed: the 1D nonlinear
//!    Schrödinger equation in a harmonic trap, breathing-phase tests and
//!    the small-coupling accuracy of the resonant approximation.

pub mod ansatz;
pub mod couplings;
pub mod evolution;
pub mod hermite;
pub mod nlsbench;
pub mod ode;
pub mod polyspace;
pub mod reduction;
pub mod state;

pub use num_complex::Complex64;
pub use num_rational::Rational64;

pub use couplings::{BreathingVector, CouplingTensor};
pub use polyspace::{FrequencyLadder, PhasePoly};
pub use state::ModeState;
