//! Numerical engine for reducing quasi-periodically forced linear Schrödinger
//! operators on SU(2)/SO(3) (central-function sector) to constant diagonal form.
//!
//! The pipeline, bottom up:
//!
//! - [`lattice`]: index sets `k = (l, m, sign)`, site distances, Sobolev
//!   weights and Diophantine frequency directions.
//! - [`harmonics`]: Laplace–Beltrami eigenvalues in the character basis,
//!   character products and multiplication-operator matrices.
//! - [`decay_norm`]: Töplitz-in-time block operators, the `s`-decay norm
//!   calculus (algebra, smoothing, parameter families).
//! - [`materialize`]: brute-force lattice representation used as an
//!   independent oracle for everything above.
//! - [`linop`]: assembly of the linearized operator `(-Δ + m)σ₃ - εT` and
//!   Hamiltonian-structure verification.
//! - [`kam_step`] / [`kam_driver`]: one conjugation step (Melnikov screen,
//!   homological equation, Lie series) and the full iteration with parameter
//!   certification and limit eigenvalues.
//! - [`melnikov_sieve`]: resonant-set enumeration and the O(γ) measure
//!   scaling experiment.
//! - [`stability`]: time integration of the linearized flow and verification
//!   of the stability band of the reduced dynamics.
//! - [`config`] / [`report`]: run configuration, artifact emission, goldens.

pub mod config;
pub mod decay_norm;
pub mod fitting;
pub mod harmonics;
pub mod kam_driver;
pub mod kam_step;
pub mod lattice;
pub mod linop;
pub mod materialize;
pub mod melnikov_sieve;
pub mod oracle;
pub mod report;
pub mod stability;
pub mod synth;

use thiserror::Error;

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex64;

/// Crate-wide error type.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// A coefficient support exceeds what the truncation can represent
    /// without aliasing.
    #[error("support {support} exceeds truncation limit {limit} ({what})")]
    AliasedSupport {
        what: &'static str,
        support: usize,
        limit: usize,
    },

    /// A homological division hit a divisor below the screened bound; the
    /// Melnikov screen must pass before solving.
    #[error("divisor {divisor:.3e} below bound {bound:.3e} at {witness}")]
    ScreenViolation {
        witness: crate::kam_step::DivisorWitness,
        divisor: f64,
        bound: f64,
    },

    /// Lie series failed its contraction contract.
    #[error("Lie series aborted: {reason}")]
    SeriesAbort { reason: String },

    /// Time integration failed (step-size underflow or step budget).
    #[error("integration aborted: {reason}")]
    Integration { reason: String },

    /// Operator shapes/truncations do not match.
    #[error("operator mismatch: {0}")]
    Mismatch(String),

    /// Invalid run configuration.
    #[error("config error: {0}")]
    Config(String),

    /// Missing or malformed artifact on disk.
    #[error("artifact error: {0}")]
    Artifact(String),
}

pub type Result<T> = std::result::Result<T, Error>;
