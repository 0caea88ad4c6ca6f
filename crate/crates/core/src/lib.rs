//! Numerical laboratory for transverse-field Ising annealing with
//! power-law schedules Γ(t) = (δt + c)^{−g(t)}.
//!
//! The crate builds k-body Ising problems, certifies schedules against the
//! sufficient convergence conditions on g, integrates the Schrödinger
//! equation from the initial ground state, and evaluates every term of the
//! rigorous infinite-time adiabatic bound so it can be compared with the
//! measured excitation.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bound;
pub mod dynamics;
pub mod error;
pub mod experiment;
pub mod ising;
pub mod provenance;
pub mod quadrature;
pub mod reparam;
pub mod schedule;
pub mod spectrum;

pub use error::{Error, Result};
