//! Decoherence of a single qubit coupled to a transverse-field Ising chain
//! that is ramped linearly through both of its quantum critical points.
//!
//! The environment factorizes into independent two-level momentum modes, so
//! the qubit's coherence is an explicit product of mode overlaps. This crate
//! evolves those modes exactly (unitary Magnus stepping by default), forms
//! the decoherence factor D(t) either as the direct product or as a
//! momentum integral, and provides every closed-form approximation the
//! product admits: adiabatic fidelity envelopes, frozen-mode forms past each
//! critical point, the universal Kibble-Zurek decay between them, and the
//! weak-coupling Gaussian limit. The `analysis` module extracts revival
//! periods, the most-suppressed momentum, and the universal scaling
//! exponent from completed runs.

pub use num_complex;

pub mod analysis;
pub mod analytic;
pub mod decoherence;
pub mod error;
pub mod integrator;
pub mod modes;
pub mod numeric;
pub mod quadrature;
pub mod quench;

pub use error::{Error, Result};
