//! Numerical weak-KAM toolkit for time-periodic Tonelli Hamiltonians on the
//! circle.
//!
//! The crate evolves exact Lagrangian curves in `T*T¹` together with their
//! Liouville primitives, implements the Lax-Oleinik calculus on periodic
//! grids (action potentials, critical value, Peierls barrier, weak-KAM
//! solutions), computes spectral invariants and graph selectors of sampled
//! functions quadratic at infinity, and measures calibration defects.

pub mod calibration;
pub mod curve;
pub mod flow;
pub mod grid;
pub mod hamiltonian;
pub mod lax_oleinik;
pub mod spectral;
pub mod trig;
