//! Semiclassical Koopman-van Hove machinery for one-dimensional Hamiltonian
//! systems: characteristic transport with action and tangent map, torus
//! quantization with the Maslov correction, JWKB eigenfunctions in phase and
//! configuration space, five semi-Lagrangian propagators, and the diagnostics
//! that tie them back to the exact quantum harmonic oscillator.

pub mod characteristics;
pub mod deltas;
pub mod diagnostics;
pub mod eigen;
pub mod error;
pub mod propagators;
pub mod systems;

pub use error::{KvhError, Result};
