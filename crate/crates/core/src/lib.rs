//! Numerical laboratory for cone-adapted profile Hamiltonians on the
//! cotangent bundle of the n-torus and for non-contractible periodic orbits
//! of mechanical systems, in particular the Arnold Hamiltonian on T*T².
//!
//! The crate is organised bottom-up:
//!
//! * [`cone`] – simplicial cones, their duals and the p*-normalisation.
//! * [`model`] – the one-dimensional model function, its mollification and
//!   the n-dimensional building blocks.
//! * [`profile`] – the profile family `H_s` and exhaustion brackets.
//! * [`critical`] – critical points of `H_s - <p, alpha>` and Morse-Bott data.
//! * [`dynamics`] – Hamiltonian flows, symplectic integrators, the
//!   sigma-composed cut-off Hamiltonian.
//! * [`orbits`] – shooting, continuation and orbit certification.
//! * [`suites`] – verification suites shared by the CLI and the tests.

pub mod cone;
pub mod critical;
pub mod dynamics;
pub mod error;
pub mod interp;
pub mod io;
pub mod jet;
pub mod model;
pub mod mollifier;
pub mod orbits;
pub mod profile;
pub mod quadrature;
pub mod suites;

pub use error::{Error, Result};
