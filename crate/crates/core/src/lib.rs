//! Equivariant optimal partitions of spheres and entire solutions of the
//! competing system `ΔV_i = V_i Σ_{j≠i} V_j²`.
//!
//! The pipeline runs in two stages. On the sphere, [`partition`] minimizes a
//! penalized spectral functional over fields that are equivariant under a
//! finite orthogonal group acting through a permutation homomorphism
//! ([`symmetry`]), discretized with P1 elements ([`sphere`]). On the ball,
//! [`ball`] solves the penalized system with the resulting boundary trace,
//! rescales it into a solution with unit coupling and measures the Almgren
//! frequency, doubling and Alt–Caffarelli–Friedman quantities.
//!
//! [`catalog`] holds the built-in admissible triplets, [`io`] the file
//! formats and [`verify`] the acceptance checks shared by the test suite and
//! the `verify` command.

pub mod ball;
pub mod catalog;
pub mod error;
pub mod io;
pub mod linalg;
pub mod oracle;
pub mod partition;
pub mod sphere;
pub mod symmetry;
pub mod verify;

pub use error::{Error, Result};
