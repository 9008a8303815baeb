//! Exact Clebsch-Gordan tensor products for SO(3)-equivariant features, and the
//! spherical-integral tensor products that reproduce them: the symmetric Gaunt
//! product, the antisymmetric gradient cross product, and their combination.

pub mod coupling;
pub mod error;
pub mod harmonics;
pub mod lowrank;
pub mod quadrature;
pub mod tensorprod;
pub mod verify;
pub mod wigner;

pub use error::{Error, Result};
pub use wigner::Triplet;
