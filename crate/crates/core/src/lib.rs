//! Numerical laboratory for the heat semigroups of the weighted
//! dbar-Laplacians `Box` and `BoxTilde` attached to subharmonic, nonharmonic
//! polynomial weights on the complex plane: discretized operators, Krylov and
//! dense semigroup evaluation, the Szego projector and relative fundamental
//! solutions, the decoupled n-dimensional product factorization, quantitative
//! decay/cancellation checks, and the partial-Fourier reconstruction of the
//! model heat kernel.

pub mod bounds;
pub mod combinatorics;
pub mod config;
pub mod error;
pub mod factorization;
pub mod grid;
pub mod model;
pub mod operator;
pub mod plot;
pub mod semigroup;
pub mod weights;

pub use error::{Error, Result};
pub use grid::GridSpec;
pub use weights::{C64, WeightPolynomial};
