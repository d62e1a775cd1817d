//! Numeric substrate: dense matrices, a reverse-mode tape, a symmetric
//! eigensolver and seeded randomness.

pub mod eigen;
pub mod matrix;
pub mod rng;
pub mod tape;

pub use eigen::{orth, sym_eigen, SymEigen};
pub use matrix::{sign, Matrix};
pub use rng::Rng;
pub use tape::{Activation, Gradients, Tape, Var};
