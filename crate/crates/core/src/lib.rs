//! Nonnegative matrix factorization with row and column side information,
//! estimated from linear measurements.

pub mod bench;
pub mod cli;
pub mod error;
pub mod identifiability;
pub mod io;
pub mod linalg;
pub mod linkmodels;
pub mod operators;
pub mod solver;

pub use error::{Error, Result, Side};
