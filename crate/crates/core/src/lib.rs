//! Quadratic programming over the unit sphere, solved in closed form through
//! the secular equation, and solvers built on top of it.

pub mod block;
pub mod cgevd;
pub mod error;
pub mod linalg;
pub mod random;
pub mod qcqp;
pub mod regression;
pub mod scqp;
pub mod secular;
pub mod tensor;

pub use error::{Error, Result};
pub use linalg::{Spectrum, SymmetricMatrix};
