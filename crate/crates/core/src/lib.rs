//! Truncated Fock-space simulation of EPR steering witnesses built from
//! high-order quadratures.

pub mod channels;
pub mod conditioning;
pub mod criteria;
pub mod error;
pub mod fock;
pub mod quadratures;
pub mod runner;
pub mod special;
pub mod stategen;

pub use error::{Error, Result};
pub use fock::{DensityOperator, HilbertLayout, ModeOperator, StateVector};
