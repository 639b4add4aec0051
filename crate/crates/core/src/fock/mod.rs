//! Truncated Fock-space linear algebra.

mod eig;
mod evolve;
mod layout;
mod operator;
mod sparse;
mod state;

pub use eig::{hermitian_eig, Eigensystem};
pub use evolve::{evolve, evolve_with, EvolveSettings};
pub use layout::HilbertLayout;
pub use operator::{ModeOperator, HERMITIAN_TOL};
pub use sparse::SparseMatrix;
pub use state::{
    check_leakage, DensityOperator, StateVector, TruncationWarning, LEAKAGE_FAIL, LEAKAGE_WARN,
};

pub(crate) use eig::hermitian_eig_dense;
pub(crate) use evolve::evolve_amplitudes;
pub(crate) use operator::local_ladder_power;
pub(crate) use state::{dot, norm_sqr};

/// Partial trace over the modes not listed in `keep`.
pub fn partial_trace(state: &DensityOperator, keep: &[usize]) -> crate::Result<DensityOperator> {
    state.partial_trace(keep)
}
