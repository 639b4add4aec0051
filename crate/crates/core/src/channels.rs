//! Pure-loss channel and the coherent single-photon subtraction map.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fock::{check_leakage, DensityOperator, ModeOperator, SparseMatrix};

/// Kraus operators of a pure-loss channel with transmission `eta` on a
/// cutoff-`d` mode: `K_j|n⟩ = √(C(n,j) η^(n−j) (1−η)^j) |n−j⟩`.
pub fn loss_kraus(eta: f64, d: usize) -> Vec<SparseMatrix> {
    (0..d)
        .map(|j| {
            SparseMatrix::from_triplets(
                d,
                (j..d).map(|n| {
                    let v = binomial(n, j) * eta.powi((n - j) as i32) * (1.0 - eta).powi(j as i32);
                    (n - j, n, Complex64::new(v.sqrt(), 0.0))
                }),
            )
        })
        .filter(|k| k.nnz() > 0)
        .collect()
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

pub fn pure_loss(state: &DensityOperator, mode: usize, eta: f64) -> Result<DensityOperator> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::InvalidParameter(format!("transmission must lie in [0, 1], got {eta}")));
    }
    state.layout().check_mode(mode)?;
    if eta == 1.0 {
        return Ok(state.clone());
    }
    state.apply_local_kraus(mode, &loss_kraus(eta, state.layout().dim(mode)))
}

/// `(a + b) ρ (a† + b†) / w` with `w = Tr[(a† + b†)(a + b) ρ]`.
pub fn coherent_subtract(state: &DensityOperator) -> Result<(DensityOperator, f64)> {
    let layout = state.layout();
    if layout.modes() != 2 {
        return Err(Error::InvalidParameter(format!(
            "coherent subtraction needs a two-mode state, got {} modes",
            layout.modes()
        )));
    }
    let sum = ModeOperator::ladder(layout, 0)?.add(&ModeOperator::ladder(layout, 1)?)?;
    let out = state.sandwich(&sum)?;
    let w = out.trace();
    if w < 1e-12 {
        return Err(Error::Degenerate(format!("subtraction weight {w:.3e} is below 1e-12")));
    }
    let out = out.scaled(1.0 / w);
    check_leakage(&out.tail_populations())?;
    Ok((out, w))
}
