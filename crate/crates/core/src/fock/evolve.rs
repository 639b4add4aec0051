use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::operator::{ModeOperator, HERMITIAN_TOL};
use super::sparse::SparseMatrix;
use super::state::{norm, StateVector};
use crate::error::{Error, Result};

/// Controls for the short-step Taylor integrator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvolveSettings {
    /// Upper bound on `‖G‖₁·Δt` for one step.
    pub step_scale: f64,
    /// Hard cap on the number of steps.
    pub max_steps: usize,
    /// Taylor terms per step are added until the term norm falls below this.
    pub term_tol: f64,
    /// Allowed relative norm drift over the whole evolution.
    pub norm_rtol: f64,
}

impl Default for EvolveSettings {
    fn default() -> Self {
        Self {
            step_scale: 0.5,
            max_steps: 100_000,
            term_tol: 1e-16,
            norm_rtol: 1e-9,
        }
    }
}

/// `exp(duration · G) |ψ⟩` for an anti-Hermitian generator `G = −iH`.
pub fn evolve(state: &StateVector, generator: &ModeOperator, duration: f64) -> Result<StateVector> {
    evolve_with(state, generator, duration, &EvolveSettings::default())
}

pub fn evolve_with(
    state: &StateVector,
    generator: &ModeOperator,
    duration: f64,
    settings: &EvolveSettings,
) -> Result<StateVector> {
    state.layout().ensure_same(generator.layout())?;
    let dev = generator.matrix().anti_hermitian_deviation();
    if dev >= HERMITIAN_TOL {
        return Err(Error::NotAntiHermitian(dev));
    }
    let amps = evolve_amplitudes(generator.matrix(), state.amplitudes(), duration, settings)?;
    StateVector::new(state.layout().clone(), amps)
}

pub(crate) fn evolve_amplitudes(
    g: &SparseMatrix,
    v: &[Complex64],
    duration: f64,
    settings: &EvolveSettings,
) -> Result<Vec<Complex64>> {
    if !duration.is_finite() {
        return Err(Error::InvalidParameter("duration must be finite".into()));
    }
    let mut psi = v.to_vec();
    if duration == 0.0 || g.nnz() == 0 {
        return Ok(psi);
    }
    let n0 = norm(v);
    let scale = g.one_norm() * duration.abs();
    let steps = (scale / settings.step_scale).ceil().max(1.0);
    if steps > settings.max_steps as f64 {
        return Err(Error::Convergence(format!(
            "{steps} steps needed, budget is {}",
            settings.max_steps
        )));
    }
    let steps = steps as usize;
    let dt = duration / steps as f64;
    let mut term = vec![Complex64::default(); psi.len()];
    let mut next = vec![Complex64::default(); psi.len()];
    for step in 0..steps {
        term.copy_from_slice(&psi);
        let mut converged = false;
        for j in 1..=60 {
            g.matvec_into(&term, &mut next);
            let f = dt / j as f64;
            let mut tn = 0.0;
            for (t, n) in term.iter_mut().zip(&next) {
                *t = n * f;
                tn += t.norm_sqr();
            }
            for (p, t) in psi.iter_mut().zip(&term) {
                *p += t;
            }
            if tn.sqrt() <= settings.term_tol * n0.max(1e-300) {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::Convergence(format!("Taylor series stalled at step {step}")));
        }
        let drift = (norm(&psi) - n0).abs() / n0.max(1e-300);
        if drift > settings.norm_rtol {
            return Err(Error::Convergence(format!(
                "norm drift {drift:.3e} after step {step} exceeds {:.1e}",
                settings.norm_rtol
            )));
        }
    }
    Ok(psi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::HilbertLayout;

    fn i() -> Complex64 {
        Complex64::new(0.0, 1.0)
    }

    #[test]
    fn zero_duration_is_identity() {
        let l = HilbertLayout::single(6).unwrap();
        let a = ModeOperator::ladder(&l, 0).unwrap();
        let g = a.adjoint().sub(&a).unwrap();
        let psi = StateVector::fock(&l, &[2]).unwrap();
        assert_eq!(evolve(&psi, &g, 0.0).unwrap(), psi);
    }

    #[test]
    fn number_generator_only_adds_phase() {
        let l = HilbertLayout::single(5).unwrap();
        let g = ModeOperator::number(&l, 0).unwrap().scale(-i());
        let psi = StateVector::fock(&l, &[1]).unwrap();
        let out = evolve(&psi, &g, 0.7).unwrap();
        let amp = out.amplitudes()[1];
        assert!((amp.norm() - 1.0).abs() < 1e-12);
        assert!((amp - (-i() * 0.7).exp()).norm() < 1e-12);
    }

    #[test]
    fn displacement_matches_coherent_amplitudes() {
        let d = 40;
        let l = HilbertLayout::single(d).unwrap();
        let a = ModeOperator::ladder(&l, 0).unwrap();
        // exp(α a† − α a) with α = 0.8
        let g = a.adjoint().sub(&a).unwrap();
        let out = evolve(&StateVector::vacuum(&l), &g, 0.8).unwrap();
        let mut c = (-0.32f64).exp();
        for n in 0..10 {
            assert!((out.amplitudes()[n].re - c).abs() < 1e-10, "level {n}");
            c *= 0.8 / ((n + 1) as f64).sqrt();
        }
    }

    #[test]
    fn rejects_hermitian_generator() {
        let l = HilbertLayout::single(4).unwrap();
        let n = ModeOperator::number(&l, 0).unwrap();
        let err = evolve(&StateVector::vacuum(&l), &n, 1.0).unwrap_err();
        assert!(matches!(err, Error::NotAntiHermitian(_)));
    }

    #[test]
    fn step_budget_is_enforced() {
        let l = HilbertLayout::single(10).unwrap();
        let a = ModeOperator::ladder(&l, 0).unwrap();
        let g = a.adjoint().sub(&a).unwrap();
        let s = EvolveSettings {
            max_steps: 2,
            ..Default::default()
        };
        let err = evolve_with(&StateVector::vacuum(&l), &g, 5.0, &s).unwrap_err();
        assert!(matches!(err, Error::Convergence(_)));
    }
}
