//! Generators for the Gaussian reference states, the three non-Gaussian
//! families, and ideal cat states.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channels;
use crate::error::{Error, Result};
use crate::fock::{
    check_leakage, evolve, evolve_amplitudes, DensityOperator, EvolveSettings, HilbertLayout,
    ModeOperator, SparseMatrix, StateVector,
};
use crate::special::ln_factorial;

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

fn check_squeezing(name: &str, r: f64) -> Result<()> {
    if !(r >= 0.0 && r.is_finite()) {
        return Err(Error::InvalidParameter(format!("{name} must be finite and >= 0, got {r}")));
    }
    Ok(())
}

/// Unnormalized single-mode squeezed-vacuum coefficients on even levels.
fn smsv_coefficients(r: f64, cutoff: usize) -> Vec<Complex64> {
    let t = r.tanh();
    let mut v = vec![Complex64::default(); cutoff];
    let mut a = 1.0 / r.cosh().sqrt();
    let mut n = 0;
    while n < cutoff {
        v[n] = c(a);
        let m = (n / 2) as f64;
        a *= t * ((2.0 * m + 1.0) * (2.0 * m + 2.0)).sqrt() / (2.0 * (m + 1.0));
        n += 2;
    }
    v
}

fn finish(layout: HilbertLayout, amps: Vec<Complex64>) -> Result<StateVector> {
    let s = StateVector::new(layout, amps)?.normalized()?;
    check_leakage(&s.tail_populations())?;
    Ok(s)
}

/// Two-mode squeezed vacuum `∝ Σ tanhᵐr |m, m⟩`.
pub fn tmsv(r: f64, cutoff_a: usize, cutoff_b: usize) -> Result<StateVector> {
    check_squeezing("r", r)?;
    let layout = HilbertLayout::two_mode(cutoff_a, cutoff_b)?;
    let mut amps = vec![Complex64::default(); layout.total_dim()];
    let t = r.tanh();
    let mut a = 1.0 / r.cosh();
    for m in 0..cutoff_a.min(cutoff_b) {
        amps[layout.index(&[m, m])] = c(a);
        a *= t;
    }
    finish(layout, amps)
}

/// Single-mode squeezed vacuum `∝ Σ tanhᵐr √((2m)!)/(2ᵐ m!) |2m⟩`.
pub fn smsv(r: f64, cutoff: usize) -> Result<StateVector> {
    check_squeezing("r", r)?;
    finish(HilbertLayout::single(cutoff)?, smsv_coefficients(r, cutoff))
}

/// Product of two single-mode squeezed vacua.
pub fn smsv_product(r_a: f64, r_b: f64, cutoff_a: usize, cutoff_b: usize) -> Result<StateVector> {
    check_squeezing("r_A", r_a)?;
    check_squeezing("r_B", r_b)?;
    let layout = HilbertLayout::two_mode(cutoff_a, cutoff_b)?;
    let va = smsv_coefficients(r_a, cutoff_a);
    let vb = smsv_coefficients(r_b, cutoff_b);
    let amps = va.iter().flat_map(|x| vb.iter().map(move |y| x * y)).collect();
    finish(layout, amps)
}

/// Coherent state `|α⟩`, renormalized on the truncated space.
pub fn coherent(alpha: Complex64, cutoff: usize) -> Result<StateVector> {
    let layout = HilbertLayout::single(cutoff)?;
    StateVector::new(layout, coherent_amplitudes(alpha, cutoff))?.normalized()
}

fn coherent_amplitudes(alpha: Complex64, cutoff: usize) -> Vec<Complex64> {
    let mut v = Vec::with_capacity(cutoff);
    let mut a = c((-alpha.norm_sqr() / 2.0).exp());
    for n in 0..cutoff {
        v.push(a);
        a *= alpha / ((n + 1) as f64).sqrt();
    }
    v
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CatKind {
    /// `|α⟩ + |−α⟩`
    Two,
    /// `|α⟩ + |−α⟩ − |iα⟩ − |−iα⟩`
    Four,
}

impl CatKind {
    pub fn from_components(n: usize) -> Result<Self> {
        match n {
            2 => Ok(CatKind::Two),
            4 => Ok(CatKind::Four),
            _ => Err(Error::InvalidParameter(format!("cat states have 2 or 4 components, got {n}"))),
        }
    }
}

pub fn ideal_cat(alpha: f64, kind: CatKind, cutoff: usize) -> Result<StateVector> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidParameter(format!("cat amplitude must be >= 0, got {alpha}")));
    }
    let terms: &[(Complex64, f64)] = match kind {
        CatKind::Two => &[(Complex64::new(1.0, 0.0), 1.0), (Complex64::new(-1.0, 0.0), 1.0)],
        CatKind::Four => &[
            (Complex64::new(1.0, 0.0), 1.0),
            (Complex64::new(-1.0, 0.0), 1.0),
            (Complex64::new(0.0, 1.0), -1.0),
            (Complex64::new(0.0, -1.0), -1.0),
        ],
    };
    let mut amps = vec![Complex64::default(); cutoff];
    for &(phase, sign) in terms {
        for (a, b) in amps.iter_mut().zip(coherent_amplitudes(phase * alpha, cutoff)) {
            *a += b * sign;
        }
    }
    let layout = HilbertLayout::single(cutoff)?;
    if amps.iter().map(|z| z.norm_sqr()).sum::<f64>() < 1e-24 {
        return Err(Error::Degenerate(format!(
            "{kind:?}-component cat with alpha = {alpha} vanishes"
        )));
    }
    finish(layout, amps)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureParams {
    pub p_tmsv: f64,
    pub r: f64,
    pub r_a: f64,
    pub r_b: f64,
}

impl MixtureParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p_tmsv) {
            return Err(Error::InvalidParameter(format!("P must lie in [0, 1], got {}", self.p_tmsv)));
        }
        check_squeezing("r", self.r)?;
        check_squeezing("r_A", self.r_a)?;
        check_squeezing("r_B", self.r_b)
    }
}

/// `P |TMSV⟩⟨TMSV| + (1 − P) |SMSV⟩⟨SMSV|`.
pub fn mixture_state(params: &MixtureParams, cutoff_a: usize, cutoff_b: usize) -> Result<DensityOperator> {
    params.validate()?;
    let t = tmsv(params.r, cutoff_a, cutoff_b)?.to_density();
    let s = smsv_product(params.r_a, params.r_b, cutoff_a, cutoff_b)?.to_density();
    DensityOperator::mixture(&[(params.p_tmsv, &t), (1.0 - params.p_tmsv, &s)])
}

/// TMSV sent through pure-loss channels on both modes, then coherently
/// photon-subtracted. Returns the state and the subtraction weight.
pub fn photon_subtracted_tmsv(
    r: f64,
    eta_a: f64,
    eta_b: f64,
    cutoff_a: usize,
    cutoff_b: usize,
) -> Result<(DensityOperator, f64)> {
    let rho = tmsv(r, cutoff_a, cutoff_b)?.to_density();
    let rho = channels::pure_loss(&rho, 0, eta_a)?;
    let rho = channels::pure_loss(&rho, 1, eta_b)?;
    channels::coherent_subtract(&rho)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PumpModel {
    /// Pump mode kept as a quantum oscillator in a coherent state of amplitude `α_p`.
    #[default]
    Quantized,
    /// Pump operator replaced by the number `α_p`.
    Classical,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpdcParams {
    /// Effective coupling `ξ = α_p g t`.
    pub xi: f64,
    pub alpha_p: f64,
    pub cutoff_a: usize,
    pub cutoff_b: usize,
    #[serde(default)]
    pub pump: PumpModel,
}

impl SpdcParams {
    pub fn new(xi: f64, cutoff_a: usize, cutoff_b: usize) -> Self {
        Self {
            xi,
            alpha_p: 5.0,
            cutoff_a,
            cutoff_b,
            pump: PumpModel::Quantized,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.xi >= 0.0 && self.xi.is_finite()) {
            return Err(Error::InvalidParameter(format!("xi must be >= 0, got {}", self.xi)));
        }
        if !(self.alpha_p > 0.0 && self.alpha_p.is_finite()) {
            return Err(Error::InvalidParameter(format!("alpha_p must be > 0, got {}", self.alpha_p)));
        }
        HilbertLayout::two_mode(self.cutoff_a, self.cutoff_b).map(|_| ())
    }
}

/// Classical-pump generator `a†b†² − a b²` on a two-mode layout.
pub fn spdc_generator(layout: &HilbertLayout) -> Result<ModeOperator> {
    let a = ModeOperator::ladder(layout, 0)?;
    let b2 = ModeOperator::ladder_power(layout, 1, 2)?;
    let lower = a.mul(&b2)?;
    lower.adjoint().sub(&lower)
}

/// Three-photon SPDC state on modes (A, B) with the pump traced out.
///
/// The quantized model returns a mixture over pump photon numbers; the
/// classical model returns a pure state.
pub fn spdc_state(params: &SpdcParams) -> Result<DensityOperator> {
    params.validate()?;
    match params.pump {
        PumpModel::Classical => Ok(spdc_classical(params)?.to_density()),
        PumpModel::Quantized => spdc_quantized(params),
    }
}

/// `exp(ξ(a†b†² − a b²)) |0, 0⟩`.
pub fn spdc_classical(params: &SpdcParams) -> Result<StateVector> {
    params.validate()?;
    let layout = HilbertLayout::two_mode(params.cutoff_a, params.cutoff_b)?;
    let g = spdc_generator(&layout)?;
    let out = evolve(&StateVector::vacuum(&layout), &g, params.xi)?;
    check_leakage(&out.tail_populations())?;
    Ok(out)
}

fn spdc_quantized(params: &SpdcParams) -> Result<DensityOperator> {
    let layout = HilbertLayout::two_mode(params.cutoff_a, params.cutoff_b)?;
    let alpha = params.alpha_p;
    let gt = params.xi / alpha;
    // Highest signal level j with |j, 2j⟩ inside the layout.
    let jmax = (params.cutoff_a - 1).min((params.cutoff_b - 1) / 2);
    let pump_levels = (alpha * alpha + 12.0 * alpha + 10.0).ceil() as usize;
    let settings = EvolveSettings::default();

    // The interaction conserves n_p + n_A and n_B − 2 n_A, so each initial
    // pump number N evolves inside the chain |N − j⟩_p |j⟩_A |2j⟩_B.
    let mut sectors: Vec<Vec<Complex64>> = Vec::with_capacity(pump_levels);
    for n in 0..pump_levels {
        let weight = (-alpha * alpha / 2.0 + n as f64 * alpha.ln() - 0.5 * ln_factorial(n)).exp();
        let d = n.min(jmax) + 1;
        let mut init = vec![Complex64::default(); d];
        init[0] = c(weight);
        if d == 1 || gt == 0.0 {
            sectors.push(init);
            continue;
        }
        let mut trip = Vec::with_capacity(2 * d);
        for j in 0..d - 1 {
            let h = (((n - j) * (j + 1)) as f64).sqrt() * (((2 * j + 1) * (2 * j + 2)) as f64).sqrt();
            trip.push((j + 1, j, c(h)));
            trip.push((j, j + 1, c(-h)));
        }
        let g = SparseMatrix::from_triplets(d, trip);
        sectors.push(evolve_amplitudes(&g, &init, gt, &settings)?);
    }

    // Tracing the pump leaves one pure component per final pump number.
    let mut components = Vec::new();
    let mut top = 0.0;
    let mut total = 0.0;
    for np in 0..pump_levels {
        let mut amps = vec![Complex64::default(); layout.total_dim()];
        let mut any = false;
        for j in 0..=jmax {
            let Some(sector) = sectors.get(np + j) else { break };
            if let Some(&v) = sector.get(j) {
                if v.norm_sqr() > 0.0 {
                    amps[layout.index(&[j, 2 * j])] = v;
                    total += v.norm_sqr();
                    if j == jmax {
                        top += v.norm_sqr();
                    }
                    any = true;
                }
            }
        }
        if any {
            components.push(amps);
        }
    }
    let rho = DensityOperator::from_components(layout, components)?.normalized()?;
    // the chain edge plays the role of the top Fock level
    let edge = top / total.max(1e-300);
    check_leakage(&[edge, edge])?;
    Ok(rho)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn expect_n(rho: &DensityOperator, mode: usize) -> f64 {
        let n = ModeOperator::number(rho.layout(), mode).unwrap();
        rho.expectation(&n).unwrap().re
    }

    #[test]
    fn tmsv_vacuum_and_ratio() {
        let s = tmsv(0.0, 4, 4).unwrap();
        assert!((s.amplitudes()[0].re - 1.0).abs() < 1e-15);
        let s = tmsv(1.0, 40, 40).unwrap();
        let l = s.layout();
        let ratio = s.amplitudes()[l.index(&[1, 1])].re / s.amplitudes()[0].re;
        assert!((ratio - 1f64.tanh()).abs() < 1e-12);
    }

    #[test]
    fn tmsv_marginal_is_thermal() {
        let r: f64 = 0.7;
        let rho = tmsv(r, 50, 50).unwrap().to_density();
        let b = rho.partial_trace(&[1]).unwrap();
        let want = r.sinh().powi(2);
        assert!((expect_n(&b, 0) - want).abs() < 1e-10);
        let t2 = r.tanh().powi(2);
        for (n, p) in b.mode_populations(0).unwrap().iter().take(10).enumerate() {
            assert!((p - t2.powi(n as i32) / r.cosh().powi(2)).abs() < 1e-12);
        }
    }

    #[test]
    fn smsv_even_support_and_photon_number() {
        let s = smsv(0.5, 40).unwrap();
        for (n, a) in s.amplitudes().iter().enumerate() {
            if n % 2 == 1 {
                assert_eq!(a.norm(), 0.0);
            }
        }
        let rho = s.to_density();
        assert!((expect_n(&rho, 0) - 0.5f64.sinh().powi(2)).abs() < 1e-12);
    }

    #[test]
    fn smsv_product_factorizes() {
        let p = smsv_product(0.3, 0.6, 20, 24).unwrap();
        let a = smsv(0.3, 20).unwrap();
        let b = smsv(0.6, 24).unwrap();
        let l = p.layout();
        for i in 0..20 {
            for j in 0..24 {
                let want = a.amplitudes()[i] * b.amplitudes()[j];
                assert!((p.amplitudes()[l.index(&[i, j])] - want).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn leakage_guard_fails_on_tiny_cutoff() {
        assert!(matches!(tmsv(2.0, 4, 4), Err(Error::TruncationLeak { .. })));
    }

    #[test]
    fn cats() {
        let v = ideal_cat(0.0, CatKind::Two, 6).unwrap();
        assert!((v.amplitudes()[0].re - 1.0).abs() < 1e-15);
        assert!(matches!(ideal_cat(0.0, CatKind::Four, 6), Err(Error::Degenerate(_))));
        let two = ideal_cat(1.3, CatKind::Two, 30).unwrap();
        assert!(two.amplitudes().iter().skip(1).step_by(2).all(|z| z.norm() < 1e-15));
        let four = ideal_cat(1.8, CatKind::Four, 40).unwrap();
        for (n, z) in four.amplitudes().iter().enumerate() {
            if n % 4 != 2 {
                assert!(z.norm() < 1e-14, "level {n}");
            }
        }
    }

    #[test]
    fn mixture_endpoints() {
        let p = MixtureParams { p_tmsv: 1.0, r: 0.5, r_a: 0.5, r_b: 0.5 };
        let rho = mixture_state(&p, 20, 20).unwrap();
        assert!((rho.purity() - 1.0).abs() < 1e-12);
        assert!((rho.trace() - 1.0).abs() < 1e-12);
        let bad = MixtureParams { p_tmsv: 1.5, ..p };
        assert!(mixture_state(&bad, 20, 20).is_err());
    }

    #[test]
    fn spdc_pairing_invariant() {
        for pump in [PumpModel::Classical, PumpModel::Quantized] {
            let p = SpdcParams { pump, ..SpdcParams::new(0.6, 24, 48) };
            let rho = spdc_state(&p).unwrap();
            let d = expect_n(&rho, 1) - 2.0 * expect_n(&rho, 0);
            assert!(d.abs() < 1e-8, "{pump:?}: {d}");
            assert!((rho.trace() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn spdc_zero_coupling_is_vacuum() {
        for pump in [PumpModel::Classical, PumpModel::Quantized] {
            let p = SpdcParams { pump, ..SpdcParams::new(0.0, 6, 12) };
            let rho = spdc_state(&p).unwrap();
            assert!((rho.mode_populations(0).unwrap()[0] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn spdc_selection_rules() {
        for pump in [PumpModel::Classical, PumpModel::Quantized] {
            let p = SpdcParams { pump, ..SpdcParams::new(0.3, 16, 32) };
            let rho = spdc_state(&p).unwrap();
            let l = rho.layout().clone();
            let a = ModeOperator::ladder(&l, 0).unwrap();
            let b2 = ModeOperator::ladder_power(&l, 1, 2).unwrap();
            let a2 = ModeOperator::ladder_power(&l, 0, 2).unwrap();
            let ab2 = rho.expectation(&a.mul(&b2).unwrap()).unwrap();
            assert!(ab2.re.abs() > 1e-3 && ab2.im.abs() < 1e-12);
            assert!(rho.expectation(&a2).unwrap().norm() < 1e-10);
            assert!(rho.expectation(&b2).unwrap().norm() < 1e-10);
        }
    }

    #[test]
    fn quantized_pump_approaches_classical_at_weak_coupling() {
        let q = spdc_state(&SpdcParams::new(0.1, 12, 24)).unwrap();
        let cl = spdc_state(&SpdcParams { pump: PumpModel::Classical, ..SpdcParams::new(0.1, 12, 24) }).unwrap();
        let (nq, nc) = (expect_n(&q, 0), expect_n(&cl, 0));
        assert!((nq - nc).abs() / nc < 0.05, "{nq} vs {nc}");
    }
}
