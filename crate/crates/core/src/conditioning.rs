//! High-order quadrature measurements on one mode, the conditional states
//! they prepare on the other, and the derived CR witness, Wigner functions
//! and fidelities.

use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::criteria::SteeringDirection;
use crate::error::{Error, Result};
use crate::fock::{dot, hermitian_eig_dense, norm_sqr, DensityOperator, HilbertLayout, StateVector};
use crate::quadratures::{check_order, commutator_factor, local_quadrature, Quadrature};
use crate::special::{ln_gamma, ln_gamma_real};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSettings {
    /// Outcome bin width; 0 keeps every eigenprojector separate.
    pub bin_width: f64,
    /// Outcomes less likely than this are dropped.
    pub probability_floor: f64,
}

impl Default for MeasurementSettings {
    fn default() -> Self {
        Self {
            bin_width: 0.0,
            probability_floor: 1e-12,
        }
    }
}

impl MeasurementSettings {
    fn validate(&self) -> Result<()> {
        if !(self.bin_width >= 0.0 && self.bin_width.is_finite()) {
            return Err(Error::InvalidParameter(format!("bin width must be >= 0, got {}", self.bin_width)));
        }
        if !(self.probability_floor >= 0.0) {
            return Err(Error::InvalidParameter("probability floor must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeasuredOperator {
    pub mode: usize,
    pub order: usize,
    pub which: Quadrature,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    /// Eigenvalue, or the probability-weighted mean eigenvalue of a bin.
    pub value: f64,
    pub probability: f64,
    /// Normalized state of the unmeasured mode.
    pub state: DensityOperator,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalEnsemble {
    pub measured: MeasuredOperator,
    pub outcomes: Vec<Outcome>,
    pub bin_width: f64,
    pub discarded_probability: f64,
}

/// Two-mode amplitudes viewed as matrices `Ψ[measured level, other level]`.
struct Split {
    dm: usize,
    dr: usize,
    mats: Vec<DMatrix<Complex64>>,
}

fn split(state: &DensityOperator, mode: usize) -> Result<Split> {
    let layout = state.layout();
    if layout.modes() != 2 {
        return Err(Error::InvalidParameter(format!(
            "conditioning needs a two-mode state, got {} modes",
            layout.modes()
        )));
    }
    layout.check_mode(mode)?;
    let (d0, d1) = (layout.dim(0), layout.dim(1));
    let norm = state.trace();
    let scale = 1.0 / norm.sqrt();
    let comps = state.component_vectors();
    let mats = comps
        .iter()
        .map(|v| {
            if mode == 0 {
                DMatrix::from_fn(d0, d1, |a, b| v[a * d1 + b] * scale)
            } else {
                DMatrix::from_fn(d1, d0, |a, b| v[b * d1 + a] * scale)
            }
        })
        .collect();
    let (dm, dr) = if mode == 0 { (d0, d1) } else { (d1, d0) };
    Ok(Split { dm, dr, mats })
}

/// Groups sorted eigenvalues into consecutive bins of the given width.
fn bins(values: &[f64], width: f64) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = Vec::new();
    let mut start = f64::NEG_INFINITY;
    for (j, &v) in values.iter().enumerate() {
        if width > 0.0 && v - start < width && !out.is_empty() {
            out.last_mut().unwrap().push(j);
        } else {
            out.push(vec![j]);
            start = v;
        }
    }
    out
}

/// Projective measurement of a high-order quadrature in the eigenbasis of
/// its truncated matrix on the measured mode.
pub fn measure_ho_quadrature(
    state: &DensityOperator,
    mode: usize,
    order: usize,
    which: Quadrature,
    settings: &MeasurementSettings,
) -> Result<ConditionalEnsemble> {
    settings.validate()?;
    let sp = split(state, mode)?;
    check_order(order, sp.dm)?;
    let eig = hermitian_eig_dense(&local_quadrature(sp.dm, order, which).to_dense());
    let udag = eig.vectors.adjoint();
    let projected: Vec<DMatrix<Complex64>> = sp.mats.iter().map(|m| &udag * m).collect();
    let other = HilbertLayout::single(sp.dr)?;
    let mut outcomes = Vec::new();
    let mut discarded = 0.0;
    for group in bins(&eig.values, settings.bin_width) {
        let mut comps = Vec::new();
        let mut p = 0.0;
        let mut mean = 0.0;
        for &j in &group {
            let mut pj = 0.0;
            for m in &projected {
                let row: Vec<Complex64> = m.row(j).iter().copied().collect();
                pj += norm_sqr(&row);
                comps.push(row);
            }
            p += pj;
            mean += pj * eig.values[j];
        }
        if p < settings.probability_floor || p == 0.0 {
            discarded += p;
            continue;
        }
        let state = DensityOperator::from_components(other.clone(), comps)?.scaled(1.0 / p);
        outcomes.push(Outcome {
            value: mean / p,
            probability: p,
            state,
        });
    }
    if outcomes.is_empty() {
        return Err(Error::Degenerate("every measurement outcome fell below the probability floor".into()));
    }
    Ok(ConditionalEnsemble {
        measured: MeasuredOperator { mode, order, which },
        outcomes,
        bin_width: settings.bin_width,
        discarded_probability: discarded,
    })
}

/// Average conditional variance `Σ_a P_a Var_a(O)` of a quadrature of the
/// unmeasured mode, with `O` applied exactly (the remaining mode is padded).
pub fn inference_variance(
    state: &DensityOperator,
    measured: MeasuredOperator,
    target_order: usize,
    target: Quadrature,
    settings: &MeasurementSettings,
) -> Result<f64> {
    settings.validate()?;
    let sp = split(state, measured.mode)?;
    check_order(measured.order, sp.dm)?;
    check_order(target_order, sp.dr)?;
    let eig = hermitian_eig_dense(&local_quadrature(sp.dm, measured.order, measured.which).to_dense());
    let udag = eig.vectors.adjoint();
    let pd = sp.dr + target_order;
    let op = local_quadrature(pd, target_order, target);
    // per eigenvector: probability, Σ⟨φ|O|φ⟩, Σ‖Oφ‖²
    let mut stats = vec![(0.0, 0.0, 0.0); sp.dm];
    let mut padded = vec![Complex64::default(); pd];
    for m in &sp.mats {
        let proj = &udag * m;
        for (j, s) in stats.iter_mut().enumerate() {
            for (b, slot) in padded.iter_mut().enumerate().take(sp.dr) {
                *slot = proj[(j, b)];
            }
            let o = op.matvec(&padded);
            s.0 += norm_sqr(&padded);
            s.1 += dot(&padded, &o).re;
            s.2 += norm_sqr(&o);
        }
    }
    let mut total = 0.0;
    for group in bins(&eig.values, settings.bin_width) {
        let (p, first, second) = group
            .iter()
            .fold((0.0, 0.0, 0.0), |acc, &j| (acc.0 + stats[j].0, acc.1 + stats[j].1, acc.2 + stats[j].2));
        if p < settings.probability_floor || p == 0.0 {
            continue;
        }
        total += second - first * first / p;
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrResult {
    pub value: f64,
    pub v_x: f64,
    pub v_p: f64,
    pub q_b: f64,
}

/// CR witness: `√(V_x V_p)/q_B − 1` with inference variances from X and P
/// measurements on the steering mode.
pub fn s_cr(state: &DensityOperator, dir: &SteeringDirection, settings: &MeasurementSettings) -> Result<CrResult> {
    dir.validate()?;
    let meas = |which| MeasuredOperator {
        mode: dir.steering,
        order: dir.steering_order,
        which,
    };
    let v_x = inference_variance(state, meas(Quadrature::X), dir.steered_order, Quadrature::X, settings)?;
    let v_p = inference_variance(state, meas(Quadrature::P), dir.steered_order, Quadrature::P, settings)?;
    let q_b = commutator_factor(state, dir.steered, dir.steered_order)?;
    if q_b.abs() < 1e-14 {
        return Err(Error::Degenerate("steered commutator expectation vanishes".into()));
    }
    Ok(CrResult {
        value: (v_x * v_p).max(0.0).sqrt() / q_b.abs() - 1.0,
        v_x,
        v_p,
        q_b,
    })
}

/// How outcomes inside a conditioning window are resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditioningMethod {
    /// Generalized eigenvectors of the untruncated quadrature (orders 1, 2),
    /// integrated over the window. Falls back to `Truncated` for higher orders.
    #[default]
    Continuum,
    /// Eigenvectors of the truncated quadrature with eigenvalue in the window.
    Truncated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Window {
    /// Half-width as a fraction of `|target|`.
    Relative(f64),
    Absolute(f64),
}

impl Default for Window {
    fn default() -> Self {
        Window::Relative(0.02)
    }
}

impl Window {
    fn half_width(&self, target: f64) -> f64 {
        match *self {
            Window::Relative(f) => f * target.abs(),
            Window::Absolute(w) => w,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionalSettings {
    pub window: Window,
    pub method: ConditioningMethod,
    /// For order 2 the quadrature commutes with Fock parity; `Some(s)` keeps
    /// only outcomes with measured-mode photon number `≡ s (mod 2)`.
    pub sector: Option<usize>,
    pub quadrature_nodes: usize,
}

impl Default for ConditionalSettings {
    fn default() -> Self {
        Self {
            window: Window::default(),
            method: ConditioningMethod::Continuum,
            sector: None,
            quadrature_nodes: 48,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalState {
    pub state: DensityOperator,
    /// Probability of an outcome inside the window.
    pub probability: f64,
    pub method: ConditioningMethod,
}

/// Generalized eigenvector of `Xᵏ` (k = 1, 2) at eigenvalue `x`, restricted
/// to levels `0..d`. For `k = 2` each parity sector has its own eigenvector,
/// normalized so that `Σ_s ∫ |e_s(x)⟩⟨e_s(x)| dx = 1`.
pub fn generalized_eigenvector(x: f64, order: usize, sector: usize, d: usize) -> Result<Vec<f64>> {
    let mut e = vec![0.0; d];
    match order {
        1 => {
            if sector != 0 {
                return Err(Error::InvalidParameter("first-order quadratures have one sector".into()));
            }
            e[0] = (2.0 / std::f64::consts::PI).powf(0.25) * (-x * x).exp();
        }
        2 => {
            if sector > 1 || sector >= d {
                return Err(Error::InvalidParameter(format!("sector {sector} invalid for order 2")));
            }
            // spectral density of the sector's lowest level
            let nu = sector as f64 + 0.5;
            let ln_rho = -(2.0 * std::f64::consts::PI).ln()
                + (nu - 1.0) * 2f64.ln()
                + 2.0 * ln_gamma(Complex64::new(nu / 2.0, x / 2.0)).re
                - ln_gamma_real(nu);
            e[sector] = (0.5 * ln_rho).exp();
        }
        _ => return Err(Error::InvalidParameter(format!("no closed-form eigenvectors for order {order}"))),
    }
    // (aᵏ + a†ᵏ) e = 2x e, solved upward from the seed level
    let k = order;
    let mut n = sector;
    while n + k < d {
        let up: f64 = ((n + 1)..=(n + k)).map(|j| j as f64).product::<f64>().sqrt();
        let down = if n >= k {
            ((n - k + 1)..=n).map(|j| j as f64).product::<f64>().sqrt() * e[n - k]
        } else {
            0.0
        };
        e[n + k] = (2.0 * x * e[n] - down) / up;
        n += k;
    }
    Ok(e)
}

/// Conditional state of the other mode after a high-order quadrature outcome
/// near `target`.
pub fn conditional_state(
    state: &DensityOperator,
    mode: usize,
    order: usize,
    which: Quadrature,
    target: f64,
    settings: &ConditionalSettings,
) -> Result<ConditionalState> {
    let w = settings.window.half_width(target);
    if !(w > 0.0 && w.is_finite()) {
        return Err(Error::InvalidParameter(format!("window half-width must be > 0, got {w}")));
    }
    let sp = split(state, mode)?;
    check_order(order, sp.dm)?;
    let other = HilbertLayout::single(sp.dr)?;
    let continuum = settings.method == ConditioningMethod::Continuum && order <= 2;
    let mut rho = DMatrix::<Complex64>::zeros(sp.dr, sp.dr);
    let mut accumulate = |u_conj: &[Complex64], weight: f64| {
        for m in &sp.mats {
            let phi: Vec<Complex64> = (0..sp.dr)
                .map(|b| (0..sp.dm).map(|a| u_conj[a] * m[(a, b)]).sum())
                .collect();
            for i in 0..sp.dr {
                if phi[i] == Complex64::default() {
                    continue;
                }
                for j in 0..sp.dr {
                    rho[(i, j)] += phi[i] * phi[j].conj() * weight;
                }
            }
        }
    };
    if continuum {
        let sectors: Vec<usize> = match (order, settings.sector) {
            (1, _) => vec![0],
            (_, Some(s)) => vec![s],
            (_, None) => vec![0, 1],
        };
        // P^k eigenvectors are phase-rotated X^k eigenvectors
        let phase = match which {
            Quadrature::X => Complex64::new(1.0, 0.0),
            Quadrature::P => Complex64::from_polar(1.0, -std::f64::consts::FRAC_PI_2 / order as f64),
        };
        let nodes = NonZeroUsize::new(settings.quadrature_nodes.max(1)).unwrap();
        let gl = GaussLegendre::new(nodes);
        for &(node, weight) in gl.as_node_weight_pairs() {
            let x = target + w * node;
            for &s in &sectors {
                let e = generalized_eigenvector(x, order, s, sp.dm)?;
                let mut ph = Complex64::new(1.0, 0.0);
                let u_conj: Vec<Complex64> = e
                    .iter()
                    .map(|&v| {
                        let out = ph * v;
                        ph *= phase;
                        out
                    })
                    .collect();
                accumulate(&u_conj, weight * w);
            }
        }
    } else {
        let eig = hermitian_eig_dense(&local_quadrature(sp.dm, order, which).to_dense());
        let inside: Vec<usize> = (0..sp.dm)
            .filter(|&j| (eig.values[j] - target).abs() <= w)
            .filter(|&j| match (order, settings.sector) {
                (2, Some(s)) => eig.vectors.column(j).iter().enumerate().all(|(n, z)| n % 2 == s || z.norm() < 1e-12),
                _ => true,
            })
            .collect();
        if inside.is_empty() {
            return Err(Error::EmptyWindow { target, window: w });
        }
        for j in inside {
            let u_conj: Vec<Complex64> = eig.vectors.column(j).iter().map(|z| z.conj()).collect();
            accumulate(&u_conj, 1.0);
        }
    }
    let p = rho.trace().re;
    if !(p > 1e-300) {
        return Err(Error::EmptyWindow { target, window: w });
    }
    rho /= Complex64::new(p, 0.0);
    let rho = (&rho + rho.adjoint()) * Complex64::new(0.5, 0.0);
    Ok(ConditionalState {
        state: DensityOperator::from_matrix(other, rho)?,
        probability: p,
        method: if continuum {
            ConditioningMethod::Continuum
        } else {
            ConditioningMethod::Truncated
        },
    })
}

/// `⟨target|ρ|target⟩`
pub fn fidelity(rho: &DensityOperator, target: &StateVector) -> Result<f64> {
    rho.layout().ensure_same(target.layout())?;
    let t = target.amplitudes();
    let f = rho
        .component_vectors()
        .iter()
        .map(|v| dot(t, v).norm_sqr())
        .sum::<f64>()
        / rho.trace();
    Ok(f)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub p_min: f64,
    pub p_max: f64,
    pub nx: usize,
    pub np: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            x_min: -4.0,
            x_max: 4.0,
            p_min: -4.0,
            p_max: 4.0,
            nx: 161,
            np: 161,
        }
    }
}

impl GridSpec {
    pub fn xs(&self) -> Vec<f64> {
        linspace(self.x_min, self.x_max, self.nx)
    }

    pub fn ps(&self) -> Vec<f64> {
        linspace(self.p_min, self.p_max, self.np)
    }
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WignerGrid {
    pub spec: GridSpec,
    /// `values[i][j] = W(x_i, p_j)`
    pub values: Vec<Vec<f64>>,
    /// Trapezoidal integral of `W` over the grid.
    pub integral: f64,
}

/// Wigner function with vacuum variance 1/4, `W_vac(0, 0) = 2/π`.
pub fn wigner(state: &DensityOperator, spec: &GridSpec) -> Result<WignerGrid> {
    wigner_unchecked(state, spec).and_then(|g| {
        if (g.integral - 1.0).abs() > 1e-2 {
            Err(Error::Numerical(format!(
                "Wigner grid integrates to {:.4}; widen or refine the grid",
                g.integral
            )))
        } else {
            Ok(g)
        }
    })
}

/// Same as [`wigner`] without the normalization check.
pub fn wigner_unchecked(state: &DensityOperator, spec: &GridSpec) -> Result<WignerGrid> {
    if state.layout().modes() != 1 {
        return Err(Error::InvalidParameter("Wigner function needs a single-mode state".into()));
    }
    if spec.nx < 2 || spec.np < 2 || !(spec.x_max > spec.x_min) || !(spec.p_max > spec.p_min) {
        return Err(Error::InvalidParameter("Wigner grid needs at least 2x2 points and a positive extent".into()));
    }
    let rho = state.to_dense() / Complex64::new(state.trace(), 0.0);
    let d = rho.nrows();
    let xs = spec.xs();
    let ps = spec.ps();
    let mut values = vec![vec![0.0; ps.len()]; xs.len()];
    let mut ell = vec![0.0; d];
    for (i, &x) in xs.iter().enumerate() {
        for (j, &p) in ps.iter().enumerate() {
            let alpha = Complex64::new(x, p);
            let r2 = 4.0 * alpha.norm_sqr();
            let phase = if alpha.norm() > 0.0 { alpha / alpha.norm() } else { Complex64::new(1.0, 0.0) };
            let mut w = 0.0;
            for diff in 0..d {
                laguerre_functions(diff, r2, &mut ell[..d - diff]);
                let rot = phase.powi(diff as i32);
                let mut s = Complex64::default();
                for n in 0..d - diff {
                    let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
                    // Σ ρ_{n,m} ⟨m|D Π D†|n⟩ with m = n + diff
                    s += rho[(n, n + diff)] * sign * ell[n];
                }
                let term = s * rot;
                w += if diff == 0 { term.re } else { 2.0 * term.re };
            }
            values[i][j] = 2.0 / std::f64::consts::PI * w;
        }
    }
    let (dx, dp) = (xs[1] - xs[0], ps[1] - ps[0]);
    let mut integral = 0.0;
    for (i, row) in values.iter().enumerate() {
        let wx = if i == 0 || i + 1 == xs.len() { 0.5 } else { 1.0 };
        for (j, v) in row.iter().enumerate() {
            let wp = if j == 0 || j + 1 == ps.len() { 0.5 } else { 1.0 };
            integral += wx * wp * v;
        }
    }
    Ok(WignerGrid {
        spec: *spec,
        values,
        integral: integral * dx * dp,
    })
}

/// Normalized Laguerre functions `√(n!/(n+d)!) x^{d/2} e^{−x/2} L_n^{(d)}(x)`.
fn laguerre_functions(d: usize, x: f64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    let df = d as f64;
    out[0] = if d == 0 {
        (-x / 2.0).exp()
    } else if x == 0.0 {
        0.0
    } else {
        (df / 2.0 * x.ln() - x / 2.0 - 0.5 * ln_gamma_real(df + 1.0)).exp()
    };
    if out.len() > 1 {
        out[1] = (1.0 + df - x) * out[0] / (1.0 + df).sqrt();
    }
    for n in 1..out.len().saturating_sub(1) {
        let nf = n as f64;
        out[n + 1] = ((2.0 * nf + 1.0 + df - x) * out[n] - (nf * (nf + df)).sqrt() * out[n - 1])
            / ((nf + 1.0) * (nf + df + 1.0)).sqrt();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::ModeOperator;
    use crate::quadratures::ho_quadrature;
    use crate::stategen::{coherent, ideal_cat, smsv_product, tmsv, CatKind};
    use std::f64::consts::PI;

    fn single(d: usize) -> HilbertLayout {
        HilbertLayout::single(d).unwrap()
    }

    #[test]
    fn product_state_conditionals_match_marginal() {
        let rho = smsv_product(0.4, 0.6, 16, 16).unwrap().to_density();
        let ens = measure_ho_quadrature(&rho, 0, 1, Quadrature::X, &MeasurementSettings::default()).unwrap();
        let marginal = rho.partial_trace(&[1]).unwrap().to_dense();
        for o in &ens.outcomes {
            assert!((o.state.to_dense() - &marginal).iter().all(|z| z.norm() < 1e-9));
        }
        let total: f64 = ens.outcomes.iter().map(|o| o.probability).sum();
        assert!((total + ens.discarded_probability - 1.0).abs() < 1e-9);
    }

    #[test]
    fn tmsv_conditional_mean_is_linear() {
        let r: f64 = 0.5;
        let rho = tmsv(r, 40, 40).unwrap().to_density();
        let ens = measure_ho_quadrature(&rho, 0, 1, Quadrature::X, &MeasurementSettings::default()).unwrap();
        let xb = ho_quadrature(&single(40), 0, 1, Quadrature::X).unwrap();
        let slope = (2.0 * r).tanh();
        for o in ens.outcomes.iter().filter(|o| o.value.abs() < 1.0) {
            let m = o.state.expectation(&xb).unwrap().re;
            assert!((m - slope * o.value).abs() < 1e-6, "x={} mean={m}", o.value);
        }
    }

    #[test]
    fn tmsv_cr_matches_gaussian() {
        let r: f64 = 1.0;
        let rho = tmsv(r, 40, 40).unwrap().to_density();
        let cr = s_cr(&rho, &SteeringDirection::a_to_b(1, 1), &MeasurementSettings::default()).unwrap();
        assert!((cr.value - (1.0 / (2.0 * r).cosh() - 1.0)).abs() < 1e-4, "{}", cr.value);
    }

    #[test]
    fn generalized_eigenvectors_resolve_identity() {
        for order in [1usize, 2] {
            let sectors: &[usize] = if order == 1 { &[0] } else { &[0, 1] };
            let d = 6;
            let mut gram = vec![vec![0.0; d]; d];
            // the order-2 densities have poles at distance 1/2 from the real
            // axis, so integrate panel by panel
            let gl = GaussLegendre::new(NonZeroUsize::new(24).unwrap());
            for panel in 0..120 {
                let mid = -30.0 + 0.5 * (panel as f64 + 0.5);
                for &(node, wt) in gl.as_node_weight_pairs() {
                    let x = mid + 0.25 * node;
                    for &s in sectors {
                        let e = generalized_eigenvector(x, order, s, d).unwrap();
                        for i in 0..d {
                            for j in 0..d {
                                gram[i][j] += 0.25 * wt * e[i] * e[j];
                            }
                        }
                    }
                }
            }
            for i in 0..d {
                for j in 0..d {
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((gram[i][j] - want).abs() < 1e-6, "order {order} ({i},{j}) {}", gram[i][j]);
                }
            }
        }
    }

    #[test]
    fn generalized_eigenvectors_solve_truncated_equation() {
        for (order, which) in [(1, Quadrature::X), (2, Quadrature::X), (1, Quadrature::P), (2, Quadrature::P)] {
            let d = 12;
            let op = local_quadrature(d, order, which).to_dense();
            let x = 0.7;
            let phase = match which {
                Quadrature::X => Complex64::new(1.0, 0.0),
                Quadrature::P => Complex64::from_polar(1.0, -PI / 2.0 / order as f64),
            };
            let e = generalized_eigenvector(x, order, 1 % order, d).unwrap();
            // eigenvector itself is the conjugate of the row used for projection
            let u: Vec<Complex64> = e.iter().enumerate().map(|(n, &v)| (phase.powi(n as i32) * v).conj()).collect();
            let v = nalgebra::DVector::from_vec(u.clone());
            let image = &op * &v;
            for n in 0..d - order {
                assert!((image[n] - v[n] * x).norm() < 1e-10, "{which:?} order {order} level {n}");
            }
        }
    }

    #[test]
    fn continuum_and_truncated_agree_on_product_state() {
        let rho = smsv_product(0.3, 0.3, 12, 12).unwrap().to_density();
        let marginal = rho.partial_trace(&[1]).unwrap().to_dense();
        for target in [0.2, 0.9] {
            let c = conditional_state(&rho, 0, 1, Quadrature::X, target, &ConditionalSettings::default()).unwrap();
            assert!((c.state.to_dense() - &marginal).iter().all(|z| z.norm() < 1e-8));
        }
    }

    #[test]
    fn empty_truncated_window_is_an_error() {
        let rho = tmsv(0.3, 4, 4).unwrap().to_density();
        let s = ConditionalSettings {
            method: ConditioningMethod::Truncated,
            window: Window::Absolute(1e-6),
            ..Default::default()
        };
        assert!(matches!(
            conditional_state(&rho, 0, 1, Quadrature::X, 0.123, &s),
            Err(Error::EmptyWindow { .. })
        ));
    }

    #[test]
    fn wigner_reference_values() {
        let vac = StateVector::vacuum(&single(6)).to_density();
        let one = StateVector::fock(&single(6), &[1]).unwrap().to_density();
        let spec = GridSpec { nx: 3, np: 3, x_min: -1.0, x_max: 1.0, p_min: -1.0, p_max: 1.0 };
        let w0 = wigner_unchecked(&vac, &spec).unwrap();
        let w1 = wigner_unchecked(&one, &spec).unwrap();
        assert!((w0.values[1][1] - 2.0 / PI).abs() < 1e-14);
        assert!((w1.values[1][1] + 2.0 / PI).abs() < 1e-14);
    }

    #[test]
    fn wigner_of_coherent_state() {
        let beta = Complex64::new(0.6, -0.3);
        let rho = coherent(beta, 30).unwrap().to_density();
        let spec = GridSpec::default();
        let g = wigner(&rho, &spec).unwrap();
        for (i, x) in spec.xs().iter().enumerate().step_by(17) {
            for (j, p) in spec.ps().iter().enumerate().step_by(13) {
                let d2 = (Complex64::new(*x, *p) - beta).norm_sqr();
                let want = 2.0 / PI * (-2.0 * d2).exp();
                assert!((g.values[i][j] - want).abs() < 1e-10);
            }
        }
        // ⟨X⟩ from the grid
        let (dx, dp) = (spec.xs()[1] - spec.xs()[0], spec.ps()[1] - spec.ps()[0]);
        let mx: f64 = spec
            .xs()
            .iter()
            .enumerate()
            .map(|(i, x)| g.values[i].iter().sum::<f64>() * x * dx * dp)
            .sum();
        let xop = ho_quadrature(&single(30), 0, 1, Quadrature::X).unwrap();
        assert!((mx - rho.expectation(&xop).unwrap().re).abs() < 1e-6);
    }

    #[test]
    fn cat_fringes_alternate() {
        let cat = ideal_cat(2.0, CatKind::Two, 40).unwrap().to_density();
        let spec = GridSpec { x_min: -0.1, x_max: 0.1, p_min: -1.0, p_max: 1.0, nx: 3, np: 201 };
        let g = wigner_unchecked(&cat, &spec).unwrap();
        // between lobes along p: W ∝ cos(4·α·p·2)… changes sign
        let line = &g.values[1];
        let sign_changes = line.windows(2).filter(|w| w[0].signum() != w[1].signum()).count();
        assert!(sign_changes >= 4);
        assert!(line[100] > 0.0);
    }

    #[test]
    fn fidelity_references() {
        let l = single(30);
        let psi = coherent(Complex64::new(0.5, 0.2), 30).unwrap();
        assert!((fidelity(&psi.to_density(), &psi).unwrap() - 1.0).abs() < 1e-12);
        let vac = StateVector::vacuum(&l);
        let one = StateVector::fock(&l, &[1]).unwrap();
        assert!(fidelity(&vac.to_density(), &one).unwrap().abs() < 1e-15);
        // thermal ⟨n⟩ = 1 from a TMSV marginal
        let r = 1f64.asinh();
        let th = tmsv(r, 80, 80).unwrap().to_density().partial_trace(&[1]).unwrap();
        let n = ModeOperator::number(th.layout(), 0).unwrap();
        assert!((th.expectation(&n).unwrap().re - 1.0).abs() < 1e-9);
        assert!((fidelity(&th, &StateVector::vacuum(th.layout())).unwrap() - 0.5).abs() < 1e-12);
    }
}
