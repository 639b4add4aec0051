//! CM-, HZ- and LR-type steering witnesses and the hierarchy relations
//! between them.

use nalgebra::Matrix4;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::conditioning::{s_cr, MeasurementSettings};
use crate::error::{Error, Result};
use crate::fock::{DensityOperator, ModeOperator, TruncationWarning};
use crate::quadratures::{build_cm, standard_form, HighOrderCM, StandardFormCM};

/// Witness values inside `(−SIGN_BAND, SIGN_BAND)` are reported as boundary.
pub const SIGN_BAND: f64 = 1e-9;

/// Who steers whom, with the quadrature order used on each side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SteeringDirection {
    pub steering: usize,
    pub steered: usize,
    pub steering_order: usize,
    pub steered_order: usize,
}

impl SteeringDirection {
    /// A (mode 0, order `k`) steers B (mode 1, order `l`).
    pub fn a_to_b(k: usize, l: usize) -> Self {
        Self {
            steering: 0,
            steered: 1,
            steering_order: k,
            steered_order: l,
        }
    }

    /// B (mode 1, order `k`) steers A (mode 0, order `l`).
    pub fn b_to_a(k: usize, l: usize) -> Self {
        Self {
            steering: 1,
            steered: 0,
            steering_order: k,
            steered_order: l,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.steering == self.steered || self.steering > 1 || self.steered > 1 {
            return Err(Error::InvalidParameter(format!(
                "steering direction needs distinct modes 0 and 1, got {} -> {}",
                self.steering, self.steered
            )));
        }
        if self.steering_order == 0 || self.steered_order == 0 {
            return Err(Error::InvalidParameter("quadrature orders must be >= 1".into()));
        }
        Ok(())
    }

    /// Orders attached to (mode 0, mode 1).
    pub fn mode_orders(&self) -> (usize, usize) {
        if self.steering == 0 {
            (self.steering_order, self.steered_order)
        } else {
            (self.steered_order, self.steering_order)
        }
    }

    pub fn label(&self) -> String {
        let name = |m: usize| if m == 0 { "A" } else { "B" };
        format!(
            "{}->{} ({},{})",
            name(self.steering),
            name(self.steered),
            self.steering_order,
            self.steered_order
        )
    }
}

/// CM of `state` with the orders of `dir` on their modes.
pub fn cm_for(state: &DensityOperator, dir: &SteeringDirection) -> Result<HighOrderCM> {
    dir.validate()?;
    let (k, l) = dir.mode_orders();
    build_cm(state, k, l)
}

/// Reorders the CM so the steering party comes first.
fn oriented(cm: &HighOrderCM, dir: &SteeringDirection) -> Result<HighOrderCM> {
    dir.validate()?;
    if cm.orders != dir.mode_orders() {
        return Err(Error::InvalidParameter(format!(
            "CM orders {:?} do not match direction {}",
            cm.orders,
            dir.label()
        )));
    }
    Ok(if dir.steering == 0 { cm.clone() } else { cm.swapped() })
}

/// `V + i q_B Ω` on the steered block of a steering-first CM.
fn steering_matrix(v: &Matrix4<f64>, q_b: f64) -> Matrix4<Complex64> {
    let mut m = v.map(|x| Complex64::new(x, 0.0));
    m[(2, 3)] += Complex64::new(0.0, q_b);
    m[(3, 2)] -= Complex64::new(0.0, q_b);
    m
}

/// Minimum eigenvalue of `M_{B|A}`; negative means steering.
pub fn s_cm(cm: &HighOrderCM, dir: &SteeringDirection) -> Result<f64> {
    let o = oriented(cm, dir)?;
    Ok(steering_matrix(&o.v, o.q_b).symmetric_eigenvalues().min())
}

/// `M_{B|A}` for a standard form.
pub fn m_matrix(sf: &StandardFormCM) -> Matrix4<Complex64> {
    steering_matrix(&sf.matrix(), sf.q_b)
}

pub fn s_cm_standard(sf: &StandardFormCM) -> f64 {
    m_matrix(sf).symmetric_eigenvalues().min()
}

/// Which local frame the HZ witness is evaluated in. HZ is not invariant
/// under local squeezing, unlike the other three witnesses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HzFrame {
    /// Quadratures exactly as the state was prepared.
    #[default]
    AsPrepared,
    /// After local reduction to standard form.
    StandardForm,
}

/// `S_HZ = −(|⟨ÂB̂⟩| − √(⟨(ÂÂ† + Â†Â)/2⟩ ⟨B̂†B̂⟩))` from CM entries.
pub fn s_hz(cm: &HighOrderCM, dir: &SteeringDirection, frame: HzFrame) -> Result<f64> {
    let o = oriented(cm, dir)?;
    match frame {
        HzFrame::AsPrepared => hz_from_matrix(&o.v, o.q_b),
        HzFrame::StandardForm => s_hz_standard(&standard_form(&o)?.0),
    }
}

fn hz_from_matrix(v: &Matrix4<f64>, q_b: f64) -> Result<f64> {
    let corr = Complex64::new(v[(0, 2)] - v[(1, 3)], v[(0, 3)] + v[(1, 2)]).norm();
    let steering = v[(0, 0)] + v[(1, 1)];
    let steered = v[(2, 2)] + v[(3, 3)] - 2.0 * q_b;
    let radicand = steering * steered;
    if radicand < -1e-12 {
        return Err(Error::Numerical(format!("negative HZ radicand {radicand:.3e}")));
    }
    Ok(-(corr - radicand.max(0.0).sqrt()))
}

pub fn s_hz_standard(sf: &StandardFormCM) -> Result<f64> {
    hz_from_matrix(&sf.matrix(), sf.q_b)
}

/// HZ witness straight from operator expectations, without forming the CM.
pub fn hz_direct(state: &DensityOperator, dir: &SteeringDirection) -> Result<f64> {
    dir.validate()?;
    let mut extra = vec![0; 2];
    extra[dir.steering] = dir.steering_order;
    extra[dir.steered] = dir.steered_order;
    let rho = state.padded(&extra);
    let l = rho.layout();
    let a = ModeOperator::ladder_power(l, dir.steering, dir.steering_order)?;
    let b = ModeOperator::ladder_power(l, dir.steered, dir.steered_order)?;
    let tr = rho.trace();
    let ea = rho.expectation(&a)? / tr;
    let eb = rho.expectation(&b)? / tr;
    let ab = rho.correlation(&a, &b)? / tr - ea * eb;
    let aad = rho.correlation(&a, &a.adjoint())? / tr - ea * ea.conj();
    let ada = rho.correlation(&a.adjoint(), &a)? / tr - ea.conj() * ea;
    let bdb = rho.correlation(&b.adjoint(), &b)? / tr - eb.conj() * eb;
    let radicand = 0.5 * (aad.re + ada.re) * bdb.re;
    if radicand < -1e-12 {
        return Err(Error::Numerical(format!("negative HZ radicand {radicand:.3e}")));
    }
    Ok(-(ab.norm() - radicand.max(0.0).sqrt()))
}

/// LR witness with the optimal gains.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrResult {
    pub value: f64,
    /// Gain in `X_B + g_x X_A`.
    pub g_x: f64,
    /// Gain in `P_B − g_p P_A`.
    pub g_p: f64,
    pub v_x: f64,
    pub v_p: f64,
}

/// LR witness in standard form, `S_LR = √(V_x V_p)/q_B − 1`.
pub fn s_lr_standard(sf: &StandardFormCM) -> Result<LrResult> {
    if sf.n < 1e-12 {
        return Err(Error::Degenerate(format!("steering-party variance {:.3e}", sf.n)));
    }
    if sf.q_b.abs() < 1e-300 {
        return Err(Error::Degenerate("steered commutator factor is zero".into()));
    }
    let v_x = sf.m - sf.c1 * sf.c1 / sf.n;
    let v_p = sf.m - sf.c2 * sf.c2 / sf.n;
    Ok(LrResult {
        value: (v_x * v_p).max(0.0).sqrt() / sf.q_b.abs() - 1.0,
        g_x: -sf.c1 / sf.n,
        g_p: sf.c2 / sf.n,
        v_x,
        v_p,
    })
}

/// LR witness after reduction to standard form.
pub fn s_lr(cm: &HighOrderCM, dir: &SteeringDirection) -> Result<LrResult> {
    let o = oriented(cm, dir)?;
    s_lr_standard(&standard_form(&o)?.0)
}

/// LR witness on the CM as prepared, minimizing each inference variance over
/// a general linear estimate from both steering quadratures.
pub fn s_lr_raw(cm: &HighOrderCM, dir: &SteeringDirection) -> Result<f64> {
    let o = oriented(cm, dir)?;
    let a = o.block(0, 0);
    let inv = a
        .try_inverse()
        .ok_or_else(|| Error::Degenerate("steering block is singular".into()))?;
    let c = o.block(0, 1);
    let var = |j: usize| {
        let col = c.column(j);
        o.v[(2 + j, 2 + j)] - (col.transpose() * inv * col)[(0, 0)]
    };
    Ok((var(0) * var(1)).max(0.0).sqrt() / o.q_b.abs() - 1.0)
}

/// `(nm − c1²)(nm − c2²) − (n q_B)²`
pub fn w_lr(sf: &StandardFormCM) -> f64 {
    let nm = sf.n * sf.m;
    (nm - sf.c1 * sf.c1) * (nm - sf.c2 * sf.c2) - (sf.n * sf.q_b).powi(2)
}

/// `(nm − (c1 − c2)²/4)² − (n q_B)²`
pub fn w_hz(sf: &StandardFormCM) -> f64 {
    let d = sf.n * sf.m - (sf.c1 - sf.c2).powi(2) / 4.0;
    d * d - (sf.n * sf.q_b).powi(2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Detected,
    Boundary,
    NotDetected,
}

pub fn verdict(value: f64) -> Verdict {
    if value <= -SIGN_BAND {
        Verdict::Detected
    } else if value < SIGN_BAND {
        Verdict::Boundary
    } else {
        Verdict::NotDetected
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub g_x: f64,
    pub g_p: f64,
    pub w_lr: f64,
    pub w_hz: f64,
    pub c1: f64,
    pub c2: f64,
    pub hz_frame: HzFrame,
    pub warnings: Vec<TruncationWarning>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteeringReport {
    pub s_cm: f64,
    pub s_hz: f64,
    pub s_lr: f64,
    pub s_cr: Option<f64>,
    pub direction: SteeringDirection,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub hz_frame: HzFrame,
    /// `None` skips the conditional (CR) witness.
    pub conditioning: Option<MeasurementSettings>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            hz_frame: HzFrame::AsPrepared,
            conditioning: Some(MeasurementSettings::default()),
        }
    }
}

/// Evaluates every requested witness for one state and direction.
pub fn evaluate(state: &DensityOperator, dir: &SteeringDirection, opts: &EvalOptions) -> Result<SteeringReport> {
    let cm = cm_for(state, dir)?;
    let o = oriented(&cm, dir)?;
    let (sf, _) = standard_form(&o)?;
    let lr = s_lr_standard(&sf)?;
    let s_cr = match &opts.conditioning {
        Some(settings) => Some(s_cr(state, dir, settings)?.value),
        None => None,
    };
    Ok(SteeringReport {
        s_cm: s_cm(&cm, dir)?,
        s_hz: s_hz(&cm, dir, opts.hz_frame)?,
        s_lr: lr.value,
        s_cr,
        direction: *dir,
        diagnostics: Diagnostics {
            g_x: lr.g_x,
            g_p: lr.g_p,
            w_lr: w_lr(&sf),
            w_hz: w_hz(&sf),
            c1: sf.c1,
            c2: sf.c2,
            hz_frame: opts.hz_frame,
            warnings: cm.warnings.clone(),
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clause {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierarchyReport {
    pub report: SteeringReport,
    pub clauses: Vec<Clause>,
}

impl HierarchyReport {
    pub fn passed(&self) -> bool {
        self.clauses.iter().all(|c| c.passed)
    }
}

/// Tolerance used by the hierarchy clauses.
pub const HIERARCHY_TOL: f64 = 1e-7;

/// Checks the ordering `CR ≥ LR = CM ≥ HZ` between witness values.
pub fn hierarchy_clauses(s_cm: f64, s_hz: f64, s_lr: f64, s_cr: Option<f64>, c_sum: f64) -> Vec<Clause> {
    let tol = HIERARCHY_TOL;
    let neg = |v: f64| v < -tol;
    let pos = |v: f64| v > tol;
    let mut out = vec![
        Clause {
            name: "hz_implies_lr_and_cm".into(),
            passed: !neg(s_hz) || (!pos(s_lr) && !pos(s_cm)),
            detail: format!("S_HZ={s_hz:.6e} S_LR={s_lr:.6e} S_CM={s_cm:.6e}"),
        },
        Clause {
            name: "lr_equivalent_cm".into(),
            passed: !(neg(s_lr) && pos(s_cm)) && !(neg(s_cm) && pos(s_lr)),
            detail: format!("S_LR={s_lr:.6e} S_CM={s_cm:.6e}"),
        },
    ];
    if let Some(cr) = s_cr {
        out.push(Clause {
            name: "lr_implies_cr".into(),
            passed: !neg(s_lr) || !pos(cr),
            detail: format!("S_LR={s_lr:.6e} S_CR={cr:.6e}"),
        });
    }
    if c_sum.abs() < 1e-9 {
        out.push(Clause {
            name: "hz_equivalent_lr_when_symmetric".into(),
            passed: !(neg(s_hz) && pos(s_lr)) && !(neg(s_lr) && pos(s_hz)),
            detail: format!("c1+c2={c_sum:.3e} S_HZ={s_hz:.6e} S_LR={s_lr:.6e}"),
        });
    }
    out
}

/// Algebraic identities of a standard form: `W_LR = det M` (relative 1e−10)
/// and the closed form of `W_LR − W_HZ` (absolute 1e−12, scaled by magnitude).
pub fn identity_clauses(sf: &StandardFormCM) -> Vec<Clause> {
    let det = m_matrix(sf).determinant().re;
    let det_err = (w_lr(sf) - det).abs() / det.abs().max(1e-3);
    let lhs = w_lr(sf) - w_hz(sf);
    let rhs = -((sf.c1 + sf.c2).powi(2) / 16.0) * (8.0 * sf.n * sf.m - 4.0 * sf.c1 * sf.c2 + (sf.c1 - sf.c2).powi(2));
    let diff_err = (lhs - rhs).abs() / (1.0 + rhs.abs());
    vec![
        Clause {
            name: "w_lr_is_det_m".into(),
            passed: det_err <= 1e-10,
            detail: format!("relative error {det_err:.3e}"),
        },
        Clause {
            name: "w_difference_closed_form".into(),
            passed: diff_err <= 1e-12,
            detail: format!("error {diff_err:.3e}"),
        },
    ]
}

/// Evaluates all four witnesses, the hierarchy clauses and the standard-form
/// identities for one state.
pub fn hierarchy_check(
    state: &DensityOperator,
    dir: &SteeringDirection,
    conditioning: &MeasurementSettings,
) -> Result<HierarchyReport> {
    let opts = EvalOptions {
        hz_frame: HzFrame::StandardForm,
        conditioning: Some(*conditioning),
    };
    let report = evaluate(state, dir, &opts)?;
    let d = &report.diagnostics;
    let mut clauses = hierarchy_clauses(report.s_cm, report.s_hz, report.s_lr, report.s_cr, d.c1 + d.c2);
    let (sf, _) = standard_form(&oriented(&cm_for(state, dir)?, dir)?)?;
    clauses.extend(identity_clauses(&sf));
    Ok(HierarchyReport { report, clauses })
}

/// Feasible standard form with its steering-side commutator factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampledCM {
    pub sf: StandardFormCM,
    pub q_a: f64,
}

impl SampledCM {
    pub fn cm(&self) -> HighOrderCM {
        HighOrderCM::new((1, 1), self.sf.matrix(), self.q_a, self.sf.q_b).expect("symmetric by construction")
    }
}

fn sample_q<R: Rng>(rng: &mut R) -> f64 {
    if rng.random_bool(0.5) {
        0.25
    } else {
        2.0 * (1.0 - rng.random::<f64>())
    }
}

/// Rejection sampler for standard forms passing the uncertainty test.
///
/// `n, m ∈ (0, 4]`, `c1, c2` uniform in `[−√(nm), √(nm)]`, and each
/// commutator factor is `1/4` or uniform in `(0, 2]` with equal odds.
pub fn sample_feasible_cm<R: Rng>(rng: &mut R) -> SampledCM {
    loop {
        let n = 4.0 * (1.0 - rng.random::<f64>());
        let m = 4.0 * (1.0 - rng.random::<f64>());
        let bound = (n * m).sqrt();
        let c1 = rng.random_range(-bound..=bound);
        let c2 = rng.random_range(-bound..=bound);
        let q_a = sample_q(rng);
        let q_b = sample_q(rng);
        let s = SampledCM {
            sf: StandardFormCM { n, m, c1, c2, q_b },
            q_a,
        };
        if s.cm().feasibility_min_eig() >= 0.0 {
            return s;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{HilbertLayout, StateVector};
    use crate::stategen::tmsv;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn vac() -> DensityOperator {
        StateVector::vacuum(&HilbertLayout::two_mode(6, 6).unwrap()).to_density()
    }

    #[test]
    fn vacuum_saturates_cm_and_lr() {
        let d = SteeringDirection::a_to_b(1, 1);
        let cm = cm_for(&vac(), &d).unwrap();
        assert!(s_cm(&cm, &d).unwrap().abs() < 1e-12);
        let lr = s_lr(&cm, &d).unwrap();
        assert!(lr.value.abs() < 1e-12);
        assert_eq!((lr.g_x, lr.g_p), (0.0, 0.0));
    }

    #[test]
    fn tmsv_values() {
        let r: f64 = 1.0;
        let rho = tmsv(r, 40, 40).unwrap().to_density();
        let d = SteeringDirection::a_to_b(1, 1);
        let cm = cm_for(&rho, &d).unwrap();
        let lr = s_lr(&cm, &d).unwrap();
        assert!((lr.value - (1.0 / (2.0 * r).cosh() - 1.0)).abs() < 1e-6);
        // ⟨ab⟩ = cosh r sinh r, ⟨a†a⟩ = sinh²r
        let want_hz = -(r.cosh() * r.sinh() - ((r.sinh().powi(2) + 0.5) * r.sinh().powi(2)).sqrt());
        assert!((s_hz(&cm, &d, HzFrame::AsPrepared).unwrap() - want_hz).abs() < 1e-6);
        assert!((want_hz + 0.2016).abs() < 1e-4);
        assert!((hz_direct(&rho, &d).unwrap() - want_hz).abs() < 1e-6);
        // explicit 4×4 eigensolve
        let m = steering_matrix(&cm.v, cm.q_b);
        let ev = nalgebra::DMatrix::from_fn(4, 4, |i, j| m[(i, j)]).symmetric_eigenvalues();
        assert!((s_cm(&cm, &d).unwrap() - ev.min()).abs() < 1e-12);
        assert!(s_cm(&cm, &d).unwrap() < 0.0);
    }

    #[test]
    fn weak_tmsv_is_still_detected_by_hz() {
        let rho = tmsv(0.1, 12, 12).unwrap().to_density();
        let d = SteeringDirection::a_to_b(1, 1);
        assert!(hz_direct(&rho, &d).unwrap() < 0.0);
    }

    #[test]
    fn w_values() {
        let vac = StandardFormCM { n: 0.25, m: 0.25, c1: 0.0, c2: 0.0, q_b: 0.25 };
        assert!(w_lr(&vac).abs() < 1e-15);
        let (ch, sh) = (1f64.cosh() / 4.0, 1f64.sinh() / 4.0);
        let t = StandardFormCM { n: ch, m: ch, c1: sh, c2: -sh, q_b: 0.25 };
        let want = (1.0f64 / 16.0).powi(2) - (1f64.cosh() / 16.0).powi(2);
        assert!((w_lr(&t) - want).abs() < 1e-14);
    }

    #[test]
    fn sampled_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let s = sample_feasible_cm(&mut rng).sf;
            for c in identity_clauses(&s) {
                assert!(c.passed, "{}: {}", c.name, c.detail);
            }
        }
    }

    #[test]
    fn gains_are_local_minima() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let s = sample_feasible_cm(&mut rng).sf;
            let lr = s_lr_standard(&s).unwrap();
            let var_x = |g: f64| s.m + 2.0 * g * s.c1 + g * g * s.n;
            let var_p = |g: f64| s.m - 2.0 * g * s.c2 + g * g * s.n;
            for h in [-1e-4, 1e-4] {
                assert!(var_x(lr.g_x + h) >= var_x(lr.g_x));
                assert!(var_p(lr.g_p + h) >= var_p(lr.g_p));
            }
            assert!((var_x(lr.g_x) - lr.v_x).abs() < 1e-12);
        }
    }

    #[test]
    fn direction_swaps_augmented_block() {
        let v = StandardFormCM { n: 1.0, m: 0.3, c1: 0.2, c2: -0.1, q_b: 0.25 }.matrix();
        let cm = HighOrderCM::new((1, 2), v, 0.25, 1.0).unwrap();
        let ab = s_cm(&cm, &SteeringDirection::a_to_b(1, 2)).unwrap();
        let ba = s_cm(&cm, &SteeringDirection::b_to_a(2, 1)).unwrap();
        assert!((ab - ba).abs() > 1e-3);
        assert!(s_cm(&cm, &SteeringDirection::a_to_b(2, 1)).is_err());
    }

    #[test]
    fn verdict_band() {
        assert_eq!(verdict(-1e-3), Verdict::Detected);
        assert_eq!(verdict(5e-10), Verdict::Boundary);
        assert_eq!(verdict(1e-3), Verdict::NotDetected);
    }
}
