//! High-order quadratures, their covariance matrix, and standard-form reduction.

use nalgebra::{DMatrix, Matrix2, Matrix4};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{
    check_leakage, dot, local_ladder_power, DensityOperator, HilbertLayout, ModeOperator,
    SparseMatrix, TruncationWarning,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Quadrature {
    X,
    P,
}

/// `(oᵏ + o†ᵏ)/2` or `−i(oᵏ − o†ᵏ)/2` on `mode`.
pub fn ho_quadrature(layout: &HilbertLayout, mode: usize, order: usize, which: Quadrature) -> Result<ModeOperator> {
    layout.check_mode(mode)?;
    check_order(order, layout.dim(mode))?;
    let local = local_quadrature(layout.dim(mode), order, which);
    ModeOperator::embed(layout, mode, &local)?.into_hermitian()
}

pub(crate) fn check_order(order: usize, cutoff: usize) -> Result<()> {
    if order == 0 {
        return Err(Error::InvalidParameter("quadrature order must be >= 1".into()));
    }
    if order >= cutoff {
        return Err(Error::OrderTooHigh { order, cutoff });
    }
    Ok(())
}

pub(crate) fn local_quadrature(d: usize, order: usize, which: Quadrature) -> SparseMatrix {
    let lower = local_ladder_power(d, order);
    let upper = lower.adjoint();
    match which {
        Quadrature::X => lower.add(&upper).scale(Complex64::new(0.5, 0.0)),
        Quadrature::P => lower.sub(&upper).scale(Complex64::new(0.0, -0.5)),
    }
}

/// `q = ⟨[oᵏ, o†ᵏ]⟩ / 4`, evaluated without truncation error.
pub fn commutator_factor(state: &DensityOperator, mode: usize, order: usize) -> Result<f64> {
    let layout = state.layout();
    layout.check_mode(mode)?;
    check_order(order, layout.dim(mode))?;
    let mut extra = vec![0; layout.modes()];
    extra[mode] = order;
    let padded = state.padded(&extra);
    let lower = ModeOperator::ladder_power(padded.layout(), mode, order)?;
    let upper = lower.adjoint();
    let comm = padded.correlation(&lower, &upper)? - padded.correlation(&upper, &lower)?;
    Ok(comm.re / 4.0 / padded.trace())
}

/// First and symmetrized second moments of Hermitian operators.
pub(crate) fn moments(state: &DensityOperator, ops: &[ModeOperator]) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let k = ops.len();
    let mut mean = vec![0.0; k];
    let mut second = DMatrix::zeros(k, k);
    for op in ops {
        state.layout().ensure_same(op.layout())?;
    }
    if let Some(comps) = state.components() {
        for v in comps {
            let images: Vec<Vec<Complex64>> = ops.iter().map(|o| o.apply(v)).collect();
            for i in 0..k {
                mean[i] += dot(v, &images[i]).re;
                for j in i..k {
                    second[(i, j)] += dot(&images[i], &images[j]).re;
                }
            }
        }
    } else {
        let rho = state.to_dense();
        let applied: Vec<DMatrix<Complex64>> = ops.iter().map(|o| sparse_times_dense(o.matrix(), &rho)).collect();
        for i in 0..k {
            mean[i] = applied[i].trace().re;
            for j in i..k {
                // Tr[O_i O_j ρ]
                let t: Complex64 = ops[i]
                    .matrix()
                    .triplets()
                    .map(|(a, b, val)| val * applied[j][(b, a)])
                    .sum();
                second[(i, j)] = t.re;
            }
        }
    }
    let tr = state.trace();
    for i in 0..k {
        mean[i] /= tr;
        for j in i..k {
            second[(i, j)] /= tr;
            second[(j, i)] = second[(i, j)];
        }
    }
    Ok((mean, second))
}

fn sparse_times_dense(s: &SparseMatrix, m: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let mut out = DMatrix::zeros(m.nrows(), m.ncols());
    for (r, c, v) in s.triplets() {
        for j in 0..m.ncols() {
            out[(r, j)] += v * m[(c, j)];
        }
    }
    out
}

/// High-order covariance matrix in the basis `(X_Aᵏ, P_Aᵏ, X_Bˡ, P_Bˡ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HighOrderCM {
    /// Orders on mode 0 (A) and mode 1 (B).
    pub orders: (usize, usize),
    pub v: Matrix4<f64>,
    pub q_a: f64,
    pub q_b: f64,
    pub means: [f64; 4],
    #[serde(default)]
    pub warnings: Vec<TruncationWarning>,
}

impl HighOrderCM {
    /// CM from explicit entries; used by samplers and tests.
    pub fn new(orders: (usize, usize), v: Matrix4<f64>, q_a: f64, q_b: f64) -> Result<Self> {
        let asym = (v - v.transpose()).amax();
        if asym > 1e-10 {
            return Err(Error::InvalidParameter(format!("CM is not symmetric (deviation {asym:.3e})")));
        }
        Ok(Self {
            orders,
            v,
            q_a,
            q_b,
            means: [0.0; 4],
            warnings: Vec::new(),
        })
    }

    pub fn block(&self, row: usize, col: usize) -> Matrix2<f64> {
        self.v.fixed_view::<2, 2>(2 * row, 2 * col).into_owned()
    }

    /// Same CM with the two parties exchanged.
    pub fn swapped(&self) -> Self {
        let p = [2, 3, 0, 1];
        Self {
            orders: (self.orders.1, self.orders.0),
            v: Matrix4::from_fn(|i, j| self.v[(p[i], p[j])]),
            q_a: self.q_b,
            q_b: self.q_a,
            means: [self.means[2], self.means[3], self.means[0], self.means[1]],
            warnings: self.warnings.clone(),
        }
    }

    /// Smallest eigenvalue of `V + i(Ω_{q_A} ⊕ Ω_{q_B})`.
    pub fn feasibility_min_eig(&self) -> f64 {
        let mut m: Matrix4<Complex64> = self.v.map(|x| Complex64::new(x, 0.0));
        m[(0, 1)] += Complex64::new(0.0, self.q_a);
        m[(1, 0)] -= Complex64::new(0.0, self.q_a);
        m[(2, 3)] += Complex64::new(0.0, self.q_b);
        m[(3, 2)] -= Complex64::new(0.0, self.q_b);
        m.symmetric_eigenvalues().min()
    }
}

/// Builds the high-order CM with order `k` on mode 0 and `l` on mode 1.
///
/// Moments are evaluated on the state padded with `k` (`l`) empty levels so
/// that `oᵏ` and `o†ᵏ` act exactly on every populated level.
pub fn build_cm(state: &DensityOperator, k: usize, l: usize) -> Result<HighOrderCM> {
    let layout = state.layout();
    if layout.modes() != 2 {
        return Err(Error::InvalidParameter(format!(
            "covariance matrix needs a two-mode state, got {} modes",
            layout.modes()
        )));
    }
    check_order(k, layout.dim(0))?;
    check_order(l, layout.dim(1))?;
    let warnings = check_leakage(&state.tail_populations())?;
    let padded = state.padded(&[k, l]);
    let pl = padded.layout();
    let ops = [
        ho_quadrature(pl, 0, k, Quadrature::X)?,
        ho_quadrature(pl, 0, k, Quadrature::P)?,
        ho_quadrature(pl, 1, l, Quadrature::X)?,
        ho_quadrature(pl, 1, l, Quadrature::P)?,
    ];
    let (mean, second) = moments(&padded, &ops)?;
    let v = Matrix4::from_fn(|i, j| second[(i, j)] - mean[i] * mean[j]);
    Ok(HighOrderCM {
        orders: (k, l),
        v,
        q_a: commutator_factor(state, 0, k)?,
        q_b: commutator_factor(state, 1, l)?,
        means: [mean[0], mean[1], mean[2], mean[3]],
        warnings,
    })
}

/// Standard-form parameters: blocks `nI`, `mI`, correlations `diag(c1, c2)`.
///
/// `n` belongs to the first party of the CM it was derived from and `q_b` to
/// the second.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StandardFormCM {
    pub n: f64,
    pub m: f64,
    pub c1: f64,
    pub c2: f64,
    pub q_b: f64,
}

impl StandardFormCM {
    pub fn matrix(&self) -> Matrix4<f64> {
        Matrix4::new(
            self.n, 0.0, self.c1, 0.0, //
            0.0, self.n, 0.0, self.c2, //
            self.c1, 0.0, self.m, 0.0, //
            0.0, self.c2, 0.0, self.m,
        )
    }
}

/// Local transformations applied by [`standard_form`]: `V' = T V Tᵀ` with
/// `T = T_A ⊕ T_B`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardFormReport {
    pub t_a: Matrix2<f64>,
    pub t_b: Matrix2<f64>,
    /// True when a non-orthogonal (squeezing) symplectic was needed.
    pub squeezed: bool,
    pub identity: bool,
    /// Largest off-standard entry of the transformed CM.
    pub residual: f64,
}

const STANDARD_TOL: f64 = 1e-12;

fn is_standard(v: &Matrix4<f64>) -> bool {
    let scale = v.amax().max(1.0);
    (v[(0, 0)] - v[(1, 1)]).abs() < STANDARD_TOL * scale
        && (v[(2, 2)] - v[(3, 3)]).abs() < STANDARD_TOL * scale
        && off_standard(v) < STANDARD_TOL * scale
}

fn off_standard(v: &Matrix4<f64>) -> f64 {
    [(0, 1), (2, 3), (0, 3), (1, 2)]
        .iter()
        .map(|&(i, j)| v[(i, j)].abs().max(v[(j, i)].abs()))
        .fold(0.0, f64::max)
        .max((v[(0, 0)] - v[(1, 1)]).abs())
        .max((v[(2, 2)] - v[(3, 3)]).abs())
}

/// Single-mode symplectic bringing a positive 2×2 block to `√det · I`.
fn normalize_block(a: &Matrix2<f64>) -> Result<(Matrix2<f64>, f64, bool)> {
    let eig = a.symmetric_eigen();
    let (w1, w2) = (eig.eigenvalues[0], eig.eigenvalues[1]);
    if w1 <= 0.0 || w2 <= 0.0 {
        return Err(Error::Degenerate(format!("local CM block is not positive ({w1:.3e}, {w2:.3e})")));
    }
    let mut u = eig.eigenvectors;
    if u.determinant() < 0.0 {
        u.set_column(1, &(-u.column(1)));
    }
    let squeeze = Matrix2::new((w2 / w1).powf(0.25), 0.0, 0.0, (w1 / w2).powf(0.25));
    let squeezed = (w1 - w2).abs() > STANDARD_TOL * w1.max(w2);
    Ok((squeeze * u.transpose(), (w1 * w2).sqrt(), squeezed))
}

/// Proper rotation `R` with `R ⋅ (column flip)` when `det < 0`.
fn proper(mut u: Matrix2<f64>) -> (Matrix2<f64>, bool) {
    if u.determinant() < 0.0 {
        u.set_column(1, &(-u.column(1)));
        (u, true)
    } else {
        (u, false)
    }
}

/// Reduces the CM to standard form with local symplectic transformations.
pub fn standard_form(cm: &HighOrderCM) -> Result<(StandardFormCM, StandardFormReport)> {
    let v = cm.v;
    if is_standard(&v) {
        let sf = StandardFormCM {
            n: v[(0, 0)],
            m: v[(2, 2)],
            c1: v[(0, 2)],
            c2: v[(1, 3)],
            q_b: cm.q_b,
        };
        let report = StandardFormReport {
            t_a: Matrix2::identity(),
            t_b: Matrix2::identity(),
            squeezed: false,
            identity: true,
            residual: off_standard(&v),
        };
        return Ok((sf, report));
    }
    let (sa, n, sq_a) = normalize_block(&cm.block(0, 0))?;
    let (sb, m, sq_b) = normalize_block(&cm.block(1, 1))?;
    let c = sa * cm.block(0, 1) * sb.transpose();
    let svd = c.svd(true, true);
    let (u, flip_u) = proper(svd.u.unwrap());
    let (vt, flip_v) = proper(svd.v_t.unwrap().transpose());
    let mut c1 = svd.singular_values[0];
    let mut c2 = svd.singular_values[1];
    if flip_u != flip_v {
        c2 = -c2;
    }
    let t_a = u.transpose() * sa;
    let t_b = vt.transpose() * sb;
    let mut t = Matrix4::zeros();
    t.fixed_view_mut::<2, 2>(0, 0).copy_from(&t_a);
    t.fixed_view_mut::<2, 2>(2, 2).copy_from(&t_b);
    let out = t * v * t.transpose();
    let residual = off_standard(&out);
    let scale = v.amax().max(1.0);
    if residual > 1e-8 * scale {
        return Err(Error::NotReducible(residual));
    }
    // read back from the transformed matrix to absorb rounding
    c1 = if (out[(0, 2)] - c1).abs() < 1e-8 * scale { out[(0, 2)] } else { c1 };
    c2 = if (out[(1, 3)] - c2).abs() < 1e-8 * scale { out[(1, 3)] } else { c2 };
    let sf = StandardFormCM {
        n,
        m,
        c1,
        c2,
        q_b: cm.q_b,
    };
    Ok((
        sf,
        StandardFormReport {
            t_a,
            t_b,
            squeezed: sq_a || sq_b,
            identity: false,
            residual,
        },
    ))
}
