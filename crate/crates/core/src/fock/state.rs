use std::borrow::Cow;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::eig::{hermitian_eig_dense, hermitian_eigenvalues};
use super::layout::HilbertLayout;
use super::operator::ModeOperator;
use super::sparse::SparseMatrix;
use crate::error::{Error, Result};

/// Population of a mode's top Fock level above which results carry a warning.
pub const LEAKAGE_WARN: f64 = 1e-6;

/// Population of a mode's top Fock level above which results are rejected.
pub const LEAKAGE_FAIL: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncationWarning {
    pub mode: usize,
    pub population: f64,
}

/// Pure state on a truncated Fock layout.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    layout: HilbertLayout,
    amps: Vec<Complex64>,
}

impl StateVector {
    pub fn new(layout: HilbertLayout, amps: Vec<Complex64>) -> Result<Self> {
        if amps.len() != layout.total_dim() {
            return Err(Error::InvalidParameter(format!(
                "{} amplitudes for a layout of dimension {}",
                amps.len(),
                layout.total_dim()
            )));
        }
        Ok(Self { layout, amps })
    }

    pub fn fock(layout: &HilbertLayout, levels: &[usize]) -> Result<Self> {
        if levels.len() != layout.modes() || levels.iter().zip(layout.dims()).any(|(n, d)| n >= d) {
            return Err(Error::InvalidParameter(format!(
                "Fock levels {levels:?} outside layout {:?}",
                layout.dims()
            )));
        }
        let mut amps = vec![Complex64::default(); layout.total_dim()];
        amps[layout.index(levels)] = Complex64::new(1.0, 0.0);
        Ok(Self {
            layout: layout.clone(),
            amps,
        })
    }

    pub fn vacuum(layout: &HilbertLayout) -> Self {
        Self::fock(layout, &vec![0; layout.modes()]).expect("vacuum fits every layout")
    }

    pub fn layout(&self) -> &HilbertLayout {
        &self.layout
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amps
    }

    pub fn norm(&self) -> f64 {
        norm(&self.amps)
    }

    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm();
        if n < 1e-300 {
            return Err(Error::Degenerate("cannot normalize the zero vector".into()));
        }
        Ok(Self {
            layout: self.layout.clone(),
            amps: self.amps.iter().map(|a| a / n).collect(),
        })
    }

    /// `⟨self|other⟩`
    pub fn inner(&self, other: &Self) -> Result<Complex64> {
        self.layout.ensure_same(&other.layout)?;
        Ok(dot(&self.amps, &other.amps))
    }

    pub fn expectation(&self, op: &ModeOperator) -> Result<Complex64> {
        self.layout.ensure_same(op.layout())?;
        let v = expectation_value(op, dot(&self.amps, &op.apply(&self.amps)));
        Ok(v)
    }

    /// Marginal Fock distribution of one mode.
    pub fn mode_populations(&self, mode: usize) -> Result<Vec<f64>> {
        self.layout.check_mode(mode)?;
        let mut p = vec![0.0; self.layout.dim(mode)];
        for (i, a) in self.amps.iter().enumerate() {
            p[self.layout.level_of(i, mode)] += a.norm_sqr();
        }
        Ok(p)
    }

    /// Summed probability of each mode's top Fock level.
    pub fn tail_populations(&self) -> Vec<f64> {
        (0..self.layout.modes())
            .map(|m| *self.mode_populations(m).unwrap().last().unwrap())
            .collect()
    }

    pub fn truncation_warnings(&self) -> Vec<TruncationWarning> {
        warnings_from(&self.tail_populations())
    }

    /// Same state embedded in a layout with extra empty levels.
    pub fn padded(&self, extra: &[usize]) -> Self {
        let target = self.layout.padded(extra);
        let mut amps = vec![Complex64::default(); target.total_dim()];
        for (i, a) in self.amps.iter().enumerate() {
            amps[self.layout.embed_index(i, &target)] = *a;
        }
        Self {
            layout: target,
            amps,
        }
    }

    pub fn to_density(&self) -> DensityOperator {
        DensityOperator {
            layout: self.layout.clone(),
            repr: Repr::Ensemble(vec![self.amps.clone()]),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Repr {
    Dense(DMatrix<Complex64>),
    /// `ρ = Σ_c |v_c⟩⟨v_c|` with unnormalized components.
    Ensemble(Vec<Vec<Complex64>>),
}

/// Mixed state on a truncated Fock layout.
///
/// Stored either densely or as a sum of unnormalized pure components. The
/// component form keeps channels and measurements linear in the state
/// dimension, which is what makes two-mode sweeps at cutoff 30+ cheap.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityOperator {
    layout: HilbertLayout,
    repr: Repr,
}

impl From<StateVector> for DensityOperator {
    fn from(s: StateVector) -> Self {
        DensityOperator {
            layout: s.layout,
            repr: Repr::Ensemble(vec![s.amps]),
        }
    }
}

impl From<&StateVector> for DensityOperator {
    fn from(s: &StateVector) -> Self {
        s.to_density()
    }
}

impl DensityOperator {
    /// Dense constructor; requires a Hermitian square matrix.
    pub fn from_matrix(layout: HilbertLayout, matrix: DMatrix<Complex64>) -> Result<Self> {
        let d = layout.total_dim();
        if matrix.nrows() != d || matrix.ncols() != d {
            return Err(Error::InvalidParameter(format!(
                "density matrix is {}x{}, layout needs {d}x{d}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let dev = max_abs(&(&matrix - matrix.adjoint()));
        if dev >= 1e-10 {
            return Err(Error::NotHermitian(dev));
        }
        Ok(Self {
            layout,
            repr: Repr::Dense(matrix),
        })
    }

    /// `ρ = Σ_c |v_c⟩⟨v_c|`; component norms carry the weights.
    pub fn from_components(layout: HilbertLayout, components: Vec<Vec<Complex64>>) -> Result<Self> {
        let d = layout.total_dim();
        if let Some(v) = components.iter().find(|v| v.len() != d) {
            return Err(Error::InvalidParameter(format!(
                "component of length {} for layout dimension {d}",
                v.len()
            )));
        }
        Ok(Self {
            layout,
            repr: Repr::Ensemble(components),
        })
    }

    /// Convex combination `Σ w_i ρ_i` (weights need not be normalized).
    pub fn mixture(parts: &[(f64, &DensityOperator)]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidParameter("empty mixture".into()))?;
        let layout = first.1.layout.clone();
        if parts.iter().any(|(w, _)| *w < 0.0 || !w.is_finite()) {
            return Err(Error::InvalidParameter("mixture weights must be >= 0".into()));
        }
        for (_, r) in parts {
            layout.ensure_same(&r.layout)?;
        }
        if parts.iter().all(|(_, r)| matches!(r.repr, Repr::Ensemble(_))) {
            let mut comps = Vec::new();
            for (w, r) in parts {
                if *w == 0.0 {
                    continue;
                }
                let s = w.sqrt();
                for v in r.components().unwrap() {
                    comps.push(v.iter().map(|a| a * s).collect());
                }
            }
            return Self::from_components(layout, comps);
        }
        let d = layout.total_dim();
        let mut m = DMatrix::zeros(d, d);
        for (w, r) in parts {
            m += r.to_dense() * Complex64::new(*w, 0.0);
        }
        Ok(Self {
            layout,
            repr: Repr::Dense(m),
        })
    }

    pub fn layout(&self) -> &HilbertLayout {
        &self.layout
    }

    pub(crate) fn components(&self) -> Option<&[Vec<Complex64>]> {
        match &self.repr {
            Repr::Ensemble(c) => Some(c),
            Repr::Dense(_) => None,
        }
    }

    /// Pure components `v_c` with `ρ = Σ_c |v_c⟩⟨v_c|`; dense states are
    /// eigendecomposed, dropping non-positive eigenvalues.
    pub(crate) fn component_vectors(&self) -> Cow<'_, [Vec<Complex64>]> {
        match &self.repr {
            Repr::Ensemble(c) => Cow::Borrowed(c),
            Repr::Dense(m) => {
                let e = hermitian_eig_dense(m);
                let top = e.values.iter().cloned().fold(0.0, f64::max);
                let comps = e
                    .values
                    .iter()
                    .enumerate()
                    .filter(|(_, &l)| l > 1e-15 * top)
                    .map(|(j, &l)| e.vectors.column(j).iter().map(|z| z * l.sqrt()).collect())
                    .collect();
                Cow::Owned(comps)
            }
        }
    }

    pub fn component_count(&self) -> Option<usize> {
        self.components().map(|c| c.len())
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        match &self.repr {
            Repr::Dense(m) => m.clone(),
            Repr::Ensemble(comps) => {
                let d = self.layout.total_dim();
                let mut m = DMatrix::zeros(d, d);
                for v in comps {
                    for i in 0..d {
                        if v[i] == Complex64::default() {
                            continue;
                        }
                        for j in 0..d {
                            m[(i, j)] += v[i] * v[j].conj();
                        }
                    }
                }
                m
            }
        }
    }

    pub fn trace(&self) -> f64 {
        match &self.repr {
            Repr::Dense(m) => m.diagonal().iter().map(|z| z.re).sum(),
            Repr::Ensemble(c) => c.iter().map(|v| norm_sqr(v)).sum(),
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        let repr = match &self.repr {
            Repr::Dense(m) => Repr::Dense(m * Complex64::new(s, 0.0)),
            Repr::Ensemble(c) => {
                let r = s.sqrt();
                Repr::Ensemble(c.iter().map(|v| v.iter().map(|a| a * r).collect()).collect())
            }
        };
        Self {
            layout: self.layout.clone(),
            repr,
        }
    }

    pub fn normalized(&self) -> Result<Self> {
        let t = self.trace();
        if t < 1e-300 {
            return Err(Error::Degenerate("state has zero trace".into()));
        }
        Ok(self.scaled(1.0 / t))
    }

    pub fn is_normalized(&self) -> bool {
        (self.trace() - 1.0).abs() < 1e-9
    }

    pub fn hermitian_deviation(&self) -> f64 {
        match &self.repr {
            Repr::Dense(m) => max_abs(&(m - m.adjoint())),
            Repr::Ensemble(_) => 0.0,
        }
    }

    pub fn expectation(&self, op: &ModeOperator) -> Result<Complex64> {
        self.layout.ensure_same(op.layout())?;
        let raw = match &self.repr {
            Repr::Dense(m) => op.matrix().trace_product(m),
            Repr::Ensemble(c) => c.iter().map(|v| dot(v, &op.apply(v))).sum(),
        };
        Ok(expectation_value(op, raw))
    }

    /// `Tr[ρ A B]`.
    pub fn correlation(&self, a: &ModeOperator, b: &ModeOperator) -> Result<Complex64> {
        self.layout.ensure_same(a.layout())?;
        self.layout.ensure_same(b.layout())?;
        Ok(match &self.repr {
            Repr::Dense(m) => a.mul(b)?.matrix().trace_product(m),
            Repr::Ensemble(c) => {
                let adag = a.adjoint();
                c.iter()
                    .map(|v| dot(&adag.apply(v), &b.apply(v)))
                    .sum()
            }
        })
    }

    pub fn purity(&self) -> f64 {
        match &self.repr {
            Repr::Dense(m) => (m * m).trace().re,
            Repr::Ensemble(c) => {
                // Tr ρ² = Σ_{ij} |⟨v_i|v_j⟩|²
                let mut s = 0.0;
                for vi in c {
                    for vj in c {
                        s += dot(vi, vj).norm_sqr();
                    }
                }
                s
            }
        }
    }

    /// Smallest eigenvalue; ensemble states are positive by construction.
    pub fn min_eigenvalue(&self) -> f64 {
        match &self.repr {
            Repr::Dense(m) => hermitian_eigenvalues(m)[0],
            Repr::Ensemble(c) => {
                if c.len() < self.layout.total_dim() {
                    0.0
                } else {
                    hermitian_eigenvalues(&self.to_dense())[0]
                }
            }
        }
    }

    pub fn mode_populations(&self, mode: usize) -> Result<Vec<f64>> {
        self.layout.check_mode(mode)?;
        let mut p = vec![0.0; self.layout.dim(mode)];
        match &self.repr {
            Repr::Dense(m) => {
                for i in 0..self.layout.total_dim() {
                    p[self.layout.level_of(i, mode)] += m[(i, i)].re;
                }
            }
            Repr::Ensemble(c) => {
                for v in c {
                    for (i, a) in v.iter().enumerate() {
                        p[self.layout.level_of(i, mode)] += a.norm_sqr();
                    }
                }
            }
        }
        Ok(p)
    }

    pub fn tail_populations(&self) -> Vec<f64> {
        let t = self.trace().max(1e-300);
        (0..self.layout.modes())
            .map(|m| self.mode_populations(m).unwrap().last().unwrap() / t)
            .collect()
    }

    pub fn truncation_warnings(&self) -> Vec<TruncationWarning> {
        warnings_from(&self.tail_populations())
    }

    /// Reduced state on the modes in `keep` (sorted, deduplicated internally).
    pub fn partial_trace(&self, keep: &[usize]) -> Result<Self> {
        if keep.is_empty() {
            return Err(Error::InvalidParameter("partial trace needs a nonempty keep set".into()));
        }
        let mut keep = keep.to_vec();
        keep.sort_unstable();
        keep.dedup();
        for &m in &keep {
            self.layout.check_mode(m)?;
        }
        let kept = HilbertLayout::new(keep.iter().map(|&m| self.layout.dim(m)).collect::<Vec<_>>())?;
        let traced: Vec<usize> = (0..self.layout.modes()).filter(|m| !keep.contains(m)).collect();
        if traced.is_empty() {
            return Ok(self.clone());
        }
        let traced_layout =
            HilbertLayout::new(traced.iter().map(|&m| self.layout.dim(m)).collect::<Vec<_>>())?;
        // flat index of (kept levels, traced levels) in the full layout
        let full_index = |ki: usize, ti: usize| -> usize {
            let kl = kept.levels(ki);
            let tl = traced_layout.levels(ti);
            let mut levels = vec![0; self.layout.modes()];
            for (j, &m) in keep.iter().enumerate() {
                levels[m] = kl[j];
            }
            for (j, &m) in traced.iter().enumerate() {
                levels[m] = tl[j];
            }
            self.layout.index(&levels)
        };
        let dk = kept.total_dim();
        let dt = traced_layout.total_dim();
        let map: Vec<Vec<usize>> = (0..dk).map(|k| (0..dt).map(|t| full_index(k, t)).collect()).collect();
        let mut out = DMatrix::zeros(dk, dk);
        match &self.repr {
            Repr::Dense(m) => {
                for i in 0..dk {
                    for j in 0..dk {
                        out[(i, j)] = (0..dt).map(|t| m[(map[i][t], map[j][t])]).sum();
                    }
                }
            }
            Repr::Ensemble(c) => {
                for v in c {
                    for t in 0..dt {
                        for i in 0..dk {
                            let vi = v[map[i][t]];
                            if vi == Complex64::default() {
                                continue;
                            }
                            for j in 0..dk {
                                out[(i, j)] += vi * v[map[j][t]].conj();
                            }
                        }
                    }
                }
            }
        }
        Ok(Self {
            layout: kept,
            repr: Repr::Dense(out),
        })
    }

    /// Same state embedded in a layout with extra empty levels.
    pub fn padded(&self, extra: &[usize]) -> Self {
        let target = self.layout.padded(extra);
        let embed = |i: usize| self.layout.embed_index(i, &target);
        let repr = match &self.repr {
            Repr::Dense(m) => {
                let d = target.total_dim();
                let mut out = DMatrix::zeros(d, d);
                for i in 0..m.nrows() {
                    for j in 0..m.ncols() {
                        out[(embed(i), embed(j))] = m[(i, j)];
                    }
                }
                Repr::Dense(out)
            }
            Repr::Ensemble(c) => Repr::Ensemble(
                c.iter()
                    .map(|v| {
                        let mut out = vec![Complex64::default(); target.total_dim()];
                        for (i, a) in v.iter().enumerate() {
                            out[embed(i)] = *a;
                        }
                        out
                    })
                    .collect(),
            ),
        };
        Self {
            layout: target,
            repr,
        }
    }

    /// `O ρ O†` (not renormalized).
    pub fn sandwich(&self, op: &ModeOperator) -> Result<Self> {
        self.layout.ensure_same(op.layout())?;
        let repr = match &self.repr {
            Repr::Dense(m) => {
                let o = op.matrix().to_dense();
                Repr::Dense(&o * m * o.adjoint())
            }
            Repr::Ensemble(c) => Repr::Ensemble(c.iter().map(|v| op.apply(v)).collect()),
        };
        Ok(Self {
            layout: self.layout.clone(),
            repr,
        })
    }

    /// `Σ_j K_j ρ K_j†` with single-mode Kraus operators acting on `mode`.
    pub fn apply_local_kraus(&self, mode: usize, kraus: &[SparseMatrix]) -> Result<Self> {
        self.layout.check_mode(mode)?;
        let d = self.layout.dim(mode);
        if kraus.iter().any(|k| k.dim() != d) {
            return Err(Error::InvalidParameter("Kraus operator dimension mismatch".into()));
        }
        let repr = match &self.repr {
            Repr::Ensemble(c) => {
                let mut out = Vec::with_capacity(c.len() * kraus.len());
                for k in kraus {
                    for v in c {
                        let w = apply_local(&self.layout, mode, k, v);
                        if norm_sqr(&w) > 1e-30 {
                            out.push(w);
                        }
                    }
                }
                Repr::Ensemble(out)
            }
            Repr::Dense(m) => {
                let dim = self.layout.total_dim();
                let mut out = DMatrix::zeros(dim, dim);
                for k in kraus {
                    let op = ModeOperator::embed(&self.layout, mode, k)?;
                    let kd = op.matrix().to_dense();
                    out += &kd * m * kd.adjoint();
                }
                Repr::Dense(out)
            }
        };
        Ok(Self {
            layout: self.layout.clone(),
            repr,
        })
    }
}

/// Applies a single-mode matrix to `mode` of a flat amplitude vector.
pub(crate) fn apply_local(
    layout: &HilbertLayout,
    mode: usize,
    local: &SparseMatrix,
    v: &[Complex64],
) -> Vec<Complex64> {
    let stride = layout.stride(mode);
    let d = layout.dim(mode);
    let mut by_col: Vec<Vec<(usize, Complex64)>> = vec![Vec::new(); d];
    for (r, c, val) in local.triplets() {
        by_col[c].push((r, val));
    }
    let mut out = vec![Complex64::default(); v.len()];
    for (i, &a) in v.iter().enumerate() {
        if a == Complex64::default() {
            continue;
        }
        let n = (i / stride) % d;
        let base = i - n * stride;
        for &(r, val) in &by_col[n] {
            out[base + r * stride] += val * a;
        }
    }
    out
}

/// Fails on populations above [`LEAKAGE_FAIL`], otherwise returns the warnings.
pub fn check_leakage(tails: &[f64]) -> Result<Vec<TruncationWarning>> {
    if let Some((mode, &population)) = tails.iter().enumerate().find(|(_, &p)| p > LEAKAGE_FAIL) {
        return Err(Error::TruncationLeak {
            mode,
            population,
            limit: LEAKAGE_FAIL,
        });
    }
    Ok(warnings_from(tails))
}

fn warnings_from(tails: &[f64]) -> Vec<TruncationWarning> {
    tails
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > LEAKAGE_WARN)
        .map(|(mode, &population)| TruncationWarning { mode, population })
        .collect()
}

fn expectation_value(op: &ModeOperator, raw: Complex64) -> Complex64 {
    if op.is_hermitian() {
        Complex64::new(raw.re, 0.0)
    } else {
        raw
    }
}

pub(crate) fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub(crate) fn norm_sqr(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

pub(crate) fn norm(v: &[Complex64]) -> f64 {
    norm_sqr(v).sqrt()
}

fn max_abs(m: &DMatrix<Complex64>) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}
