use num_complex::Complex64;

use super::layout::HilbertLayout;
use super::sparse::SparseMatrix;
use crate::error::{Error, Result};

/// Tolerance on `‖M − M†‖_max` for an operator to count as Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-10;

/// A linear operator on a truncated multi-mode Fock space.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeOperator {
    layout: HilbertLayout,
    matrix: SparseMatrix,
    hermitian: bool,
}

impl ModeOperator {
    pub fn from_matrix(layout: HilbertLayout, matrix: SparseMatrix) -> Result<Self> {
        if matrix.dim() != layout.total_dim() {
            return Err(Error::InvalidParameter(format!(
                "matrix dimension {} does not match layout dimension {}",
                matrix.dim(),
                layout.total_dim()
            )));
        }
        Ok(Self {
            layout,
            matrix,
            hermitian: false,
        })
    }

    pub fn identity(layout: &HilbertLayout) -> Self {
        Self {
            matrix: SparseMatrix::identity(layout.total_dim()),
            layout: layout.clone(),
            hermitian: true,
        }
    }

    /// Embeds a single-mode matrix acting on `mode`, identity elsewhere.
    pub fn embed(layout: &HilbertLayout, mode: usize, local: &SparseMatrix) -> Result<Self> {
        layout.check_mode(mode)?;
        let d = layout.dim(mode);
        if local.dim() != d {
            return Err(Error::InvalidParameter(format!(
                "local operator has dimension {}, mode {mode} has cutoff {d}",
                local.dim()
            )));
        }
        let stride = layout.stride(mode);
        let total = layout.total_dim();
        // entries of each local column
        let mut by_col: Vec<Vec<(usize, Complex64)>> = vec![Vec::new(); d];
        for (r, c, v) in local.triplets() {
            by_col[c].push((r, v));
        }
        let mut trip = Vec::with_capacity(local.nnz() * (total / d));
        for col in 0..total {
            let n = layout.level_of(col, mode);
            let base = col - n * stride;
            trip.extend(by_col[n].iter().map(|&(r, v)| (base + r * stride, col, v)));
        }
        Ok(Self {
            layout: layout.clone(),
            matrix: SparseMatrix::from_triplets(total, trip),
            hermitian: false,
        })
    }

    /// Annihilation operator on `mode`: `⟨n−1|a|n⟩ = √n`.
    pub fn ladder(layout: &HilbertLayout, mode: usize) -> Result<Self> {
        Self::ladder_power(layout, mode, 1)
    }

    pub fn creation(layout: &HilbertLayout, mode: usize) -> Result<Self> {
        Ok(Self::ladder(layout, mode)?.adjoint())
    }

    /// `a^k` on `mode`, built directly from `⟨n−k|a^k|n⟩ = √(n!/(n−k)!)`.
    pub fn ladder_power(layout: &HilbertLayout, mode: usize, k: usize) -> Result<Self> {
        layout.check_mode(mode)?;
        let local = local_ladder_power(layout.dim(mode), k);
        Self::embed(layout, mode, &local)
    }

    pub fn number(layout: &HilbertLayout, mode: usize) -> Result<Self> {
        layout.check_mode(mode)?;
        let d = layout.dim(mode);
        let local =
            SparseMatrix::from_triplets(d, (0..d).map(|n| (n, n, Complex64::new(n as f64, 0.0))));
        Ok(Self::embed(layout, mode, &local)?.with_hermitian_flag())
    }

    pub fn layout(&self) -> &HilbertLayout {
        &self.layout
    }

    pub fn matrix(&self) -> &SparseMatrix {
        &self.matrix
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    /// Checks `‖M − M†‖_max < 1e−10` and sets the Hermitian flag.
    pub fn into_hermitian(mut self) -> Result<Self> {
        let dev = self.matrix.hermitian_deviation();
        if dev >= HERMITIAN_TOL {
            return Err(Error::NotHermitian(dev));
        }
        self.hermitian = true;
        Ok(self)
    }

    fn with_hermitian_flag(mut self) -> Self {
        self.hermitian = true;
        self
    }

    pub fn adjoint(&self) -> Self {
        Self {
            layout: self.layout.clone(),
            matrix: self.matrix.adjoint(),
            hermitian: self.hermitian,
        }
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self {
            layout: self.layout.clone(),
            matrix: self.matrix.scale(s),
            hermitian: self.hermitian && s.im == 0.0,
        }
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.layout.ensure_same(&other.layout)?;
        Ok(Self {
            layout: self.layout.clone(),
            matrix: self.matrix.matmul(&other.matrix),
            hermitian: false,
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.layout.ensure_same(&other.layout)?;
        Ok(Self {
            layout: self.layout.clone(),
            matrix: self.matrix.add(&other.matrix),
            hermitian: self.hermitian && other.hermitian,
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.layout.ensure_same(&other.layout)?;
        Ok(Self {
            layout: self.layout.clone(),
            matrix: self.matrix.sub(&other.matrix),
            hermitian: self.hermitian && other.hermitian,
        })
    }

    /// `[self, other]`
    pub fn commutator(&self, other: &Self) -> Result<Self> {
        self.mul(other)?.sub(&other.mul(self)?)
    }

    pub fn apply(&self, amps: &[Complex64]) -> Vec<Complex64> {
        self.matrix.matvec(amps)
    }
}

/// Single-mode `a^k` on a cutoff-`d` space.
pub(crate) fn local_ladder_power(d: usize, k: usize) -> SparseMatrix {
    SparseMatrix::from_triplets(
        d,
        (k..d).map(|n| {
            let v: f64 = ((n - k + 1)..=n).map(|j| j as f64).product::<f64>().sqrt();
            (n - k, n, Complex64::new(v, 0.0))
        }),
    )
}
