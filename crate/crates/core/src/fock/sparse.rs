//! Minimal compressed-sparse-row matrix over `Complex64`.
//!
//! Ladder-operator polynomials have O(1) entries per column, so every
//! operator in this crate is stored sparsely and only densified for
//! eigendecomposition of small single-mode blocks.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex64;

#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<Complex64>,
}

impl SparseMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            row_ptr: vec![0; n + 1],
            cols: Vec::new(),
            vals: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            n,
            row_ptr: (0..=n).collect(),
            cols: (0..n).collect(),
            vals: vec![Complex64::new(1.0, 0.0); n],
        }
    }

    /// Builds an `n × n` matrix, summing duplicate entries and dropping zeros.
    pub fn from_triplets<I>(n: usize, triplets: I) -> Self
    where
        I: IntoIterator<Item = (usize, usize, Complex64)>,
    {
        let mut rows: Vec<BTreeMap<usize, Complex64>> = vec![BTreeMap::new(); n];
        for (r, c, v) in triplets {
            assert!(r < n && c < n, "triplet ({r}, {c}) outside {n}x{n}");
            *rows[r].entry(c).or_default() += v;
        }
        let mut out = Self::zeros(n);
        for (r, row) in rows.into_iter().enumerate() {
            for (c, v) in row {
                if v != Complex64::default() {
                    out.cols.push(c);
                    out.vals.push(v);
                }
            }
            out.row_ptr[r + 1] = out.cols.len();
        }
        out
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, Complex64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.cols[span.clone()]
            .iter()
            .copied()
            .zip(self.vals[span].iter().copied())
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, Complex64)> + '_ {
        (0..self.n).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        self.row(r)
            .find(|&(cc, _)| cc == c)
            .map(|(_, v)| v)
            .unwrap_or_default()
    }

    pub fn matvec(&self, x: &[Complex64]) -> Vec<Complex64> {
        let mut y = vec![Complex64::default(); self.n];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[Complex64], y: &mut [Complex64]) {
        debug_assert_eq!(x.len(), self.n);
        for (r, out) in y.iter_mut().enumerate() {
            let mut acc = Complex64::default();
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.vals[k] * x[self.cols[k]];
            }
            *out = acc;
        }
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.n, other.n);
        let mut trip = Vec::new();
        for r in 0..self.n {
            let mut acc: BTreeMap<usize, Complex64> = BTreeMap::new();
            for (k, a) in self.row(r) {
                for (c, b) in other.row(k) {
                    *acc.entry(c).or_default() += a * b;
                }
            }
            trip.extend(acc.into_iter().map(|(c, v)| (r, c, v)));
        }
        Self::from_triplets(self.n, trip)
    }

    pub fn adjoint(&self) -> Self {
        Self::from_triplets(self.n, self.triplets().map(|(r, c, v)| (c, r, v.conj())))
    }

    pub fn scale(&self, s: Complex64) -> Self {
        let mut out = self.clone();
        out.vals.iter_mut().for_each(|v| *v *= s);
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.n, other.n);
        Self::from_triplets(self.n, self.triplets().chain(other.triplets()))
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(Complex64::new(-1.0, 0.0)))
    }

    /// Largest entry magnitude of `self - self†`.
    pub fn hermitian_deviation(&self) -> f64 {
        max_abs(&self.sub(&self.adjoint()))
    }

    /// Largest entry magnitude of `self + self†`.
    pub fn anti_hermitian_deviation(&self) -> f64 {
        max_abs(&self.add(&self.adjoint()))
    }

    /// Induced 1-norm (maximum absolute column sum).
    pub fn one_norm(&self) -> f64 {
        let mut col = vec![0.0; self.n];
        for (_, c, v) in self.triplets() {
            col[c] += v.norm();
        }
        col.into_iter().fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for (r, c, v) in self.triplets() {
            m[(r, c)] = v;
        }
        m
    }

    /// `Tr[self · rho]` for a dense `rho`.
    pub fn trace_product(&self, rho: &DMatrix<Complex64>) -> Complex64 {
        self.triplets().map(|(r, c, v)| v * rho[(c, r)]).sum()
    }
}

fn max_abs(m: &SparseMatrix) -> f64 {
    m.vals.iter().map(|v| v.norm()).fold(0.0, f64::max)
}
