use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-mode Fock truncation of a tensor-product Hilbert space.
///
/// A cutoff `N` keeps levels `0..N`. Mode 0 is the most significant index
/// of the flattened basis, so `|n_0, n_1⟩` sits at `n_0 * dims[1] + n_1`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HilbertLayout {
    dims: Vec<usize>,
}

impl HilbertLayout {
    pub fn new(dims: impl Into<Vec<usize>>) -> Result<Self> {
        let dims = dims.into();
        if dims.is_empty() {
            return Err(Error::InvalidLayout("at least one mode required".into()));
        }
        if let Some(d) = dims.iter().find(|&&d| d < 2) {
            return Err(Error::InvalidLayout(format!(
                "every mode needs cutoff >= 2, got {d}"
            )));
        }
        dims.iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::InvalidLayout("total dimension overflows".into()))?;
        Ok(Self { dims })
    }

    pub fn single(cutoff: usize) -> Result<Self> {
        Self::new(vec![cutoff])
    }

    pub fn two_mode(cutoff_a: usize, cutoff_b: usize) -> Result<Self> {
        Self::new(vec![cutoff_a, cutoff_b])
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn modes(&self) -> usize {
        self.dims.len()
    }

    pub fn dim(&self, mode: usize) -> usize {
        self.dims[mode]
    }

    pub fn total_dim(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn check_mode(&self, mode: usize) -> Result<()> {
        if mode < self.dims.len() {
            Ok(())
        } else {
            Err(Error::InvalidMode {
                index: mode,
                modes: self.dims.len(),
            })
        }
    }

    /// Distance in the flat index between consecutive Fock levels of `mode`.
    pub fn stride(&self, mode: usize) -> usize {
        self.dims[mode + 1..].iter().product()
    }

    pub fn index(&self, levels: &[usize]) -> usize {
        debug_assert_eq!(levels.len(), self.dims.len());
        levels
            .iter()
            .zip(&self.dims)
            .fold(0, |acc, (&n, &d)| acc * d + n)
    }

    pub fn levels(&self, mut index: usize) -> Vec<usize> {
        let mut out = vec![0; self.dims.len()];
        for (slot, &d) in out.iter_mut().zip(&self.dims).rev() {
            *slot = index % d;
            index /= d;
        }
        out
    }

    /// Fock level of `mode` encoded in a flat index.
    #[inline]
    pub fn level_of(&self, index: usize, mode: usize) -> usize {
        (index / self.stride(mode)) % self.dims[mode]
    }

    /// Layout with every mode enlarged by `extra[m]` levels.
    pub fn padded(&self, extra: &[usize]) -> Self {
        debug_assert_eq!(extra.len(), self.dims.len());
        Self {
            dims: self.dims.iter().zip(extra).map(|(d, e)| d + e).collect(),
        }
    }

    pub fn ensure_same(&self, other: &Self) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::LayoutMismatch {
                expected: self.dims.clone(),
                found: other.dims.clone(),
            })
        }
    }

    /// Map a flat index of `self` into the flat index of a padded layout.
    pub(crate) fn embed_index(&self, index: usize, target: &Self) -> usize {
        let mut out = 0;
        let mut rest = index;
        let mut scale = 1;
        for m in (0..self.dims.len()).rev() {
            let n = rest % self.dims[m];
            rest /= self.dims[m];
            out += n * scale;
            scale *= target.dims[m];
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_small_dims() {
        assert!(HilbertLayout::new(vec![3, 1]).is_err());
        assert!(HilbertLayout::new(Vec::<usize>::new()).is_err());
    }

    #[test]
    fn index_roundtrip() {
        let l = HilbertLayout::new(vec![3, 4, 2]).unwrap();
        assert_eq!(l.total_dim(), 24);
        for i in 0..24 {
            assert_eq!(l.index(&l.levels(i)), i);
        }
        assert_eq!(l.stride(0), 8);
        assert_eq!(l.level_of(l.index(&[2, 1, 1]), 1), 1);
    }

    #[test]
    fn embedding_preserves_levels() {
        let l = HilbertLayout::new(vec![3, 4]).unwrap();
        let p = l.padded(&[2, 1]);
        for i in 0..l.total_dim() {
            assert_eq!(p.levels(l.embed_index(i, &p)), l.levels(i));
        }
    }
}
