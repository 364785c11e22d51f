//! Pairwise similarity matrices.

use crate::error::{Error, Result};

/// Symmetric `n x n` matrix of section similarities with unit diagonal.
///
/// Pairs that were never compared hold no value. `range` is the largest
/// index distance among computed pairs.
#[derive(Debug, Clone)]
pub struct PairwiseSimilarityMatrix {
    n: usize,
    range: usize,
    // NaN marks an uncomputed pair.
    values: Vec<f64>,
}

impl PairwiseSimilarityMatrix {
    /// A matrix with only the diagonal set.
    pub fn empty(n: usize) -> Self {
        let mut values = vec![f64::NAN; n * n];
        for i in 0..n {
            values[i * n + i] = 1.0;
        }
        PairwiseSimilarityMatrix {
            n,
            range: 0,
            values,
        }
    }

    /// Builds a banded matrix from `f(i, j)` for `0 < j - i <= range`.
    pub fn from_band(n: usize, range: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut psm = Self::empty(n);
        for i in 0..n {
            for j in i + 1..n.min(i + range + 1) {
                psm.set(i, j, f(i, j))?;
            }
        }
        Ok(psm)
    }

    /// Validating constructor from a dense row-major array where NaN marks
    /// an uncomputed pair. Input must already be exactly symmetric.
    pub fn from_dense(n: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n * n {
            return Err(Error::InvalidArgument(format!(
                "{n}x{n} matrix needs {} values, got {}",
                n * n,
                values.len()
            )));
        }
        let mut psm = Self::empty(n);
        for i in 0..n {
            if values[i * n + i] != 1.0 {
                return Err(Error::InvalidArgument(format!("diagonal entry {i} is not 1")));
            }
            for j in i + 1..n {
                let (a, b) = (values[i * n + j], values[j * n + i]);
                if a.is_nan() != b.is_nan() || (!a.is_nan() && a != b) {
                    return Err(Error::InvalidArgument(format!("entries ({i}, {j}) are not symmetric")));
                }
                if !a.is_nan() {
                    psm.set(i, j, a)?;
                }
            }
        }
        Ok(psm)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn range(&self) -> usize {
        self.range
    }

    /// Similarity of `(i, j)` if the pair was computed.
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        let v = self.values[i * self.n + j];
        (!v.is_nan()).then_some(v)
    }

    /// Raw value with NaN for uncomputed pairs.
    #[inline]
    pub fn raw(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    /// Sets both `(i, j)` and `(j, i)`.
    pub fn set(&mut self, i: usize, j: usize, value: f64) -> Result<()> {
        if i == j {
            return Err(Error::InvalidArgument(format!("cannot overwrite diagonal entry {i}")));
        }
        if !(-1.0..=1.0).contains(&value) {
            return Err(Error::InvalidArgument(format!(
                "similarity {value} at ({i}, {j}) outside [-1, 1]"
            )));
        }
        let n = self.n;
        self.values[i * n + j] = value;
        self.values[j * n + i] = value;
        self.range = self.range.max(i.abs_diff(j));
        Ok(())
    }

    /// Row `i` as `(j, value)` over computed off-diagonal pairs.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let n = self.n;
        self.values[i * n..(i + 1) * n]
            .iter()
            .enumerate()
            .filter(move |&(j, v)| j != i && !v.is_nan())
            .map(|(j, &v)| (j, v))
    }

    /// Number of computed off-diagonal unordered pairs.
    pub fn pair_count(&self) -> usize {
        (0..self.n).map(|i| self.row(i).filter(|&(j, _)| j > i).count()).sum()
    }

    /// Multiplies every computed off-diagonal entry by `gamma`.
    pub fn scaled(&self, gamma: f64) -> Result<Self> {
        let mut out = self.clone();
        for i in 0..self.n {
            for j in i + 1..self.n {
                if let Some(v) = self.get(i, j) {
                    out.set(i, j, v * gamma)?;
                }
            }
        }
        Ok(out)
    }

    /// Matrix of the sections listed in `order`, relabelled `0..order.len()`.
    pub fn select(&self, order: &[usize]) -> Result<Self> {
        if let Some(&bad) = order.iter().find(|&&z| z >= self.n) {
            return Err(Error::InvalidArgument(format!(
                "section index {bad} out of range for {} sections",
                self.n
            )));
        }
        let mut out = Self::empty(order.len());
        for (a, &i) in order.iter().enumerate() {
            for (b, &j) in order.iter().enumerate().skip(a + 1) {
                if i == j {
                    continue;
                }
                if let Some(v) = self.get(i, j) {
                    out.set(a, b, v)?;
                }
            }
        }
        Ok(out)
    }

    /// Checks symmetry, the unit diagonal and the value range.
    pub fn validate(&self) -> Result<()> {
        let n = self.n;
        for i in 0..n {
            if self.values[i * n + i] != 1.0 {
                return Err(Error::InvalidArgument(format!("diagonal entry {i} is not 1")));
            }
            for j in 0..n {
                let (a, b) = (self.raw(i, j), self.raw(j, i));
                if a.is_nan() != b.is_nan() || (!a.is_nan() && a != b) {
                    return Err(Error::InvalidArgument(format!("entries ({i}, {j}) are not symmetric")));
                }
                if !a.is_nan() && !(-1.0..=1.0).contains(&a) {
                    return Err(Error::InvalidArgument(format!("entry ({i}, {j}) outside [-1, 1]")));
                }
            }
        }
        Ok(())
    }
}

/// Bitwise equality of every entry; uncomputed pairs compare equal.
impl PartialEq for PairwiseSimilarityMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n
            && self.range == other.range
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(a, b)| a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan()))
    }
}
