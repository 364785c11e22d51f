use crate::psm::PairwiseSimilarityMatrix;

/// Computed off-diagonal pairs of a matrix, row by row.
#[derive(Debug, Clone)]
pub(crate) struct Band {
    pub rows: Vec<Vec<(usize, f64)>>,
    pub range: usize,
}

impl Band {
    pub fn new(psm: &PairwiseSimilarityMatrix) -> Self {
        Band {
            rows: (0..psm.n()).map(|i| psm.row(i).collect()).collect(),
            range: psm.range(),
        }
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }
}

#[inline]
pub(crate) fn clamp01(v: f64) -> f64 {
    v.clamp(0.0, 1.0)
}
