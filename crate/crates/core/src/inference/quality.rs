use rayon::prelude::*;

use super::band::Band;
use super::curve::{check_lengths, CurveSet};
use super::options::{gaussian, EstimateOptions};
use crate::error::{Error, Result};
use crate::psm::PairwiseSimilarityMatrix;

pub(crate) fn quality_band(
    band: &Band,
    curves: &CurveSet,
    c: &[f64],
    m_prev: &[f64],
    opts: &EstimateOptions,
    ws_sigma: f64,
) -> Result<Vec<f64>> {
    let lambda = opts.quality_regularization;
    band.rows
        .par_iter()
        .enumerate()
        .map(|(z, row)| {
            if row.is_empty() {
                return Err(Error::NoPairs { section: z });
            }
            let (mut num, mut den) = (0.0, 0.0);
            for &(zref, r) in row {
                let dc = c[z] - c[zref];
                let w = gaussian(dc, ws_sigma);
                let a = curves.for_reference(zref).eval(dc);
                let b = m_prev[zref] * r;
                num += w * a * b;
                den += w * b * b;
            }
            let m = if num + lambda == 0.0 && den + lambda == 0.0 {
                m_prev[z]
            } else {
                (num + lambda) / (den + lambda)
            };
            Ok(if m.is_finite() { m.clamp(1.0, opts.m_max) } else { opts.m_max })
        })
        .collect()
}

/// One damped least-squares update of every quality multiplier, with the
/// multipliers of the partners held at `m_prev`.
///
/// For section `z` this minimizes
/// `sum_w (m * m_prev[ref] * R(z, ref) - rho_ref(|c_z - c_ref|))^2 + lambda * (m - 1)^2`
/// and clamps the result to `[1, m_max]`.
pub fn estimate_quality(
    psm: &PairwiseSimilarityMatrix,
    curves: &CurveSet,
    c: &[f64],
    m_prev: &[f64],
    opts: &EstimateOptions,
) -> Result<Vec<f64>> {
    check_lengths(psm.n(), c, m_prev)?;
    let ws = opts.windows(psm.n(), psm.range()).ws_sigma;
    quality_band(&Band::new(psm), curves, c, m_prev, opts, ws)
}
