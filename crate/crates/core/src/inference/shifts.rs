use rayon::prelude::*;

use super::band::{clamp01, Band};
use super::curve::{check_lengths, CurveSet};
use super::options::{gaussian, EstimateOptions};
use crate::error::{Error, Result};
use crate::psm::PairwiseSimilarityMatrix;

/// Smallest gap kept between neighbours when reordering is disabled.
pub const MIN_ORDER_GAP: f64 = 1e-4;

/// Smallest coordinate span that can be renormalized.
pub const MIN_SPAN: f64 = 1e-9;

/// Position vote of reference `zref` for section `z`: where `z` belongs
/// given the measured similarity, minus where it is now.
#[inline]
pub(crate) fn vote(curves: &CurveSet, c: &[f64], m: &[f64], z: usize, zref: usize, r: f64) -> f64 {
    let d = curves.for_reference(zref).invert(clamp01(m[z] * m[zref] * r));
    let side = if c[z] > c[zref] {
        1.0
    } else if c[z] < c[zref] {
        -1.0
    } else if z > zref {
        1.0
    } else {
        -1.0
    };
    c[zref] + side * d - c[z]
}

pub(crate) fn shifts_band(
    band: &Band,
    curves: &CurveSet,
    c: &[f64],
    m: &[f64],
    ws_sigma: f64,
) -> Vec<f64> {
    band.rows
        .par_iter()
        .enumerate()
        .map(|(z, row)| {
            let (mut num, mut den) = (0.0, 0.0);
            for &(zref, r) in row {
                let w = gaussian(c[z] - c[zref], ws_sigma);
                num += w * vote(curves, c, m, z, zref, r);
                den += w;
            }
            if den > 0.0 {
                num / den
            } else {
                0.0
            }
        })
        .collect()
}

/// Weighted mean position vote of every section.
pub fn compute_shifts(
    psm: &PairwiseSimilarityMatrix,
    curves: &CurveSet,
    c: &[f64],
    m: &[f64],
    opts: &EstimateOptions,
) -> Result<Vec<f64>> {
    check_lengths(psm.n(), c, m)?;
    let ws = opts.windows(psm.n(), psm.range()).ws_sigma;
    Ok(shifts_band(&Band::new(psm), curves, c, m, ws))
}

/// Maps `c` affinely onto `[0, n - 1]`.
pub fn renormalize(c: &mut [f64]) -> Result<()> {
    let (mut lo, mut hi) = (0, 0);
    for i in 0..c.len() {
        if c[i] < c[lo] {
            lo = i;
        }
        if c[i] > c[hi] {
            hi = i;
        }
    }
    let span = c[hi] - c[lo];
    if !(span >= MIN_SPAN) {
        return Err(Error::DegenerateCollapse { span });
    }
    let min = c[lo];
    let scale = (c.len() - 1) as f64 / span;
    for v in c.iter_mut() {
        *v = (*v - min) * scale;
    }
    c[lo] = 0.0;
    c[hi] = (c.len() - 1) as f64;
    Ok(())
}

/// Applies damped shifts, keeps the current order if reordering is off,
/// and renormalizes so the series neither moves nor scales.
pub fn apply_shifts(c: &[f64], s: &[f64], opts: &EstimateOptions) -> Result<Vec<f64>> {
    if c.len() != s.len() {
        return Err(Error::InvalidArgument(format!(
            "{} coordinates but {} shifts",
            c.len(),
            s.len()
        )));
    }
    let mut next: Vec<f64> = c
        .iter()
        .zip(s)
        .map(|(&c, &s)| c + opts.shift_damping * s)
        .collect();
    if !opts.allow_reorder {
        let mut order: Vec<usize> = (0..c.len()).collect();
        order.sort_by(|&a, &b| c[a].total_cmp(&c[b]).then(a.cmp(&b)));
        for k in 1..order.len() {
            let (prev, cur) = (order[k - 1], order[k]);
            if next[cur] < next[prev] + MIN_ORDER_GAP {
                next[cur] = next[prev] + MIN_ORDER_GAP;
            }
        }
    }
    if next.iter().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateCollapse { span: f64::NAN });
    }
    renormalize(&mut next)?;
    Ok(next)
}
