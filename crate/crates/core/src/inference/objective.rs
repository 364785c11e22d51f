use rayon::prelude::*;

use super::band::{clamp01, Band};
use super::curve::{check_lengths, CurveSet};
use super::options::{gaussian, EstimateOptions, Windows};
use super::shifts::vote;
use crate::error::{Error, Result};
use crate::psm::PairwiseSimilarityMatrix;

/// The three residual terms of the joint fit, reported separately.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ObjectiveTerms {
    /// Curve fit against quality-corrected samples, windowed by `w_f`.
    pub curve_fit: f64,
    /// Quality-corrected similarity against the curve at current distance.
    pub quality: f64,
    /// Shifts against their position votes, windowed by `w_s`.
    pub shift: f64,
}

impl ObjectiveTerms {
    pub fn total(&self) -> f64 {
        self.curve_fit + self.quality + self.shift
    }
}

fn curve_fit_term(band: &Band, curves: &CurveSet, c: &[f64], m: &[f64], wf_sigma: f64) -> f64 {
    match curves {
        CurveSet::Global(curve) => {
            let mut acc = 0.0;
            for (a, row) in band.rows.iter().enumerate() {
                for &(b, r) in row {
                    let e = curve.eval(c[a] - c[b]) - clamp01(m[a] * m[b] * r);
                    acc += e * e;
                }
            }
            acc
        }
        CurveSet::Local(list) => {
            let len = list[0].samples().len();
            let stats: Vec<Vec<f64>> = band
                .rows
                .par_iter()
                .enumerate()
                .map(|(a, row)| residual_stats(row, a, c, m, len))
                .collect();
            list.par_iter()
                .enumerate()
                .map(|(zref, curve)| {
                    let mut acc = vec![0.0; 5 * len + 1];
                    for (a, st) in stats.iter().enumerate() {
                        let w = gaussian(c[a] - c[zref], wf_sigma);
                        if w == 0.0 {
                            continue;
                        }
                        for (x, &y) in acc.iter_mut().zip(st) {
                            *x += w * y;
                        }
                    }
                    squared_residual(&acc, curve.samples())
                })
                .collect::<Vec<f64>>()
                .into_iter()
                .sum()
        }
    }
}

/// Sufficient statistics of `sum_b (rho(d_ab) - v_ab)^2` for a piecewise
/// linear `rho` with `len` samples: per lower bin `k` the sums of
/// `(1-t)^2`, `t(1-t)`, `t^2`, `(1-t) v`, `t v`, then `sum v^2`.
fn residual_stats(row: &[(usize, f64)], a: usize, c: &[f64], m: &[f64], len: usize) -> Vec<f64> {
    let mut st = vec![0.0; 5 * len + 1];
    let last = (len - 1) as f64;
    for &(b, r) in row {
        let v = clamp01(m[a] * m[b] * r);
        let d = (c[a] - c[b]).abs().min(last);
        let k = (d.floor() as usize).min(len - 1);
        let t = d - k as f64;
        let u = 1.0 - t;
        st[k] += u * u;
        st[len + k] += t * u;
        st[2 * len + k] += t * t;
        st[3 * len + k] += u * v;
        st[4 * len + k] += t * v;
        st[5 * len] += v * v;
    }
    st
}

fn squared_residual(st: &[f64], rho: &[f64]) -> f64 {
    let len = rho.len();
    let mut acc = st[5 * len];
    for k in 0..len {
        let r0 = rho[k];
        let r1 = rho[(k + 1).min(len - 1)];
        acc += r0 * r0 * st[k] + 2.0 * r0 * r1 * st[len + k] + r1 * r1 * st[2 * len + k]
            - 2.0 * (r0 * st[3 * len + k] + r1 * st[4 * len + k]);
    }
    acc.max(0.0)
}

pub(crate) fn objective_band(
    band: &Band,
    curves: &CurveSet,
    c: &[f64],
    m: &[f64],
    s: &[f64],
    windows: Windows,
) -> ObjectiveTerms {
    let curve_fit = curve_fit_term(band, curves, c, m, windows.wf_sigma);
    let per_section: Vec<(f64, f64)> = band
        .rows
        .par_iter()
        .enumerate()
        .map(|(z, row)| {
            let (mut q, mut sh) = (0.0, 0.0);
            for &(zref, r) in row {
                let dc = c[z] - c[zref];
                let e = m[zref] * m[z] * r - curves.for_reference(zref).eval(dc);
                q += e * e;
                let e = s[z] - vote(curves, c, m, z, zref, r);
                sh += gaussian(dc, windows.ws_sigma) * e * e;
            }
            (q, sh)
        })
        .collect();
    ObjectiveTerms {
        curve_fit,
        quality: per_section.iter().map(|t| t.0).sum(),
        shift: per_section.iter().map(|t| t.1).sum(),
    }
}

/// Value of the joint least-squares objective for the given state.
/// Diagnostic only; the solver does not minimize it directly.
pub fn objective(
    psm: &PairwiseSimilarityMatrix,
    curves: &CurveSet,
    c: &[f64],
    m: &[f64],
    s: &[f64],
    opts: &EstimateOptions,
) -> Result<ObjectiveTerms> {
    check_lengths(psm.n(), c, m)?;
    if s.len() != psm.n() {
        return Err(Error::InvalidArgument(format!("expected {} shifts, got {}", psm.n(), s.len())));
    }
    let windows = opts.windows(psm.n(), psm.range());
    Ok(objective_band(&Band::new(psm), curves, c, m, s, windows))
}
