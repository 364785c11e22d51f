//! Similarity decay curves: fitting from binned pair samples, monotone
//! projection and inversion.

use rayon::prelude::*;

use super::band::{clamp01, Band};
use super::options::{gaussian, CurveMode};
use crate::error::{Error, Result};
use crate::psm::PairwiseSimilarityMatrix;

/// Similarity at integer distances `0..=range`, piecewise linear between.
///
/// Always starts at exactly 1, is non-increasing and stays in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayCurve {
    samples: Vec<f64>,
}

impl DecayCurve {
    pub fn new(samples: Vec<f64>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::InvalidArgument("a decay curve needs at least two samples".into()));
        }
        if samples[0] != 1.0 {
            return Err(Error::InvalidArgument(format!(
                "decay curve must start at 1, got {}",
                samples[0]
            )));
        }
        if samples.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidArgument("decay curve samples must lie in [0, 1]".into()));
        }
        if samples.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::InvalidArgument("decay curve must be non-increasing".into()));
        }
        Ok(DecayCurve { samples })
    }

    /// Samples `f(0), .., f(range)` of an analytic curve.
    pub fn from_fn(range: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new((0..=range).map(|d| f(d as f64)).collect())
    }

    pub fn range(&self) -> usize {
        self.samples.len() - 1
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    /// Linear interpolation at distance `d`, held constant past the range.
    #[inline]
    pub fn eval(&self, d: f64) -> f64 {
        let d = d.abs();
        let r = self.range();
        if d >= r as f64 {
            return self.samples[r];
        }
        let k = d.floor() as usize;
        let t = d - k as f64;
        if t == 0.0 {
            self.samples[k]
        } else {
            (1.0 - t) * self.samples[k] + t * self.samples[k + 1]
        }
    }

    /// Distance at which the curve reaches `value`.
    ///
    /// Values at or above 1 map to 0 and values below the last sample map
    /// to the range. A value matched by a flat stretch maps to the middle
    /// of that stretch.
    pub fn invert(&self, value: f64) -> f64 {
        let s = &self.samples;
        let r = self.range();
        if value >= 1.0 {
            return 0.0;
        }
        if value < s[r] {
            return r as f64;
        }
        // s[0] = 1 > value, so lo >= 1.
        let lo = s.iter().position(|&v| v <= value).expect("value >= last sample");
        if s[lo] == value {
            let hi = lo + s[lo..].iter().take_while(|&&v| v == value).count() - 1;
            return 0.5 * (lo + hi) as f64;
        }
        let (a, b) = (s[lo - 1], s[lo]);
        (lo - 1) as f64 + (a - value) / (a - b)
    }
}

/// Weighted pool-adjacent-violators projection onto non-increasing
/// sequences.
pub fn pav_nonincreasing(values: &[f64], weights: &[f64]) -> Vec<f64> {
    assert_eq!(values.len(), weights.len());
    // Blocks of (weighted mean, total weight, length).
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(values.len());
    for (&v, &w) in values.iter().zip(weights) {
        let mut cur = (v, w, 1usize);
        while let Some(&(pv, pw, pl)) = blocks.last() {
            if pv >= cur.0 {
                break;
            }
            blocks.pop();
            let tw = pw + cur.1;
            cur = ((pv * pw + cur.0 * cur.1) / tw, tw, pl + cur.2);
        }
        blocks.push(cur);
    }
    blocks
        .into_iter()
        .flat_map(|(v, _, len)| std::iter::repeat_n(v, len))
        .collect()
}

/// Weighted sample sums per integer distance bin.
#[derive(Debug, Clone)]
pub(crate) struct Bins {
    pub num: Vec<f64>,
    pub wt: Vec<f64>,
}

impl Bins {
    pub fn new(len: usize) -> Self {
        Bins {
            num: vec![0.0; len],
            wt: vec![0.0; len],
        }
    }

    /// Splits a sample at distance `d` between the two bracketing bins.
    #[inline]
    pub fn add(&mut self, d: f64, value: f64, weight: f64) {
        let k = d.floor() as usize;
        let t = d - k as f64;
        if t == 0.0 {
            self.num[k] += weight * value;
            self.wt[k] += weight;
        } else {
            let (w0, w1) = (weight * (1.0 - t), weight * t);
            self.num[k] += w0 * value;
            self.wt[k] += w0;
            self.num[k + 1] += w1 * value;
            self.wt[k + 1] += w1;
        }
    }

    fn add_scaled(&mut self, other: &Bins, scale: f64) {
        for k in 0..self.num.len() {
            self.num[k] += scale * other.num[k];
            self.wt[k] += scale * other.wt[k];
        }
    }

    /// Weighted bin means, gap-filled, anchored at 1 and made monotone.
    pub fn into_curve(self) -> Result<DecayCurve> {
        let len = self.num.len();
        let mut vals = vec![f64::NAN; len];
        let mut known = vec![false; len];
        let mut min_wt = f64::INFINITY;
        for k in 1..len {
            if self.wt[k] > 0.0 {
                vals[k] = self.num[k] / self.wt[k];
                known[k] = true;
                min_wt = min_wt.min(self.wt[k]);
            }
        }
        if !known.iter().any(|&k| k) {
            return Err(Error::EmptyCurve);
        }
        vals[0] = 1.0;
        known[0] = true;
        let mut prev = 0;
        for k in 1..len {
            if known[k] {
                prev = k;
                continue;
            }
            match (k + 1..len).find(|&j| known[j]) {
                Some(next) => {
                    let t = (k - prev) as f64 / (next - prev) as f64;
                    vals[k] = (1.0 - t) * vals[prev] + t * vals[next];
                }
                None => vals[k] = vals[prev],
            }
        }
        let weights: Vec<f64> = (0..len)
            .map(|k| if k > 0 && self.wt[k] > 0.0 { self.wt[k] } else { min_wt })
            .collect();
        let mut samples = pav_nonincreasing(&vals, &weights);
        samples[0] = 1.0;
        for v in &mut samples {
            *v = clamp01(*v);
        }
        Ok(DecayCurve { samples })
    }
}

/// Curves used by one solver iteration.
#[derive(Debug, Clone, PartialEq)]
pub enum CurveSet {
    Global(DecayCurve),
    /// One curve per reference section.
    Local(Vec<DecayCurve>),
}

impl CurveSet {
    #[inline]
    pub fn for_reference(&self, zref: usize) -> &DecayCurve {
        match self {
            CurveSet::Global(c) => c,
            CurveSet::Local(cs) => &cs[zref],
        }
    }

    pub fn mode(&self) -> CurveMode {
        match self {
            CurveSet::Global(_) => CurveMode::Global,
            CurveSet::Local(_) => CurveMode::Local,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &DecayCurve> {
        let slice: &[DecayCurve] = match self {
            CurveSet::Global(c) => std::slice::from_ref(c),
            CurveSet::Local(cs) => cs,
        };
        slice.iter()
    }
}

/// Bins cover every pairwise distance that currently occurs, and at least
/// the comparison range.
pub(crate) fn curve_range(band: &Band, c: &[f64]) -> usize {
    let mut max_d: f64 = 0.0;
    for (a, row) in band.rows.iter().enumerate() {
        for &(b, _) in row {
            max_d = max_d.max((c[a] - c[b]).abs());
        }
    }
    band.range.max(max_d.ceil() as usize).max(1)
}

/// Per-source bins: every ordered pair `(a, b)` lands in the bins of `a`.
pub(crate) fn source_bins(band: &Band, c: &[f64], m: &[f64], range: usize) -> Vec<Bins> {
    band.rows
        .par_iter()
        .enumerate()
        .map(|(a, row)| {
            let mut bins = Bins::new(range + 1);
            for &(b, r) in row {
                bins.add((c[a] - c[b]).abs(), clamp01(m[a] * m[b] * r), 1.0);
            }
            bins
        })
        .collect()
}

fn windowed_curve(sources: &[Bins], c: &[f64], zref: usize, wf_sigma: f64) -> Result<DecayCurve> {
    let len = sources[0].num.len();
    let mut flat = Vec::with_capacity(sources.len() * 2 * len);
    for bins in sources {
        flat.extend_from_slice(&bins.num);
        flat.extend_from_slice(&bins.wt);
    }
    windowed_curve_flat(&flat, len, c, zref, wf_sigma)
}

/// `flat` holds, per source, its `len` numerators followed by its `len`
/// weights.
fn windowed_curve_flat(flat: &[f64], len: usize, c: &[f64], zref: usize, wf_sigma: f64) -> Result<DecayCurve> {
    let mut acc = vec![0.0; 2 * len];
    for (a, src) in flat.chunks_exact(2 * len).enumerate() {
        let w = gaussian(c[a] - c[zref], wf_sigma);
        if w == 0.0 {
            continue;
        }
        for (x, &y) in acc.iter_mut().zip(src) {
            *x += w * y;
        }
    }
    let wt = acc.split_off(len);
    Bins { num: acc, wt }.into_curve()
}

pub(crate) fn fit_curves_band(
    band: &Band,
    c: &[f64],
    m: &[f64],
    mode: CurveMode,
    wf_sigma: f64,
) -> Result<CurveSet> {
    let range = curve_range(band, c);
    let sources = source_bins(band, c, m, range);
    match mode {
        CurveMode::Global => {
            let mut acc = Bins::new(range + 1);
            for bins in &sources {
                acc.add_scaled(bins, 1.0);
            }
            Ok(CurveSet::Global(acc.into_curve()?))
        }
        CurveMode::Local => {
            let len = range + 1;
            let mut flat = Vec::with_capacity(sources.len() * 2 * len);
            for bins in &sources {
                flat.extend_from_slice(&bins.num);
                flat.extend_from_slice(&bins.wt);
            }
            let curves = (0..band.n())
                .into_par_iter()
                .map(|zref| windowed_curve_flat(&flat, len, c, zref, wf_sigma))
                .collect::<Result<Vec<_>>>()?;
            Ok(CurveSet::Local(curves))
        }
    }
}

/// Fits the decay curve seen from reference section `zref`.
///
/// Each computed pair contributes its quality-corrected similarity at its
/// current distance, weighted by a Gaussian of width `wf_sigma` around the
/// reference position. Pass `f64::INFINITY` for uniform weights.
pub fn fit_decay_curve(
    psm: &PairwiseSimilarityMatrix,
    c: &[f64],
    m: &[f64],
    zref: usize,
    wf_sigma: f64,
) -> Result<DecayCurve> {
    check_lengths(psm.n(), c, m)?;
    if zref >= psm.n() {
        return Err(Error::InvalidArgument(format!("reference section {zref} out of range")));
    }
    let band = Band::new(psm);
    let range = curve_range(&band, c);
    let sources = source_bins(&band, c, m, range);
    windowed_curve(&sources, c, zref, wf_sigma)
}

/// Fits all curves for the given mode.
pub fn fit_curves(
    psm: &PairwiseSimilarityMatrix,
    c: &[f64],
    m: &[f64],
    mode: CurveMode,
    wf_sigma: f64,
) -> Result<CurveSet> {
    check_lengths(psm.n(), c, m)?;
    fit_curves_band(&Band::new(psm), c, m, mode, wf_sigma)
}

pub(crate) fn check_lengths(n: usize, c: &[f64], m: &[f64]) -> Result<()> {
    if c.len() != n || m.len() != n {
        return Err(Error::InvalidArgument(format!(
            "expected {n} coordinates and multipliers, got {} and {}",
            c.len(),
            m.len()
        )));
    }
    if c.iter().chain(m).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("coordinates and multipliers must be finite".into()));
    }
    Ok(())
}
