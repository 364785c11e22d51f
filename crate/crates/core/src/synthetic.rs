//! Ground-truth generators for validating the estimator: similarity
//! matrices from a known decay model, smooth random volumes sampled at
//! known positions, section removal and bounded reordering, plus the
//! deviation and rank measures used to score estimates.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{Error, Result};
use crate::inference::DecayCurve;
use crate::psm::PairwiseSimilarityMatrix;
use crate::stack::{ImageStack, StackData};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// True similarity as a function of distance.
#[derive(Debug, Clone, PartialEq)]
pub enum Decay {
    /// `exp(-d / tau)`
    Exponential { tau: f64 },
    /// `exp(-d^2 / (2 sigma^2))`
    Gaussian { sigma: f64 },
    /// Piecewise linear through the curve samples.
    Sampled(DecayCurve),
}

impl Decay {
    pub fn eval(&self, d: f64) -> f64 {
        let d = d.abs();
        match self {
            Decay::Exponential { tau } => (-d / tau).exp(),
            Decay::Gaussian { sigma } => (-(d * d) / (2.0 * sigma * sigma)).exp(),
            Decay::Sampled(curve) => curve.eval(d),
        }
    }

    /// Parses `exp:<tau>` or `gauss:<sigma>`.
    pub fn parse(text: &str) -> Result<Decay> {
        let bad = || Error::InvalidArgument(format!("unknown decay {text:?}, expected exp:<tau> or gauss:<sigma>"));
        let (kind, value) = text.split_once(':').ok_or_else(bad)?;
        let value: f64 = value.parse().map_err(|_| bad())?;
        if !(value > 0.0) {
            return Err(bad());
        }
        match kind {
            "exp" => Ok(Decay::Exponential { tau: value }),
            "gauss" => Ok(Decay::Gaussian { sigma: value }),
            _ => Err(bad()),
        }
    }
}

/// Known positions and qualities of a synthetic series.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// True z per section, grid units.
    pub positions: Vec<f64>,
    /// True attenuation per section, at least 1.
    pub quality: Vec<f64>,
    pub decay: Decay,
    /// Original index of every current section.
    pub kept_indices: Vec<usize>,
}

impl GroundTruth {
    pub fn new(positions: Vec<f64>, quality: Vec<f64>, decay: Decay) -> Result<Self> {
        if positions.len() != quality.len() {
            return Err(Error::InvalidArgument("positions and quality differ in length".into()));
        }
        if quality.iter().any(|&q| !(q >= 1.0)) {
            return Err(Error::InvalidArgument("true quality entries must be at least 1".into()));
        }
        if positions.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidArgument("positions must be finite".into()));
        }
        let kept_indices = (0..positions.len()).collect();
        Ok(GroundTruth {
            positions,
            quality,
            decay,
            kept_indices,
        })
    }

    /// Grid positions `0..n` each displaced by `U(-jitter, jitter)`.
    pub fn jittered(n: usize, jitter: f64, decay: Decay, seed: u64) -> Result<Self> {
        if !(0.0..0.5).contains(&jitter) {
            return Err(Error::InvalidArgument(format!("jitter must be in [0, 0.5), got {jitter}")));
        }
        let mut rng = rng(seed);
        let positions = (0..n)
            .map(|i| {
                if jitter > 0.0 {
                    i as f64 + rng.random_range(-jitter..jitter)
                } else {
                    i as f64
                }
            })
            .collect();
        Self::new(positions, vec![1.0; n], decay)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// Similarities from the decay model: `g(|p_i - p_j|) / (q_i q_j)` plus
/// symmetric Gaussian noise, clamped to `[-1, 1]`.
pub fn synthesize_psm(
    truth: &GroundTruth,
    noise_sigma: f64,
    range: usize,
    seed: u64,
) -> Result<PairwiseSimilarityMatrix> {
    if !(noise_sigma >= 0.0) {
        return Err(Error::InvalidArgument(format!("noise sigma must be non-negative, got {noise_sigma}")));
    }
    let mut rng = rng(seed);
    let (p, q) = (&truth.positions, &truth.quality);
    PairwiseSimilarityMatrix::from_band(truth.len(), range, |i, j| {
        let clean = truth.decay.eval(p[i] - p[j]) / (q[i] * q[j]);
        let noise = if noise_sigma > 0.0 {
            {
            let e: f64 = StandardNormal.sample(&mut rng);
            noise_sigma * e
        }
        } else {
            0.0
        };
        (clean + noise).clamp(-1.0, 1.0)
    })
}

/// Gaussian-smoothed white noise (not rescaled), row-major `(z, y, x)`.
pub fn smooth_noise(width: usize, height: usize, depth: usize, sigma: f64, seed: u64) -> Result<Vec<f64>> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidArgument(format!("smoothing sigma must be positive, got {sigma}")));
    }
    if width == 0 || height == 0 || depth == 0 {
        return Err(Error::InvalidArgument("volume dimensions must be positive".into()));
    }
    let mut rng = rng(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut v: Vec<f64> = (0..width * height * depth).map(|_| normal.sample(&mut rng)).collect();
    let kernel = gaussian_kernel(sigma);
    let dims = [width, height, depth];
    let strides = [1, width, width * height];
    for axis in 0..3 {
        convolve_axis(&mut v, dims, strides, axis, &kernel);
    }
    Ok(v)
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (4.0 * sigma).ceil() as isize;
    let k: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.into_iter().map(|w| w / sum).collect()
}

// Replicates edge samples at the borders.
fn convolve_axis(v: &mut [f64], dims: [usize; 3], strides: [usize; 3], axis: usize, kernel: &[f64]) {
    let len = dims[axis];
    let stride = strides[axis];
    let radius = (kernel.len() / 2) as isize;
    let mut line = vec![0.0; len];
    let (a1, a2) = match axis {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    };
    for i2 in 0..dims[a2] {
        for i1 in 0..dims[a1] {
            let base = i1 * strides[a1] + i2 * strides[a2];
            for (k, slot) in line.iter_mut().enumerate() {
                *slot = v[base + k * stride];
            }
            for k in 0..len {
                let mut acc = 0.0;
                for (t, &w) in kernel.iter().enumerate() {
                    let src = (k as isize + t as isize - radius).clamp(0, len as isize - 1) as usize;
                    acc += w * line[src];
                }
                v[base + k * stride] = acc;
            }
        }
    }
}

/// Smooth random volume rescaled to `[0, 1]`, as an f32 stack with unit
/// voxel size.
pub fn generate_volume(width: usize, height: usize, depth: usize, smooth_sigma: f64, seed: u64) -> Result<ImageStack> {
    let v = smooth_noise(width, height, depth, smooth_sigma, seed)?;
    let (lo, hi) = v
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    let scale = if hi > lo { 1.0 / (hi - lo) } else { 0.0 };
    let data = v.iter().map(|&x| (((x - lo) * scale) as f32).clamp(0.0, 1.0)).collect();
    ImageStack::new(width, height, depth, 1.0, 1.0, StackData::F32(data))
}

/// Sections of `volume` at real z positions, by linear interpolation
/// along z. The result is always f32.
pub fn sample_sections(volume: &ImageStack, positions: &[f64]) -> Result<ImageStack> {
    let max_z = (volume.depth() - 1) as f64;
    if let Some((k, &p)) = positions.iter().enumerate().find(|(_, &p)| !(0.0..=max_z).contains(&p)) {
        return Err(Error::InvalidArgument(format!(
            "position {p} of section {k} outside [0, {max_z}]"
        )));
    }
    let len = volume.section_len();
    let slice = |z: usize| -> Vec<f64> {
        match volume.data() {
            StackData::U8(v) => v[z * len..(z + 1) * len].iter().map(|&s| s as f64).collect(),
            StackData::F32(v) => v[z * len..(z + 1) * len].iter().map(|&s| s as f64).collect(),
        }
    };
    let mut data = Vec::with_capacity(positions.len() * len);
    for &p in positions {
        let k = p.floor() as usize;
        let t = p - k as f64;
        let lower = slice(k);
        if t == 0.0 {
            data.extend(lower.iter().map(|&a| a as f32));
        } else {
            let upper = slice(k + 1);
            data.extend(lower.iter().zip(&upper).map(|(&a, &b)| ((1.0 - t) * a + t * b) as f32));
        }
    }
    ImageStack::new(
        volume.width(),
        volume.height(),
        positions.len(),
        volume.pixel_size_xy,
        volume.nominal_spacing_z,
        StackData::F32(data),
    )
}

/// Anything made of an ordered series of sections.
pub trait Sectioned: Sized {
    fn section_count(&self) -> usize;
    /// The sections at `order`, in that order.
    fn select(&self, order: &[usize]) -> Result<Self>;
}

impl Sectioned for ImageStack {
    fn section_count(&self) -> usize {
        self.depth()
    }

    fn select(&self, order: &[usize]) -> Result<Self> {
        self.select_sections(order)
    }
}

impl Sectioned for GroundTruth {
    fn section_count(&self) -> usize {
        self.len()
    }

    fn select(&self, order: &[usize]) -> Result<Self> {
        if let Some(&bad) = order.iter().find(|&&k| k >= self.len()) {
            return Err(Error::InvalidArgument(format!("section index {bad} out of range")));
        }
        Ok(GroundTruth {
            positions: order.iter().map(|&k| self.positions[k]).collect(),
            quality: order.iter().map(|&k| self.quality[k]).collect(),
            decay: self.decay.clone(),
            kept_indices: order.iter().map(|&k| self.kept_indices[k]).collect(),
        })
    }
}

impl Sectioned for PairwiseSimilarityMatrix {
    fn section_count(&self) -> usize {
        self.n()
    }

    fn select(&self, order: &[usize]) -> Result<Self> {
        PairwiseSimilarityMatrix::select(self, order)
    }
}

/// Drops the listed sections. Returns the shortened series and, for each
/// surviving section, its index in the input.
pub fn perturb_remove<T: Sectioned>(x: &T, remove: &[usize]) -> Result<(T, Vec<usize>)> {
    let n = x.section_count();
    for &i in remove {
        if i >= n {
            return Err(Error::InvalidArgument(format!("section {i} out of range for {n} sections")));
        }
        if i == 0 || i + 1 == n {
            return Err(Error::InvalidArgument(format!("cannot remove endpoint section {i}")));
        }
    }
    let kept: Vec<usize> = (0..n).filter(|i| !remove.contains(i)).collect();
    Ok((x.select(&kept)?, kept))
}

/// Random permutation moving no element more than `max_displacement`
/// places; `perm[new] = old`.
///
/// Built from `10 n` random transpositions, each accepted only if both
/// elements stay within bounds, so the bound holds by construction.
pub fn bounded_permutation(n: usize, max_displacement: usize, seed: u64) -> Result<Vec<usize>> {
    if max_displacement == 0 {
        return Err(Error::InvalidArgument("max displacement must be at least 1".into()));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    if n < 2 {
        return Ok(perm);
    }
    let mut rng = rng(seed);
    for _ in 0..10 * n {
        let i = rng.random_range(0..n);
        let lo = i.saturating_sub(max_displacement);
        let hi = (i + max_displacement).min(n - 1);
        let j = rng.random_range(lo..=hi);
        if i != j && perm[i].abs_diff(j) <= max_displacement && perm[j].abs_diff(i) <= max_displacement {
            perm.swap(i, j);
        }
    }
    Ok(perm)
}

/// Randomly repositions every section within `max_displacement` places.
/// Returns the shuffled series and the original index of each section.
pub fn perturb_reorder<T: Sectioned>(x: &T, max_displacement: usize, seed: u64) -> Result<(T, Vec<usize>)> {
    let perm = bounded_permutation(x.section_count(), max_displacement, seed)?;
    Ok((x.select(&perm)?, perm))
}

/// `inv[perm[i]] = i`.
pub fn invert_permutation(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    inv
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Alignment {
    None,
    /// Least-squares affine map of the estimate onto the reference.
    Affine,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Deviation {
    pub mean: f64,
    pub max: f64,
}

/// Mean and max absolute difference between `estimated[k]` and
/// `reference[kept[k]]`.
pub fn eval_deviation(estimated: &[f64], reference: &[f64], kept: &[usize], align: Alignment) -> Result<Deviation> {
    if kept.len() != estimated.len() {
        return Err(Error::InvalidArgument(format!(
            "{} estimated positions but {} kept indices",
            estimated.len(),
            kept.len()
        )));
    }
    if kept.len() < 2 {
        return Err(Error::InvalidArgument("need at least 2 kept sections".into()));
    }
    if let Some(&bad) = kept.iter().find(|&&k| k >= reference.len()) {
        return Err(Error::InvalidArgument(format!(
            "kept index {bad} out of range for {} reference positions",
            reference.len()
        )));
    }
    let refs: Vec<f64> = kept.iter().map(|&k| reference[k]).collect();
    let (slope, offset) = match align {
        Alignment::None => (1.0, 0.0),
        Alignment::Affine => affine_fit(estimated, &refs),
    };
    let diffs: Vec<f64> = estimated
        .iter()
        .zip(&refs)
        .map(|(&e, &r)| (slope * e + offset - r).abs())
        .collect();
    Ok(Deviation {
        mean: diffs.iter().sum::<f64>() / diffs.len() as f64,
        max: diffs.iter().cloned().fold(0.0, f64::max),
    })
}

/// Least-squares `(a, b)` minimizing `sum (a x + b - y)^2`.
pub fn affine_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (slope, my - slope * mx)
}

/// Kendall rank correlation (tau-a) of two equally long sequences.
pub fn kendall_tau(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len();
    if n < 2 {
        return 1.0;
    }
    let mut score = 0i64;
    for i in 0..n {
        for j in i + 1..n {
            let s = (a[j] - a[i]).signum() * (b[j] - b[i]).signum();
            if a[j] != a[i] && b[j] != b[i] {
                score += s as i64;
            }
        }
    }
    score as f64 / (n * (n - 1) / 2) as f64
}
