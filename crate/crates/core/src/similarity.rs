//! Normalized cross-correlation between sections and banded pairwise
//! similarity matrices.
//!
//! Every correlation goes through the same window kernel: per-section
//! statistics are accumulated in `f64` in row-major pixel order, and the
//! cross term of a pair is accumulated the same way. Parallelism is over
//! pairs only, so results do not depend on the worker count.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::psm::PairwiseSimilarityMatrix;
use crate::stack::{Image, ImageStack, Sample, StackData};

/// Default maximum index distance for compared pairs.
pub const DEFAULT_RANGE: usize = 20;

/// What to do with a section that has no intensity variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ZeroVariancePolicy {
    /// Fail with the offending section index.
    #[default]
    Error,
    /// Use similarity 0 for every pair involving the section.
    Substitute,
}

/// Rectangular pixel window `[x0, x1) x [y0, y1)` of a section.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub x0: usize,
    pub x1: usize,
    pub y0: usize,
    pub y1: usize,
}

impl Window {
    pub fn full(width: usize, height: usize) -> Self {
        Window {
            x0: 0,
            x1: width,
            y0: 0,
            y1: height,
        }
    }

    fn pixels(&self) -> usize {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }
}

#[derive(Debug, Clone, Copy)]
struct Moments {
    mean: f64,
    // Population standard deviation.
    std: f64,
}

fn window_moments<T: Sample>(section: &[T], width: usize, w: Window) -> Moments {
    let p = w.pixels() as f64;
    let mut sum = 0.0;
    for y in w.y0..w.y1 {
        for &v in &section[y * width + w.x0..y * width + w.x1] {
            sum += v.to_f64();
        }
    }
    let mean = sum / p;
    let mut ss = 0.0;
    for y in w.y0..w.y1 {
        for &v in &section[y * width + w.x0..y * width + w.x1] {
            let d = v.to_f64() - mean;
            ss += d * d;
        }
    }
    Moments {
        mean,
        std: (ss / p).sqrt(),
    }
}

fn window_ncc<T: Sample>(a: &[T], b: &[T], width: usize, w: Window, ma: Moments, mb: Moments) -> f64 {
    let mut acc = 0.0;
    for y in w.y0..w.y1 {
        let row = y * width + w.x0..y * width + w.x1;
        for (&u, &v) in a[row.clone()].iter().zip(&b[row]) {
            acc += (u.to_f64() - ma.mean) * (v.to_f64() - mb.mean);
        }
    }
    (acc / (w.pixels() as f64 * ma.std * mb.std)).clamp(-1.0, 1.0)
}

/// Normalized cross-correlation of two equally sized images, using
/// population standard deviations.
pub fn ncc<T: Sample>(a: &Image<T>, b: &Image<T>) -> Result<f64> {
    if a.dims() != b.dims() {
        return Err(Error::DimensionMismatch {
            left: a.dims(),
            right: b.dims(),
        });
    }
    let w = Window::full(a.width, a.height);
    let ma = window_moments(&a.data, a.width, w);
    let mb = window_moments(&b.data, b.width, w);
    for (section, m) in [(0, ma), (1, mb)] {
        if m.std == 0.0 {
            return Err(Error::ZeroVariance {
                section,
                block: None,
            });
        }
    }
    Ok(window_ncc(&a.data, &b.data, a.width, w, ma, mb))
}

fn check_range(depth: usize, range: usize) -> Result<()> {
    if range == 0 || range >= depth {
        return Err(Error::InvalidArgument(format!(
            "comparison range must be in 1..={}, got {range}",
            depth - 1
        )));
    }
    Ok(())
}

fn band_pairs(n: usize, range: usize) -> Vec<(usize, usize)> {
    (0..n)
        .flat_map(|i| (i + 1..n.min(i + range + 1)).map(move |j| (i, j)))
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn window_psm<T: Sample>(
    data: &[T],
    width: usize,
    section_len: usize,
    depth: usize,
    window: Window,
    range: usize,
    policy: ZeroVariancePolicy,
    block: Option<(usize, usize)>,
) -> Result<PairwiseSimilarityMatrix> {
    let section = |z: usize| &data[z * section_len..(z + 1) * section_len];
    let moments: Vec<Moments> = (0..depth)
        .into_par_iter()
        .map(|z| window_moments(section(z), width, window))
        .collect();
    let flat: Vec<bool> = moments.iter().map(|m| m.std == 0.0).collect();
    if policy == ZeroVariancePolicy::Error {
        if let Some(z) = flat.iter().position(|&f| f) {
            return Err(Error::ZeroVariance { section: z, block });
        }
    }
    let pairs = band_pairs(depth, range);
    let values: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| {
            if flat[i] || flat[j] {
                0.0
            } else {
                window_ncc(section(i), section(j), width, window, moments[i], moments[j])
            }
        })
        .collect();
    let mut psm = PairwiseSimilarityMatrix::empty(depth);
    for (&(i, j), &v) in pairs.iter().zip(&values) {
        psm.set(i, j, v)?;
    }
    Ok(psm)
}

/// Indices of sections without intensity variance inside `window`.
pub fn flat_sections(stack: &ImageStack, window: Window) -> Vec<usize> {
    let len = stack.section_len();
    let w = stack.width();
    (0..stack.depth())
        .filter(|&z| {
            let m = match stack.data() {
                StackData::U8(v) => window_moments(&v[z * len..(z + 1) * len], w, window),
                StackData::F32(v) => window_moments(&v[z * len..(z + 1) * len], w, window),
            };
            m.std == 0.0
        })
        .collect()
}

/// Banded similarity matrix of `stack` over the whole section plane.
pub fn compute_psm(stack: &ImageStack, range: usize) -> Result<PairwiseSimilarityMatrix> {
    compute_psm_with(stack, range, ZeroVariancePolicy::Error)
}

pub fn compute_psm_with(
    stack: &ImageStack,
    range: usize,
    policy: ZeroVariancePolicy,
) -> Result<PairwiseSimilarityMatrix> {
    let window = Window::full(stack.width(), stack.height());
    compute_window_psm(stack, window, range, policy, None)
}

fn compute_window_psm(
    stack: &ImageStack,
    window: Window,
    range: usize,
    policy: ZeroVariancePolicy,
    block: Option<(usize, usize)>,
) -> Result<PairwiseSimilarityMatrix> {
    check_range(stack.depth(), range)?;
    let (w, len, d) = (stack.width(), stack.section_len(), stack.depth());
    match stack.data() {
        StackData::U8(v) => window_psm(v, w, len, d, window, range, policy, block),
        StackData::F32(v) => window_psm(v, w, len, d, window, range, policy, block),
    }
}

/// Per-block similarity matrices over a regular grid of the section plane.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockGrid {
    pub blocks_x: usize,
    pub blocks_y: usize,
    /// Row-major over `(by, bx)`.
    blocks: Vec<PairwiseSimilarityMatrix>,
    windows: Vec<Window>,
}

impl BlockGrid {
    pub fn get(&self, bx: usize, by: usize) -> &PairwiseSimilarityMatrix {
        &self.blocks[by * self.blocks_x + bx]
    }

    pub fn window(&self, bx: usize, by: usize) -> Window {
        self.windows[by * self.blocks_x + bx]
    }

    /// `(bx, by, psm)` in row-major block order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, &PairwiseSimilarityMatrix)> {
        self.blocks
            .iter()
            .enumerate()
            .map(|(k, p)| (k % self.blocks_x, k / self.blocks_x, p))
    }
}

/// Splits `len` into `count` spans; the last absorbs the remainder.
fn spans(len: usize, count: usize) -> Vec<(usize, usize)> {
    let step = len / count;
    (0..count)
        .map(|k| {
            let end = if k + 1 == count { len } else { (k + 1) * step };
            (k * step, end)
        })
        .collect()
}

pub fn compute_blockwise_psm(
    stack: &ImageStack,
    blocks_x: usize,
    blocks_y: usize,
    range: usize,
) -> Result<BlockGrid> {
    compute_blockwise_psm_with(stack, blocks_x, blocks_y, range, ZeroVariancePolicy::Error)
}

pub fn compute_blockwise_psm_with(
    stack: &ImageStack,
    blocks_x: usize,
    blocks_y: usize,
    range: usize,
    policy: ZeroVariancePolicy,
) -> Result<BlockGrid> {
    if blocks_x == 0 || blocks_x > stack.width() || blocks_y == 0 || blocks_y > stack.height() {
        return Err(Error::InvalidArgument(format!(
            "cannot split a {}x{} section into {blocks_x}x{blocks_y} non-empty blocks",
            stack.width(),
            stack.height()
        )));
    }
    let mut windows = Vec::with_capacity(blocks_x * blocks_y);
    for &(y0, y1) in &spans(stack.height(), blocks_y) {
        for &(x0, x1) in &spans(stack.width(), blocks_x) {
            windows.push(Window { x0, x1, y0, y1 });
        }
    }
    let blocks = windows
        .iter()
        .enumerate()
        .map(|(k, &w)| {
            compute_window_psm(stack, w, range, policy, Some((k % blocks_x, k / blocks_x)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BlockGrid {
        blocks_x,
        blocks_y,
        blocks,
        windows,
    })
}
