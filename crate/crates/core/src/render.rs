//! Corrected volumes and figure surfaces: resampling along z, xz
//! cross-sections, similarity matrices drawn in the estimated z-frame,
//! decay curve tables and 8-bit PGM output.

use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fmt::g9;
use crate::inference::{CurveSet, DecayCurve};
use crate::psm::PairwiseSimilarityMatrix;
use crate::stack::{unit_to_u8, Image, ImageStack, Plane, StackData};
use crate::stackio::{require_column, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResampleMethod {
    /// Nearest section at or below the target coordinate.
    Floor,
    /// Distance-weighted blend of the two bracketing sections.
    Linear,
}

impl std::str::FromStr for ResampleMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "floor" => Ok(ResampleMethod::Floor),
            "linear" => Ok(ResampleMethod::Linear),
            _ => Err(Error::InvalidArgument(format!("unknown resample method {s:?}"))),
        }
    }
}

/// Tolerance when matching a target coordinate to a section coordinate.
const COORD_EPS: f64 = 1e-9;

/// Section indices sorted by coordinate, ties by index.
fn coordinate_order(c: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..c.len()).collect();
    order.sort_by(|&a, &b| c[a].total_cmp(&c[b]).then(a.cmp(&b)));
    order
}

/// Position in `sorted` of the last coordinate `<= z` (0 if none).
fn floor_slot(sorted: &[f64], z: f64) -> usize {
    sorted.partition_point(|&v| v <= z + COORD_EPS).saturating_sub(1)
}

/// Output depth covering the coordinate span at roughly one nominal
/// section per slice.
pub fn default_out_depth(c: &[f64]) -> usize {
    let (lo, hi) = span(c);
    ((hi - lo).round() as usize + 1).max(2)
}

fn span(c: &[f64]) -> (f64, f64) {
    c.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

/// Renders `stack` on a uniform z grid given per-section coordinates.
///
/// Slice `k` samples the series at `min(c) + k (max(c) - min(c)) / (out_depth - 1)`.
pub fn resample_volume(
    stack: &ImageStack,
    c: &[f64],
    method: ResampleMethod,
    out_depth: usize,
) -> Result<ImageStack> {
    if c.len() != stack.depth() {
        return Err(Error::InvalidArgument(format!(
            "{} coordinates for {} sections",
            c.len(),
            stack.depth()
        )));
    }
    if out_depth < 2 {
        return Err(Error::InvalidArgument("output depth must be at least 2".into()));
    }
    if c.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("coordinates must be finite".into()));
    }
    let order = coordinate_order(c);
    let sorted: Vec<f64> = order.iter().map(|&i| c[i]).collect();
    if method == ResampleMethod::Linear {
        if let Some(w) = sorted.windows(2).position(|w| w[1] - w[0] < COORD_EPS) {
            return Err(Error::InvalidArgument(format!(
                "sections {} and {} share coordinate {}",
                order[w],
                order[w + 1],
                sorted[w]
            )));
        }
    }
    let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
    let step = (hi - lo) / (out_depth - 1) as f64;

    // (lower section, upper section, weight of upper) per output slice.
    let plan: Vec<(usize, usize, f64)> = (0..out_depth)
        .map(|k| {
            let z = lo + k as f64 * step;
            let slot = floor_slot(&sorted, z);
            match method {
                ResampleMethod::Floor => (order[slot], order[slot], 0.0),
                ResampleMethod::Linear => {
                    if slot + 1 >= sorted.len() || (z - sorted[slot]).abs() <= COORD_EPS {
                        (order[slot], order[slot], 0.0)
                    } else {
                        let t = ((z - sorted[slot]) / (sorted[slot + 1] - sorted[slot])).clamp(0.0, 1.0);
                        (order[slot], order[slot + 1], t)
                    }
                }
            }
        })
        .collect();

    let len = stack.section_len();
    fn build<T: Copy + Send + Sync>(
        src: &[T],
        len: usize,
        plan: &[(usize, usize, f64)],
        blend: impl Fn(T, T, f64) -> T + Sync,
    ) -> Vec<T> {
        let slices: Vec<Vec<T>> = plan
            .par_iter()
            .map(|&(a, b, t)| {
                let sa = &src[a * len..(a + 1) * len];
                if t == 0.0 {
                    sa.to_vec()
                } else {
                    let sb = &src[b * len..(b + 1) * len];
                    sa.iter().zip(sb).map(|(&x, &y)| blend(x, y, t)).collect()
                }
            })
            .collect();
        slices.concat()
    }
    let data = match stack.data() {
        StackData::U8(v) => StackData::U8(build(v, len, &plan, |a, b, t| {
            ((1.0 - t) * a as f64 + t * b as f64).round().clamp(0.0, 255.0) as u8
        })),
        StackData::F32(v) => StackData::F32(build(v, len, &plan, |a, b, t| {
            ((1.0 - t) * a as f64 + t * b as f64) as f32
        })),
    };
    ImageStack::new(
        stack.width(),
        stack.height(),
        out_depth,
        stack.pixel_size_xy,
        stack.nominal_spacing_z * step,
        data,
    )
}

/// The `width x depth` image of row `y` through every section.
pub fn extract_xz_slice(stack: &ImageStack, y: usize) -> Result<Plane> {
    if y >= stack.height() {
        return Err(Error::InvalidArgument(format!(
            "row {y} out of range for height {}",
            stack.height()
        )));
    }
    let (w, h, d) = (stack.width(), stack.height(), stack.depth());
    fn rows<T: Copy>(v: &[T], w: usize, h: usize, d: usize, y: usize) -> Vec<T> {
        (0..d)
            .flat_map(|z| v[(z * h + y) * w..(z * h + y + 1) * w].iter().copied())
            .collect()
    }
    Ok(match stack.data() {
        StackData::U8(v) => Plane::U8(Image::new(w, d, rows(v, w, h, d, y))?),
        StackData::F32(v) => Plane::F32(Image::new(w, d, rows(v, w, h, d, y))?),
    })
}

/// Draws the matrix in the z-frame given by `c`.
///
/// Pixel `(u, v)` shows the similarity of the sections found by floor
/// lookup at the coordinates of `u` and `v`. Similarities in `[0, 1]` map
/// linearly to `[0, 255]`; negatives and uncomputed pairs are black.
pub fn render_psm_image(psm: &PairwiseSimilarityMatrix, c: &[f64], out_size: usize) -> Result<Image<u8>> {
    if c.len() != psm.n() {
        return Err(Error::InvalidArgument(format!(
            "{} coordinates for a {}-section matrix",
            c.len(),
            psm.n()
        )));
    }
    if out_size == 0 {
        return Err(Error::InvalidArgument("image size must be positive".into()));
    }
    let order = coordinate_order(c);
    let sorted: Vec<f64> = order.iter().map(|&i| c[i]).collect();
    let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
    let step = if out_size > 1 {
        (hi - lo) / (out_size - 1) as f64
    } else {
        0.0
    };
    let section: Vec<usize> = (0..out_size)
        .map(|u| order[floor_slot(&sorted, lo + u as f64 * step)])
        .collect();
    let mut data = Vec::with_capacity(out_size * out_size);
    for &i in &section {
        for &j in &section {
            data.push(psm.get(i, j).map_or(0, unit_to_u8));
        }
    }
    Image::new(out_size, out_size, data)
}

/// Binary 8-bit PGM (P5).
pub fn encode_pgm(image: &Image<u8>) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", image.width, image.height).into_bytes();
    out.extend_from_slice(&image.data);
    out
}

pub fn write_pgm(image: &Image<u8>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_pgm(image)).map_err(|e| Error::io(path, e))
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<Image<u8>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |reason: &str| Error::MalformedHeader {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    // Header: magic, width, height, maxval, each followed by whitespace.
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated PGM header"));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1;
    if fields[0] != "P5" || fields[3] != "255" {
        return Err(bad("only 8-bit binary PGM is supported"));
    }
    let w: usize = fields[1].parse().map_err(|_| bad("bad width"))?;
    let h: usize = fields[2].parse().map_err(|_| bad("bad height"))?;
    let data = bytes.get(pos..).unwrap_or_default().to_vec();
    if data.len() != w * h {
        return Err(Error::SizeMismatch {
            path: path.to_path_buf(),
            expected: (w * h) as u64,
            found: data.len() as u64,
        });
    }
    Image::new(w, h, data)
}

/// Rows `ref_index,distance,rho`; a global curve uses reference `-1`.
pub fn format_curves_csv(curves: &CurveSet) -> String {
    let mut out = String::from("ref_index,distance,rho\n");
    let mut emit = |r: i64, samples: &[f64]| {
        for (d, &v) in samples.iter().enumerate() {
            out.push_str(&format!("{r},{d},{}\n", g9(v)));
        }
    };
    match curves {
        CurveSet::Global(c) => emit(-1, c.samples()),
        CurveSet::Local(cs) => {
            for (i, c) in cs.iter().enumerate() {
                emit(i as i64, c.samples());
            }
        }
    }
    out
}

pub fn export_curves_csv(curves: &CurveSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_curves_csv(curves)).map_err(|e| Error::io(path, e))
}

/// Parses the output of [`export_curves_csv`].
pub fn load_curves_csv(path: impl AsRef<Path>) -> Result<CurveSet> {
    let path = path.as_ref();
    let table = Table::read(path)?;
    let refs: Vec<i64> = table.parsed(path, require_column(&table, path, &["ref_index"])?)?;
    let dists: Vec<usize> = table.parsed(path, require_column(&table, path, &["distance"])?)?;
    let rhos: Vec<f64> = table.parsed(path, require_column(&table, path, &["rho"])?)?;
    let bad = |reason: String| Error::MalformedCsv {
        path: path.to_path_buf(),
        reason,
    };
    let mut groups: Vec<(i64, Vec<f64>)> = Vec::new();
    for (k, ((&r, &d), &v)) in refs.iter().zip(&dists).zip(&rhos).enumerate() {
        match groups.last_mut() {
            Some((cur, samples)) if *cur == r => {
                if d != samples.len() {
                    return Err(bad(format!("row {}: expected distance {}", k + 1, samples.len())));
                }
                samples.push(v);
            }
            _ => {
                if d != 0 {
                    return Err(bad(format!("row {}: curve for reference {r} must start at distance 0", k + 1)));
                }
                groups.push((r, vec![v]));
            }
        }
    }
    match groups.as_slice() {
        [] => Err(bad("no curve rows".into())),
        [(-1, samples)] => Ok(CurveSet::Global(DecayCurve::new(samples.clone())?)),
        _ => {
            let mut curves = Vec::with_capacity(groups.len());
            for (i, (r, samples)) in groups.into_iter().enumerate() {
                if r != i as i64 {
                    return Err(bad(format!("expected curve for reference {i}, found {r}")));
                }
                curves.push(DecayCurve::new(samples)?);
            }
            Ok(CurveSet::Local(curves))
        }
    }
}
