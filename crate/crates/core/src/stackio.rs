//! File formats: raw stacks with a JSON sidecar header, similarity matrix
//! CSV, and the per-section CSV tables written by the pipeline.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fmt::g9;
use crate::psm::PairwiseSimilarityMatrix;
use crate::similarity::BlockGrid;
use crate::stack::{Dtype, ImageStack, StackData};

/// Tolerance for symmetry and unit diagonal when reading a matrix.
pub const PSM_TOLERANCE: f64 = 1e-6;

/// JSON sidecar describing a raw little-endian sample file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackHeader {
    pub width: usize,
    pub height: usize,
    pub depth: usize,
    pub dtype: String,
    #[serde(default = "default_byte_order")]
    pub byte_order: String,
    pub order: String,
    pub pixel_size_xy_nm: f64,
    pub nominal_spacing_z_nm: f64,
    pub data: String,
}

fn default_byte_order() -> String {
    "le".to_string()
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn malformed(path: &Path, reason: impl Into<String>) -> Error {
    Error::MalformedHeader {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

/// Path of the raw file that belongs to `header_path`.
pub fn raw_path_for(header_path: &Path) -> PathBuf {
    header_path.with_extension("raw")
}

pub fn load_stack(header_path: impl AsRef<Path>) -> Result<ImageStack> {
    let header_path = header_path.as_ref();
    let text = read_to_string(header_path)?;
    let header: StackHeader =
        serde_json::from_str(&text).map_err(|e| malformed(header_path, e.to_string()))?;
    let dtype = Dtype::from_tag(&header.dtype)
        .ok_or_else(|| malformed(header_path, format!("unknown dtype {:?}", header.dtype)))?;
    if header.byte_order != "le" {
        return Err(malformed(
            header_path,
            format!("unsupported byte order {:?}", header.byte_order),
        ));
    }
    if header.order != "zyx" {
        return Err(malformed(
            header_path,
            format!("unsupported axis order {:?}", header.order),
        ));
    }
    if header.width == 0 || header.height == 0 || header.depth < 2 {
        return Err(malformed(
            header_path,
            format!(
                "invalid dimensions {}x{}x{}",
                header.width, header.height, header.depth
            ),
        ));
    }
    let raw_path = header_path
        .parent()
        .unwrap_or_else(|| Path::new(""))
        .join(&header.data);
    let bytes = fs::read(&raw_path).map_err(|e| Error::io(&raw_path, e))?;
    let count = header.width * header.height * header.depth;
    let expected = (count * dtype.size()) as u64;
    if bytes.len() as u64 != expected {
        return Err(Error::SizeMismatch {
            path: raw_path,
            expected,
            found: bytes.len() as u64,
        });
    }
    let data = match dtype {
        Dtype::U8 => StackData::U8(bytes),
        Dtype::F32 => StackData::F32(
            bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect(),
        ),
    };
    ImageStack::new(
        header.width,
        header.height,
        header.depth,
        header.pixel_size_xy_nm,
        header.nominal_spacing_z_nm,
        data,
    )
}

/// Writes `<stem>.json` and its sibling `<stem>.raw`.
pub fn save_stack(stack: &ImageStack, header_path: impl AsRef<Path>) -> Result<()> {
    let header_path = header_path.as_ref();
    let raw_path = raw_path_for(header_path);
    let raw_name = raw_path
        .file_name()
        .and_then(|s| s.to_str())
        .ok_or_else(|| {
            Error::InvalidArgument(format!("unusable header path {}", header_path.display()))
        })?
        .to_string();
    let header = StackHeader {
        width: stack.width(),
        height: stack.height(),
        depth: stack.depth(),
        dtype: stack.data().dtype().tag().to_string(),
        byte_order: "le".to_string(),
        order: "zyx".to_string(),
        pixel_size_xy_nm: stack.pixel_size_xy,
        nominal_spacing_z_nm: stack.nominal_spacing_z,
        data: raw_name,
    };
    let bytes: Vec<u8> = match stack.data() {
        StackData::U8(v) => v.clone(),
        StackData::F32(v) => v.iter().flat_map(|s| s.to_le_bytes()).collect(),
    };
    fs::write(&raw_path, bytes).map_err(|e| Error::io(&raw_path, e))?;
    let json = serde_json::to_string_pretty(&header).expect("header serializes");
    fs::write(header_path, json + "\n").map_err(|e| Error::io(header_path, e))
}

/// All non-blank records of a CSV file, fields trimmed; row lengths are
/// left to the caller to check.
fn read_records(path: &Path, has_headers: bool) -> Result<Vec<csv::StringRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_headers)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        out.push(record);
    }
    Ok(out)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::MalformedCsv {
            path: path.to_path_buf(),
            reason: format!("{other:?}"),
        },
    }
}

fn parse_cell(path: &Path, row: usize, col: usize, cell: &str) -> Result<f64> {
    let cell = cell.trim();
    if cell.is_empty() || cell.eq_ignore_ascii_case("nan") {
        return Ok(f64::NAN);
    }
    let v: f64 = cell.parse().map_err(|_| Error::InvalidCell {
        path: path.to_path_buf(),
        row,
        col,
        reason: format!("unparseable value {cell:?}"),
    })?;
    if !(-1.0..=1.0).contains(&v) {
        return Err(Error::InvalidCell {
            path: path.to_path_buf(),
            row,
            col,
            reason: format!("value {v} outside [-1, 1]"),
        });
    }
    Ok(v)
}

/// Reads an `N x N` similarity matrix; empty or `nan` cells are uncomputed.
///
/// Near-symmetric input is averaged and the diagonal pinned to exactly 1.
pub fn load_psm_csv(path: impl AsRef<Path>) -> Result<PairwiseSimilarityMatrix> {
    let path = path.as_ref();
    let records = read_records(path, false)?;
    let n = records.len();
    if n == 0 {
        return Err(Error::MalformedCsv {
            path: path.to_path_buf(),
            reason: "empty matrix".into(),
        });
    }
    let mut values = Vec::with_capacity(n * n);
    for (r, record) in records.iter().enumerate() {
        if record.len() != n {
            return Err(Error::MalformedCsv {
                path: path.to_path_buf(),
                reason: format!("row {r} has {} fields, expected {n}", record.len()),
            });
        }
        for (c, cell) in record.iter().enumerate() {
            values.push(parse_cell(path, r, c, cell)?);
        }
    }
    let cell_err = |row, col, reason: String| Error::InvalidCell {
        path: path.to_path_buf(),
        row,
        col,
        reason,
    };
    let mut psm = PairwiseSimilarityMatrix::empty(n);
    for i in 0..n {
        let d = values[i * n + i];
        if d.is_nan() || (d - 1.0).abs() > PSM_TOLERANCE {
            return Err(cell_err(i, i, format!("diagonal value {d} is not 1")));
        }
        for j in i + 1..n {
            let (a, b) = (values[i * n + j], values[j * n + i]);
            match (a.is_nan(), b.is_nan()) {
                (true, true) => {}
                (false, false) if (a - b).abs() <= PSM_TOLERANCE => {
                    psm.set(i, j, 0.5 * (a + b)).expect("mean of in-range values");
                }
                _ => {
                    return Err(cell_err(i, j, format!("asymmetric pair {a} vs {b} at ({j}, {i})")));
                }
            }
        }
    }
    Ok(psm)
}

pub fn save_psm_csv(psm: &PairwiseSimilarityMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let n = psm.n();
    let mut out = String::with_capacity(n * n * 12);
    for i in 0..n {
        for j in 0..n {
            if j > 0 {
                out.push(',');
            }
            if let Some(v) = psm.get(i, j) {
                out.push_str(&g9(v));
            }
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// A parsed CSV table with a header row.
#[derive(Debug, Clone)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn read(path: impl AsRef<Path>) -> Result<Table> {
        let path = path.as_ref();
        let mut records = read_records(path, false)?.into_iter();
        let columns: Vec<String> = records
            .next()
            .ok_or_else(|| Error::MalformedCsv {
                path: path.to_path_buf(),
                reason: "missing header row".into(),
            })?
            .iter()
            .map(str::to_string)
            .collect();
        let mut rows = Vec::new();
        for (r, record) in records.enumerate() {
            if record.len() != columns.len() {
                return Err(Error::MalformedCsv {
                    path: path.to_path_buf(),
                    reason: format!(
                        "data row {r} has {} fields, expected {}",
                        record.len(),
                        columns.len()
                    ),
                });
            }
            rows.push(record.iter().map(str::to_string).collect());
        }
        Ok(Table { columns, rows })
    }

    pub fn column_index(&self, names: &[&str]) -> Option<usize> {
        names
            .iter()
            .find_map(|name| self.columns.iter().position(|c| c == name))
    }

    pub(crate) fn parsed<T: std::str::FromStr>(&self, path: &Path, col: usize) -> Result<Vec<T>> {
        self.rows
            .iter()
            .enumerate()
            .map(|(r, row)| {
                row[col].parse().map_err(|_| Error::InvalidCell {
                    path: path.to_path_buf(),
                    row: r + 1,
                    col,
                    reason: format!("unparseable value {:?}", row[col]),
                })
            })
            .collect()
    }
}

pub(crate) fn require_column(table: &Table, path: &Path, names: &[&str]) -> Result<usize> {
    table.column_index(names).ok_or_else(|| Error::MalformedCsv {
        path: path.to_path_buf(),
        reason: format!("missing column {}", names.join(" or ")),
    })
}

/// Checks that an `index` column is exactly `0..n` in order.
fn check_index_column(table: &Table, path: &Path) -> Result<()> {
    let col = require_column(table, path, &["index", "new_index"])?;
    let idx: Vec<usize> = table.parsed(path, col)?;
    if let Some((r, _)) = idx.iter().enumerate().find(|&(r, &i)| r != i) {
        return Err(Error::InvalidCell {
            path: path.to_path_buf(),
            row: r + 1,
            col,
            reason: format!("expected index {r}"),
        });
    }
    Ok(())
}

/// Writes `index,z,quality`.
pub fn save_positions_csv(z: &[f64], quality: &[f64], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("index,z,quality\n");
    for (i, (z, q)) in z.iter().zip(quality).enumerate() {
        out.push_str(&format!("{i},{},{}\n", g9(*z), g9(*q)));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads the z column of a positions file (`z`) or ground truth file
/// (`true_z`).
pub fn load_z_column(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let path = path.as_ref();
    let table = Table::read(path)?;
    check_index_column(&table, path)?;
    let col = require_column(&table, path, &["z", "true_z"])?;
    let z: Vec<f64> = table.parsed(path, col)?;
    if let Some(r) = z.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidCell {
            path: path.to_path_buf(),
            row: r + 1,
            col,
            reason: "non-finite coordinate".into(),
        });
    }
    Ok(z)
}

/// Ground truth rows in original section indexing.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthTable {
    pub true_z: Vec<f64>,
    pub true_quality: Vec<f64>,
    pub kept: Vec<bool>,
}

/// Writes `index,true_z,true_quality,kept`.
pub fn save_truth_csv(truth: &TruthTable, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("index,true_z,true_quality,kept\n");
    for i in 0..truth.true_z.len() {
        out.push_str(&format!(
            "{i},{},{},{}\n",
            g9(truth.true_z[i]),
            g9(truth.true_quality[i]),
            u8::from(truth.kept[i])
        ));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn load_truth_csv(path: impl AsRef<Path>) -> Result<TruthTable> {
    let path = path.as_ref();
    let table = Table::read(path)?;
    check_index_column(&table, path)?;
    let zc = require_column(&table, path, &["true_z"])?;
    let qc = require_column(&table, path, &["true_quality"])?;
    let kc = require_column(&table, path, &["kept"])?;
    let kept: Vec<u8> = table.parsed(path, kc)?;
    Ok(TruthTable {
        true_z: table.parsed(path, zc)?,
        true_quality: table.parsed(path, qc)?,
        kept: kept.into_iter().map(|k| k != 0).collect(),
    })
}

/// Writes a `new_index,original_index` mapping.
pub fn save_index_map_csv(original: &[usize], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut write = || -> std::io::Result<()> {
        writeln!(w, "new_index,original_index")?;
        for (k, o) in original.iter().enumerate() {
            writeln!(w, "{k},{o}")?;
        }
        w.flush()
    };
    write().map_err(|e| Error::io(path, e))
}

pub fn load_index_map_csv(path: impl AsRef<Path>) -> Result<Vec<usize>> {
    let path = path.as_ref();
    let table = Table::read(path)?;
    check_index_column(&table, path)?;
    let col = require_column(&table, path, &["original_index"])?;
    table.parsed(path, col)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockEntry {
    pub bx: usize,
    pub by: usize,
    pub x0: usize,
    pub x1: usize,
    pub y0: usize,
    pub y1: usize,
    pub file: String,
}

/// Manifest written next to the per-block matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockManifest {
    pub blocks_x: usize,
    pub blocks_y: usize,
    pub n: usize,
    pub range: usize,
    pub blocks: Vec<BlockEntry>,
}

pub const BLOCK_MANIFEST: &str = "blocks.json";

/// Writes `psm_bx<X>_by<Y>.csv` per block and `blocks.json` into `dir`.
pub fn save_block_grid(grid: &BlockGrid, dir: impl AsRef<Path>) -> Result<BlockManifest> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut blocks = Vec::new();
    let (mut n, mut range) = (0, 0);
    for (bx, by, psm) in grid.iter() {
        let file = format!("psm_bx{bx}_by{by}.csv");
        save_psm_csv(psm, dir.join(&file))?;
        let w = grid.window(bx, by);
        (n, range) = (psm.n(), psm.range());
        blocks.push(BlockEntry {
            bx,
            by,
            x0: w.x0,
            x1: w.x1,
            y0: w.y0,
            y1: w.y1,
            file,
        });
    }
    let manifest = BlockManifest {
        blocks_x: grid.blocks_x,
        blocks_y: grid.blocks_y,
        n,
        range,
        blocks,
    };
    let path = dir.join(BLOCK_MANIFEST);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}
