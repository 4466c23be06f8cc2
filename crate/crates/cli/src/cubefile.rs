//! `HCUBE1` container: one JSON header line, space-padded so the payload
//! starts at a multiple of 64 bytes, then little-endian `f32` values.
//!
//! Cubes store `(row, col, band)` in row-major order. Feature tensors add a
//! `slices` field and store `(pixel, band, slice)` with `pixel = row * cols + col`,
//! which is the in-memory layout of [`Tensor3`]. A cube is therefore a
//! tensor with one slice.

use std::fs;
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use hsu_core::{Dims, HsiCube, Tensor3};
use serde::{Deserialize, Serialize};

pub const MAGIC: &str = "HCUBE1";
pub const DTYPE: &str = "f32le";
const ALIGN: usize = 64;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CubeHeader {
    pub magic: String,
    pub rows: usize,
    pub cols: usize,
    pub bands: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slices: Option<usize>,
    pub dtype: String,
    /// Byte offset of the payload.
    pub offset: usize,
}

impl CubeHeader {
    pub fn new(rows: usize, cols: usize, bands: usize, slices: Option<usize>) -> Self {
        CubeHeader {
            magic: MAGIC.to_string(),
            rows,
            cols,
            bands,
            slices,
            dtype: DTYPE.to_string(),
            offset: 0,
        }
    }

    pub fn values(&self) -> usize {
        self.rows * self.cols * self.bands * self.slices.unwrap_or(1)
    }

    pub fn dims(&self) -> Dims {
        Dims::new(self.rows * self.cols, self.bands, self.slices.unwrap_or(1))
    }

    /// Header bytes with `offset` filled in and padding applied.
    fn encode(&self) -> Vec<u8> {
        let mut header = self.clone();
        loop {
            let json = serde_json::to_string(&header).expect("header serializes");
            let needed = json.len() + 1;
            let offset = needed.div_ceil(ALIGN) * ALIGN;
            if offset == header.offset {
                let mut bytes = json.into_bytes();
                bytes.resize(offset - 1, b' ');
                bytes.push(b'\n');
                return bytes;
            }
            header.offset = offset;
        }
    }
}

fn write_raw(path: &Path, header: &CubeHeader, data: &[f64]) -> Result<()> {
    ensure!(
        data.len() == header.values(),
        "payload has {} values, header describes {}",
        data.len(),
        header.values()
    );
    let mut bytes = header.encode();
    bytes.reserve(data.len() * 4);
    for &v in data {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

/// Reads header and payload; values are widened to `f64`.
pub fn read_raw(path: &Path) -> Result<(CubeHeader, Vec<f64>)> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let end = bytes
        .iter()
        .position(|&b| b == b'\n')
        .with_context(|| format!("{}: missing header line", path.display()))?;
    let text = std::str::from_utf8(&bytes[..end]).context("header is not UTF-8")?;
    let header: CubeHeader = serde_json::from_str(text.trim_end())
        .with_context(|| format!("{}: malformed header", path.display()))?;
    if header.magic != MAGIC {
        bail!("{}: bad magic '{}'", path.display(), header.magic);
    }
    if header.dtype != DTYPE {
        bail!("{}: unsupported dtype '{}'", path.display(), header.dtype);
    }
    ensure!(header.offset > end, "{}: payload offset inside header", path.display());
    let payload = &bytes[header.offset.min(bytes.len())..];
    ensure!(
        payload.len() == header.values() * 4,
        "{}: payload is {} bytes, expected {}",
        path.display(),
        payload.len(),
        header.values() * 4
    );
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    Ok((header, data))
}

pub fn write_cube(path: &Path, cube: &HsiCube) -> Result<()> {
    let header = CubeHeader::new(cube.rows(), cube.cols(), cube.bands(), None);
    write_raw(path, &header, cube.as_slice())
}

pub fn read_cube(path: &Path) -> Result<HsiCube> {
    let (header, data) = read_raw(path)?;
    if header.slices.is_some_and(|k| k != 1) {
        bail!("{} holds a {}-slice tensor, expected a cube", path.display(), header.slices.unwrap_or(1));
    }
    Ok(HsiCube::new(header.rows, header.cols, header.bands, data)?)
}

/// Spatial grid behind the pixel mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid {
    pub rows: usize,
    pub cols: usize,
}

pub fn write_tensor(path: &Path, t: &Tensor3, grid: Grid) -> Result<()> {
    let d = t.dims();
    ensure!(
        grid.rows * grid.cols == d.pixels,
        "grid {}x{} does not match {} pixels",
        grid.rows,
        grid.cols,
        d.pixels
    );
    let header = CubeHeader::new(grid.rows, grid.cols, d.bands, Some(d.slices));
    write_raw(path, &header, t.as_slice())
}

pub fn read_tensor(path: &Path) -> Result<(Tensor3, Grid)> {
    let (header, data) = read_raw(path)?;
    let grid = Grid {
        rows: header.rows,
        cols: header.cols,
    };
    Ok((Tensor3::new(header.dims(), data)?, grid))
}

/// Sidecar legend path for a tensor file: `x.hcube` → `x.legend.json`.
pub fn legend_path(tensor: &Path) -> std::path::PathBuf {
    tensor.with_extension("legend.json")
}
