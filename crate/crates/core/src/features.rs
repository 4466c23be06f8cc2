//! Building third-order multi-feature tensors from a hyperspectral cube.
//!
//! Pixels are matricized in lexicographic order (`i = row * cols + col`).
//! Each builder stacks transformed copies of the matricized cube as frontal
//! slices and returns a [`Mode3Legend`] describing what slice `k` holds.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::morphology::{closing_by_reconstruction, opening_by_reconstruction, DiskSe, GrayImage};
use crate::tensor::{Dims, Matrix, Tensor3};

/// Spatial image stack, row-major in `(row, col, band)`.
#[derive(Clone, Debug, PartialEq)]
pub struct HsiCube {
    rows: usize,
    cols: usize,
    bands: usize,
    data: Vec<f64>,
}

impl HsiCube {
    pub fn new(rows: usize, cols: usize, bands: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || bands == 0 {
            return Err(Error::arg(format!(
                "cube dimensions must be >= 1, got {rows}x{cols}x{bands}"
            )));
        }
        if data.len() != rows * cols * bands {
            return Err(Error::shape(rows * cols * bands, data.len()));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("cube data".into()));
        }
        Ok(HsiCube {
            rows,
            cols,
            bands,
            data,
        })
    }

    pub fn from_fn(
        rows: usize,
        cols: usize,
        bands: usize,
        f: impl Fn(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(rows * cols * bands);
        for r in 0..rows {
            for c in 0..cols {
                for b in 0..bands {
                    data.push(f(r, c, b));
                }
            }
        }
        HsiCube::new(rows, cols, bands, data)
    }

    /// Inverse of [`matricize`]: rebuilds a cube from an `I × J` pixel matrix.
    pub fn dematricize(m: &Matrix, rows: usize, cols: usize) -> Result<Self> {
        if m.nrows() != rows * cols {
            return Err(Error::shape(
                format!("{} pixel rows", rows * cols),
                m.nrows(),
            ));
        }
        HsiCube::from_fn(rows, cols, m.ncols(), |r, c, b| m[[r * cols + c, b]])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn pixels(&self) -> usize {
        self.rows * self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, band: usize) -> f64 {
        self.data[(row * self.cols + col) * self.bands + band]
    }

    /// `(row, col)` of lexicographic pixel index `i`.
    pub fn pixel_position(&self, i: usize) -> (usize, usize) {
        (i / self.cols, i % self.cols)
    }

    pub fn band_image(&self, band: usize) -> GrayImage {
        GrayImage::from_fn(self.rows, self.cols, |r, c| self.get(r, c, band))
            .expect("cube values are finite")
    }
}

/// Lexicographic matricization: an `I × J` matrix with `i = row * cols + col`.
pub fn matricize(cube: &HsiCube) -> Matrix {
    Matrix::from_shape_vec((cube.pixels(), cube.bands), cube.data.clone())
        .expect("cube length matches its dimensions")
}

/// Neighbourhood patch of odd edge length.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchSpec {
    pub size: usize,
}

impl PatchSpec {
    pub fn new(size: usize) -> Self {
        PatchSpec { size }
    }

    /// Spatial offsets `(dy, dx)` per slice: `(0, 0)` first, then the rest
    /// of the window in raster order.
    pub fn offsets(&self) -> Vec<(isize, isize)> {
        let h = (self.size / 2) as isize;
        let mut out = vec![(0, 0)];
        for dy in -h..=h {
            for dx in -h..=h {
                if (dy, dx) != (0, 0) {
                    out.push((dy, dx));
                }
            }
        }
        out
    }
}

/// Disk radii for a morphological profile, strictly increasing.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MorphSpec {
    pub radii: Vec<usize>,
}

impl MorphSpec {
    pub fn new(radii: Vec<usize>) -> Self {
        MorphSpec { radii }
    }

    /// Index (0-based) of the unfiltered slice.
    pub fn original_index(&self) -> usize {
        self.radii.len()
    }
}

/// Feature construction recipe, as found in run configurations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase", deny_unknown_fields)]
pub enum FeatureSpec {
    Patch { size: usize },
    Mm { radii: Vec<usize> },
}

impl FeatureSpec {
    pub fn build(&self, cube: &HsiCube) -> Result<(Tensor3, Mode3Legend)> {
        match self {
            FeatureSpec::Patch { size } => build_patch_tensor(cube, &PatchSpec::new(*size)),
            FeatureSpec::Mm { radii } => build_mm_tensor(cube, &MorphSpec::new(radii.clone())),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SliceKind {
    Original,
    Obr,
    Cbr,
    Shift,
    /// Acquisition index of a time series.
    Stamp,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SliceParameter {
    Offset { dy: isize, dx: isize },
    Size(usize),
}

/// What frontal slice `k` (1-based) of a feature tensor contains.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LegendEntry {
    pub k: usize,
    pub kind: SliceKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parameter: Option<SliceParameter>,
}

impl LegendEntry {
    pub fn label(&self) -> String {
        match (self.kind, self.parameter) {
            (SliceKind::Original, _) => "original".to_string(),
            (SliceKind::Obr, Some(SliceParameter::Size(r))) => format!("obr r={r}"),
            (SliceKind::Cbr, Some(SliceParameter::Size(r))) => format!("cbr r={r}"),
            (SliceKind::Shift, Some(SliceParameter::Offset { dy, dx })) => {
                format!("shift ({dy},{dx})")
            }
            (SliceKind::Stamp, Some(SliceParameter::Size(t))) => format!("t={t}"),
            (kind, _) => format!("{kind:?}").to_lowercase(),
        }
    }
}

/// Sidecar describing the third mode of a feature tensor.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Mode3Legend {
    pub entries: Vec<LegendEntry>,
}

impl Mode3Legend {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Legend for a time series of `k` acquisitions.
    pub fn stamps(k: usize) -> Self {
        Mode3Legend {
            entries: (1..=k)
                .map(|t| LegendEntry {
                    k: t,
                    kind: SliceKind::Stamp,
                    parameter: Some(SliceParameter::Size(t)),
                })
                .collect(),
        }
    }
}

fn reflect(idx: isize, n: usize) -> usize {
    let n = n as isize;
    let r = if idx < 0 {
        -idx
    } else if idx >= n {
        2 * (n - 1) - idx
    } else {
        idx
    };
    r as usize
}

/// Patch tensor: slice `k` is the cube shifted by the `k`-th offset, with
/// mirror reflection at the borders. Slice 1 is the unshifted cube.
pub fn build_patch_tensor(cube: &HsiCube, spec: &PatchSpec) -> Result<(Tensor3, Mode3Legend)> {
    let p = spec.size;
    if p == 0 || p.is_multiple_of(2) {
        return Err(Error::arg(format!("patch size must be odd and >= 1, got {p}")));
    }
    if p > cube.rows.min(cube.cols) {
        return Err(Error::arg(format!(
            "patch size {p} exceeds the image extent {}x{}",
            cube.rows, cube.cols
        )));
    }
    let offsets = spec.offsets();
    let dims = Dims::new(cube.pixels(), cube.bands, offsets.len());
    let t = Tensor3::from_fn(dims, |i, j, k| {
        let (r, c) = cube.pixel_position(i);
        let (dy, dx) = offsets[k];
        cube.get(
            reflect(r as isize + dy, cube.rows),
            reflect(c as isize + dx, cube.cols),
            j,
        )
    })?;
    let legend = Mode3Legend {
        entries: offsets
            .iter()
            .enumerate()
            .map(|(k, &(dy, dx))| match k {
                0 => LegendEntry {
                    k: 1,
                    kind: SliceKind::Original,
                    parameter: None,
                },
                _ => LegendEntry {
                    k: k + 1,
                    kind: SliceKind::Shift,
                    parameter: Some(SliceParameter::Offset { dy, dx }),
                },
            })
            .collect(),
    };
    Ok((t, legend))
}

/// Morphological-profile tensor with `K = 2S + 1` slices ordered
/// `CBR(r_S) … CBR(r_1), original, OBR(r_1) … OBR(r_S)`; every band is
/// filtered independently.
pub fn build_mm_tensor(cube: &HsiCube, spec: &MorphSpec) -> Result<(Tensor3, Mode3Legend)> {
    if spec.radii.contains(&0) {
        return Err(Error::arg("morphological radii must be >= 1"));
    }
    if spec.radii.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::arg(format!(
            "morphological radii must be strictly increasing, got {:?}",
            spec.radii
        )));
    }
    let s = spec.radii.len();
    let k_total = 2 * s + 1;

    // per band: K filtered images, each rows*cols
    let per_band: Vec<Vec<Vec<f64>>> = (0..cube.bands)
        .into_par_iter()
        .map(|band| {
            let img = cube.band_image(band);
            let mut slices = vec![Vec::new(); k_total];
            for (n, &r) in spec.radii.iter().enumerate() {
                let se = DiskSe::new(r);
                slices[s - 1 - n] = closing_by_reconstruction(&img, &se).into_vec();
                slices[s + 1 + n] = opening_by_reconstruction(&img, &se).into_vec();
            }
            slices[s] = img.into_vec();
            slices
        })
        .collect();

    let dims = Dims::new(cube.pixels(), cube.bands, k_total);
    let t = Tensor3::from_fn(dims, |i, j, k| per_band[j][k][i])?;

    let mut entries = Vec::with_capacity(k_total);
    for &r in spec.radii.iter().rev() {
        entries.push((SliceKind::Cbr, Some(SliceParameter::Size(r))));
    }
    entries.push((SliceKind::Original, None));
    for &r in &spec.radii {
        entries.push((SliceKind::Obr, Some(SliceParameter::Size(r))));
    }
    let legend = Mode3Legend {
        entries: entries
            .into_iter()
            .enumerate()
            .map(|(k, (kind, parameter))| LegendEntry {
                k: k + 1,
                kind,
                parameter,
            })
            .collect(),
    };
    Ok((t, legend))
}
