//! CSV matrices and PGM maps.

use std::fs;
use std::path::Path;

use anyhow::{ensure, Context, Result};
use hsu_core::Matrix;
use serde::{Deserialize, Serialize};

/// Writes a header row of `labels` then one CSV row per matrix row, with
/// floats in shortest round-trip form.
pub fn write_matrix(path: &Path, m: &Matrix, labels: &[String]) -> Result<()> {
    ensure!(labels.len() == m.ncols(), "{} labels for {} columns", labels.len(), m.ncols());
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(labels)?;
    for row in m.rows() {
        w.write_record(row.iter().map(|v| format!("{v:?}")))?;
    }
    w.flush()?;
    Ok(())
}

/// Default column labels `r1..rR`.
pub fn component_labels(rank: usize) -> Vec<String> {
    (1..=rank).map(|r| format!("r{r}")).collect()
}

/// Reads a matrix written by [`write_matrix`]; returns the header labels.
pub fn read_matrix(path: &Path) -> Result<(Vec<String>, Matrix)> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let labels: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let mut values = Vec::new();
    let mut rows = 0;
    for record in r.records() {
        let record = record?;
        ensure!(record.len() == labels.len(), "{}: ragged row {}", path.display(), rows + 1);
        for field in record.iter() {
            values.push(
                field
                    .trim()
                    .parse::<f64>()
                    .with_context(|| format!("{}: bad number '{field}'", path.display()))?,
            );
        }
        rows += 1;
    }
    let m = Matrix::from_shape_vec((rows, labels.len()), values)?;
    Ok((labels, m))
}

/// Reads a spectral library; a leading `wavelength*` column is dropped.
pub fn read_spectra(path: &Path) -> Result<(Vec<String>, Matrix)> {
    let (labels, m) = read_matrix(path)?;
    if labels.first().is_some_and(|l| l.to_lowercase().starts_with("wavelength")) {
        let trimmed = m.slice(ndarray::s![.., 1..]).to_owned();
        return Ok((labels[1..].to_vec(), trimmed));
    }
    Ok((labels, m))
}

/// Min-max constants used to quantize a map.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapScale {
    pub min: f64,
    pub max: f64,
}

/// 8-bit binary PGM, `0 ↦ min` and `255 ↦ max`. A flat map is all zeros.
pub fn write_pgm(path: &Path, values: &[f64], rows: usize, cols: usize) -> Result<MapScale> {
    ensure!(values.len() == rows * cols, "map has {} values for {rows}x{cols}", values.len());
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = max - min;
    let mut bytes = format!("P5\n{cols} {rows}\n255\n").into_bytes();
    bytes.extend(values.iter().map(|&v| {
        if span > 0.0 {
            (255.0 * (v - min) / span).round().clamp(0.0, 255.0) as u8
        } else {
            0
        }
    }));
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))?;
    Ok(MapScale { min, max })
}
