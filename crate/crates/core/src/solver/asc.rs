//! Abundance sum-to-one (ASC) handling.
//!
//! Embedded ASC appends a lateral slice to the data and a row to the
//! endmember matrix. With `b̃_{J+1,r} = δ / ψ_{κ,r}` and `t̃_{i,J+1,κ} = δ`
//! at the anchor slice `κ`, fitting that entry exactly forces
//! `Σ_r a_{i,r} = 1`. The other entries of the extra slice are filled from
//! the current factors so they carry no opposing pull.
//!
//! The naive variant instead projects each abundance row onto the simplex.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::tensor::{Dims, Matrix, Tensor3};

/// Extra lateral slice `T̃[:, J+1, :]` and endmember row `b̃_{J+1,:}`.
#[derive(Clone, Debug, PartialEq)]
pub struct AugmentedProblem {
    /// `I × K` values of the appended lateral slice.
    pub extra_slice: Matrix,
    /// Appended endmember row, one entry per component.
    pub extra_row: Array1<f64>,
    pub delta: f64,
    /// 0-based anchor slice.
    pub anchor: usize,
}

impl AugmentedProblem {
    /// Materializes `T̃` (`I × (J+1) × K`).
    pub fn augmented_tensor(&self, t: &Tensor3) -> Result<Tensor3> {
        let d = t.dims();
        if self.extra_slice.dim() != (d.pixels, d.slices) {
            return Err(Error::shape(
                format!("{}x{}", d.pixels, d.slices),
                format!("{:?}", self.extra_slice.dim()),
            ));
        }
        Tensor3::from_fn(Dims::new(d.pixels, d.bands + 1, d.slices), |i, j, k| {
            if j < d.bands {
                t.get(i, j, k)
            } else {
                self.extra_slice[[i, k]]
            }
        })
    }

    /// `B̃`: `b` with the extra row appended.
    pub fn augmented_endmembers(&self, b: &Matrix) -> Matrix {
        let (j, r) = b.dim();
        Array2::from_shape_fn((j + 1, r), |(row, col)| {
            if row < j {
                b[[row, col]]
            } else {
                self.extra_row[col]
            }
        })
    }
}

/// Builds the ASC augmentation from the current factors.
///
/// `epsilon` bounds `ψ_{κ,r}` from below before inversion.
pub fn apply_asc_augmentation(
    a: &Matrix,
    psi: &Matrix,
    delta: f64,
    epsilon: f64,
    anchor: usize,
) -> Result<AugmentedProblem> {
    let (pixels, rank) = a.dim();
    let slices = psi.nrows();
    if psi.ncols() != rank {
        return Err(Error::shape(format!("{rank} columns"), psi.ncols()));
    }
    if anchor >= slices {
        return Err(Error::arg(format!(
            "ASC anchor slice {} out of range for {slices} slices",
            anchor + 1
        )));
    }
    if !(delta > 0.0) {
        return Err(Error::arg(format!("ASC constant must be positive, got {delta}")));
    }
    let extra_row: Array1<f64> =
        (0..rank).map(|r| delta / psi[[anchor, r]].max(epsilon)).collect();
    let mut extra_slice = Array2::zeros((pixels, slices));
    for i in 0..pixels {
        for k in 0..slices {
            extra_slice[[i, k]] = if k == anchor {
                delta
            } else {
                (0..rank).map(|r| a[[i, r]] * extra_row[r] * psi[[k, r]]).sum()
            };
        }
    }
    Ok(AugmentedProblem {
        extra_slice,
        extra_row,
        delta,
        anchor,
    })
}

/// Euclidean projection of `v` onto the unit simplex (sort and threshold).
pub fn project_to_simplex(v: &mut [f64]) {
    let mut sorted: Vec<f64> = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (idx, &u) in sorted.iter().enumerate() {
        cumulative += u;
        let candidate = (cumulative - 1.0) / (idx + 1) as f64;
        if u - candidate > 0.0 {
            theta = candidate;
        }
    }
    for x in v.iter_mut() {
        *x = (*x - theta).max(0.0);
    }
}

/// Projects every row of `a` onto the unit simplex.
pub fn project_rows_to_simplex(a: &mut Matrix) {
    for mut row in a.rows_mut() {
        let mut buf = row.to_vec();
        project_to_simplex(&mut buf);
        for (dst, src) in row.iter_mut().zip(buf) {
            *dst = src;
        }
    }
}

/// Mean of `|Σ_r a_{i,r} − 1|` over the given rows (all rows when `None`).
pub fn row_sum_deviation(a: &Matrix, rows: Option<&[usize]>) -> f64 {
    let dev = |i: usize| (a.row(i).sum() - 1.0).abs();
    match rows {
        Some(idx) if !idx.is_empty() => idx.iter().map(|&i| dev(i)).sum::<f64>() / idx.len() as f64,
        Some(_) => 0.0,
        None => (0..a.nrows()).map(dev).sum::<f64>() / a.nrows().max(1) as f64,
    }
}
