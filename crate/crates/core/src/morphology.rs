//! Grayscale morphology with flat disk structuring elements.
//!
//! Erosion and dilation clip the structuring element at image borders
//! (out-of-bounds neighbours are ignored). Geodesic reconstruction uses the
//! 4-connected unit cross.

use std::collections::VecDeque;

use crate::error::{Error, Result};

/// Single-band image of finite real intensities, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl GrayImage {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::arg(format!("image must be non-empty, got {rows}x{cols}")));
        }
        if data.len() != rows * cols {
            return Err(Error::shape(rows * cols, data.len()));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("image data".into()));
        }
        Ok(GrayImage { rows, cols, data })
    }

    pub fn constant(rows: usize, cols: usize, value: f64) -> Result<Self> {
        GrayImage::new(rows, cols, vec![value; rows * cols])
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let data = (0..rows * cols).map(|p| f(p / cols, p % cols)).collect();
        GrayImage::new(rows, cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    /// Pointwise negation, the grayscale complement.
    pub fn negate(&self) -> GrayImage {
        GrayImage {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| -v).collect(),
        }
    }

    /// `self ≤ other` at every pixel.
    pub fn is_below(&self, other: &GrayImage) -> bool {
        self.same_shape(other) && self.data.iter().zip(&other.data).all(|(a, b)| a <= b)
    }

    fn same_shape(&self, other: &GrayImage) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }

    fn with_data(&self, data: Vec<f64>) -> GrayImage {
        GrayImage {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }
}

/// Flat disk: offsets `(dy, dx)` with `dx² + dy² ≤ radius²`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DiskSe {
    radius: usize,
}

impl DiskSe {
    pub fn new(radius: usize) -> Self {
        DiskSe { radius }
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    /// Half-width of the disk's horizontal chord at vertical offset `dy`.
    fn half_width(&self, dy: usize) -> usize {
        let r2 = self.radius * self.radius;
        let rem = r2 - dy * dy;
        let mut w = (rem as f64).sqrt() as usize;
        while w * w > rem {
            w -= 1;
        }
        while (w + 1) * (w + 1) <= rem {
            w += 1;
        }
        w
    }

    /// Every member offset, in raster order.
    pub fn offsets(&self) -> Vec<(isize, isize)> {
        let r = self.radius as isize;
        let mut out = Vec::new();
        for dy in -r..=r {
            for dx in -r..=r {
                if dx * dx + dy * dy <= r * r {
                    out.push((dy, dx));
                }
            }
        }
        out
    }
}

#[derive(Clone, Copy)]
enum Extremum {
    Min,
    Max,
}

impl Extremum {
    #[inline]
    fn pick(self, a: f64, b: f64) -> f64 {
        match self {
            Extremum::Min => a.min(b),
            Extremum::Max => a.max(b),
        }
    }

    fn identity(self) -> f64 {
        match self {
            Extremum::Min => f64::INFINITY,
            Extremum::Max => f64::NEG_INFINITY,
        }
    }
}

/// Running extremum over `[x - w, x + w]` clipped to the row (van Herk/Gil-Werman).
fn line_filter(row: &[f64], w: usize, op: Extremum, out: &mut [f64]) {
    let n = row.len();
    if w == 0 {
        out.copy_from_slice(row);
        return;
    }
    let len = 2 * w + 1;
    let padded_len = (n + 2 * w).div_ceil(len) * len;
    let value = |p: usize| {
        if p >= w && p - w < n {
            row[p - w]
        } else {
            op.identity()
        }
    };
    let mut prefix = vec![0.0; padded_len];
    let mut suffix = vec![0.0; padded_len];
    for start in (0..padded_len).step_by(len) {
        let mut acc = op.identity();
        for p in start..start + len {
            acc = op.pick(acc, value(p));
            prefix[p] = acc;
        }
        let mut acc = op.identity();
        for p in (start..start + len).rev() {
            acc = op.pick(acc, value(p));
            suffix[p] = acc;
        }
    }
    for (x, o) in out.iter_mut().enumerate() {
        *o = op.pick(suffix[x], prefix[x + len - 1]);
    }
}

fn flat_filter(img: &GrayImage, se: &DiskSe, op: Extremum) -> GrayImage {
    let r = se.radius;
    if r == 0 {
        return img.clone();
    }
    let (rows, cols) = (img.rows, img.cols);
    // One horizontally filtered image per distinct chord half-width.
    let widths: Vec<usize> = (0..=r).map(|dy| se.half_width(dy)).collect();
    let mut by_width: Vec<Option<Vec<f64>>> = vec![None; r + 1];
    for &w in &widths {
        if by_width[w].is_none() {
            let mut buf = vec![0.0; rows * cols];
            for y in 0..rows {
                line_filter(
                    &img.data[y * cols..(y + 1) * cols],
                    w,
                    op,
                    &mut buf[y * cols..(y + 1) * cols],
                );
            }
            by_width[w] = Some(buf);
        }
    }
    let mut out = vec![op.identity(); rows * cols];
    for y in 0..rows {
        let lo = y.saturating_sub(r);
        let hi = (y + r).min(rows - 1);
        for yy in lo..=hi {
            let h = by_width[widths[y.abs_diff(yy)]].as_ref().expect("filled above");
            let src = &h[yy * cols..(yy + 1) * cols];
            for (o, &v) in out[y * cols..(y + 1) * cols].iter_mut().zip(src) {
                *o = op.pick(*o, v);
            }
        }
    }
    img.with_data(out)
}

/// Minimum over the disk neighbourhood.
pub fn erode(img: &GrayImage, se: &DiskSe) -> GrayImage {
    flat_filter(img, se, Extremum::Min)
}

/// Maximum over the disk neighbourhood.
pub fn dilate(img: &GrayImage, se: &DiskSe) -> GrayImage {
    flat_filter(img, se, Extremum::Max)
}

fn check_marker(marker: &GrayImage, mask: &GrayImage) -> Result<()> {
    if !marker.same_shape(mask) {
        return Err(Error::shape(
            format!("{}x{}", mask.rows, mask.cols),
            format!("{}x{}", marker.rows, marker.cols),
        ));
    }
    if !marker.is_below(mask) {
        return Err(Error::arg("reconstruction marker must lie below the mask"));
    }
    Ok(())
}

/// Geodesic reconstruction by dilation of `marker` under `mask`.
///
/// Equal, bit for bit, to iterating `min(dilate(marker, cross), mask)` to
/// stability ([`reconstruct_by_dilation_iterative`]); computed with the
/// hybrid raster-scan plus FIFO algorithm.
pub fn reconstruct_by_dilation(marker: &GrayImage, mask: &GrayImage) -> Result<GrayImage> {
    check_marker(marker, mask)?;
    let (rows, cols) = (mask.rows, mask.cols);
    let m = &mask.data;
    let mut j = marker.data.clone();

    // Forward raster pass over the causal half-neighbourhood (up, left).
    for y in 0..rows {
        for x in 0..cols {
            let p = y * cols + x;
            let mut v = j[p];
            if y > 0 {
                v = v.max(j[p - cols]);
            }
            if x > 0 {
                v = v.max(j[p - 1]);
            }
            j[p] = v.min(m[p]);
        }
    }

    // Backward pass over (down, right); seed the queue where growth can continue.
    let mut queue = VecDeque::new();
    for y in (0..rows).rev() {
        for x in (0..cols).rev() {
            let p = y * cols + x;
            let mut v = j[p];
            if y + 1 < rows {
                v = v.max(j[p + cols]);
            }
            if x + 1 < cols {
                v = v.max(j[p + 1]);
            }
            j[p] = v.min(m[p]);
            let can_grow = |q: usize| j[q] < j[p] && j[q] < m[q];
            if (y + 1 < rows && can_grow(p + cols)) || (x + 1 < cols && can_grow(p + 1)) {
                queue.push_back(p);
            }
        }
    }

    while let Some(p) = queue.pop_front() {
        let (y, x) = (p / cols, p % cols);
        let mut neighbours = [usize::MAX; 4];
        if y > 0 {
            neighbours[0] = p - cols;
        }
        if y + 1 < rows {
            neighbours[1] = p + cols;
        }
        if x > 0 {
            neighbours[2] = p - 1;
        }
        if x + 1 < cols {
            neighbours[3] = p + 1;
        }
        for q in neighbours.into_iter().filter(|&q| q != usize::MAX) {
            if j[q] < j[p] && j[q] != m[q] {
                j[q] = j[p].min(m[q]);
                queue.push_back(q);
            }
        }
    }
    Ok(mask.with_data(j))
}

/// Reconstruction by plain stability iteration of the conditional dilation.
/// Slow; kept as the reference the fast path is checked against.
pub fn reconstruct_by_dilation_iterative(
    marker: &GrayImage,
    mask: &GrayImage,
) -> Result<GrayImage> {
    check_marker(marker, mask)?;
    let (rows, cols) = (mask.rows, mask.cols);
    let mut cur = marker.data.clone();
    loop {
        let mut next = cur.clone();
        for y in 0..rows {
            for x in 0..cols {
                let p = y * cols + x;
                let mut v = cur[p];
                if y > 0 {
                    v = v.max(cur[p - cols]);
                }
                if y + 1 < rows {
                    v = v.max(cur[p + cols]);
                }
                if x > 0 {
                    v = v.max(cur[p - 1]);
                }
                if x + 1 < cols {
                    v = v.max(cur[p + 1]);
                }
                next[p] = v.min(mask.data[p]);
            }
        }
        if next == cur {
            return Ok(mask.with_data(cur));
        }
        cur = next;
    }
}

/// Opening by reconstruction: erode, then reconstruct under the original.
/// Removes bright structures that cannot contain the disk while keeping
/// the contours of the others intact.
pub fn opening_by_reconstruction(img: &GrayImage, se: &DiskSe) -> GrayImage {
    reconstruct_by_dilation(&erode(img, se), img).expect("erosion lies below its input")
}

/// Closing by reconstruction, the dual of the opening under negation.
pub fn closing_by_reconstruction(img: &GrayImage, se: &DiskSe) -> GrayImage {
    opening_by_reconstruction(&img.negate(), se).negate()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_force(img: &GrayImage, se: &DiskSe, op: Extremum) -> GrayImage {
        let offsets = se.offsets();
        GrayImage::from_fn(img.rows(), img.cols(), |y, x| {
            let mut acc = op.identity();
            for &(dy, dx) in &offsets {
                let (yy, xx) = (y as isize + dy, x as isize + dx);
                if yy >= 0 && xx >= 0 && (yy as usize) < img.rows() && (xx as usize) < img.cols() {
                    acc = op.pick(acc, img.get(yy as usize, xx as usize));
                }
            }
            acc
        })
        .unwrap()
    }

    fn random_image(rows: usize, cols: usize, seed: u64) -> GrayImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..rows * cols).map(|_| rng.random_range(0..8) as f64).collect();
        GrayImage::new(rows, cols, data).unwrap()
    }

    fn square_image(n: usize, squares: &[(usize, usize, usize, f64)]) -> GrayImage {
        GrayImage::from_fn(n, n, |y, x| {
            squares
                .iter()
                .find(|&&(y0, x0, side, _)| y >= y0 && y < y0 + side && x >= x0 && x < x0 + side)
                .map_or(0.0, |s| s.3)
        })
        .unwrap()
    }

    #[test]
    fn disk_membership() {
        assert_eq!(DiskSe::new(0).offsets(), vec![(0, 0)]);
        assert_eq!(DiskSe::new(1).offsets().len(), 5);
        assert_eq!(DiskSe::new(2).offsets().len(), 13);
        let offsets = DiskSe::new(5).offsets();
        assert!(offsets.contains(&(0, 0)));
        for &(dy, dx) in &offsets {
            assert!(offsets.contains(&(-dy, -dx)));
        }
    }

    #[test]
    fn constant_image_is_invariant() {
        let img = GrayImage::constant(6, 7, 2.5).unwrap();
        for r in 0..4 {
            let se = DiskSe::new(r);
            assert_eq!(erode(&img, &se), img);
            assert_eq!(dilate(&img, &se), img);
        }
    }

    #[test]
    fn radius_zero_is_identity() {
        let img = random_image(5, 9, 1);
        let se = DiskSe::new(0);
        assert_eq!(erode(&img, &se), img);
        assert_eq!(dilate(&img, &se), img);
        assert_eq!(opening_by_reconstruction(&img, &se), img);
        assert_eq!(closing_by_reconstruction(&img, &se), img);
    }

    #[test]
    fn single_bright_pixel_dilates_to_plus_shape() {
        let mut data = vec![0.0; 25];
        data[12] = 1.0;
        let img = GrayImage::new(5, 5, data).unwrap();
        let d = dilate(&img, &DiskSe::new(1));
        let lit: Vec<usize> = (0..25).filter(|&p| d.as_slice()[p] == 1.0).collect();
        assert_eq!(lit, vec![7, 11, 12, 13, 17]);

        let e = erode(&img.negate(), &DiskSe::new(1));
        let dark: Vec<usize> = (0..25).filter(|&p| e.as_slice()[p] == -1.0).collect();
        assert_eq!(dark, lit);
    }

    #[test]
    fn fast_filters_match_brute_force() {
        for (seed, (rows, cols)) in [(3, 4), (9, 13), (17, 5), (1, 12)].into_iter().enumerate() {
            let img = random_image(rows, cols, seed as u64);
            for r in 0..6 {
                let se = DiskSe::new(r);
                assert_eq!(erode(&img, &se), brute_force(&img, &se, Extremum::Min));
                assert_eq!(dilate(&img, &se), brute_force(&img, &se, Extremum::Max));
            }
        }
    }

    #[test]
    fn reconstruction_of_mask_is_mask() {
        let mask = random_image(6, 6, 4);
        assert_eq!(reconstruct_by_dilation(&mask, &mask).unwrap(), mask);
    }

    #[test]
    fn reconstruction_from_global_min_of_constant_mask() {
        let mask = GrayImage::constant(4, 5, 3.0).unwrap();
        let marker = GrayImage::constant(4, 5, -1.0).unwrap();
        let rec = reconstruct_by_dilation(&marker, &mask).unwrap();
        assert_eq!(rec, GrayImage::constant(4, 5, -1.0).unwrap());
    }

    #[test]
    fn reconstruction_floods_plateau_in_one_dimension() {
        // Mask: ramp up to a plateau, a dip, and a second plateau.
        let mask_vals = vec![1.0, 2.0, 5.0, 5.0, 5.0, 2.0, 4.0, 4.0, 1.0];
        let mask = GrayImage::new(1, 9, mask_vals).unwrap();
        let mut seed = vec![0.0; 9];
        seed[3] = 5.0;
        let marker = GrayImage::new(1, 9, seed).unwrap();
        let fast = reconstruct_by_dilation(&marker, &mask).unwrap();
        let slow = reconstruct_by_dilation_iterative(&marker, &mask).unwrap();
        assert_eq!(fast, slow);
        assert_eq!(
            fast.as_slice(),
            &[1.0, 2.0, 5.0, 5.0, 5.0, 2.0, 2.0, 2.0, 1.0]
        );
    }

    #[test]
    fn fast_reconstruction_matches_iteration() {
        for seed in 0..20 {
            let mask = random_image(11, 14, seed);
            let marker = erode(&mask, &DiskSe::new(1 + (seed as usize % 3)));
            assert_eq!(
                reconstruct_by_dilation(&marker, &mask).unwrap(),
                reconstruct_by_dilation_iterative(&marker, &mask).unwrap()
            );
        }
    }

    #[test]
    fn marker_above_mask_is_rejected() {
        let mask = GrayImage::constant(3, 3, 0.0).unwrap();
        let marker = GrayImage::constant(3, 3, 1.0).unwrap();
        assert!(matches!(
            reconstruct_by_dilation(&marker, &mask),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn opening_keeps_large_and_removes_small_squares() {
        let img = square_image(16, &[(1, 1, 3, 5.0), (6, 6, 8, 7.0)]);
        let large_only = square_image(16, &[(6, 6, 8, 7.0)]);
        let opened = opening_by_reconstruction(&img, &DiskSe::new(2));
        assert_eq!(opened, large_only);
    }

    #[test]
    fn closing_fills_small_dark_spot() {
        let img = square_image(16, &[(1, 1, 3, 5.0), (6, 6, 8, 7.0)]).negate();
        let closed = closing_by_reconstruction(&img, &DiskSe::new(2));
        assert_eq!(closed, square_image(16, &[(6, 6, 8, 7.0)]).negate());
    }

    #[test]
    fn closing_is_extensive_and_keeps_constants() {
        let flat = GrayImage::constant(5, 5, 1.0).unwrap();
        assert_eq!(closing_by_reconstruction(&flat, &DiskSe::new(2)), flat);
        for seed in 0..5 {
            let img = random_image(12, 12, 100 + seed);
            assert!(img.is_below(&closing_by_reconstruction(&img, &DiskSe::new(2))));
        }
    }
}
