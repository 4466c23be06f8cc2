//! Dense third-order tensors (pixels × bands × transforms) and the
//! multilinear algebra the decomposition is built on: unfoldings,
//! Khatri-Rao products, mode products and CP reconstruction.
//!
//! Storage is pixel-major: element `(i, j, k)` lives at `(i * J + j) * K + k`,
//! so every horizontal slice `T[i, :, :]` is one contiguous block.
//!
//! Unfolding row order is fixed across the crate:
//!
//! | mode | shape   | row index of `(i, j, k)` | column |
//! |------|---------|--------------------------|--------|
//! | 1    | JK × I  | `j * K + k`              | `i`    |
//! | 2    | IK × J  | `i * K + k`              | `j`    |
//! | 3    | IJ × K  | `i * J + j`              | `k`    |
//!
//! With this ordering `unfold(reconstruct(A, B, Ψ), 1) = khatri_rao(B, Ψ) · Aᵀ`
//! and cyclically `khatri_rao(A, Ψ) · Bᵀ`, `khatri_rao(A, B) · Ψᵀ`.

use ndarray::{Array2, ArrayView1, Axis};
use rayon::prelude::*;
use std::fmt;

use crate::error::{Error, Result};

/// Dense real matrix used for unfoldings and factor matrices.
pub type Matrix = Array2<f64>;

/// Tensor mode selector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    One,
    Two,
    Three,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::One, Mode::Two, Mode::Three];

    pub fn index(self) -> usize {
        match self {
            Mode::One => 1,
            Mode::Two => 2,
            Mode::Three => 3,
        }
    }
}

impl TryFrom<usize> for Mode {
    type Error = Error;

    fn try_from(value: usize) -> Result<Self> {
        match value {
            1 => Ok(Mode::One),
            2 => Ok(Mode::Two),
            3 => Ok(Mode::Three),
            other => Err(Error::arg(format!("tensor mode must be 1, 2 or 3, got {other}"))),
        }
    }
}

/// Dimensions `(I, J, K)` of a third-order tensor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct Dims {
    pub pixels: usize,
    pub bands: usize,
    pub slices: usize,
}

impl Dims {
    pub fn new(pixels: usize, bands: usize, slices: usize) -> Self {
        Dims {
            pixels,
            bands,
            slices,
        }
    }

    pub fn len(&self) -> usize {
        self.pixels * self.bands * self.slices
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Shape `(rows, cols)` of the unfolding along `mode`.
    pub fn unfolding_shape(&self, mode: Mode) -> (usize, usize) {
        let Dims {
            pixels: i,
            bands: j,
            slices: k,
        } = *self;
        match mode {
            Mode::One => (j * k, i),
            Mode::Two => (i * k, j),
            Mode::Three => (i * j, k),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.pixels == 0 || self.bands == 0 || self.slices == 0 {
            return Err(Error::arg(format!("tensor dimensions must be >= 1, got {self}")));
        }
        Ok(())
    }
}

impl fmt::Display for Dims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.pixels, self.bands, self.slices)
    }
}

/// Dense third-order array of finite reals.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor3 {
    dims: Dims,
    data: Vec<f64>,
}

impl Tensor3 {
    /// Wraps `data` laid out pixel-major. Fails on empty dimensions, a length
    /// mismatch or non-finite entries.
    pub fn new(dims: Dims, data: Vec<f64>) -> Result<Self> {
        dims.validate()?;
        if data.len() != dims.len() {
            return Err(Error::shape(
                format!("{} elements for {dims}", dims.len()),
                data.len(),
            ));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("tensor data".into()));
        }
        Ok(Tensor3 { dims, data })
    }

    pub fn zeros(dims: Dims) -> Result<Self> {
        dims.validate()?;
        Ok(Tensor3 {
            dims,
            data: vec![0.0; dims.len()],
        })
    }

    pub fn from_fn(dims: Dims, mut f: impl FnMut(usize, usize, usize) -> f64) -> Result<Self> {
        dims.validate()?;
        let mut data = Vec::with_capacity(dims.len());
        for i in 0..dims.pixels {
            for j in 0..dims.bands {
                for k in 0..dims.slices {
                    data.push(f(i, j, k));
                }
            }
        }
        Tensor3::new(dims, data)
    }

    /// Stacks frontal slices (each `I × J`) along the third mode.
    pub fn from_frontal_slices(slices: &[Matrix]) -> Result<Self> {
        let first = slices
            .first()
            .ok_or_else(|| Error::arg("at least one frontal slice is required"))?;
        let (pixels, bands) = first.dim();
        let dims = Dims::new(pixels, bands, slices.len());
        dims.validate()?;
        for s in slices {
            if s.dim() != (pixels, bands) {
                return Err(Error::shape(format!("{pixels}x{bands}"), format!("{:?}", s.dim())));
            }
        }
        Tensor3::from_fn(dims, |i, j, k| slices[k][[i, j]])
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn offset(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.dims.bands + j) * self.dims.slices + k
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.offset(i, j, k)]
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, value: f64) {
        let o = self.offset(i, j, k);
        self.data[o] = value;
    }

    /// Horizontal slice `T[i, :, :]` as a flat `J*K` block with `k` fastest.
    pub fn pixel_block(&self, i: usize) -> &[f64] {
        let n = self.dims.bands * self.dims.slices;
        &self.data[i * n..(i + 1) * n]
    }

    /// Frontal slice `T[:, :, k]`, an `I × J` matrix.
    pub fn frontal_slice(&self, k: usize) -> Result<Matrix> {
        if k >= self.dims.slices {
            return Err(Error::arg(format!(
                "slice index {k} out of range for {} slices",
                self.dims.slices
            )));
        }
        Ok(Array2::from_shape_fn((self.dims.pixels, self.dims.bands), |(i, j)| {
            self.get(i, j, k)
        }))
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn sum_of_squares(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    /// Frobenius norm.
    pub fn frobenius(&self) -> f64 {
        self.sum_of_squares().sqrt()
    }

    /// Mode-`d` unfolding with the crate-wide row ordering.
    pub fn unfold(&self, mode: Mode) -> Matrix {
        let d = self.dims;
        let (rows, cols) = d.unfolding_shape(mode);
        match mode {
            Mode::One => Array2::from_shape_fn((rows, cols), |(r, i)| self.data[i * rows + r]),
            Mode::Two => Array2::from_shape_fn((rows, cols), |(r, j)| {
                let (i, k) = (r / d.slices, r % d.slices);
                self.get(i, j, k)
            }),
            Mode::Three => Array2::from_shape_fn((rows, cols), |(r, k)| self.data[r * cols + k]),
        }
    }

    /// Inverse of [`Tensor3::unfold`].
    pub fn fold(m: &Matrix, mode: Mode, dims: Dims) -> Result<Self> {
        dims.validate()?;
        let expected = dims.unfolding_shape(mode);
        if m.dim() != expected {
            return Err(Error::shape(
                format!("{}x{} mode-{} unfolding of {dims}", expected.0, expected.1, mode.index()),
                format!("{}x{}", m.nrows(), m.ncols()),
            ));
        }
        Tensor3::from_fn(dims, |i, j, k| match mode {
            Mode::One => m[[j * dims.slices + k, i]],
            Mode::Two => m[[i * dims.slices + k, j]],
            Mode::Three => m[[i * dims.bands + j, k]],
        })
    }

    /// Mode-`d` product `T ×_d M`, where `M` has as many columns as
    /// mode `d` has entries.
    pub fn mode_product(&self, m: &Matrix, mode: Mode) -> Result<Self> {
        let d = self.dims;
        let old = match mode {
            Mode::One => d.pixels,
            Mode::Two => d.bands,
            Mode::Three => d.slices,
        };
        if m.ncols() != old {
            return Err(Error::shape(format!("{old} columns"), m.ncols()));
        }
        let new = m.nrows();
        let out_dims = match mode {
            Mode::One => Dims::new(new, d.bands, d.slices),
            Mode::Two => Dims::new(d.pixels, new, d.slices),
            Mode::Three => Dims::new(d.pixels, d.bands, new),
        };
        Tensor3::from_fn(out_dims, |i, j, k| match mode {
            Mode::One => (0..old).map(|l| m[[i, l]] * self.get(l, j, k)).sum(),
            Mode::Two => (0..old).map(|l| m[[j, l]] * self.get(i, l, k)).sum(),
            Mode::Three => (0..old).map(|l| m[[k, l]] * self.get(i, j, l)).sum(),
        })
    }

    /// Superdiagonal `R × R × R` tensor of ones.
    pub fn identity_core(rank: usize) -> Result<Self> {
        Tensor3::from_fn(Dims::new(rank, rank, rank), |i, j, k| {
            if i == j && j == k {
                1.0
            } else {
                0.0
            }
        })
    }
}

/// Mode-`d` unfolding; see the module docs for the row ordering.
pub fn unfold(t: &Tensor3, mode: Mode) -> Matrix {
    t.unfold(mode)
}

pub fn fold(m: &Matrix, mode: Mode, dims: Dims) -> Result<Tensor3> {
    Tensor3::fold(m, mode, dims)
}

pub fn frobenius(t: &Tensor3) -> f64 {
    t.frobenius()
}

/// Column-wise Kronecker product. Row `p * rows2 + q` of the result pairs
/// row `p` of `m1` with row `q` of `m2`.
pub fn khatri_rao(m1: &Matrix, m2: &Matrix) -> Result<Matrix> {
    if m1.ncols() != m2.ncols() {
        return Err(Error::shape(
            format!("{} columns", m1.ncols()),
            format!("{} columns", m2.ncols()),
        ));
    }
    let (p, q) = (m1.nrows(), m2.nrows());
    Ok(Array2::from_shape_fn((p * q, m1.ncols()), |(row, r)| {
        m1[[row / q, r]] * m2[[row % q, r]]
    }))
}

fn check_rank(a: &Matrix, b: &Matrix, psi: &Matrix) -> Result<usize> {
    let r = a.ncols();
    if b.ncols() != r || psi.ncols() != r {
        return Err(Error::shape(
            format!("rank {r} in every factor"),
            format!("ranks ({}, {}, {})", r, b.ncols(), psi.ncols()),
        ));
    }
    if r == 0 {
        return Err(Error::arg("rank must be >= 1"));
    }
    Ok(r)
}

/// `T = Σ_r a_r ∘ b_r ∘ ψ_r`.
pub fn reconstruct(a: &Matrix, b: &Matrix, psi: &Matrix) -> Result<Tensor3> {
    let rank = check_rank(a, b, psi)?;
    let dims = Dims::new(a.nrows(), b.nrows(), psi.nrows());
    dims.validate()?;
    let block = dims.bands * dims.slices;
    // Khatri-Rao of B and Ψ is exactly the per-pixel block layout.
    let w = khatri_rao(b, psi)?;
    let mut data = vec![0.0; dims.len()];
    data.par_chunks_mut(block).enumerate().for_each(|(i, out)| {
        let arow = a.row(i);
        for (o, wrow) in out.iter_mut().zip(w.outer_iter()) {
            *o = dot(arow, wrow, rank);
        }
    });
    Tensor3::new(dims, data)
}

#[inline]
fn dot(x: ArrayView1<f64>, y: ArrayView1<f64>, n: usize) -> f64 {
    let mut s = 0.0;
    for r in 0..n {
        s += x[r] * y[r];
    }
    s
}

/// `B⁽ᵏ⁾ = B · diag(ψ_{k,:})`: the endmembers as seen by frontal slice `k`.
pub fn scaled_endmembers(b: &Matrix, psi: &Matrix, k: usize) -> Result<Matrix> {
    if b.ncols() != psi.ncols() {
        return Err(Error::shape(
            format!("{} columns", b.ncols()),
            format!("{} columns", psi.ncols()),
        ));
    }
    if k >= psi.nrows() {
        return Err(Error::arg(format!(
            "slice index {k} out of range for {} rows of psi",
            psi.nrows()
        )));
    }
    let mut out = b.clone();
    for (mut col, &s) in out.axis_iter_mut(Axis(1)).zip(psi.row(k).iter()) {
        col *= s;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_tensor(dims: Dims, seed: u64) -> Tensor3 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor3::from_fn(dims, |_, _, _| rng.random::<f64>() - 0.5).unwrap()
    }

    fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
        Array2::from_shape_fn((rows, cols), |_| rng.random::<f64>())
    }

    fn kron(x: ArrayView1<f64>, y: ArrayView1<f64>) -> Vec<f64> {
        x.iter().flat_map(|a| y.iter().map(move |b| a * b)).collect()
    }

    #[test]
    fn mode_one_unfolding_by_hand() {
        // t(i,j,k) = i + 10j + 100k with 1-based indices.
        let t = Tensor3::from_fn(Dims::new(2, 2, 2), |i, j, k| {
            (i + 1) as f64 + 10.0 * (j + 1) as f64 + 100.0 * (k + 1) as f64
        })
        .unwrap();
        let m = t.unfold(Mode::One);
        assert_eq!(m.dim(), (4, 2));
        let expected = array![
            [111.0, 112.0],
            [211.0, 212.0],
            [121.0, 122.0],
            [221.0, 222.0]
        ];
        assert_eq!(m, expected);
        let back = fold(&expected, Mode::One, Dims::new(2, 2, 2)).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn unfold_shapes() {
        let t = random_tensor(Dims::new(3, 4, 5), 1);
        assert_eq!(t.unfold(Mode::One).dim(), (20, 3));
        assert_eq!(t.unfold(Mode::Two).dim(), (15, 4));
        assert_eq!(t.unfold(Mode::Three).dim(), (12, 5));
    }

    #[test]
    fn fold_roundtrip_every_mode() {
        let t = random_tensor(Dims::new(3, 4, 5), 7);
        for mode in Mode::ALL {
            assert_eq!(fold(&t.unfold(mode), mode, t.dims()).unwrap(), t);
        }
    }

    #[test]
    fn fold_rejects_wrong_shape() {
        let m = Array2::zeros((5, 2));
        assert!(matches!(
            fold(&m, Mode::One, Dims::new(2, 2, 2)),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn invalid_mode_is_argument_error() {
        assert!(matches!(Mode::try_from(4), Err(Error::InvalidArgument(_))));
        assert!(matches!(Mode::try_from(0), Err(Error::InvalidArgument(_))));
        assert_eq!(Mode::try_from(2).unwrap(), Mode::Two);
    }

    #[test]
    fn new_rejects_bad_inputs() {
        assert!(Tensor3::new(Dims::new(0, 1, 1), vec![]).is_err());
        assert!(Tensor3::new(Dims::new(1, 1, 2), vec![1.0]).is_err());
        assert!(matches!(
            Tensor3::new(Dims::new(1, 1, 1), vec![f64::NAN]),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn khatri_rao_by_hand() {
        let kr = khatri_rao(&array![[1.0], [2.0]], &array![[3.0], [4.0]]).unwrap();
        assert_eq!(kr, array![[3.0], [4.0], [6.0], [8.0]]);
        let row = khatri_rao(&array![[1.0, 2.0, 3.0]], &array![[4.0, 5.0, 6.0]]).unwrap();
        assert_eq!(row, array![[4.0, 10.0, 18.0]]);
    }

    #[test]
    fn khatri_rao_columns_are_kronecker_products() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m1 = random_matrix(3, 2, &mut rng);
        let m2 = random_matrix(4, 2, &mut rng);
        let kr = khatri_rao(&m1, &m2).unwrap();
        for r in 0..2 {
            let expected = kron(m1.column(r), m2.column(r));
            assert_eq!(kr.column(r).to_vec(), expected);
        }
    }

    #[test]
    fn khatri_rao_rejects_column_mismatch() {
        assert!(khatri_rao(&Array2::zeros((2, 2)), &Array2::zeros((2, 3))).is_err());
    }

    #[test]
    fn reconstruct_rank_one_by_hand() {
        let t = reconstruct(&array![[1.0], [2.0]], &array![[1.0], [0.0]], &array![[1.0], [1.0]])
            .unwrap();
        for i in 0..2 {
            for k in 0..2 {
                assert_eq!(t.get(i, 0, k), (i + 1) as f64);
                assert_eq!(t.get(i, 1, k), 0.0);
            }
        }
    }

    #[test]
    fn reconstruct_matches_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (a, b, psi) = (
            random_matrix(5, 3, &mut rng),
            random_matrix(4, 3, &mut rng),
            random_matrix(6, 3, &mut rng),
        );
        let t = reconstruct(&a, &b, &psi).unwrap();
        for i in 0..5 {
            for j in 0..4 {
                for k in 0..6 {
                    let mut s = 0.0;
                    for r in 0..3 {
                        s += a[[i, r]] * b[[j, r]] * psi[[k, r]];
                    }
                    assert!((t.get(i, j, k) - s).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn reconstruct_matches_mode_products_with_identity_core() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let (a, b, psi) = (
            random_matrix(4, 2, &mut rng),
            random_matrix(3, 2, &mut rng),
            random_matrix(2, 2, &mut rng),
        );
        let via_core = Tensor3::identity_core(2)
            .unwrap()
            .mode_product(&a, Mode::One)
            .unwrap()
            .mode_product(&b, Mode::Two)
            .unwrap()
            .mode_product(&psi, Mode::Three)
            .unwrap();
        let t = reconstruct(&a, &b, &psi).unwrap();
        for (x, y) in t.as_slice().iter().zip(via_core.as_slice()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn reconstruct_rejects_rank_mismatch() {
        assert!(reconstruct(&Array2::ones((2, 2)), &Array2::ones((2, 3)), &Array2::ones((2, 2)))
            .is_err());
    }

    #[test]
    fn rank_one_unfolding_equals_outer_product() {
        let a = array![[1.0], [2.0], [3.0]];
        let b = array![[0.5], [2.0]];
        let c = array![[1.0], [4.0]];
        let t = reconstruct(&a, &b, &c).unwrap();
        let w = khatri_rao(&b, &c).unwrap();
        assert_eq!(t.unfold(Mode::One), w.dot(&a.t()));
    }

    #[test]
    fn frobenius_basics() {
        assert_eq!(Tensor3::zeros(Dims::new(2, 3, 4)).unwrap().frobenius(), 0.0);
        let mut t = Tensor3::zeros(Dims::new(2, 2, 2)).unwrap();
        t.set(1, 0, 1, 3.0);
        assert_eq!(frobenius(&t), 3.0);
    }

    #[test]
    fn scaled_endmembers_cases() {
        let b = array![[1.0, 2.0], [3.0, 4.0]];
        let psi = array![[1.0, 1.0], [2.0, 0.0]];
        assert_eq!(scaled_endmembers(&b, &psi, 0).unwrap(), b);
        assert_eq!(scaled_endmembers(&b, &psi, 1).unwrap(), array![[2.0, 0.0], [6.0, 0.0]]);
        assert!(scaled_endmembers(&b, &psi, 2).is_err());
    }

    #[test]
    fn frontal_slice_is_a_scaled_mixture() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (a, b, psi) = (
            random_matrix(6, 3, &mut rng),
            random_matrix(5, 3, &mut rng),
            random_matrix(4, 3, &mut rng),
        );
        let t = reconstruct(&a, &b, &psi).unwrap();
        for k in 0..4 {
            let slice = t.frontal_slice(k).unwrap();
            let model = a.dot(&scaled_endmembers(&b, &psi, k).unwrap().t());
            assert!((&slice - &model).iter().all(|d| d.abs() < 1e-12));
        }
    }
}
