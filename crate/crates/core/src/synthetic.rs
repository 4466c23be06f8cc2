//! Synthetic time-series scene: six mixed objects, three endmembers and
//! three time stamps, with optional Gaussian noise.

use ndarray::{array, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{reconstruct, Matrix, Tensor3};

const SPECTRA_CSV: &str = include_str!("../data/spectra.csv");
const LAYOUT_JSON: &str = include_str!("../data/layout.json");

pub const ENDMEMBER_LABELS: [&str; 3] = ["Street", "Vegetation", "Metal Sheets"];

/// Object footprint; coordinates are 0-based, rectangles half-open.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "lowercase")]
pub enum Shape {
    Rect {
        top: usize,
        left: usize,
        height: usize,
        width: usize,
    },
    Disk {
        center: [usize; 2],
        radius: usize,
    },
}

impl Shape {
    pub fn contains(&self, row: usize, col: usize) -> bool {
        match *self {
            Shape::Rect { top, left, height, width } => {
                (top..top + height).contains(&row) && (left..left + width).contains(&col)
            }
            Shape::Disk { center, radius } => {
                let dy = row as i64 - center[0] as i64;
                let dx = col as i64 - center[1] as i64;
                dy * dy + dx * dx <= (radius * radius) as i64
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub id: usize,
    #[serde(flatten)]
    pub shape: Shape,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub rows: usize,
    pub cols: usize,
    pub objects: Vec<SceneObject>,
}

impl Layout {
    /// The bundled 128×128 layout.
    pub fn bundled() -> Layout {
        serde_json::from_str(LAYOUT_JSON).expect("bundled layout parses")
    }

    /// Object id per pixel in raster order, 0 for background.
    pub fn label_map(&self) -> Result<Vec<usize>> {
        let mut labels = vec![0; self.rows * self.cols];
        for obj in &self.objects {
            if obj.id == 0 {
                return Err(Error::Spec("object ids start at 1".into()));
            }
            for row in 0..self.rows {
                for col in 0..self.cols {
                    if obj.shape.contains(row, col) {
                        let slot = &mut labels[row * self.cols + col];
                        if *slot != 0 {
                            return Err(Error::Spec(format!(
                                "objects {} and {} overlap at ({row}, {col})",
                                *slot, obj.id
                            )));
                        }
                        *slot = obj.id;
                    }
                }
            }
        }
        Ok(labels)
    }
}

/// What pixels outside every object contain.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Background {
    /// All-zero abundance row.
    #[default]
    Zero,
    /// Same mixture as the given object id.
    Object(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub layout: Layout,
    /// Percentages per object (in `layout` id order 1..), columns
    /// Street, Vegetation, Metal Sheets.
    pub mixtures: Vec<[f64; 3]>,
    /// `K × R` temporal matrix, one row per time stamp.
    pub temporal: Vec<[f64; 3]>,
    pub sigma2: f64,
    pub seed: u64,
    pub background: Background,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            layout: Layout::bundled(),
            mixtures: vec![
                [10.0, 70.0, 20.0],
                [0.0, 100.0, 0.0],
                [0.0, 0.0, 100.0],
                [80.0, 10.0, 10.0],
                [20.0, 20.0, 60.0],
                [100.0, 0.0, 0.0],
            ],
            temporal: vec![[1.0, 1.0, 1.0], [1.0, 1.0, 0.0], [1.0, 0.0, 0.0]],
            sigma2: 0.0,
            seed: 0,
            background: Background::Zero,
        }
    }
}

impl SyntheticSpec {
    pub fn with_noise(sigma2: f64, seed: u64) -> Self {
        SyntheticSpec {
            sigma2,
            seed,
            ..SyntheticSpec::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.layout.rows == 0 || self.layout.cols == 0 {
            return Err(Error::Spec("empty grid".into()));
        }
        for (n, row) in self.mixtures.iter().enumerate() {
            let total: f64 = row.iter().sum();
            if (total - 100.0).abs() > 1e-9 || row.iter().any(|&v| v < 0.0) {
                return Err(Error::Spec(format!(
                    "mixture of object {} must be nonnegative and sum to 100, got {total}",
                    n + 1
                )));
            }
        }
        for obj in &self.layout.objects {
            if obj.id > self.mixtures.len() {
                return Err(Error::Spec(format!("object {} has no mixture row", obj.id)));
            }
        }
        if let Background::Object(id) = self.background {
            if id == 0 || id > self.mixtures.len() {
                return Err(Error::Spec(format!("background object {id} has no mixture row")));
            }
        }
        if self.temporal.is_empty() {
            return Err(Error::Spec("temporal matrix has no rows".into()));
        }
        if !(self.sigma2 >= 0.0) || !self.sigma2.is_finite() {
            return Err(Error::Spec(format!("noise variance must be >= 0, got {}", self.sigma2)));
        }
        Ok(())
    }
}

/// Noiseless factors and tensor.
#[derive(Clone, Debug)]
pub struct GroundTruth {
    /// `I × 3` abundances.
    pub a: Matrix,
    /// `26 × 3` endmembers.
    pub b: Matrix,
    /// `K × 3` temporal signatures.
    pub c: Matrix,
    pub noiseless: Tensor3,
    /// Object id per pixel, 0 for background.
    pub labels: Vec<usize>,
}

impl GroundTruth {
    /// Pixels that belong to an object.
    pub fn object_pixels(&self) -> Vec<usize> {
        (0..self.labels.len()).filter(|&i| self.labels[i] != 0).collect()
    }
}

/// Wavelengths (nm) of the bundled spectra.
pub fn bundled_wavelengths() -> Vec<f64> {
    parse_spectra().0
}

/// The three bundled 26-band signatures, unit-max normalized.
pub fn bundled_spectra() -> Matrix {
    parse_spectra().1
}

fn parse_spectra() -> (Vec<f64>, Matrix) {
    let mut wavelengths = Vec::new();
    let mut values = Vec::new();
    for line in SPECTRA_CSV.lines().skip(1).filter(|l| !l.trim().is_empty()) {
        let mut fields = line.split(',').map(|f| f.trim().parse::<f64>().expect("numeric spectra"));
        wavelengths.push(fields.next().expect("wavelength column"));
        values.extend(fields);
    }
    let bands = wavelengths.len();
    (wavelengths, Array2::from_shape_vec((bands, 3), values).expect("three spectra"))
}

pub fn generate(spec: &SyntheticSpec) -> Result<(Tensor3, GroundTruth)> {
    spec.validate()?;
    let labels = spec.layout.label_map()?;
    let mixture = |id: usize| spec.mixtures[id - 1].map(|p| p / 100.0);
    let background = match spec.background {
        Background::Zero => [0.0; 3],
        Background::Object(id) => mixture(id),
    };
    let a = Array2::from_shape_fn((labels.len(), 3), |(i, r)| match labels[i] {
        0 => background[r],
        id => mixture(id)[r],
    });
    let b = bundled_spectra();
    let c = Array2::from_shape_fn((spec.temporal.len(), 3), |(k, r)| spec.temporal[k][r]);
    let noiseless = reconstruct(&a, &b, &c)?;
    let observed = if spec.sigma2 == 0.0 {
        noiseless.clone()
    } else {
        let normal = Normal::new(0.0, spec.sigma2.sqrt()).map_err(|e| Error::Spec(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let data = noiseless.as_slice().iter().map(|v| v + normal.sample(&mut rng)).collect();
        Tensor3::new(noiseless.dims(), data)?
    };
    Ok((
        observed,
        GroundTruth {
            a,
            b,
            c,
            noiseless,
            labels,
        },
    ))
}

/// Ground-truth temporal matrix of the default scene.
pub fn default_temporal() -> Matrix {
    array![[1.0, 1.0, 1.0], [1.0, 1.0, 0.0], [1.0, 0.0, 0.0]]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::sad;
    use crate::tensor::Mode;

    #[test]
    fn bundled_data_shapes() {
        let b = bundled_spectra();
        assert_eq!(b.dim(), (26, 3));
        assert!(b.iter().all(|&v| v >= 0.0));
        for col in b.columns() {
            assert_eq!(col.iter().copied().fold(0.0, f64::max), 1.0);
        }
        assert_eq!(bundled_wavelengths().len(), 26);
    }

    #[test]
    fn bundled_spectra_are_distinct() {
        let b = bundled_spectra();
        for p in 0..3 {
            for q in p + 1..3 {
                assert!(sad(b.column(p), b.column(q)).unwrap() >= 10.0);
            }
        }
    }

    #[test]
    fn layout_is_valid_with_distinct_sizes() {
        let layout = Layout::bundled();
        assert_eq!((layout.rows, layout.cols), (128, 128));
        let labels = layout.label_map().unwrap();
        let mut sizes: Vec<usize> = (1..=6).map(|id| labels.iter().filter(|&&l| l == id).count()).collect();
        assert!(sizes.iter().all(|&s| s > 0));
        // Metal-only object is the smallest, the pure Street object the largest.
        assert_eq!(sizes.iter().min(), Some(&sizes[2]));
        assert_eq!(sizes.iter().max(), Some(&sizes[5]));
        sizes.sort_unstable();
        sizes.dedup();
        assert_eq!(sizes.len(), 6);
    }

    #[test]
    fn object_four_mixture() {
        let (_, gt) = generate(&SyntheticSpec::default()).unwrap();
        let i = gt.labels.iter().position(|&l| l == 4).unwrap();
        assert_eq!(gt.a.row(i).to_vec(), vec![0.8, 0.1, 0.1]);
        for &i in &gt.object_pixels() {
            assert!((gt.a.row(i).sum() - 1.0).abs() < 1e-15);
        }
        assert_eq!(gt.c, default_temporal());
    }

    #[test]
    fn zero_noise_is_bitwise_noiseless() {
        let (t, gt) = generate(&SyntheticSpec::default()).unwrap();
        assert_eq!(t, gt.noiseless);
        assert_eq!(t.dims().len(), 16384 * 26 * 3);
        assert_eq!(gt.noiseless, reconstruct(&gt.a, &gt.b, &gt.c).unwrap());
    }

    #[test]
    fn noise_has_requested_variance() {
        let (t, gt) = generate(&SyntheticSpec::with_noise(1e-2, 9)).unwrap();
        let diffs: Vec<f64> = t.as_slice().iter().zip(gt.noiseless.as_slice()).map(|(x, y)| x - y).collect();
        let n = diffs.len() as f64;
        let mean = diffs.iter().sum::<f64>() / n;
        let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n - 1.0);
        assert!((var - 1e-2).abs() < 0.05 * 1e-2, "variance {var}");
        let (again, _) = generate(&SyntheticSpec::with_noise(1e-2, 9)).unwrap();
        assert_eq!(t, again);
    }

    #[test]
    fn bad_mixture_is_rejected() {
        let mut spec = SyntheticSpec::default();
        spec.mixtures[0] = [10.0, 70.0, 10.0];
        assert!(matches!(generate(&spec), Err(Error::Spec(_))));
    }

    #[test]
    fn overlapping_objects_are_rejected() {
        let mut spec = SyntheticSpec::default();
        spec.layout.objects[1].shape = Shape::Rect { top: 20, left: 80, height: 10, width: 10 };
        assert!(generate(&spec).is_err());
    }

    /// Singular values by one-sided Jacobi on the columns of `m`.
    fn singular_values(m: &Matrix) -> Vec<f64> {
        let mut cols: Vec<Vec<f64>> = m.columns().into_iter().map(|c| c.to_vec()).collect();
        let n = cols.len();
        for _ in 0..60 {
            let mut rotated = false;
            for p in 0..n {
                for q in p + 1..n {
                    let alpha: f64 = cols[p].iter().map(|v| v * v).sum();
                    let beta: f64 = cols[q].iter().map(|v| v * v).sum();
                    let gamma: f64 = cols[p].iter().zip(&cols[q]).map(|(x, y)| x * y).sum();
                    if gamma.abs() <= 1e-15 * (alpha * beta).sqrt() {
                        continue;
                    }
                    rotated = true;
                    let zeta = (beta - alpha) / (2.0 * gamma);
                    let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                    let t = if zeta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (1.0 + t * t).sqrt();
                    let s = c * t;
                    let (lo, hi) = cols.split_at_mut(q);
                    for (x, y) in lo[p].iter_mut().zip(hi[0].iter_mut()) {
                        let (xp, yq) = (*x, *y);
                        *x = c * xp - s * yq;
                        *y = s * xp + c * yq;
                    }
                }
            }
            if !rotated {
                break;
            }
        }
        let mut sv: Vec<f64> = cols.iter().map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
        sv.sort_by(|a, b| b.total_cmp(a));
        sv
    }

    #[test]
    fn noiseless_unfoldings_have_rank_three() {
        let (t, _) = generate(&SyntheticSpec::default()).unwrap();
        let sv = singular_values(&t.unfold(Mode::Two));
        assert!(sv[2] > 1e-6 * sv[0]);
        assert!(sv[3] < 1e-10 * sv[0], "fourth singular value {}", sv[3]);
    }
}
