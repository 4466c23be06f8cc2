//! Timing harness for the per-iteration cost of the solver.

use std::time::Instant;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::solver::{init_factors, AoAdmm, SolverConfig};
use crate::tensor::{reconstruct, Dims, Tensor3};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScaleAxis {
    Pixels,
    Rank,
    Slices,
}

impl std::str::FromStr for ScaleAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pixels" => Ok(ScaleAxis::Pixels),
            "rank" => Ok(ScaleAxis::Rank),
            "slices" => Ok(ScaleAxis::Slices),
            other => Err(Error::arg(format!("unknown scale axis '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchSettings {
    pub axis: ScaleAxis,
    pub points: usize,
    /// Problem at the first point; the scaled dimension doubles per point.
    pub pixels: usize,
    pub bands: usize,
    pub slices: usize,
    pub rank: usize,
    pub inner_admm_iters: usize,
    /// Outer steps timed per point (after one warm-up step).
    pub repetitions: usize,
    pub seed: u64,
}

impl Default for BenchSettings {
    fn default() -> Self {
        BenchSettings {
            axis: ScaleAxis::Pixels,
            points: 4,
            pixels: 2000,
            bands: 26,
            slices: 9,
            rank: 3,
            inner_admm_iters: 5,
            repetitions: 5,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchPoint {
    /// Value of the scaled dimension.
    pub size: usize,
    pub dims: Dims,
    pub rank: usize,
    /// Median wall time of one outer step divided by its inner ADMM iterations.
    pub seconds_per_inner_iter: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub axis: ScaleAxis,
    pub points: Vec<BenchPoint>,
    /// Least-squares slope of log(time) against log(size); `None` for one point.
    pub slope: Option<f64>,
}

impl BenchResult {
    /// `size,pixels,bands,slices,rank,seconds_per_inner_iter` rows.
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "size,pixels,bands,slices,rank,seconds_per_inner_iter")?;
        for p in &self.points {
            writeln!(
                out,
                "{},{},{},{},{},{:?}",
                p.size, p.dims.pixels, p.dims.bands, p.dims.slices, p.rank, p.seconds_per_inner_iter
            )?;
        }
        Ok(())
    }
}

/// Ordinary least-squares slope of `log y` on `log x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Random nonnegative tensor of exact rank `rank` plus a small positive offset.
fn problem(dims: Dims, rank: usize, seed: u64) -> Result<Tensor3> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |rows: usize| Array2::from_shape_fn((rows, rank), |_| rng.random::<f64>());
    let (a, b, c) = (draw(dims.pixels), draw(dims.bands), draw(dims.slices));
    reconstruct(&a, &b, &c)
}

pub fn run_bench(settings: &BenchSettings) -> Result<BenchResult> {
    if settings.points == 0 || settings.repetitions == 0 {
        return Err(Error::arg("points and repetitions must be >= 1"));
    }
    let mut points = Vec::with_capacity(settings.points);
    for step in 0..settings.points {
        let scale = 1usize << step;
        let (mut dims, mut rank) = (
            Dims::new(settings.pixels, settings.bands, settings.slices),
            settings.rank,
        );
        let size = match settings.axis {
            ScaleAxis::Pixels => {
                dims.pixels *= scale;
                dims.pixels
            }
            ScaleAxis::Rank => {
                rank *= scale;
                rank
            }
            ScaleAxis::Slices => {
                dims.slices *= scale;
                dims.slices
            }
        };
        let t = problem(dims, rank, settings.seed)?;
        let cfg = SolverConfig {
            rank,
            inner_admm_iters: settings.inner_admm_iters,
            inner_tolerance: 0.0,
            force_single_thread: true,
            seed: settings.seed,
            ..SolverConfig::default()
        };
        let mut solver = AoAdmm::new(&t, &cfg, init_factors(dims, rank, settings.seed))?;
        solver.step()?;
        let per_step = 3 * settings.inner_admm_iters;
        let times: Vec<f64> = (0..settings.repetitions)
            .map(|_| {
                let start = Instant::now();
                solver.step().map(|_| start.elapsed().as_secs_f64() / per_step as f64)
            })
            .collect::<Result<_>>()?;
        log::info!("bench {:?} size {size}: {:.3e} s", settings.axis, median(times.clone()));
        points.push(BenchPoint {
            size,
            dims,
            rank,
            seconds_per_inner_iter: median(times),
        });
    }
    let xs: Vec<f64> = points.iter().map(|p| p.size as f64).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.seconds_per_inner_iter).collect();
    Ok(BenchResult {
        axis: settings.axis,
        slope: log_log_slope(&xs, &ys),
        points,
    })
}
