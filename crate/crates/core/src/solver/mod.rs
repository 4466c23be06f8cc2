//! Constrained CP decomposition by alternating optimization with inner ADMM
//! (AO-ADMM), with abundance nonnegativity, ℓ1 sparsity and sum-to-one.
//!
//! The model is `t_{ijk} ≈ Σ_r a_{ir} b_{jr} ψ_{kr}` with `A` the
//! abundances, `B` unit-norm endmembers and `Ψ` the third-mode scalings
//! that absorb the component weights.

mod admm;
mod asc;
mod engine;

use std::io::Write;

use ndarray::{Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{reconstruct, Dims, Matrix, Tensor3};

pub use admm::{
    admm_nonnegative, admm_update_abundances, admm_update_endmembers, admm_update_scalings,
    rho_from_gram, rho_rule, AdmmOutcome, Cholesky,
};
pub use asc::{
    apply_asc_augmentation, project_rows_to_simplex, project_to_simplex, row_sum_deviation,
    AugmentedProblem,
};
pub use engine::AoAdmm;

/// How the abundance sum-to-one constraint is enforced.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AscMode {
    /// Soft constraint through the augmented slice and endmember row.
    #[default]
    Embedded,
    /// Row-wise Euclidean projection onto the simplex after each A update.
    Naive,
    None,
}

/// Third-mode slice used to anchor the embedded constraint.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AscAnchor {
    /// The last slice, `k = K`.
    #[default]
    Last,
    /// A specific slice, 1-based.
    Slice(usize),
}

impl AscAnchor {
    /// 0-based slice index for a tensor with `slices` frontal slices.
    pub fn resolve(self, slices: usize) -> Result<usize> {
        match self {
            AscAnchor::Last => Ok(slices - 1),
            AscAnchor::Slice(k) if (1..=slices).contains(&k) => Ok(k - 1),
            AscAnchor::Slice(k) => Err(Error::arg(format!(
                "ASC anchor slice {k} out of range 1..={slices}"
            ))),
        }
    }
}

/// Solver settings. Defaults: 100 outer iterations, 5 inner ADMM
/// iterations, embedded ASC anchored at the last slice, no sparsity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub rank: usize,
    pub asc_mode: AscMode,
    pub asc_anchor: AscAnchor,
    /// ℓ1 weight on the abundances.
    pub sparsity: f64,
    pub outer_iters: usize,
    pub inner_admm_iters: usize,
    /// Inner early exit: primal and dual residuals below `tol · ‖factor‖`.
    pub inner_tolerance: f64,
    /// Outer early exit: relative RMSE change over `stall_window` iterations.
    pub outer_tolerance: f64,
    pub stall_window: usize,
    pub seed: u64,
    /// Relative guard: `ψ_{κ,r}` is floored at `epsilon_guard · max(Ψ)`.
    pub epsilon_guard: f64,
    pub force_single_thread: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            rank: 3,
            asc_mode: AscMode::Embedded,
            asc_anchor: AscAnchor::Last,
            sparsity: 0.0,
            outer_iters: 100,
            inner_admm_iters: 5,
            inner_tolerance: 1e-4,
            outer_tolerance: 1e-6,
            stall_window: 5,
            seed: 0,
            epsilon_guard: 1e-8,
            force_single_thread: false,
        }
    }
}

impl SolverConfig {
    pub fn with_rank(rank: usize) -> Self {
        SolverConfig {
            rank,
            ..SolverConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rank == 0 {
            return Err(Error::arg("rank must be >= 1"));
        }
        if !(self.sparsity >= 0.0) || !self.sparsity.is_finite() {
            return Err(Error::arg(format!("sparsity must be >= 0, got {}", self.sparsity)));
        }
        if self.outer_iters == 0 || self.inner_admm_iters == 0 || self.stall_window == 0 {
            return Err(Error::arg("iteration counts must be >= 1"));
        }
        if !(self.inner_tolerance >= 0.0) || !(self.outer_tolerance >= 0.0) {
            return Err(Error::arg("tolerances must be >= 0"));
        }
        if !(self.epsilon_guard > 0.0) || !self.epsilon_guard.is_finite() {
            return Err(Error::arg("epsilon_guard must be positive"));
        }
        Ok(())
    }
}

/// Factor matrices of a rank-`R` CP model.
#[derive(Clone, Debug, PartialEq)]
pub struct FactorModel {
    /// `I × R` abundances.
    pub a: Matrix,
    /// `J × R` endmembers.
    pub b: Matrix,
    /// `K × R` third-mode scalings.
    pub psi: Matrix,
}

impl FactorModel {
    pub fn rank(&self) -> usize {
        self.a.ncols()
    }

    pub fn dims(&self) -> Dims {
        Dims::new(self.a.nrows(), self.b.nrows(), self.psi.nrows())
    }

    pub fn reconstruct(&self) -> Result<Tensor3> {
        reconstruct(&self.a, &self.b, &self.psi)
    }

    /// Moves the ℓ2 norm of every column of `B` into the matching column of `Ψ`.
    pub fn absorb_endmember_norms(&mut self) {
        for r in 0..self.rank() {
            let norm = self.b.column(r).dot(&self.b.column(r)).sqrt();
            if norm > 0.0 {
                self.b.column_mut(r).mapv_inplace(|v| v / norm);
                self.psi.column_mut(r).mapv_inplace(|v| v * norm);
            }
        }
    }
}

/// Random nonnegative starting point: entries i.i.d. uniform on `(0, 1]`
/// from ChaCha8 seeded with `seed`, drawn for `A`, `B`, `Ψ` in that order
/// (row-major), then `B` columns normalized.
pub fn init_factors(dims: Dims, rank: usize, seed: u64) -> FactorModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |rows: usize| {
        Array2::from_shape_fn((rows, rank), |_| 1.0 - rng.random::<f64>())
    };
    let a = draw(dims.pixels);
    let mut b = draw(dims.bands);
    let psi = draw(dims.slices);
    for mut col in b.axis_iter_mut(Axis(1)) {
        let norm = col.dot(&col).sqrt();
        col.mapv_inplace(|v| v / norm);
    }
    FactorModel { a, b, psi }
}

/// One row of the convergence trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    pub rmse: f64,
    /// Mean `|Σ_r a_{ir} − 1|` over all pixels.
    pub row_sum_deviation: f64,
    pub elapsed_secs: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTrace {
    /// RMSE of the initial factors, before any update.
    pub initial_rmse: f64,
    pub records: Vec<TraceRecord>,
}

impl ConvergenceTrace {
    pub fn final_rmse(&self) -> f64 {
        self.records.last().map_or(self.initial_rmse, |r| r.rmse)
    }

    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    /// CSV with header `iteration,rmse,row_sum_deviation`. Wall-clock times
    /// are left out so the file is reproducible.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "iteration,rmse,row_sum_deviation")?;
        for r in &self.records {
            writeln!(out, "{},{:?},{:?}", r.iteration, r.rmse, r.row_sum_deviation)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SolveResult {
    pub model: FactorModel,
    pub trace: ConvergenceTrace,
    pub seed: u64,
}

fn warn_on_rank(dims: Dims, rank: usize) {
    let usable = dims.pixels.min(dims.bands);
    if rank > usable {
        log::warn!(
            "rank {rank} exceeds min(I, J) = {usable}; the decomposition is not guaranteed to be unique"
        );
    }
}

/// Runs the full AO-ADMM loop from [`init_factors`] with `cfg.seed`.
pub fn solve_cpd(t: &Tensor3, cfg: &SolverConfig) -> Result<SolveResult> {
    let init = init_factors(t.dims(), cfg.rank, cfg.seed);
    solve_cpd_from(t, cfg, init)
}

/// Runs the AO-ADMM loop from a caller-supplied starting point.
pub fn solve_cpd_from(t: &Tensor3, cfg: &SolverConfig, init: FactorModel) -> Result<SolveResult> {
    cfg.validate()?;
    warn_on_rank(t.dims(), cfg.rank);
    let mut solver = AoAdmm::new(t, cfg, init)?;
    solver.run()?;
    Ok(SolveResult {
        trace: solver.trace().clone(),
        model: solver.into_model(),
        seed: cfg.seed,
    })
}

/// Sparse NMF with embedded sum-to-one as the order-2 case of the CP solver.
#[derive(Clone, Debug)]
pub struct NmfResult {
    /// `I × R` abundances.
    pub a: Matrix,
    /// `J × R` endmembers, scaled so that `M ≈ A Bᵀ`.
    pub b: Matrix,
    pub trace: ConvergenceTrace,
}

/// Factorizes `M ≈ A Bᵀ`. The matrix is treated as a single-slice tensor;
/// the augmentation then appends `δ·1` to `M` and a row to `B` that is reset
/// to `δ` every iteration. The returned `B` carries the component weights.
pub fn solve_nmf(m: &Matrix, cfg: &SolverConfig) -> Result<NmfResult> {
    let (pixels, bands) = m.dim();
    let t = Tensor3::new(
        Dims::new(pixels, bands, 1),
        m.iter().copied().collect(),
    )?;
    let SolveResult { model, trace, .. } = solve_cpd(&t, cfg)?;
    let mut b = model.b;
    for (mut col, &w) in b.axis_iter_mut(Axis(1)).zip(model.psi.row(0).iter()) {
        col *= w;
    }
    Ok(NmfResult {
        a: model.a,
        b,
        trace,
    })
}

/// Outcome of several random initializations.
#[derive(Clone, Debug)]
pub struct MultiStart {
    /// Run with the lowest final RMSE.
    pub best: SolveResult,
    /// `(seed, final RMSE)` of every run, in seed order.
    pub runs: Vec<(u64, f64)>,
}

impl MultiStart {
    pub fn rmses(&self) -> Vec<f64> {
        self.runs.iter().map(|r| r.1).collect()
    }
}

/// Solves with seeds `cfg.seed + 0 .. cfg.seed + n_inits − 1` and keeps the
/// minimum-RMSE run (the lowest seed wins ties).
pub fn multi_start(t: &Tensor3, cfg: &SolverConfig, n_inits: usize) -> Result<MultiStart> {
    if n_inits == 0 {
        return Err(Error::arg("n_inits must be >= 1"));
    }
    let configs: Vec<SolverConfig> = (0..n_inits as u64)
        .map(|s| SolverConfig {
            seed: cfg.seed.wrapping_add(s),
            ..cfg.clone()
        })
        .collect();
    let results: Vec<SolveResult> = if cfg.force_single_thread {
        configs.iter().map(|c| solve_cpd(t, c)).collect::<Result<_>>()?
    } else {
        configs.par_iter().map(|c| solve_cpd(t, c)).collect::<Result<_>>()?
    };
    let runs: Vec<(u64, f64)> = results.iter().map(|r| (r.seed, r.trace.final_rmse())).collect();
    let best_idx = runs
        .iter()
        .enumerate()
        .min_by(|x, y| x.1 .1.total_cmp(&y.1 .1))
        .map(|(i, _)| i)
        .expect("at least one run");
    let best = results.into_iter().nth(best_idx).expect("index in range");
    Ok(MultiStart { best, runs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::rmse;
    use ndarray::array;

    fn rank_one_tensor() -> (Tensor3, Matrix, Matrix, Matrix) {
        let a = array![[0.5], [1.0], [0.25], [0.75]];
        let b = array![[1.0], [2.0], [0.5]];
        let c = array![[1.0], [3.0]];
        (reconstruct(&a, &b, &c).unwrap(), a, b, c)
    }

    fn cosine(x: ndarray::ArrayView1<f64>, y: ndarray::ArrayView1<f64>) -> f64 {
        x.dot(&y) / (x.dot(&x).sqrt() * y.dot(&y).sqrt())
    }

    #[test]
    fn init_is_seeded_and_positive() {
        let dims = Dims::new(7, 5, 3);
        let f1 = init_factors(dims, 2, 42);
        let f2 = init_factors(dims, 2, 42);
        assert_eq!(f1, f2);
        assert_ne!(f1, init_factors(dims, 2, 43));
        assert!(f1.a.iter().chain(f1.b.iter()).chain(f1.psi.iter()).all(|&v| v > 0.0));
        for col in f1.b.columns() {
            assert!((col.dot(&col) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn init_draws_have_uniform_mean() {
        let f = init_factors(Dims::new(100_000, 1, 1), 1, 7);
        let mean = f.a.mean().unwrap();
        // σ of the mean of 1e5 uniforms is sqrt(1/12/1e5) ≈ 9.1e-4
        assert!((mean - 0.5).abs() < 3.0 * 9.13e-4, "mean {mean}");
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig::default().validate().is_ok());
        assert!(SolverConfig { rank: 0, ..Default::default() }.validate().is_err());
        assert!(SolverConfig { sparsity: -1.0, ..Default::default() }.validate().is_err());
        assert!(SolverConfig { outer_iters: 0, ..Default::default() }.validate().is_err());
        assert!(SolverConfig { inner_admm_iters: 0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn config_rejects_unknown_keys() {
        let ok: SolverConfig = serde_json::from_str(r#"{"rank": 4, "asc_mode": "naive"}"#).unwrap();
        assert_eq!(ok.rank, 4);
        assert_eq!(ok.asc_mode, AscMode::Naive);
        assert!(serde_json::from_str::<SolverConfig>(r#"{"rnak": 4}"#).is_err());
        let anchored: SolverConfig = serde_json::from_str(r#"{"asc_anchor": {"slice": 2}}"#).unwrap();
        assert_eq!(anchored.asc_anchor, AscAnchor::Slice(2));
    }

    #[test]
    fn anchor_resolution() {
        assert_eq!(AscAnchor::Last.resolve(5).unwrap(), 4);
        assert_eq!(AscAnchor::Slice(1).resolve(5).unwrap(), 0);
        assert!(AscAnchor::Slice(6).resolve(5).is_err());
        assert!(AscAnchor::Slice(0).resolve(5).is_err());
    }

    #[test]
    fn rank_one_tensor_is_recovered() {
        let (t, a, b, c) = rank_one_tensor();
        let cfg = SolverConfig {
            rank: 1,
            asc_mode: AscMode::None,
            outer_iters: 300,
            outer_tolerance: 0.0,
            ..Default::default()
        };
        let res = solve_cpd(&t, &cfg).unwrap();
        assert!(res.trace.final_rmse() < 1e-10, "rmse {}", res.trace.final_rmse());
        assert!(cosine(res.model.a.column(0), a.column(0)) > 1.0 - 1e-9);
        assert!(cosine(res.model.b.column(0), b.column(0)) > 1.0 - 1e-9);
        assert!(cosine(res.model.psi.column(0), c.column(0)) > 1.0 - 1e-9);
    }

    #[test]
    fn returned_factors_satisfy_invariants() {
        let (t, ..) = rank_one_tensor();
        for mode in [AscMode::Embedded, AscMode::Naive, AscMode::None] {
            let cfg = SolverConfig { rank: 2, asc_mode: mode, outer_iters: 40, ..Default::default() };
            let res = solve_cpd(&t, &cfg).unwrap();
            let m = &res.model;
            assert!(m.a.iter().chain(m.b.iter()).chain(m.psi.iter()).all(|&v| v >= 0.0));
            for col in m.b.columns() {
                assert!((col.dot(&col).sqrt() - 1.0).abs() < 1e-9);
            }
            assert_eq!(m.b.nrows(), 3);
            assert!(res.trace.final_rmse() <= res.trace.initial_rmse);
            let direct = rmse(&t, &m.reconstruct().unwrap()).unwrap();
            assert!((direct - res.trace.final_rmse()).abs() < 1e-12);
        }
    }

    #[test]
    fn naive_rows_sum_to_one() {
        let (t, ..) = rank_one_tensor();
        let cfg = SolverConfig { rank: 2, asc_mode: AscMode::Naive, outer_iters: 20, ..Default::default() };
        let res = solve_cpd(&t, &cfg).unwrap();
        for row in res.model.a.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn determinism_single_thread() {
        let (t, ..) = rank_one_tensor();
        let cfg = SolverConfig { rank: 2, force_single_thread: true, outer_iters: 30, ..Default::default() };
        let r1 = solve_cpd(&t, &cfg).unwrap();
        let r2 = solve_cpd(&t, &cfg).unwrap();
        assert_eq!(r1.model, r2.model);
        let threaded = SolverConfig { force_single_thread: false, ..cfg };
        assert_eq!(solve_cpd(&t, &threaded).unwrap().model, r1.model);
    }

    #[test]
    fn nmf_rank_one_exact() {
        let m = array![[1.0, 2.0, 0.5], [2.0, 4.0, 1.0], [0.5, 1.0, 0.25]];
        let cfg = SolverConfig {
            rank: 1,
            asc_mode: AscMode::None,
            outer_iters: 300,
            outer_tolerance: 0.0,
            ..Default::default()
        };
        let res = solve_nmf(&m, &cfg).unwrap();
        let approx = res.a.dot(&res.b.t());
        assert!((&approx - &m).iter().all(|d| d.abs() < 1e-6));
    }

    #[test]
    fn multi_start_keeps_minimum() {
        let (t, ..) = rank_one_tensor();
        let cfg = SolverConfig { rank: 2, outer_iters: 10, seed: 5, ..Default::default() };
        let ms = multi_start(&t, &cfg, 4).unwrap();
        assert_eq!(ms.runs.iter().map(|r| r.0).collect::<Vec<_>>(), vec![5, 6, 7, 8]);
        assert!(ms.rmses().iter().all(|&r| ms.best.trace.final_rmse() <= r));
        let single = multi_start(&t, &cfg, 1).unwrap();
        assert_eq!(single.best.model, solve_cpd(&t, &cfg).unwrap().model);
        assert!(multi_start(&t, &cfg, 0).is_err());
    }

    #[test]
    fn absorbing_norms_keeps_reconstruction() {
        let mut m = init_factors(Dims::new(6, 4, 3), 2, 1);
        m.b *= 3.7;
        let before = m.reconstruct().unwrap();
        m.absorb_endmember_norms();
        let after = m.reconstruct().unwrap();
        for (x, y) in before.as_slice().iter().zip(after.as_slice()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn trace_csv_format() {
        let trace = ConvergenceTrace {
            initial_rmse: 1.0,
            records: vec![TraceRecord { iteration: 1, rmse: 0.5, row_sum_deviation: 0.0, elapsed_secs: 0.25 }],
        };
        let mut buf = Vec::new();
        trace.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "iteration,rmse,row_sum_deviation\n1,0.5,0.0\n"
        );
    }
}
