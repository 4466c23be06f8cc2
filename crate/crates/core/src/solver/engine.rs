use std::ops::Range;
use std::time::Instant;

use ndarray::{s, Array2};
use rayon::prelude::*;

use super::admm::admm_nonnegative;
use super::asc::{project_rows_to_simplex, row_sum_deviation};
use super::{AscMode, ConvergenceTrace, FactorModel, SolverConfig, TraceRecord};
use crate::error::{Error, Result};
use crate::tensor::{khatri_rao, Matrix, Tensor3};

/// Pixels per work unit. Reductions sum per-chunk partials in chunk order,
/// so results do not depend on the number of threads.
const CHUNK: usize = 256;

/// Floor for the step size when a factor collapses to zero.
const MIN_RHO: f64 = 1e-12;

/// Stateful AO-ADMM solver over one tensor.
///
/// Each [`AoAdmm::step`] is one outer iteration: refresh the ASC
/// augmentation, update `A`, `B̃` and `Ψ` with their inner ADMM blocks,
/// then move the column norms of `B` into `Ψ`.
pub struct AoAdmm<'t> {
    t: &'t Tensor3,
    cfg: SolverConfig,
    a: Matrix,
    /// Endmembers, with the ASC row appended when embedded.
    b: Matrix,
    psi: Matrix,
    dual_a: Matrix,
    dual_b: Matrix,
    dual_psi: Matrix,
    /// `I × K` appended lateral slice (embedded ASC only).
    extra_slice: Option<Vec<f64>>,
    delta: f64,
    anchor: usize,
    norm_sq: f64,
    trace: ConvergenceTrace,
    started: Instant,
}

impl<'t> AoAdmm<'t> {
    pub fn new(t: &'t Tensor3, cfg: &SolverConfig, init: FactorModel) -> Result<Self> {
        cfg.validate()?;
        let d = t.dims();
        let rank = cfg.rank;
        if init.a.dim() != (d.pixels, rank)
            || init.b.dim() != (d.bands, rank)
            || init.psi.dim() != (d.slices, rank)
        {
            return Err(Error::shape(
                format!("factors for {d} at rank {rank}"),
                format!("A {:?}, B {:?}, Psi {:?}", init.a.dim(), init.b.dim(), init.psi.dim()),
            ));
        }
        let norm_sq = t.sum_of_squares();
        if norm_sq == 0.0 {
            return Err(Error::arg("cannot decompose an all-zero tensor"));
        }
        let delta = t.mean();
        let anchor = cfg.asc_anchor.resolve(d.slices)?;
        let embedded = cfg.asc_mode == AscMode::Embedded;
        if embedded && !(delta > 0.0) {
            return Err(Error::arg(format!(
                "embedded ASC needs a positive data mean, got {delta}"
            )));
        }
        let b_rows = d.bands + usize::from(embedded);
        let mut b = Array2::zeros((b_rows, rank));
        b.slice_mut(s![..d.bands, ..]).assign(&init.b);

        let mut solver = AoAdmm {
            t,
            cfg: cfg.clone(),
            a: init.a,
            b,
            psi: init.psi,
            dual_a: Array2::zeros((d.pixels, rank)),
            dual_b: Array2::zeros((b_rows, rank)),
            dual_psi: Array2::zeros((d.slices, rank)),
            extra_slice: None,
            delta,
            anchor,
            norm_sq,
            trace: ConvergenceTrace::default(),
            started: Instant::now(),
        };
        solver.trace.initial_rmse = solver.current_rmse();
        Ok(solver)
    }

    pub fn trace(&self) -> &ConvergenceTrace {
        &self.trace
    }

    /// The ASC constant `δ` (mean of the data).
    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Current factors with the augmented row stripped.
    pub fn model(&self) -> FactorModel {
        FactorModel {
            a: self.a.clone(),
            b: self.physical_b().to_owned(),
            psi: self.psi.clone(),
        }
    }

    pub fn into_model(self) -> FactorModel {
        let bands = self.t.dims().bands;
        FactorModel {
            a: self.a,
            b: self.b.slice(s![..bands, ..]).to_owned(),
            psi: self.psi,
        }
    }

    /// Runs outer iterations until the budget is spent or the RMSE stalls.
    pub fn run(&mut self) -> Result<()> {
        for _ in 0..self.cfg.outer_iters {
            self.step()?;
            if self.stalled() {
                break;
            }
        }
        Ok(())
    }

    fn stalled(&self) -> bool {
        let records = &self.trace.records;
        let n = records.len();
        let current = records[n - 1].rmse;
        if current == 0.0 {
            return true;
        }
        let window = self.cfg.stall_window;
        if n <= window {
            return false;
        }
        let previous = records[n - 1 - window].rmse;
        (previous - current).abs() <= self.cfg.outer_tolerance * previous
    }

    fn parallel(&self) -> bool {
        !self.cfg.force_single_thread
    }

    fn physical_b(&self) -> ndarray::ArrayView2<'_, f64> {
        self.b.slice(s![..self.t.dims().bands, ..])
    }

    /// One outer iteration; appends a trace record.
    pub fn step(&mut self) -> Result<()> {
        let embedded = self.cfg.asc_mode == AscMode::Embedded;
        if embedded {
            self.refresh_augmentation();
        }

        let (gram, rhs) = self.abundance_products();
        let (a, dual) = self.inner(&rhs, &gram, Which::A, self.cfg.sparsity)?;
        self.a = a;
        self.dual_a = dual;
        if self.cfg.asc_mode == AscMode::Naive {
            project_rows_to_simplex(&mut self.a);
        }

        let (gram, rhs) = self.endmember_products();
        let (b, dual) = self.inner(&rhs, &gram, Which::B, 0.0)?;
        self.b = b;
        self.dual_b = dual;

        let (gram, rhs) = self.scaling_products();
        let (psi, dual) = self.inner(&rhs, &gram, Which::Psi, 0.0)?;
        self.psi = psi;
        self.dual_psi = dual;

        self.absorb_norms();

        let rmse = self.current_rmse();
        if !rmse.is_finite() {
            return Err(Error::NonFinite("reconstruction error".into()));
        }
        self.trace.records.push(TraceRecord {
            iteration: self.trace.records.len() + 1,
            rmse,
            row_sum_deviation: row_sum_deviation(&self.a, None),
            elapsed_secs: self.started.elapsed().as_secs_f64(),
        });
        Ok(())
    }

    fn inner(&mut self, rhs: &Matrix, gram: &Matrix, which: Which, alpha: f64) -> Result<(Matrix, Matrix)> {
        let rho = (gram.diag().sum() / gram.nrows() as f64).max(MIN_RHO);
        let (factor, dual) = match which {
            Which::A => (&mut self.a, &mut self.dual_a),
            Which::B => (&mut self.b, &mut self.dual_b),
            Which::Psi => (&mut self.psi, &mut self.dual_psi),
        };
        let out = admm_nonnegative(
            rhs,
            gram,
            std::mem::take(factor),
            std::mem::take(dual),
            alpha,
            rho,
            self.cfg.inner_admm_iters,
            self.cfg.inner_tolerance,
        )?;
        Ok((out.factor, out.dual))
    }

    /// Resets `b̃_{J+1,:} = δ / ψ_{κ,:}` and rebuilds the appended slice.
    fn refresh_augmentation(&mut self) {
        let d = self.t.dims();
        let rank = self.cfg.rank;
        let max_psi = self.psi.iter().copied().fold(0.0, f64::max);
        let eps = (self.cfg.epsilon_guard * max_psi).max(f64::MIN_POSITIVE);
        for r in 0..rank {
            self.b[[d.bands, r]] = self.delta / self.psi[[self.anchor, r]].max(eps);
        }
        // weights[k][r] = b̃_{J+1,r} ψ_{k,r}
        let weights: Vec<f64> = (0..d.slices)
            .flat_map(|k| (0..rank).map(move |r| (k, r)))
            .map(|(k, r)| self.b[[d.bands, r]] * self.psi[[k, r]])
            .collect();
        let a = self.a.as_slice().expect("standard layout");
        let (anchor, delta) = (self.anchor, self.delta);
        let mut extra = self.extra_slice.take().unwrap_or_else(|| vec![0.0; d.pixels * d.slices]);
        fill_rows(&mut extra, d.slices, self.parallel(), |i, out| {
            let ai = &a[i * rank..(i + 1) * rank];
            for (k, o) in out.iter_mut().enumerate() {
                *o = if k == anchor {
                    delta
                } else {
                    let w = &weights[k * rank..(k + 1) * rank];
                    ai.iter().zip(w).map(|(x, y)| x * y).sum()
                };
            }
        });
        self.extra_slice = Some(extra);
    }

    /// `WᵀW` and `(WᵀT̃₍₁₎)ᵀ` for `W = B̃ ⊙ Ψ`.
    fn abundance_products(&self) -> (Matrix, Matrix) {
        let d = self.t.dims();
        let rank = self.cfg.rank;
        let gram = hadamard(&gram_of(&self.b, self.parallel()), &gram_of(&self.psi, self.parallel()));
        let w = khatri_rao(&self.physical_b().to_owned(), &self.psi).expect("ranks agree");
        let w = w.as_slice().expect("standard layout");
        let extra = self.extra_weights();
        let mut rhs = vec![0.0; d.pixels * rank];
        fill_rows(&mut rhs, rank, self.parallel(), |i, out| {
            axpy_rows(out, self.t.pixel_block(i), w);
            if let (Some(e), Some(we)) = (&self.extra_slice, &extra) {
                axpy_rows(out, &e[i * d.slices..(i + 1) * d.slices], we);
            }
        });
        (gram, Array2::from_shape_vec((d.pixels, rank), rhs).expect("sized above"))
    }

    /// `b̃_{J+1,r} ψ_{k,r}` laid out `K × R`.
    fn extra_weights(&self) -> Option<Vec<f64>> {
        self.extra_slice.as_ref()?;
        let d = self.t.dims();
        let rank = self.cfg.rank;
        Some(
            (0..d.slices * rank)
                .map(|idx| self.b[[d.bands, idx % rank]] * self.psi[[idx / rank, idx % rank]])
                .collect(),
        )
    }

    /// `WᵀW` and `(WᵀT̃₍₂₎)ᵀ` for `W = A ⊙ Ψ`.
    fn endmember_products(&self) -> (Matrix, Matrix) {
        let d = self.t.dims();
        let rank = self.cfg.rank;
        let gram = hadamard(&gram_of(&self.a, self.parallel()), &gram_of(&self.psi, self.parallel()));
        let rows = self.b.nrows();
        let a = self.a.as_slice().expect("standard layout");
        let psi = self.psi.as_slice().expect("standard layout");
        let k_len = d.slices;
        let rhs = reduce_pixels(d.pixels, rows * rank, self.parallel(), |range, acc| {
            // v[k][r] = a_{ir} ψ_{kr}
            let mut v = vec![0.0; k_len * rank];
            for i in range {
                let ai = &a[i * rank..(i + 1) * rank];
                for (vk, pk) in v.chunks_exact_mut(rank).zip(psi.chunks_exact(rank)) {
                    for ((x, &p), &s) in vk.iter_mut().zip(pk).zip(ai) {
                        *x = p * s;
                    }
                }
                let (physical, extra_acc) = acc.split_at_mut(d.bands * rank);
                for (values, out) in self.t.pixel_block(i).chunks_exact(k_len).zip(physical.chunks_exact_mut(rank)) {
                    axpy_rows(out, values, &v);
                }
                if let Some(e) = &self.extra_slice {
                    axpy_rows(extra_acc, &e[i * k_len..(i + 1) * k_len], &v);
                }
            }
        });
        (gram, Array2::from_shape_vec((rows, rank), rhs).expect("sized above"))
    }

    /// `WᵀW` and `(WᵀT̃₍₃₎)ᵀ` for `W = A ⊙ B̃`.
    fn scaling_products(&self) -> (Matrix, Matrix) {
        let d = self.t.dims();
        let rank = self.cfg.rank;
        let gram = hadamard(&gram_of(&self.a, self.parallel()), &gram_of(&self.b, self.parallel()));
        let a = self.a.as_slice().expect("standard layout");
        let b = self.b.as_slice().expect("standard layout");
        let k_len = d.slices;
        let rows = self.b.nrows();
        let rhs = reduce_pixels(d.pixels, k_len * rank, self.parallel(), |range, acc| {
            // u[j][r] = a_{ir} b̃_{jr}
            let mut u = vec![0.0; rows * rank];
            for i in range {
                let ai = &a[i * rank..(i + 1) * rank];
                for (uj, bj) in u.chunks_exact_mut(rank).zip(b.chunks_exact(rank)) {
                    for ((x, &p), &s) in uj.iter_mut().zip(bj).zip(ai) {
                        *x = p * s;
                    }
                }
                let (u_phys, u_extra) = u.split_at(d.bands * rank);
                for (values, uj) in self.t.pixel_block(i).chunks_exact(k_len).zip(u_phys.chunks_exact(rank)) {
                    scatter_rows(acc, values, uj);
                }
                if let Some(e) = &self.extra_slice {
                    scatter_rows(acc, &e[i * k_len..(i + 1) * k_len], u_extra);
                }
            }
        });
        (gram, Array2::from_shape_vec((k_len, rank), rhs).expect("sized above"))
    }

    /// `ψ_{:,r} ← ψ_{:,r} ‖b_{:,r}‖`, then unit columns for the physical rows
    /// of `B`. Dual variables follow their primal's rescaling.
    fn absorb_norms(&mut self) {
        let bands = self.t.dims().bands;
        for r in 0..self.cfg.rank {
            let col = self.b.slice(s![..bands, r]);
            let norm = col.dot(&col).sqrt();
            if norm > 0.0 {
                self.b.slice_mut(s![..bands, r]).mapv_inplace(|v| v / norm);
                self.dual_b.slice_mut(s![..bands, r]).mapv_inplace(|v| v / norm);
                self.psi.column_mut(r).mapv_inplace(|v| v * norm);
                self.dual_psi.column_mut(r).mapv_inplace(|v| v * norm);
            }
        }
    }

    /// `‖T − [[A, B, Ψ]]‖² / ‖T‖²` over the physical data.
    fn current_rmse(&self) -> f64 {
        let d = self.t.dims();
        let rank = self.cfg.rank;
        let w = khatri_rao(&self.physical_b().to_owned(), &self.psi).expect("ranks agree");
        let w = w.as_slice().expect("standard layout");
        let a = self.a.as_slice().expect("standard layout");
        let sum = reduce_pixels(d.pixels, 1, self.parallel(), |range, acc| {
            for i in range {
                let ai = &a[i * rank..(i + 1) * rank];
                for (&v, wr) in self.t.pixel_block(i).iter().zip(w.chunks_exact(rank)) {
                    let model: f64 = ai.iter().zip(wr).map(|(x, y)| x * y).sum();
                    acc[0] += (v - model) * (v - model);
                }
            }
        });
        sum[0] / self.norm_sq
    }
}

/// `out[r] += Σ_n values[n] · m[n][r]` for a row-major `m` with `out.len()` columns.
#[inline]
fn axpy_rows(out: &mut [f64], values: &[f64], m: &[f64]) {
    for (&v, row) in values.iter().zip(m.chunks_exact(out.len())) {
        for (o, &x) in out.iter_mut().zip(row) {
            *o += v * x;
        }
    }
}

/// `acc[n][r] += values[n] · u[r]`.
#[inline]
fn scatter_rows(acc: &mut [f64], values: &[f64], u: &[f64]) {
    for (&v, row) in values.iter().zip(acc.chunks_exact_mut(u.len())) {
        for (o, &x) in row.iter_mut().zip(u) {
            *o += v * x;
        }
    }
}

#[derive(Clone, Copy)]
enum Which {
    A,
    B,
    Psi,
}

fn hadamard(x: &Matrix, y: &Matrix) -> Matrix {
    x * y
}

fn gram_of(m: &Matrix, parallel: bool) -> Matrix {
    let (rows, rank) = m.dim();
    let data = m.as_slice().expect("standard layout");
    let g = reduce_pixels(rows, rank * rank, parallel, |range, acc| {
        for i in range {
            let row = &data[i * rank..(i + 1) * rank];
            for p in 0..rank {
                for q in 0..rank {
                    acc[p * rank + q] += row[p] * row[q];
                }
            }
        }
    });
    Array2::from_shape_vec((rank, rank), g).expect("sized above")
}

/// Fills `out` (rows of `row_len`) with `f(row, slot)`; slots start zeroed.
fn fill_rows<F>(out: &mut [f64], row_len: usize, parallel: bool, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync,
{
    let work = |(c, chunk): (usize, &mut [f64])| {
        for (n, slot) in chunk.chunks_mut(row_len).enumerate() {
            slot.iter_mut().for_each(|v| *v = 0.0);
            f(c * CHUNK + n, slot);
        }
    };
    if parallel {
        out.par_chunks_mut(CHUNK * row_len).enumerate().for_each(work);
    } else {
        out.chunks_mut(CHUNK * row_len).enumerate().for_each(work);
    }
}

/// Sums `f` over fixed pixel chunks, combining partials in chunk order.
fn reduce_pixels<F>(pixels: usize, len: usize, parallel: bool, f: F) -> Vec<f64>
where
    F: Fn(Range<usize>, &mut [f64]) + Sync,
{
    let chunks: Vec<Range<usize>> = (0..pixels)
        .step_by(CHUNK)
        .map(|start| start..(start + CHUNK).min(pixels))
        .collect();
    let run = |range: &Range<usize>| {
        let mut acc = vec![0.0; len];
        f(range.clone(), &mut acc);
        acc
    };
    let partials: Vec<Vec<f64>> = if parallel {
        chunks.par_iter().map(run).collect()
    } else {
        chunks.iter().map(run).collect()
    };
    let mut total = vec![0.0; len];
    for p in partials {
        for (t, v) in total.iter_mut().zip(p) {
            *t += v;
        }
    }
    total
}
