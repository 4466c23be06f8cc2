//! Inner ADMM for one factor of the alternating scheme.
//!
//! Every factor update solves
//!
//! ```text
//! min_X ½‖Y − W Xᵀ‖² + α‖X‖₁   s.t. X ≥ 0
//! ```
//!
//! through the splitting `X̄ = Xᵀ`. Only `WᵀW` (the Gram matrix) and `WᵀY`
//! enter the iterations, so both are formed once per block and the
//! Cholesky factor of `WᵀW + ρI` is cached across inner iterations.


use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Step-size rule `ρ = trace(WᵀW) / R`.
pub fn rho_rule(w: &Matrix) -> Result<f64> {
    let rank = w.ncols();
    if rank == 0 {
        return Err(Error::arg("rho rule needs at least one column"));
    }
    Ok(w.iter().map(|v| v * v).sum::<f64>() / rank as f64)
}

/// Same rule from an already formed Gram matrix.
pub fn rho_from_gram(gram: &Matrix) -> f64 {
    gram.diag().sum() / gram.nrows() as f64
}

/// Lower-triangular Cholesky factor of a small SPD matrix.
#[derive(Clone, Debug)]
pub struct Cholesky {
    n: usize,
    l: Vec<f64>,
}

impl Cholesky {
    pub fn factor(m: &Matrix) -> Result<Self> {
        let n = m.nrows();
        if m.ncols() != n {
            return Err(Error::shape(format!("{n}x{n}"), format!("{:?}", m.dim())));
        }
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut s = m[[i, j]];
                for p in 0..j {
                    s -= l[i * n + p] * l[j * n + p];
                }
                if i == j {
                    if !(s > 0.0) || !s.is_finite() {
                        return Err(Error::NonFinite("Cholesky pivot (matrix not SPD)".into()));
                    }
                    l[i * n + i] = s.sqrt();
                } else {
                    l[i * n + j] = s / l[j * n + j];
                }
            }
        }
        Ok(Cholesky { n, l })
    }

    /// Solves `M x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let mut s = b[i];
            for p in 0..i {
                s -= self.l[i * n + p] * b[p];
            }
            b[i] = s / self.l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for p in i + 1..n {
                s -= self.l[p * n + i] * b[p];
            }
            b[i] = s / self.l[i * n + i];
        }
    }
}

/// Result of an inner ADMM block.
#[derive(Clone, Debug)]
pub struct AdmmOutcome {
    pub factor: Matrix,
    pub dual: Matrix,
    /// Inner iterations actually run.
    pub iterations: usize,
}

/// Inner ADMM block from precomputed products.
///
/// `rhs` is `(WᵀY)ᵀ` (one row per factor row) and `gram` is `WᵀW`.
/// Runs at most `iters` rounds of
///
/// ```text
/// X̄ᵀ ← (rhs + ρ(X + U)) (WᵀW + ρI)⁻¹
/// X  ← max(0, X̄ᵀ − U − α/ρ)
/// U  ← U + X − X̄ᵀ
/// ```
///
/// stopping early once both the primal residual `‖X − X̄ᵀ‖` and the dual
/// residual `‖X − X_prev‖` fall below `tolerance · ‖X‖`.
#[allow(clippy::too_many_arguments)]
pub fn admm_nonnegative(
    rhs: &Matrix,
    gram: &Matrix,
    factor: Matrix,
    dual: Matrix,
    alpha: f64,
    rho: f64,
    iters: usize,
    tolerance: f64,
) -> Result<AdmmOutcome> {
    let (n, rank) = factor.dim();
    if rhs.dim() != (n, rank) || dual.dim() != (n, rank) || gram.dim() != (rank, rank) {
        return Err(Error::shape(
            format!("rhs/dual {n}x{rank}, gram {rank}x{rank}"),
            format!("rhs {:?}, dual {:?}, gram {:?}", rhs.dim(), dual.dim(), gram.dim()),
        ));
    }
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(Error::arg(format!("rho must be positive and finite, got {rho}")));
    }
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(Error::arg(format!("sparsity weight must be >= 0, got {alpha}")));
    }
    if rhs.iter().chain(factor.iter()).chain(dual.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("ADMM inputs".into()));
    }

    let mut system = gram.clone();
    for r in 0..rank {
        system[[r, r]] += rho;
    }
    let chol = Cholesky::factor(&system)?;
    let shrink = alpha / rho;

    let mut x = factor;
    let mut u = dual;
    let mut split = vec![0.0; rank];
    let mut iterations = 0;
    for _ in 0..iters {
        iterations += 1;
        let mut primal = 0.0;
        let mut change = 0.0;
        let mut norm = 0.0;
        for i in 0..n {
            for r in 0..rank {
                split[r] = rhs[[i, r]] + rho * (x[[i, r]] + u[[i, r]]);
            }
            chol.solve_in_place(&mut split);
            for r in 0..rank {
                let old = x[[i, r]];
                let new = (split[r] - u[[i, r]] - shrink).max(0.0);
                u[[i, r]] += new - split[r];
                x[[i, r]] = new;
                primal += (new - split[r]).powi(2);
                change += (new - old).powi(2);
                norm += new * new;
            }
        }
        if !(primal.is_finite() && change.is_finite()) {
            return Err(Error::NonFinite("ADMM iterate".into()));
        }
        let bound = tolerance * norm.sqrt();
        if primal.sqrt() < bound && change.sqrt() < bound {
            break;
        }
    }
    Ok(AdmmOutcome {
        factor: x,
        dual: u,
        iterations,
    })
}

/// `(gram, rhs)` for an explicit system: `WᵀW` and `(WᵀY)ᵀ`.
fn normal_products(y: &Matrix, w: &Matrix) -> Result<(Matrix, Matrix)> {
    if y.nrows() != w.nrows() {
        return Err(Error::shape(
            format!("{} data rows", w.nrows()),
            y.nrows(),
        ));
    }
    Ok((w.t().dot(w), y.t().dot(w)))
}

/// Abundance update from the mode-1 unfolding `t1` ((J+1)K × I) and
/// `W = B̃ ⊙ Ψ`, with ℓ1 weight `alpha`.
#[allow(clippy::too_many_arguments)]
pub fn admm_update_abundances(
    t1: &Matrix,
    w: &Matrix,
    a: Matrix,
    u: Matrix,
    alpha: f64,
    rho: f64,
    iters: usize,
) -> Result<(Matrix, Matrix)> {
    let (gram, rhs) = normal_products(t1, w)?;
    let out = admm_nonnegative(&rhs, &gram, a, u, alpha, rho, iters, 0.0)?;
    Ok((out.factor, out.dual))
}

/// Endmember update from the mode-2 unfolding and `W = A ⊙ Ψ`.
pub fn admm_update_endmembers(
    t2: &Matrix,
    w: &Matrix,
    b: Matrix,
    u: Matrix,
    rho: f64,
    iters: usize,
) -> Result<(Matrix, Matrix)> {
    admm_update_abundances(t2, w, b, u, 0.0, rho, iters)
}

/// Third-mode update from the mode-3 unfolding and `W = A ⊙ B̃`.
pub fn admm_update_scalings(
    t3: &Matrix,
    w: &Matrix,
    psi: Matrix,
    u: Matrix,
    rho: f64,
    iters: usize,
) -> Result<(Matrix, Matrix)> {
    admm_update_abundances(t3, w, psi, u, 0.0, rho, iters)
}
