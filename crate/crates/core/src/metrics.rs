//! Reconstruction error, spectral angles and factor matching.

use itertools::Itertools;
use ndarray::ArrayView1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Matrix, Tensor3};

/// Largest rank for which the one-to-one assignment is searched exhaustively.
pub const MAX_EXHAUSTIVE_RANK: usize = 8;

fn residual_ratio(t: &Tensor3, t_hat: &Tensor3) -> Result<f64> {
    if t.dims() != t_hat.dims() {
        return Err(Error::shape(t.dims(), t_hat.dims()));
    }
    let norm = t.sum_of_squares();
    if norm == 0.0 {
        return Err(Error::arg("reference tensor has zero norm"));
    }
    let res: f64 = t
        .as_slice()
        .iter()
        .zip(t_hat.as_slice())
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok(res / norm)
}

/// `‖T − T̂‖²_F / ‖T‖²_F`. Called RMSE for consistency with the literature,
/// although it is a squared relative error.
pub fn rmse(t: &Tensor3, t_hat: &Tensor3) -> Result<f64> {
    residual_ratio(t, t_hat)
}

/// `‖T − T̂‖_F / ‖T‖_F`, the square root of [`rmse`].
pub fn relative_error(t: &Tensor3, t_hat: &Tensor3) -> Result<f64> {
    residual_ratio(t, t_hat).map(f64::sqrt)
}

/// Spectral angle in degrees.
pub fn sad(e: ArrayView1<f64>, b: ArrayView1<f64>) -> Result<f64> {
    if e.len() != b.len() {
        return Err(Error::shape(e.len(), b.len()));
    }
    let ne = e.dot(&e).sqrt();
    let nb = b.dot(&b).sqrt();
    if ne == 0.0 || nb == 0.0 {
        return Err(Error::arg("spectral angle of a zero vector"));
    }
    let cos = (e.dot(&b) / (ne * nb)).clamp(-1.0, 1.0);
    Ok(cos.acos().to_degrees())
}

/// Labels of estimated columns against a reference library.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EndmemberMatch {
    /// `sads[r][p]`: angle between estimate `r` and reference `p`.
    pub sads: Vec<Vec<f64>>,
    /// Reference with minimum SAD for each estimate; repeats allowed.
    pub nearest: Vec<usize>,
    /// Minimum-total-SAD permutation (`estimate r ↦ reference`), when the
    /// column counts agree and are at most [`MAX_EXHAUSTIVE_RANK`].
    pub one_to_one: Option<Vec<usize>>,
}

impl EndmemberMatch {
    /// SAD of each estimate under the one-to-one assignment, or the nearest
    /// label when there is none.
    pub fn assigned_sads(&self) -> Vec<f64> {
        let labels = self.one_to_one.as_ref().unwrap_or(&self.nearest);
        labels.iter().enumerate().map(|(r, &p)| self.sads[r][p]).collect()
    }
}

pub fn match_endmembers(b: &Matrix, reference: &Matrix) -> Result<EndmemberMatch> {
    if reference.ncols() == 0 {
        return Err(Error::arg("reference library is empty"));
    }
    if b.nrows() != reference.nrows() {
        return Err(Error::shape(format!("{} bands", reference.nrows()), b.nrows()));
    }
    let sads: Vec<Vec<f64>> = b
        .columns()
        .into_iter()
        .map(|e| reference.columns().into_iter().map(|p| sad(e, p)).collect::<Result<_>>())
        .collect::<Result<_>>()?;
    let nearest = sads
        .iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .min_by(|x, y| x.1.total_cmp(y.1))
                .map(|(p, _)| p)
                .expect("non-empty reference")
        })
        .collect();
    let rank = b.ncols();
    let one_to_one = (rank == reference.ncols() && rank <= MAX_EXHAUSTIVE_RANK).then(|| {
        (0..rank)
            .permutations(rank)
            .map(|perm| {
                let total: f64 = perm.iter().enumerate().map(|(r, &p)| sads[r][p]).sum();
                (total, perm)
            })
            .min_by(|x, y| x.0.total_cmp(&y.0))
            .map(|(_, perm)| perm)
            .expect("at least one permutation")
    });
    Ok(EndmemberMatch {
        sads,
        nearest,
        one_to_one,
    })
}

/// Cosine between column `r` of `x` and column `assignment[r]` of `y`.
pub fn factor_congruence(x: &Matrix, y: &Matrix, assignment: &[usize]) -> Result<Vec<f64>> {
    if x.nrows() != y.nrows() {
        return Err(Error::shape(format!("{} rows", y.nrows()), x.nrows()));
    }
    if assignment.len() != x.ncols() {
        return Err(Error::shape(format!("{} assignments", x.ncols()), assignment.len()));
    }
    assignment
        .iter()
        .enumerate()
        .map(|(r, &p)| {
            if p >= y.ncols() {
                return Err(Error::arg(format!("assignment {p} out of range")));
            }
            let (u, v) = (x.column(r), y.column(p));
            let denom = (u.dot(&u) * v.dot(&v)).sqrt();
            Ok(if denom == 0.0 { 0.0 } else { u.dot(&v) / denom })
        })
        .collect()
}

/// Evaluation summary written next to the factors.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rmse: f64,
    pub rmse_percent: f64,
    /// Square-root variant, `‖T − T̂‖ / ‖T‖`.
    pub relative_error: f64,
    pub sad_degrees: Vec<f64>,
    pub labels: Vec<String>,
    pub congruence: Vec<f64>,
    pub seconds: f64,
}

impl EvalReport {
    pub fn with_rmse(rmse: f64) -> Self {
        EvalReport {
            rmse,
            rmse_percent: 100.0 * rmse,
            relative_error: rmse.sqrt(),
            ..Default::default()
        }
    }

    /// Plain-text table, one estimated column per line.
    pub fn table(&self) -> String {
        let mut out = format!(
            "RMSE {:.6e} ({:.4}%), relative error {:.6e}\n",
            self.rmse, self.rmse_percent, self.relative_error
        );
        out.push_str("col  label                 SAD(deg)  congruence\n");
        for (r, s) in self.sad_degrees.iter().enumerate() {
            let label = self.labels.get(r).map_or("-", String::as_str);
            let cong = self.congruence.get(r).map_or("-".to_string(), |c| format!("{c:.6}"));
            out.push_str(&format!("{:<4} {:<21} {:>8.3}  {}\n", r + 1, label, s, cong));
        }
        out
    }
}
