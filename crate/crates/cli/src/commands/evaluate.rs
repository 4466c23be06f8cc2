use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{ensure, Context, Result};
use hsu_core::features::Mode3Legend;
use hsu_core::metrics::{self, EndmemberMatch};
use hsu_core::tensor::reconstruct;
use hsu_core::{EvalReport, Matrix};
use serde::Serialize;

use super::{create_dir, read_json, write_json};
use crate::cubefile::{self, Grid};
use crate::io::{self, MapScale};
use crate::EvaluateArgs;

#[derive(Clone, Debug, Serialize)]
pub struct FactorCongruence {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub psi: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct MapEntry {
    pub column: usize,
    pub file: PathBuf,
    #[serde(flatten)]
    pub scale: MapScale,
}

/// Contents of the evaluation `report.json`.
#[derive(Clone, Debug, Serialize)]
pub struct EvaluationOutput {
    #[serde(flatten)]
    pub report: EvalReport,
    /// What the RMSE was measured against: `tensor`, `truth`, `solver` or `none`.
    pub rmse_source: String,
    pub reference_labels: Vec<String>,
    /// `sad_matrix[r][p]` in degrees.
    pub sad_matrix: Vec<Vec<f64>>,
    pub nearest: Vec<String>,
    pub one_to_one: Option<Vec<usize>>,
    pub factor_congruence: Option<FactorCongruence>,
    pub maps: Vec<MapEntry>,
    pub psi_plot: PathBuf,
}

struct Factors {
    a: Matrix,
    b: Matrix,
    psi: Matrix,
}

fn read_factors(dir: &Path) -> Result<(Vec<String>, Factors)> {
    let (labels, a) = io::read_matrix(&dir.join("A.csv"))?;
    let (_, b) = io::read_matrix(&dir.join("B.csv"))?;
    let (_, psi) = io::read_matrix(&dir.join("Psi.csv"))?;
    ensure!(
        a.ncols() == b.ncols() && b.ncols() == psi.ncols(),
        "{}: factor column counts differ ({}, {}, {})",
        dir.display(),
        a.ncols(),
        b.ncols(),
        psi.ncols()
    );
    Ok((labels, Factors { a, b, psi }))
}

pub(super) fn run(args: &EvaluateArgs) -> Result<()> {
    let started = Instant::now();
    let (_, est) = read_factors(&args.factors)?;
    let rank = est.b.ncols();
    let solver_report: Option<serde_json::Value> = {
        let p = args.factors.join("report.json");
        if p.exists() {
            Some(read_json(&p)?)
        } else {
            None
        }
    };

    let truth = match &args.truth {
        Some(dir) => Some(read_factors(dir)?),
        None => None,
    };
    let (reference_labels, reference) = match (&truth, &args.reference) {
        (Some((labels, f)), _) => (labels.clone(), f.b.clone()),
        (None, Some(path)) => io::read_spectra(path)?,
        (None, None) => anyhow::bail!("pass --truth or --reference"),
    };
    let matching: EndmemberMatch = metrics::match_endmembers(&est.b, &reference)?;
    let assignment = matching.one_to_one.clone().unwrap_or_else(|| matching.nearest.clone());
    let labels: Vec<String> = assignment.iter().map(|&p| reference_labels[p].clone()).collect();

    let factor_congruence = match (&truth, &matching.one_to_one) {
        (Some((_, t)), Some(perm)) => Some(FactorCongruence {
            a: metrics::factor_congruence(&est.a, &t.a, perm)?,
            b: metrics::factor_congruence(&est.b, &t.b, perm)?,
            psi: metrics::factor_congruence(&est.psi, &t.psi, perm)?,
        }),
        _ => None,
    };

    let est_tensor = reconstruct(&est.a, &est.b, &est.psi)?;
    let (rmse, rmse_source) = if let Some(path) = &args.tensor {
        let (t, _) = cubefile::read_tensor(path)?;
        (metrics::rmse(&t, &est_tensor)?, "tensor")
    } else if let Some((_, t)) = &truth {
        let t = reconstruct(&t.a, &t.b, &t.psi)?;
        (metrics::rmse(&t, &est_tensor)?, "truth")
    } else if let Some(v) = solver_report.as_ref().and_then(|r| r["rmse"].as_f64()) {
        (v, "solver")
    } else {
        (f64::NAN, "none")
    };

    let mut report = EvalReport::with_rmse(rmse);
    report.sad_degrees = matching.assigned_sads();
    report.labels = labels.clone();
    // Tucker-style congruence: product of the per-factor cosines
    if let Some(fc) = &factor_congruence {
        report.congruence = (0..rank).map(|r| fc.a[r] * fc.b[r] * fc.psi[r]).collect();
    }

    let out_dir = args.out.parent().map(Path::to_path_buf).unwrap_or_default();
    if !out_dir.as_os_str().is_empty() {
        create_dir(&out_dir)?;
    }
    let grid = match (args.rows, args.cols) {
        (Some(rows), Some(cols)) => Some(Grid { rows, cols }),
        _ => solver_report
            .as_ref()
            .and_then(|r| serde_json::from_value::<Grid>(r["grid"].clone()).ok()),
    };
    let mut maps = Vec::new();
    match grid {
        Some(g) => {
            ensure!(
                g.rows * g.cols == est.a.nrows(),
                "grid {}x{} does not match {} abundance rows",
                g.rows,
                g.cols,
                est.a.nrows()
            );
            for r in 0..rank {
                let file = out_dir.join(format!("abundance_r{}.pgm", r + 1));
                let column: Vec<f64> = est.a.column(r).to_vec();
                let scale = io::write_pgm(&file, &column, g.rows, g.cols)?;
                maps.push(MapEntry { column: r + 1, file, scale });
            }
        }
        None => log::warn!("no spatial grid known; skipping abundance maps"),
    }

    let legend_file = args.factors.join("legend.json");
    let legend: Option<Mode3Legend> = if legend_file.exists() {
        Some(read_json(&legend_file)?)
    } else {
        None
    };
    let psi_plot = out_dir.join("psi_plot.csv");
    write_psi_plot(&psi_plot, &est.psi, legend.as_ref(), &labels)?;

    report.seconds = started.elapsed().as_secs_f64();
    let nearest = matching.nearest.iter().map(|&p| reference_labels[p].clone()).collect();
    let output = EvaluationOutput {
        report,
        rmse_source: rmse_source.to_string(),
        reference_labels,
        sad_matrix: matching.sads.clone(),
        nearest,
        one_to_one: matching.one_to_one.clone(),
        factor_congruence,
        maps,
        psi_plot,
    };
    write_json(&args.out, &output)?;
    print!("{}", output.report.table());
    Ok(())
}

/// One row per third-mode slice: `k,label,<one column per component>`.
fn write_psi_plot(path: &Path, psi: &Matrix, legend: Option<&Mode3Legend>, labels: &[String]) -> Result<()> {
    if let Some(l) = legend {
        ensure!(l.len() == psi.nrows(), "legend has {} entries, Psi has {} rows", l.len(), psi.nrows());
    }
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    let mut header = vec!["k".to_string(), "label".to_string()];
    header.extend(labels.iter().enumerate().map(|(r, l)| format!("r{}:{l}", r + 1)));
    w.write_record(&header)?;
    for (k, row) in psi.rows().into_iter().enumerate() {
        let label = legend.map_or_else(|| format!("k={}", k + 1), |l| l.entries[k].label());
        let mut record = vec![(k + 1).to_string(), label];
        record.extend(row.iter().map(|v| format!("{v:?}")));
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}
