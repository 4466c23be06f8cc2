use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use hsu_core::metrics;
use hsu_core::solver::{self, MultiStart};
use hsu_core::{AscMode, Dims, Tensor3};
use serde::{Deserialize, Serialize};

use super::{create_dir, write_json};
use crate::config::RunConfig;
use crate::cubefile::{self, Grid};
use crate::io;
use crate::DecomposeArgs;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub rmse: f64,
}

/// Wall-clock figures; the only fields that change between identical runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub total_secs: f64,
    /// Solve time of the chosen run.
    pub chosen_run_secs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeSummary {
    pub asc_mode: AscMode,
    pub chosen_seed: u64,
    pub rmse: f64,
    pub rmse_percent: f64,
    pub row_sum_deviation: f64,
    pub dir: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecomposeReport {
    pub version: String,
    pub config: RunConfig,
    pub dims: Dims,
    pub grid: Grid,
    /// Mean of the data tensor.
    pub delta: f64,
    pub seeds: Vec<u64>,
    pub runs: Vec<RunSummary>,
    pub chosen_seed: u64,
    pub initial_rmse: f64,
    pub rmse: f64,
    pub rmse_percent: f64,
    pub relative_error: f64,
    pub iterations: usize,
    /// Mean `|Σ_r a_ir − 1|` of the returned abundances.
    pub row_sum_deviation: f64,
    pub timings: Timings,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comparison: Option<Vec<ModeSummary>>,
}

impl DecomposeReport {
    fn summary(&self, dir: &Path) -> ModeSummary {
        ModeSummary {
            asc_mode: self.config.solver.asc_mode,
            chosen_seed: self.chosen_seed,
            rmse: self.rmse,
            rmse_percent: self.rmse_percent,
            row_sum_deviation: self.row_sum_deviation,
            dir: dir.to_path_buf(),
        }
    }
}

pub(super) fn run(args: &DecomposeArgs, single_thread: bool) -> Result<()> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(p) = &args.input {
        cfg.input = Some(p.clone());
    }
    if let Some(p) = &args.out {
        cfg.output = Some(p.clone());
    }
    cfg.compare_asc |= args.compare_asc;
    if single_thread {
        cfg.solver.force_single_thread = true;
    }
    cfg.validate()?;
    let input = cfg.input.clone().context("no input tensor (--in or \"input\" in the config)")?;
    let out = cfg.output.clone().context("no output directory (--out or \"output\" in the config)")?;

    let (t, grid) = cubefile::read_tensor(&input)?;
    let legend = cubefile::legend_path(&input);
    let legend = legend.exists().then_some(legend);

    let mut report = solve_into(&out, &t, grid, legend.as_deref(), &cfg)?;
    if cfg.compare_asc {
        let other = match cfg.solver.asc_mode {
            AscMode::Naive => AscMode::Embedded,
            _ => AscMode::Naive,
        };
        let mut other_cfg = cfg.clone();
        other_cfg.solver.asc_mode = other;
        other_cfg.compare_asc = false;
        let dir = out.join(format!("asc_{}", mode_name(other)));
        other_cfg.output = Some(dir.clone());
        let other_report = solve_into(&dir, &t, grid, legend.as_deref(), &other_cfg)?;
        let rows = vec![report.summary(&out), other_report.summary(&dir)];
        print!("{}", comparison_table(&rows));
        report.comparison = Some(rows);
    }
    write_json(&out.join("report.json"), &report)?;
    println!(
        "seed {} of {}: RMSE {:.6e} ({:.4}%) after {} iterations",
        report.chosen_seed,
        report.seeds.len(),
        report.rmse,
        report.rmse_percent,
        report.iterations
    );
    Ok(())
}

fn mode_name(mode: AscMode) -> &'static str {
    match mode {
        AscMode::Embedded => "embedded",
        AscMode::Naive => "naive",
        AscMode::None => "none",
    }
}

/// Solves, writes factors, trace and the legend into `out`, and writes a
/// report there too; the caller may rewrite it with a comparison.
fn solve_into(out: &Path, t: &Tensor3, grid: Grid, legend: Option<&Path>, cfg: &RunConfig) -> Result<DecomposeReport> {
    create_dir(out)?;
    let started = Instant::now();
    let MultiStart { best, runs } = solver::multi_start(t, &cfg.solver, cfg.n_inits)?;
    let total_secs = started.elapsed().as_secs_f64();
    let model = &best.model;

    let labels = io::component_labels(model.rank());
    io::write_matrix(&out.join("A.csv"), &model.a, &labels)?;
    io::write_matrix(&out.join("B.csv"), &model.b, &labels)?;
    io::write_matrix(&out.join("Psi.csv"), &model.psi, &labels)?;
    let trace_path = out.join("trace.csv");
    let file = File::create(&trace_path).with_context(|| format!("creating {}", trace_path.display()))?;
    best.trace.write_csv(BufWriter::new(file))?;
    if let Some(src) = legend {
        fs::copy(src, out.join("legend.json")).with_context(|| format!("copying {}", src.display()))?;
    }

    let rmse = best.trace.final_rmse();
    let relative_error = metrics::relative_error(t, &model.reconstruct()?)?;
    let report = DecomposeReport {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.clone(),
        dims: t.dims(),
        grid,
        delta: t.mean(),
        seeds: runs.iter().map(|r| r.0).collect(),
        runs: runs.iter().map(|&(seed, rmse)| RunSummary { seed, rmse }).collect(),
        chosen_seed: best.seed,
        initial_rmse: best.trace.initial_rmse,
        rmse,
        rmse_percent: 100.0 * rmse,
        relative_error,
        iterations: best.trace.iterations(),
        row_sum_deviation: solver::row_sum_deviation(&model.a, None),
        timings: Timings {
            total_secs,
            chosen_run_secs: best.trace.records.last().map_or(0.0, |r| r.elapsed_secs),
        },
        comparison: None,
    };
    write_json(&out.join("report.json"), &report)?;
    Ok(report)
}

fn comparison_table(rows: &[ModeSummary]) -> String {
    let mut s = String::from("asc mode   seed  RMSE          RMSE %     row-sum dev\n");
    for r in rows {
        s.push_str(&format!(
            "{:<9} {:>5}  {:<12.6e}  {:<9.4}  {:.3e}\n",
            mode_name(r.asc_mode),
            r.chosen_seed,
            r.rmse,
            r.rmse_percent,
            r.row_sum_deviation
        ));
    }
    s
}
