use anyhow::{bail, Context, Result};
use hsu_core::features::Mode3Legend;
use hsu_core::synthetic::{self, Background, ENDMEMBER_LABELS};
use hsu_core::{HsiCube, SyntheticSpec};

use super::{create_dir, read_json, write_json};
use crate::cubefile::{self, Grid};
use crate::io;
use crate::SynthArgs;

fn parse_background(s: &str) -> Result<Background> {
    if s == "zero" {
        return Ok(Background::Zero);
    }
    match s.strip_prefix("object:").map(str::parse::<usize>) {
        Some(Ok(id)) => Ok(Background::Object(id)),
        _ => bail!("background must be 'zero' or 'object:N', got '{s}'"),
    }
}

pub(super) fn run(args: &SynthArgs) -> Result<()> {
    let mut spec: SyntheticSpec = match &args.spec {
        Some(path) => read_json(path)?,
        None => SyntheticSpec::default(),
    };
    if let Some(v) = args.sigma2 {
        spec.sigma2 = v;
    }
    if let Some(s) = args.seed {
        spec.seed = s;
    }
    if let Some(bg) = &args.background {
        spec.background = parse_background(bg)?;
    }
    let (t, truth) = synthetic::generate(&spec)?;
    let grid = Grid {
        rows: spec.layout.rows,
        cols: spec.layout.cols,
    };
    let out = &args.out;
    let truth_dir = out.join("truth");
    create_dir(&truth_dir)?;

    let tensor_path = out.join("tensor.hcube");
    cubefile::write_tensor(&tensor_path, &t, grid)?;
    write_json(&cubefile::legend_path(&tensor_path), &Mode3Legend::stamps(t.dims().slices))?;
    // one plain cube per acquisition, for `build`
    for k in 0..t.dims().slices {
        let slice = t.frontal_slice(k)?;
        let cube = HsiCube::new(grid.rows, grid.cols, t.dims().bands, slice.iter().copied().collect())?;
        cubefile::write_cube(&out.join(format!("cube_t{}.hcube", k + 1)), &cube)?;
    }

    let labels: Vec<String> = ENDMEMBER_LABELS.iter().map(|s| s.to_string()).collect();
    io::write_matrix(&truth_dir.join("A.csv"), &truth.a, &labels)?;
    io::write_matrix(&truth_dir.join("B.csv"), &truth.b, &labels)?;
    io::write_matrix(&truth_dir.join("Psi.csv"), &truth.c, &labels)?;
    let wavelengths = synthetic::bundled_wavelengths();
    let mut library = ndarray::Array2::zeros((truth.b.nrows(), truth.b.ncols() + 1));
    library.column_mut(0).assign(&ndarray::Array1::from(wavelengths));
    library.slice_mut(ndarray::s![.., 1..]).assign(&truth.b);
    let mut lib_labels = vec!["wavelength_nm".to_string()];
    lib_labels.extend(labels);
    io::write_matrix(&truth_dir.join("spectra.csv"), &library, &lib_labels)?;

    write_json(&out.join("layout.json"), &spec.layout)?;
    write_json(&out.join("spec.json"), &spec).context("writing spec echo")?;
    println!(
        "wrote {} ({}x{} pixels, {} bands, {} stamps, sigma2 {})",
        tensor_path.display(),
        grid.rows,
        grid.cols,
        t.dims().bands,
        t.dims().slices,
        spec.sigma2
    );
    Ok(())
}
