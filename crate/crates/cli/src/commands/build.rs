use anyhow::{bail, Context, Result};
use hsu_core::FeatureSpec;

use super::write_json;
use crate::cubefile::{self, Grid};
use crate::BuildArgs;

pub(super) fn run(args: &BuildArgs) -> Result<()> {
    let spec = match args.mode.as_str() {
        "patch" => {
            if args.radii.is_some() {
                bail!("--radii only applies to --mode mm");
            }
            FeatureSpec::Patch {
                size: args.patch.context("--mode patch needs --patch")?,
            }
        }
        _ => {
            if args.patch.is_some() {
                bail!("--patch only applies to --mode patch");
            }
            FeatureSpec::Mm {
                radii: args.radii.clone().context("--mode mm needs --radii")?,
            }
        }
    };
    let cube = cubefile::read_cube(&args.input)?;
    let (t, legend) = spec.build(&cube)?;
    let grid = Grid {
        rows: cube.rows(),
        cols: cube.cols(),
    };
    cubefile::write_tensor(&args.out, &t, grid)?;
    write_json(&cubefile::legend_path(&args.out), &legend)?;
    println!("wrote {} ({})", args.out.display(), t.dims());
    Ok(())
}
