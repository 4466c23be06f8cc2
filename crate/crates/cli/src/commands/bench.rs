use std::fs::File;
use std::io::BufWriter;

use anyhow::{Context, Result};
use hsu_core::scaling::{self, BenchSettings};

use super::write_json;
use crate::BenchArgs;

pub(super) fn run(args: &BenchArgs) -> Result<()> {
    let settings = BenchSettings {
        axis: args.scale_axis.parse()?,
        points: args.points,
        pixels: args.pixels,
        bands: args.bands,
        slices: args.slices,
        rank: args.rank,
        repetitions: args.repetitions,
        seed: args.seed,
        ..BenchSettings::default()
    };
    let result = scaling::run_bench(&settings)?;
    let file = File::create(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    result.write_csv(BufWriter::new(file))?;
    write_json(&args.out.with_extension("json"), &result)?;
    for p in &result.points {
        println!("{:>8}  {:.3e} s/iter", p.size, p.seconds_per_inner_iter);
    }
    match result.slope {
        Some(s) => println!("log-log slope: {s:.3}"),
        None => println!("log-log slope: n/a (one point)"),
    }
    Ok(())
}
