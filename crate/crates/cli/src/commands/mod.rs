mod bench;
mod build;
mod convert;
mod decompose;
mod evaluate;
mod synth;

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;

use crate::{Cli, Command};

pub use decompose::DecomposeReport;
pub use evaluate::EvaluationOutput;

pub(crate) fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Synth(a) => synth::run(a),
        Command::Build(a) => build::run(a),
        Command::Decompose(a) => decompose::run(a, cli.single_thread),
        Command::Evaluate(a) => evaluate::run(a),
        Command::Bench(a) => bench::run(a),
        Command::Convert(a) => convert::run(a),
    }
}

/// Pretty JSON with a trailing newline.
fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("{}: invalid JSON", path.display()))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))
}
