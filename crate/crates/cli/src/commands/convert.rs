use std::fs;

use anyhow::{ensure, Context, Result};
use hsu_core::HsiCube;
use serde::Deserialize;

use super::read_json;
use crate::cubefile;
use crate::ConvertArgs;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Interleave {
    Bsq,
    Bil,
    Bip,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
enum RawType {
    U8,
    U16le,
    U16be,
    I16le,
    I16be,
    F32le,
    F32be,
    F64le,
    F64be,
}

impl RawType {
    fn width(self) -> usize {
        match self {
            RawType::U8 => 1,
            RawType::U16le | RawType::U16be | RawType::I16le | RawType::I16be => 2,
            RawType::F32le | RawType::F32be => 4,
            RawType::F64le | RawType::F64be => 8,
        }
    }

    fn decode(self, b: &[u8]) -> f64 {
        match self {
            RawType::U8 => b[0] as f64,
            RawType::U16le => u16::from_le_bytes([b[0], b[1]]) as f64,
            RawType::U16be => u16::from_be_bytes([b[0], b[1]]) as f64,
            RawType::I16le => i16::from_le_bytes([b[0], b[1]]) as f64,
            RawType::I16be => i16::from_be_bytes([b[0], b[1]]) as f64,
            RawType::F32le => f32::from_le_bytes(b.try_into().unwrap()) as f64,
            RawType::F32be => f32::from_be_bytes(b.try_into().unwrap()) as f64,
            RawType::F64le => f64::from_le_bytes(b.try_into().unwrap()),
            RawType::F64be => f64::from_be_bytes(b.try_into().unwrap()),
        }
    }
}

fn one() -> f64 {
    1.0
}

/// Describes a headerless band-interleaved image.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawHeader {
    rows: usize,
    cols: usize,
    bands: usize,
    interleave: Interleave,
    dtype: RawType,
    /// Bytes to skip before the samples.
    #[serde(default)]
    offset: usize,
    /// Multiplier applied to every sample (reflectance scaling).
    #[serde(default = "one")]
    scale: f64,
}

fn to_cube(h: &RawHeader, bytes: &[u8]) -> Result<HsiCube> {
    let n = h.rows * h.cols * h.bands;
    let w = h.dtype.width();
    ensure!(
        bytes.len() >= h.offset + n * w,
        "raw file holds {} bytes, header needs {}",
        bytes.len(),
        h.offset + n * w
    );
    let payload = &bytes[h.offset..h.offset + n * w];
    let sample = |idx: usize| h.scale * h.dtype.decode(&payload[idx * w..(idx + 1) * w]);
    let (rows, cols, bands) = (h.rows, h.cols, h.bands);
    let cube = HsiCube::from_fn(rows, cols, bands, |r, c, b| {
        let idx = match h.interleave {
            Interleave::Bsq => (b * rows + r) * cols + c,
            Interleave::Bil => (r * bands + b) * cols + c,
            Interleave::Bip => (r * cols + c) * bands + b,
        };
        sample(idx)
    })?;
    Ok(cube)
}

pub(super) fn run(args: &ConvertArgs) -> Result<()> {
    let header: RawHeader = read_json(&args.header)?;
    let bytes = fs::read(&args.input).with_context(|| format!("reading {}", args.input.display()))?;
    let cube = to_cube(&header, &bytes)?;
    cubefile::write_cube(&args.out, &cube)?;
    println!("wrote {} ({}x{}x{})", args.out.display(), cube.rows(), cube.cols(), cube.bands());
    Ok(())
}
