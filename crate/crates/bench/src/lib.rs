//! Fixtures shared by the benchmarks.

use hsu_core::synthetic::{generate, SyntheticSpec};
use hsu_core::Tensor3;

/// Noiseless synthetic scene tensor (16384 × 26 × 3).
pub fn scene_tensor() -> Tensor3 {
    generate(&SyntheticSpec::default()).expect("bundled spec is valid").0
}
