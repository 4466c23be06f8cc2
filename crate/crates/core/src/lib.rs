//! Multi-feature hyperspectral unmixing by constrained CP decomposition.
//!
//! Pixels × bands × features tensors are factorized as `Σ_r a_r ∘ b_r ∘ ψ_r`
//! with nonnegative, optionally sparse abundances that sum to one.

pub mod error;
pub mod features;
pub mod metrics;
pub mod morphology;
pub mod scaling;
pub mod solver;
pub mod synthetic;
pub mod tensor;

pub use error::{Error, Result};
pub use features::{FeatureSpec, HsiCube, Mode3Legend, MorphSpec, PatchSpec};
pub use metrics::EvalReport;
pub use morphology::{DiskSe, GrayImage};
pub use solver::{AscAnchor, AscMode, ConvergenceTrace, FactorModel, SolverConfig};
pub use synthetic::{GroundTruth, SyntheticSpec};
pub use tensor::{Dims, Matrix, Mode, Tensor3};
