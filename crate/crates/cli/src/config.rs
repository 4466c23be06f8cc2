use std::path::{Path, PathBuf};

use anyhow::{ensure, Context, Result};
use hsu_core::{FeatureSpec, SolverConfig};
use serde::{Deserialize, Serialize};

fn one() -> usize {
    1
}

/// Decomposition run description. Unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default = "one")]
    pub n_inits: usize,
    /// How the input tensor was built; recorded for provenance.
    #[serde(default)]
    pub features: Option<FeatureSpec>,
    #[serde(default)]
    pub input: Option<PathBuf>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// Also run the other ASC mode on the same seeds.
    #[serde(default)]
    pub compare_asc: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            solver: SolverConfig::default(),
            n_inits: 1,
            features: None,
            input: None,
            output: None,
            compare_asc: false,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let cfg: RunConfig =
            serde_json::from_str(&text).with_context(|| format!("{}: invalid run configuration", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.n_inits >= 1, "n_inits must be >= 1");
        self.solver.validate()?;
        Ok(())
    }
}
