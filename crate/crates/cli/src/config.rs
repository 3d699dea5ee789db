use std::path::Path;

use aot_core::guidance::Tolerances;
use aot_core::pipeline::LearnConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Offset between the learning seed and the seed of the generated reference
/// clutter, so the two streams never coincide.
pub const CLUTTER_SEED_OFFSET: u64 = 1_000_003;

/// The global configuration file. Every field is optional.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    pub learn: LearnConfig,
    pub tolerances: Tolerances,
    /// Clutter images generated for the reference model when a manifest
    /// lists no negatives.
    pub negatives: usize,
}

impl Default for CliConfig {
    fn default() -> Self {
        Self { learn: LearnConfig::default(), tolerances: Tolerances::default(), negatives: 24 }
    }
}

impl CliConfig {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::input(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::input(format!("config {}: {e}", path.display())))
    }

    /// Applies a `--seed` override.
    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        if let Some(s) = seed {
            self.learn = self.learn.with_seed(s);
        }
        self
    }

    pub fn seed(&self) -> u64 {
        self.learn.object_pursuit.seed
    }
}
