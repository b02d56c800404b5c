//! Trained weights together with the scenario they were trained on.

use std::path::Path;

use serde::{Deserialize, Serialize};
use stlcbf_core::controller::Policy;
use stlcbf_core::scenario::ScenarioConfig;

use crate::config::env_hash;
use crate::error::CliError;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub env_hash: String,
    pub config: ScenarioConfig,
    pub policy: Policy,
}

impl Checkpoint {
    pub fn new(config: ScenarioConfig, policy: Policy) -> Self {
        Self {
            version: FORMAT_VERSION,
            env_hash: env_hash(&config),
            config,
            policy,
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string(self).map_err(|e| CliError::Other(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| CliError::io(path, e))
    }

    /// Read a checkpoint and check that it is internally consistent.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Checkpoint(format!("{}: {e}", path.display())))?;
        let ck: Checkpoint = serde_json::from_str(&text).map_err(|e| CliError::Checkpoint(format!("{}: {e}", path.display())))?;
        if ck.version != FORMAT_VERSION {
            return Err(CliError::Checkpoint(format!("unsupported checkpoint version {}", ck.version)));
        }
        if env_hash(&ck.config) != ck.env_hash {
            return Err(CliError::Checkpoint("stored hash does not match stored config".into()));
        }
        if !ck.policy.store.all_finite() {
            return Err(CliError::Checkpoint("non-finite weights".into()));
        }
        Ok(ck)
    }

    /// Fail unless `config` describes the same environment.
    pub fn check_against(&self, config: &ScenarioConfig) -> Result<(), CliError> {
        let h = env_hash(config);
        if h != self.env_hash {
            return Err(CliError::Checkpoint(format!(
                "config environment hash {h} differs from checkpoint {}",
                self.env_hash
            )));
        }
        Ok(())
    }
}
