//! Scenario files: TOML on disk or one of the bundled scenarios.

use std::path::Path;

use sha2::{Digest, Sha256};
use stlcbf_core::scenario::{Scenario, ScenarioConfig};

use crate::error::CliError;

/// Scenarios shipped with the binary, addressable by name.
pub const BUNDLED: [(&str, &str); 3] = [
    ("double_integrator_I1", include_str!("../scenarios/double_integrator_I1.toml")),
    ("double_integrator_I2_memory", include_str!("../scenarios/double_integrator_I2_memory.toml")),
    ("unicycle_II", include_str!("../scenarios/unicycle_II.toml")),
];

pub fn parse(text: &str) -> Result<ScenarioConfig, CliError> {
    toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
}

/// Load `spec` as a file path, falling back to a bundled scenario name.
pub fn load(spec: &str) -> Result<ScenarioConfig, CliError> {
    let path = Path::new(spec);
    if path.is_file() {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        return parse(&text);
    }
    match BUNDLED.iter().find(|(name, _)| *name == spec) {
        Some((_, text)) => parse(text),
        None => Err(CliError::Config(format!("no config file or bundled scenario named {spec:?}"))),
    }
}

pub fn load_compiled(spec: &str) -> Result<Scenario, CliError> {
    Ok(load(spec)?.compile()?)
}

/// SHA-256 over the fields that define the environment and task.
///
/// Policy and training settings are left out so a checkpoint can be replayed
/// under a config whose optimizer settings differ.
pub fn env_hash(c: &ScenarioConfig) -> String {
    let env = serde_json::json!({
        "name": c.name,
        "system": c.system,
        "dt_s": c.dt_s,
        "horizon_s": c.horizon_s,
        "init": c.init,
        "u_min": c.u_min,
        "u_max": c.u_max,
        "beta": c.beta,
        "gamma_c": c.gamma_c,
        "box_eps": c.box_eps,
        "predicates": c.predicates,
    });
    let digest = Sha256::digest(env.to_string().as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}
