//! Experiment configuration file.

use std::path::{Path, PathBuf};

use adecot::http::HttpPolicy;
use adecot::model::{EditInstance, SearchConfig};
use adecot::sampler::SimParams;
use adecot::search::Strategy;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::generator::GeneratorSpec;

/// Environment variable overriding the remote endpoint.
pub const ENDPOINT_ENV: &str = "ADECOT_ENDPOINT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub strategy: Strategy,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub search: SearchConfig,
    #[serde(default)]
    pub backend: BackendConfig,
    #[serde(default)]
    pub simulator: SimParams,
    #[serde(default)]
    pub instances: InstanceSource,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Simulator,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BackendConfig {
    pub kind: BackendKind,
    /// Sampler and judge service.
    pub endpoint: Option<String>,
    /// Image-text embedding service; defaults to `endpoint`.
    pub clip_endpoint: Option<String>,
    /// Appearance embedding service; defaults to `endpoint`.
    pub visual_endpoint: Option<String>,
    pub http: HttpPolicy,
}

impl BackendConfig {
    pub fn endpoint(&self) -> CliResult<String> {
        std::env::var(crate::config::ENDPOINT_ENV)
            .ok()
            .filter(|e| !e.is_empty())
            .or_else(|| self.endpoint.clone())
            .ok_or_else(|| CliError::Invalid(format!("remote backend needs backend.endpoint or {ENDPOINT_ENV}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct InstanceSource {
    /// JSON-lines file of instances; the generator is used when absent.
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default, flatten)]
    pub generator: GeneratorSpec,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, path: &Path) -> CliResult<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| CliError::Config {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Self::from_toml(&text, path)
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.seeds.is_empty() {
            return Err(CliError::Invalid("at least one seed is required".into()));
        }
        self.search.validate()?;
        if self.backend.kind == BackendKind::Remote && self.instances.path.is_none() {
            return Err(CliError::Invalid("the remote backend needs instances.path".into()));
        }
        self.instances.generator.validate()?;
        Ok(())
    }

    pub fn load_instances(&self) -> CliResult<Vec<EditInstance>> {
        let Some(path) = &self.instances.path else {
            return Ok(crate::generator::generate(&self.instances.generator));
        };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut out = Vec::new();
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let inst: EditInstance = serde_json::from_str(line).map_err(|e| CliError::Config {
                path: path.clone(),
                message: format!("line {}: {e}", i + 1),
            })?;
            if inst.instruction.trim().is_empty() {
                return Err(CliError::Config {
                    path: path.clone(),
                    message: format!("line {}: empty instruction", i + 1),
                });
            }
            if self.backend.kind == BackendKind::Simulator && inst.sim_meta.is_none() {
                return Err(CliError::Config {
                    path: path.clone(),
                    message: format!("line {}: the simulator needs sim_meta", i + 1),
                });
            }
            out.push(inst);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_uses_defaults() {
        let cfg = ExperimentConfig::from_toml("strategy = \"ade-cot\"\n", Path::new("x.toml")).unwrap();
        assert_eq!(cfg.search, SearchConfig::default());
        assert_eq!(cfg.seeds, vec![0]);
        assert_eq!(cfg.backend.kind, BackendKind::Simulator);
    }

    #[test]
    fn sections_parse() {
        let text = r#"
strategy = "bon"
seeds = [1, 2, 3]
output_dir = "results"

[search]
n = 4
gamma = 0.3

[simulator]
gen_noise = 2.0

[instances]
count = 10
seed = 5
"#;
        let cfg = ExperimentConfig::from_toml(text, Path::new("x.toml")).unwrap();
        assert_eq!(cfg.search.n, 4);
        assert_eq!(cfg.search.gamma, 0.3);
        assert_eq!(cfg.search.steps, 28);
        assert_eq!(cfg.simulator.gen_noise, 2.0);
        assert_eq!(cfg.instances.generator.count, 10);
    }

    #[test]
    fn errors_carry_location() {
        let err = ExperimentConfig::from_toml("strategy = \"bon\"\n[search]\nn = \"many\"\n", Path::new("exp.toml"))
            .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("exp.toml"), "{msg}");
        assert!(msg.contains("line 3"), "{msg}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn invalid_values_are_config_errors() {
        let err = ExperimentConfig::from_toml("strategy = \"bon\"\nseeds = []\n", Path::new("x")).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        let err = ExperimentConfig::from_toml(
            "strategy = \"bon\"\n[search]\nt_early = 20\nt_late = 10\n",
            Path::new("x"),
        )
        .unwrap_err();
        assert_eq!(err.exit_code(), 2);
        let err = ExperimentConfig::from_toml("strategy = \"beam\"\n", Path::new("x")).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }
}
