//! Engine configuration, loaded from `ctt.json` at the repository root.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::codegraph::GraphRules;
use crate::embedding::{FactorWeights, PropagationParams};
use crate::error::{Error, Result};
use crate::gateway::BackendConfig;
use crate::prompt::PromptConfig;
use crate::retrieval::RetrievalConfig;

pub const CONFIG_FILE: &str = "ctt.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    /// File-name globs selecting indexed files.
    pub include_globs: Vec<String>,
    /// A path with any segment equal to one of these is a test file.
    pub test_dirs: Vec<String>,
    /// File-name globs marking test files.
    pub test_globs: Vec<String>,
    /// Change-listener sensitivity: events closer than this are coalesced.
    pub debounce_ms: u64,
    pub max_parallel_jobs: usize,
    /// Trailing window for the per-node edit counter.
    pub edit_window_secs: u64,
    pub weights: FactorWeights,
    pub propagation: PropagationParams,
    pub retrieval: RetrievalConfig,
    pub prompt: PromptConfig,
    pub backend: BackendConfig,
    /// Fraction of source nodes forming the critical set.
    pub critical_fraction: f64,
    /// Accept every pending suggestion at the end of each cycle.
    pub auto_accept: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            include_globs: ["*.swift", "*.rs", "*.py", "*.c", "*.cpp", "*.ts", "*.txt"]
                .map(String::from)
                .to_vec(),
            test_dirs: vec!["tests".to_string()],
            test_globs: ["*_test.*", "test_*.*", "*Tests.*"]
                .map(String::from)
                .to_vec(),
            debounce_ms: 500,
            max_parallel_jobs: 4,
            edit_window_secs: 24 * 60 * 60,
            weights: FactorWeights::default(),
            propagation: PropagationParams::default(),
            retrieval: RetrievalConfig::default(),
            prompt: PromptConfig::default(),
            backend: BackendConfig::default(),
            critical_fraction: 0.2,
            auto_accept: false,
        }
    }
}

impl EngineConfig {
    /// Reads `ctt.json` under `root`, falling back to defaults when absent.
    pub fn load(root: &Path) -> Result<Self> {
        let path = root.join(CONFIG_FILE);
        let config: EngineConfig = match std::fs::read_to_string(&path) {
            Ok(text) => serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => EngineConfig::default(),
            Err(e) => return Err(e.into()),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.critical_fraction > 0.0 && self.critical_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "critical_fraction must be in (0, 1], got {}",
                self.critical_fraction
            )));
        }
        if self.max_parallel_jobs == 0 {
            return Err(Error::Config("max_parallel_jobs must be at least 1".into()));
        }
        if self.edit_window_secs == 0 {
            return Err(Error::Config("edit_window_secs must be positive".into()));
        }
        self.weights.validate()?;
        self.propagation.validate()?;
        self.retrieval.validate()?;
        self.graph_rules()?;
        Ok(())
    }

    pub fn graph_rules(&self) -> Result<GraphRules> {
        Ok(
            GraphRules::new(&self.include_globs, &self.test_dirs, &self.test_globs)?
                .with_edit_window(self.edit_window_ms()),
        )
    }

    pub fn edit_window_ms(&self) -> i64 {
        self.edit_window_secs as i64 * 1000
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        EngineConfig::default().validate().unwrap();
    }

    #[test]
    fn rejects_bad_critical_fraction() {
        for q in [0.0, -0.5, 1.5] {
            let config = EngineConfig {
                critical_fraction: q,
                ..EngineConfig::default()
            };
            assert!(matches!(config.validate(), Err(Error::Config(_))));
        }
    }

    #[test]
    fn partial_file_keeps_defaults() {
        let config: EngineConfig = serde_json::from_str(r#"{"debounce_ms": 50}"#).unwrap();
        assert_eq!(config.debounce_ms, 50);
        assert_eq!(config.max_parallel_jobs, 4);
        assert_eq!(config.prompt.total_budget, 8000);
    }
}
